//! Monte-Carlo cross-checks for the closed forms.
//!
//! For jointly Gaussian samples the (conditional) mutual information is a
//! function of the covariance matrix alone, so the estimate here plugs the
//! sample covariance into
//! `I(A;B|C) = 1/2 [ln|S_AC| + ln|S_BC| - ln|S_C| - ln|S_ABC|]`
//! instead of estimating densities.

/// Sample covariance of the given columns.
fn covariance(cols: &[&[f64]]) -> Vec<Vec<f64>> {
    let n = cols.first().map_or(0, |c| c.len());
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let k = cols.len();
    let mut cov = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let s: f64 = cols[i]
                .iter()
                .zip(cols[j])
                .map(|(x, y)| (x - means[i]) * (y - means[j]))
                .sum();
            cov[i][j] = s / (n as f64 - 1.0);
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

/// `ln det` of a symmetric positive-definite matrix via Cholesky.
fn ln_det(m: &[Vec<f64>]) -> f64 {
    let k = m.len();
    let mut l = vec![vec![0.0; k]; k];
    let mut out = 0.0;
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (0..j).map(|t| l[i][t] * l[j][t]).sum();
            if i == j {
                let d = (m[i][i] - s).max(f64::MIN_POSITIVE);
                l[i][i] = d.sqrt();
                out += d.ln();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    out
}

fn ln_det_of(cols: &[&[f64]]) -> f64 {
    if cols.is_empty() {
        0.0
    } else {
        ln_det(&covariance(cols))
    }
}

/// Gaussian plug-in estimate of `I(A; B | C)` from sample columns; pass an
/// empty `c` for the unconditional MI.
pub fn gaussian_cmi(a: &[&[f64]], b: &[&[f64]], c: &[&[f64]]) -> f64 {
    let ac: Vec<&[f64]> = a.iter().chain(c).copied().collect();
    let bc: Vec<&[f64]> = b.iter().chain(c).copied().collect();
    let abc: Vec<&[f64]> = a.iter().chain(b).chain(c).copied().collect();
    0.5 * (ln_det_of(&ac) + ln_det_of(&bc) - ln_det_of(c) - ln_det_of(&abc))
}
