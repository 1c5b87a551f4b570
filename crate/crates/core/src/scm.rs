//! Seeded samplers for the two synthetic structural causal models.
//!
//! The multivariate linear SCM used by the training experiments:
//!
//! ```text
//! X    ~ N(0, I_d)
//! T_C  = X[:, :d_c] + e_C        e_C ~ N(0, I)
//! T_nC = X[:, d_c:] + e_N        e_N ~ N(0, I)
//! Y    = 1'T_C + 1'X + e_Y       e_Y ~ N(0, sigma_y^2)
//! ```
//!
//! and the scalar Gaussian SCM of [`crate::analytic`], laid out as a dataset
//! with one confounder column and two treatment columns `[T_C, T_nC]`.
//!
//! The exogenous treatment noise is kept in [`Dataset::t_noise`] so the
//! non-causal coordinates can later be re-drawn while the confounder stays
//! fixed.

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytic::GaussianScmParams;
use crate::error::{invalid, Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearScmConfig {
    /// Treatment (and confounder) dimension.
    pub d: usize,
    /// Number of causal treatment coordinates; columns `0..d_c` of `T`.
    pub d_c: usize,
    /// Standard deviation of the outcome noise.
    pub sigma_y: f64,
}

impl Default for LinearScmConfig {
    fn default() -> Self {
        Self {
            d: 10,
            d_c: 5,
            sigma_y: 0.0,
        }
    }
}

impl LinearScmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("d", "must be positive"));
        }
        if self.d_c == 0 || self.d_c > self.d {
            return Err(invalid("d_c", format!("must lie in 1..={}, got {}", self.d, self.d_c)));
        }
        if !(self.sigma_y >= 0.0 && self.sigma_y.is_finite()) {
            return Err(invalid(
                "sigma_y",
                format!("must be finite and >= 0, got {}", self.sigma_y),
            ));
        }
        Ok(())
    }
}

/// Sampled confounder, treatment and outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Confounder, `n x d_x`.
    pub x: Array2<f64>,
    /// Treatment, `n x d`; columns `0..d_c` causal, the rest non-causal.
    pub t: Array2<f64>,
    /// Outcome, length `n`.
    pub y: Array1<f64>,
    /// Number of causal treatment columns.
    pub d_c: usize,
    /// Exogenous noise that was added to each treatment entry.
    pub t_noise: Array2<f64>,
    /// Standard deviation of the treatment noise, per column.
    pub t_noise_std: Vec<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Treatment dimension.
    pub fn d(&self) -> usize {
        self.t.ncols()
    }

    pub fn dx(&self) -> usize {
        self.x.ncols()
    }

    pub fn causal_t(&self) -> ndarray::ArrayView2<'_, f64> {
        self.t.slice(s![.., ..self.d_c])
    }

    pub fn noncausal_t(&self) -> ndarray::ArrayView2<'_, f64> {
        self.t.slice(s![.., self.d_c..])
    }

    /// Check shape and finiteness invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.x.nrows() != n || self.t.nrows() != n || self.t_noise.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "row counts differ: x {}, t {}, t_noise {}, y {n}",
                self.x.nrows(),
                self.t.nrows(),
                self.t_noise.nrows()
            )));
        }
        if self.t_noise.ncols() != self.t.ncols() || self.t_noise_std.len() != self.t.ncols() {
            return Err(Error::DimensionMismatch("noise record does not match T".to_string()));
        }
        if self.d_c == 0 || self.d_c > self.t.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "d_c = {} outside 1..={}",
                self.d_c,
                self.t.ncols()
            )));
        }
        let finite = self
            .x
            .iter()
            .chain(self.t.iter())
            .chain(self.y.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("dataset", "contains non-finite entries"));
        }
        Ok(())
    }

    /// Rows `range` as a new dataset.
    pub fn rows(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            x: self.x.slice(s![range.clone(), ..]).to_owned(),
            t: self.t.slice(s![range.clone(), ..]).to_owned(),
            y: self.y.slice(s![range.clone()]).to_owned(),
            d_c: self.d_c,
            t_noise: self.t_noise.slice(s![range, ..]).to_owned(),
            t_noise_std: self.t_noise_std.clone(),
        }
    }

    /// Write as CSV with header `x0..x{dx-1},t0..t{d-1},y`, one sample per row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header: Vec<String> = (0..self.dx()).map(|i| format!("x{i}")).collect();
        header.extend((0..self.d()).map(|i| format!("t{i}")));
        header.push("y".to_string());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let row: Vec<String> = self
                .x
                .row(i)
                .iter()
                .chain(self.t.row(i).iter())
                .chain(std::iter::once(&self.y[i]))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(invalid("n", "must be at least 1"))
    } else {
        Ok(())
    }
}

/// Draw `n` rows from the multivariate linear SCM.
pub fn sample_linear_scm(config: &LinearScmConfig, n: usize, seed: u64) -> Result<Dataset> {
    config.validate()?;
    check_n(n)?;
    let d = config.d;
    let x = normal_matrix(&mut rng::stream(seed, "scm/linear/x"), n, d, 1.0);
    let t_noise = normal_matrix(&mut rng::stream(seed, "scm/linear/t_noise"), n, d, 1.0);
    let t = &x + &t_noise;
    let mut y_rng = rng::stream(seed, "scm/linear/y_noise");
    let y = Array1::from_shape_fn(n, |i| {
        let causal: f64 = t.row(i).iter().take(config.d_c).sum();
        let confounder: f64 = x.row(i).sum();
        let noise: f64 = y_rng.sample(StandardNormal);
        causal + confounder + config.sigma_y * noise
    });
    Ok(Dataset {
        x,
        t,
        y,
        d_c: config.d_c,
        t_noise,
        t_noise_std: vec![1.0; d],
    })
}

/// Draw `n` rows from the scalar Gaussian SCM: `x = [Z]`, `t = [T_C, T_nC]`.
pub fn sample_scalar_scm(params: &GaussianScmParams, n: usize, seed: u64) -> Result<Dataset> {
    params.validate()?;
    check_n(n)?;
    let mut z_rng = rng::stream(seed, "scm/scalar/z");
    let mut t_rng = rng::stream(seed, "scm/scalar/t_noise");
    let mut y_rng = rng::stream(seed, "scm/scalar/y_noise");
    let (sz, sc, sn, sy) = (
        params.var_z.sqrt(),
        params.var_c.sqrt(),
        params.var_n.sqrt(),
        params.var_y.sqrt(),
    );
    let mut x = Array2::zeros((n, 1));
    let mut t = Array2::zeros((n, 2));
    let mut t_noise = Array2::zeros((n, 2));
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let z = sz * z_rng.sample::<f64, _>(StandardNormal);
        let e_c = sc * t_rng.sample::<f64, _>(StandardNormal);
        let e_n = sn * t_rng.sample::<f64, _>(StandardNormal);
        let tc = params.alpha * z + e_c;
        let tn = params.beta * z + e_n;
        x[[i, 0]] = z;
        t[[i, 0]] = tc;
        t[[i, 1]] = tn;
        t_noise[[i, 0]] = e_c;
        t_noise[[i, 1]] = e_n;
        y[i] = params.rho * tc + params.delta * z + sy * y_rng.sample::<f64, _>(StandardNormal);
    }
    Ok(Dataset {
        x,
        t,
        y,
        d_c: 1,
        t_noise,
        t_noise_std: vec![sc, sn],
    })
}

/// Re-draw the exogenous noise of the non-causal treatment coordinates while
/// keeping the confounder, the causal coordinates and the outcome fixed.
pub fn intervene_noncausal(data: &Dataset, seed: u64) -> Result<Dataset> {
    data.validate()?;
    let mut rng = rng::stream(seed, "scm/intervene_noncausal");
    let mut out = data.clone();
    let (n, d) = (data.n(), data.d());
    for i in 0..n {
        for j in data.d_c..d {
            let fresh = data.t_noise_std[j] * rng.sample::<f64, _>(StandardNormal);
            let structural = data.t[[i, j]] - data.t_noise[[i, j]];
            out.t[[i, j]] = structural + fresh;
            out.t_noise[[i, j]] = fresh;
        }
    }
    Ok(out)
}

/// Stochastic compression channel `G = T_C + e_G`, `e_G ~ N(0, var_g)`.
pub fn compress_causal(tc: &Array2<f64>, var_g: f64, seed: u64) -> Result<Array2<f64>> {
    if !(var_g >= 0.0 && var_g.is_finite()) {
        return Err(invalid("var_g", format!("must be finite and >= 0, got {var_g}")));
    }
    if var_g == 0.0 {
        return Ok(tc.clone());
    }
    let mut rng = rng::stream(seed, "scm/compress_causal");
    let sd = var_g.sqrt();
    let mut out = tc.clone();
    out.iter_mut()
        .for_each(|v| *v += sd * rng.sample::<f64, _>(StandardNormal));
    Ok(out)
}

/// Column sample variances (unbiased).
pub fn column_variances(m: &ndarray::ArrayView2<'_, f64>) -> Array1<f64> {
    m.var_axis(Axis(0), 1.0)
}
