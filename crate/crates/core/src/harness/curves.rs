//! Plot data for the Gaussian toy model: `J` against `lambda` for the causal,
//! naive and compressed-causal representations.

use std::path::Path;

use crate::analytic::{j_value, lambda_crit, GaussianScmParams, RepresentationSpec};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub lambda: f64,
    pub representation: RepresentationSpec,
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
    /// `None` when the parameters are degenerate.
    pub lambda_crit: Option<f64>,
    /// Why `lambda_crit` is missing.
    pub degenerate: Option<String>,
}

impl CurveTable {
    /// Smallest grid `lambda` at which some compressed representation has a
    /// strictly larger `J` than the causal one.
    pub fn crossover(&self) -> Option<f64> {
        let mut causal = std::collections::BTreeMap::new();
        for r in &self.rows {
            if r.representation == RepresentationSpec::Causal {
                causal.insert(r.lambda.to_bits(), r.j);
            }
        }
        self.rows
            .iter()
            .filter(|r| matches!(r.representation, RepresentationSpec::CompressedCausal { .. }))
            .filter(|r| causal.get(&r.lambda.to_bits()).is_some_and(|&c| r.j > c))
            .map(|r| r.lambda)
            .min_by(f64::total_cmp)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header = vec!["lambda", "representation", "var_g", "j"];
        if self.lambda_crit.is_some() {
            header.push("lambda_crit");
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let var_g = match r.representation {
                RepresentationSpec::CompressedCausal { var_g } => var_g.to_string(),
                _ => String::new(),
            };
            let kind = match r.representation {
                RepresentationSpec::Causal => "causal",
                RepresentationSpec::Naive => "naive",
                RepresentationSpec::CompressedCausal { .. } => "compressed_causal",
            };
            let mut rec = vec![r.lambda.to_string(), kind.to_string(), var_g, r.j.to_string()];
            if let Some(lc) = self.lambda_crit {
                rec.push(lc.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluate `J` on the grid. Degenerate parameters (`alpha = 0`) still give
/// curves, without the `lambda_crit` column.
pub fn analytic_curves(params: &GaussianScmParams, lambdas: &[f64], var_gs: &[f64]) -> Result<CurveTable> {
    params.validate()?;
    if lambdas.is_empty() {
        return Err(invalid("lambda grid", "must be nonempty"));
    }
    if var_gs.is_empty() {
        return Err(invalid("var_g grid", "must be nonempty"));
    }
    let (lambda_crit, degenerate) = match lambda_crit(params) {
        Ok(v) => (Some(v), None),
        Err(Error::DegenerateParams(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    let mut reps = vec![RepresentationSpec::Causal, RepresentationSpec::Naive];
    reps.extend(
        var_gs
            .iter()
            .map(|&var_g| RepresentationSpec::CompressedCausal { var_g }),
    );
    let mut rows = Vec::with_capacity(lambdas.len() * reps.len());
    for &lambda in lambdas {
        for &rep in &reps {
            rows.push(CurveRow {
                lambda,
                representation: rep,
                j: j_value(params, rep, lambda)?,
            });
        }
    }
    Ok(CurveTable {
        rows,
        lambda_crit,
        degenerate,
    })
}

/// [`analytic_curves`] written as CSV to `path`.
pub fn emit_analytic_curves(
    params: &GaussianScmParams,
    lambdas: &[f64],
    var_gs: &[f64],
    path: &Path,
) -> Result<CurveTable> {
    let table = analytic_curves(params, lambdas, var_gs)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(table)
}

/// Input of the `analytic` subcommand.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticConfig {
    pub params: GaussianScmParams,
    pub lambdas: Vec<f64>,
    pub var_g: Vec<f64>,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        Self {
            params: GaussianScmParams::all_ones(),
            lambdas: (0..=100).map(|i| i as f64 * 0.05).collect(),
            var_g: (0..=12).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect(),
        }
    }
}
