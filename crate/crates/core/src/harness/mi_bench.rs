//! Calibration of the critic's lower/upper MI estimates on correlated
//! Gaussian pairs with known mutual information.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{mean_estimate, train_critic, BilinearCritic, CorrelatedGaussian, CriticTrainConfig};
use crate::rng::child_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiBenchConfig {
    pub correlations: Vec<f64>,
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    /// Embedding dimension of the bilinear critic.
    pub k: usize,
    pub tau: f64,
    /// Fresh batches averaged for the reported estimates.
    pub eval_batches: usize,
    pub seed: u64,
}

impl Default for MiBenchConfig {
    fn default() -> Self {
        Self {
            correlations: vec![0.0, 0.5, 0.8, 0.95],
            batch_size: 256,
            steps: 10_000,
            lr: 1e-2,
            k: 4,
            tau: 1.0,
            eval_batches: 100,
            seed: 0,
        }
    }
}

impl MiBenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.correlations.is_empty() {
            return Err(Error::InvalidConfig("correlations must be nonempty".into()));
        }
        if let Some(c) = self.correlations.iter().find(|c| c.is_nan() || c.abs() >= 1.0) {
            return Err(Error::InvalidConfig(format!("correlation {c} outside (-1, 1)")));
        }
        if self.batch_size < 2 || self.steps == 0 || self.eval_batches == 0 || self.k == 0 {
            return Err(Error::InvalidConfig(
                "batch_size >= 2, steps >= 1, eval_batches >= 1 and k >= 1 required".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig("lr and tau must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiBenchRow {
    pub corr: f64,
    pub true_mi: f64,
    /// `(lower, upper)`, or the training error.
    pub estimate: std::result::Result<(f64, f64), String>,
}

fn bench_one(config: &MiBenchConfig, index: usize, corr: f64) -> Result<(f64, f64)> {
    let seed = child_seed(config.seed, &format!("mi-bench/{index}/{corr}"));
    let mut source = CorrelatedGaussian { corr };
    let critic = BilinearCritic::random(config.k, 1, 1, config.tau, child_seed(seed, "init"))?;
    let critic = train_critic(
        critic,
        &mut source,
        CriticTrainConfig {
            steps: config.steps,
            batch_size: config.batch_size,
            lr: config.lr,
        },
        child_seed(seed, "train"),
    )?;
    let est = mean_estimate(
        &critic,
        &mut source,
        config.batch_size,
        config.eval_batches,
        child_seed(seed, "eval"),
    )?;
    if !(est.lower_bound_nats.is_finite() && est.upper_bound_nats.is_finite()) {
        return Err(invalid("estimate", "non-finite"));
    }
    Ok((est.lower_bound_nats, est.upper_bound_nats))
}

/// Train one critic per correlation and report its averaged estimates.
pub fn mi_bench(config: &MiBenchConfig) -> Result<Vec<MiBenchRow>> {
    config.validate()?;
    Ok(config
        .correlations
        .iter()
        .enumerate()
        .map(|(i, &corr)| MiBenchRow {
            corr,
            true_mi: CorrelatedGaussian { corr }.true_mi(),
            estimate: bench_one(config, i, corr).map_err(|e| e.to_string()),
        })
        .collect())
}

pub fn write_mi_bench_csv<W: std::io::Write>(rows: &[MiBenchRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["corr", "true_mi", "lower", "upper", "error"])?;
    for r in rows {
        let (lo, hi, err) = match &r.estimate {
            Ok((lo, hi)) => (lo.to_string(), hi.to_string(), String::new()),
            Err(e) => (String::new(), String::new(), e.clone()),
        };
        w.write_record([r.corr.to_string(), r.true_mi.to_string(), lo, hi, err])?;
    }
    w.flush()?;
    Ok(())
}

/// [`mi_bench`] written as CSV to `path`.
pub fn run_mi_bench(config: &MiBenchConfig, path: &Path) -> Result<Vec<MiBenchRow>> {
    let rows = mi_bench(config)?;
    let mut buf = Vec::new();
    write_mi_bench_csv(&rows, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(rows)
}
