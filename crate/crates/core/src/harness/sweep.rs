//! Noise sweeps over the linear SCM: every (sigma_y, seed, method) job is an
//! independent training run.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::{Method, RawRow, ResultTable, RunMetrics};
use crate::error::{Error, Result};
use crate::rng::child_seed;
use crate::scm::LinearScmConfig;
use crate::trainer::{run_on_linear_scm, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sigma_y_grid: Vec<f64>,
    /// Seeds per noise level; seeds are `0..seeds`.
    pub seeds: usize,
    pub methods: Vec<Method>,
    /// Template for every run. `lambda_max` applies to `crl`; `baseline`
    /// runs use the same settings with the penalty switched off.
    pub train: TrainConfig,
    pub d: usize,
    pub d_c: usize,
    /// Root of every per-job seed.
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let scm = LinearScmConfig::default();
        Self {
            sigma_y_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seeds: 50,
            methods: vec![Method::Baseline, Method::Crl],
            train: TrainConfig::default(),
            d: scm.d,
            d_c: scm.d_c,
            seed: 0,
            workers: 1,
            out: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_y_grid.is_empty() {
            return Err(Error::InvalidConfig("sigma_y_grid must be nonempty".into()));
        }
        if let Some(s) = self.sigma_y_grid.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidConfig(format!("sigma_y {s} outside [0, 1]")));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("seeds must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("methods must be nonempty".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        self.scm(0.0)
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        self.train.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    fn scm(&self, sigma_y: f64) -> LinearScmConfig {
        LinearScmConfig {
            d: self.d,
            d_c: self.d_c,
            sigma_y,
        }
    }

    /// Every job of the sweep in canonical order.
    pub fn jobs(&self) -> Vec<SweepJob> {
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        let mut jobs = Vec::new();
        for &method in &methods {
            for &sigma_y in &self.sigma_y_grid {
                for seed in 0..self.seeds as u64 {
                    jobs.push(SweepJob { method, sigma_y, seed });
                }
            }
        }
        jobs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepJob {
    pub method: Method,
    pub sigma_y: f64,
    pub seed: u64,
}

/// Run a single job. Data and training randomness depend only on the root
/// seed, `sigma_y` and `seed`, so both methods see the same data and
/// initialisation for a given seed.
pub fn run_job(config: &SweepConfig, job: SweepJob) -> RawRow {
    let pair_seed = child_seed(config.seed, &format!("sweep/sigma={}/seed={}", job.sigma_y, job.seed));
    let mut train = TrainConfig {
        seed: child_seed(pair_seed, "train"),
        ..config.train
    };
    if job.method == Method::Baseline {
        train = train.baseline();
    }
    let outcome = run_on_linear_scm(&train, &config.scm(job.sigma_y), child_seed(pair_seed, "data"))
        .map(|r| RunMetrics {
            mae: r.mae,
            sensitivity: r.sensitivity,
        })
        .map_err(|e| e.to_string());
    RawRow {
        method: job.method,
        sigma_y: job.sigma_y,
        seed: job.seed,
        outcome,
    }
}

/// Run every job on a pool of `config.workers` threads and aggregate.
pub fn run_sweep(config: &SweepConfig) -> Result<ResultTable> {
    config.validate()?;
    let jobs = config.jobs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let raw: Vec<RawRow> = pool.install(|| jobs.par_iter().map(|&job| run_job(config, job)).collect());
    Ok(ResultTable::from_raw(raw))
}

/// Input of a single training run on the linear SCM.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub train: TrainConfig,
    pub scm: LinearScmConfig,
    pub data_seed: u64,
}
