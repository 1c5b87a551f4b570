use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crl_core::checks::{self, CheckOptions};
use crl_core::harness::{self, AnalyticConfig, MiBenchConfig, SweepConfig, TrainRunConfig};
use crl_core::trainer;

const EXIT_PARTIAL: u8 = 1;
const EXIT_INVALID_CONFIG: u8 = 2;

/// Causal disentanglement experiments: analytic curves, MI calibration and
/// synthetic-SCM noise sweeps.
#[derive(Parser)]
#[command(name = "crl-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Root random seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    ramp_start: Option<usize>,
    #[arg(long)]
    ramp_end: Option<usize>,
    #[arg(long)]
    ramp_shape: Option<String>,
    /// Critic embedding dimension.
    #[arg(long)]
    critic_k: Option<usize>,
    #[arg(long)]
    critic_lr: Option<f64>,
    #[arg(long)]
    critic_tau: Option<f64>,
}

impl TrainFlags {
    fn apply(&self, v: &mut Value, prefix: &[&'static str]) {
        let at = |key: &'static str| prefix.iter().copied().chain([key]).collect::<Vec<_>>();
        set(v, &at("lr"), self.lr.map(|x| json!(x)));
        set(v, &at("batch_size"), self.batch_size.map(|x| json!(x)));
        set(v, &at("epochs"), self.epochs.map(|x| json!(x)));
        set(v, &at("lambda_max"), self.lambda_max.map(|x| json!(x)));
        set(v, &at("ramp_start"), self.ramp_start.map(|x| json!(x)));
        set(v, &at("ramp_end"), self.ramp_end.map(|x| json!(x)));
        set(v, &at("ramp_shape"), self.ramp_shape.as_ref().map(|x| json!(x)));
        let critic = |key: &'static str| prefix.iter().copied().chain(["critic", key]).collect::<Vec<_>>();
        set(v, &critic("k"), self.critic_k.map(|x| json!(x)));
        set(v, &critic("lr"), self.critic_lr.map(|x| json!(x)));
        set(v, &critic("tau"), self.critic_tau.map(|x| json!(x)));
    }
}

#[derive(Subcommand)]
enum Command {
    /// Objective curves of the Gaussian toy model.
    Analytic {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        var_z: Option<f64>,
        #[arg(long)]
        var_c: Option<f64>,
        #[arg(long)]
        var_n: Option<f64>,
        #[arg(long)]
        var_y: Option<f64>,
        /// Comma-separated penalty weights.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Comma-separated compression noise variances.
        #[arg(long, value_delimiter = ',')]
        var_g: Option<Vec<f64>>,
    },
    /// Noise sweep of baseline and CRL training runs.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        sigma_y_grid: Option<Vec<f64>>,
        /// Seeds per noise level.
        #[arg(long)]
        seeds: Option<usize>,
        /// Comma-separated subset of baseline,crl.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        d_c: Option<usize>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Critic calibration on correlated Gaussian pairs.
    MiBench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        correlations: Option<Vec<f64>>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        eval_batches: Option<usize>,
    },
    /// One training run; writes a JSON record.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sigma_y: Option<f64>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        d_c: Option<usize>,
        #[arg(long)]
        data_seed: Option<u64>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Run the acceptance suite.
    Check {
        /// Run only these criteria (comma-separated ids).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

/// Error whose exit code is 2.
#[derive(Debug)]
struct InvalidConfig(String);

impl std::fmt::Display for InvalidConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl std::error::Error for InvalidConfig {}

fn set(v: &mut Value, path: &[&str], value: Option<Value>) {
    let Some(value) = value else { return };
    let mut cur = v;
    for key in &path[..path.len() - 1] {
        if !cur.get(*key).is_some_and(Value::is_object) {
            cur[*key] = json!({});
        }
        cur = &mut cur[*key];
    }
    cur[path[path.len() - 1]] = value;
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Defaults, then the config file, then `patch`.
fn load<T>(config: Option<&Path>, patch: impl FnOnce(&mut Value)) -> Result<T>
where
    T: Default + serde::Serialize + serde::de::DeserializeOwned,
{
    let mut v = serde_json::to_value(T::default())?;
    if let Some(path) = config {
        let text = std::fs::read_to_string(path).map_err(|e| InvalidConfig(format!("{}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| InvalidConfig(format!("{}: {e}", path.display())))?;
        if !file.is_object() {
            return Err(InvalidConfig(format!("{}: expected a JSON object", path.display())).into());
        }
        merge(&mut v, file);
    }
    patch(&mut v);
    serde_json::from_value(v).map_err(|e| InvalidConfig(e.to_string()).into())
}

fn invalid(e: crl_core::Error) -> anyhow::Error {
    match e {
        crl_core::Error::InvalidConfig(m) => InvalidConfig(m).into(),
        crl_core::Error::InvalidParameter { .. } => InvalidConfig(e.to_string()).into(),
        other => other.into(),
    }
}

fn out_path(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Analytic {
            common,
            alpha,
            beta,
            rho,
            delta,
            var_z,
            var_c,
            var_n,
            var_y,
            lambdas,
            var_g,
        } => {
            let cfg: AnalyticConfig = load(common.config.as_deref(), |v| {
                for (key, val) in [
                    ("alpha", alpha),
                    ("beta", beta),
                    ("rho", rho),
                    ("delta", delta),
                    ("var_z", var_z),
                    ("var_c", var_c),
                    ("var_n", var_n),
                    ("var_y", var_y),
                ] {
                    set(v, &["params", key], val.map(|x| json!(x)));
                }
                set(v, &["lambdas"], lambdas.map(|x| json!(x)));
                set(v, &["var_g"], var_g.map(|x| json!(x)));
            })?;
            let out = out_path(&common, "analytic.csv");
            let table = harness::emit_analytic_curves(&cfg.params, &cfg.lambdas, &cfg.var_g, &out).map_err(invalid)?;
            if let Some(reason) = &table.degenerate {
                eprintln!("warning: {reason}; lambda_crit column omitted");
            }
            println!(
                "wrote {} rows to {}{}",
                table.rows.len(),
                out.display(),
                table
                    .crossover()
                    .map(|c| format!(", first crossover at lambda {c}"))
                    .unwrap_or_default()
            );
            Ok(0)
        }
        Command::Sweep {
            common,
            sigma_y_grid,
            seeds,
            methods,
            d,
            d_c,
            train,
        } => {
            let cfg: SweepConfig = load(common.config.as_deref(), |v| {
                set(v, &["sigma_y_grid"], sigma_y_grid.map(|x| json!(x)));
                set(v, &["seeds"], seeds.map(|x| json!(x)));
                set(v, &["methods"], methods.map(|x| json!(x)));
                set(v, &["d"], d.map(|x| json!(x)));
                set(v, &["d_c"], d_c.map(|x| json!(x)));
                set(v, &["workers"], common.workers.map(|x| json!(x)));
                set(v, &["seed"], common.seed.map(|x| json!(x)));
                set(v, &["out"], common.out.as_ref().map(|x| json!(x)));
                train.apply(v, &["train"]);
            })?;
            let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("sweep.csv"));
            let table = harness::run_sweep(&cfg).map_err(invalid)?;
            table.save(&out)?;
            let failed = table.failures();
            println!("wrote {} runs to {} ({failed} failed)", table.raw.len(), out.display());
            for r in table.raw.iter().filter(|r| r.outcome.is_err()) {
                eprintln!(
                    "failed: {} sigma_y={} seed={}: {}",
                    r.method,
                    r.sigma_y,
                    r.seed,
                    r.outcome.as_ref().unwrap_err()
                );
            }
            Ok(if failed > 0 { EXIT_PARTIAL } else { 0 })
        }
        Command::MiBench {
            common,
            correlations,
            batch_size,
            steps,
            lr,
            k,
            tau,
            eval_batches,
        } => {
            let cfg: MiBenchConfig = load(common.config.as_deref(), |v| {
                set(v, &["correlations"], correlations.map(|x| json!(x)));
                set(v, &["batch_size"], batch_size.map(|x| json!(x)));
                set(v, &["steps"], steps.map(|x| json!(x)));
                set(v, &["lr"], lr.map(|x| json!(x)));
                set(v, &["k"], k.map(|x| json!(x)));
                set(v, &["tau"], tau.map(|x| json!(x)));
                set(v, &["eval_batches"], eval_batches.map(|x| json!(x)));
                set(v, &["seed"], common.seed.map(|x| json!(x)));
            })?;
            let out = out_path(&common, "mi_bench.csv");
            let rows = harness::run_mi_bench(&cfg, &out).map_err(invalid)?;
            let failed = rows.iter().filter(|r| r.estimate.is_err()).count();
            println!("wrote {} rows to {} ({failed} failed)", rows.len(), out.display());
            Ok(if failed > 0 { EXIT_PARTIAL } else { 0 })
        }
        Command::Train {
            common,
            sigma_y,
            d,
            d_c,
            data_seed,
            train,
        } => {
            let cfg: TrainRunConfig = load(common.config.as_deref(), |v| {
                set(v, &["scm", "sigma_y"], sigma_y.map(|x| json!(x)));
                set(v, &["scm", "d"], d.map(|x| json!(x)));
                set(v, &["scm", "d_c"], d_c.map(|x| json!(x)));
                set(v, &["data_seed"], data_seed.map(|x| json!(x)));
                set(v, &["train", "seed"], common.seed.map(|x| json!(x)));
                train.apply(v, &["train"]);
            })?;
            cfg.train.validate().map_err(invalid)?;
            cfg.scm.validate().map_err(invalid)?;
            let out = out_path(&common, "run.json");
            match trainer::run_on_linear_scm(&cfg.train, &cfg.scm, cfg.data_seed) {
                Ok(result) => {
                    std::fs::write(&out, result.to_json()?)?;
                    println!(
                        "mae {:.6} sensitivity {:.6}; wrote {}",
                        result.mae,
                        result.sensitivity,
                        out.display()
                    );
                    Ok(0)
                }
                Err(e) => {
                    eprintln!("training failed: {e}");
                    Ok(EXIT_PARTIAL)
                }
            }
        }
        Command::Check { only, workers } => {
            let ids = only.unwrap_or_else(|| checks::ALL.to_vec());
            if let Some(bad) = ids.iter().find(|id| !checks::ALL.contains(id)) {
                return Err(InvalidConfig(format!("no criterion {bad}")).into());
            }
            let options = CheckOptions {
                workers: workers.unwrap_or(1).max(1),
            };
            let mut failed = 0;
            for id in ids {
                let outcome = checks::run(id, &options);
                println!("{}", outcome.line());
                failed += usize::from(!outcome.passed);
            }
            Ok(if failed > 0 { EXIT_PARTIAL } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) if e.downcast_ref::<InvalidConfig>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_PARTIAL)
        }
    }
}
