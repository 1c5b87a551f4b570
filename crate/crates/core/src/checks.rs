//! The acceptance suite as library functions, shared by the `check`
//! subcommand and the `acceptance` test target.

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::analytic::{
    discrete_mi, gamma_of_lambda, j_value, lambda_crit, mi_tnc_z_given_tc, penalty, rank_by_j, rank_by_l_gamma,
    utility, DiscreteJoint, GaussianScmParams, MiQuery, RepresentationSpec,
};
use crate::error::Result;
use crate::estimators::{infonce_loss, infonce_with_grad, BilinearCritic, GradReverse};
use crate::harness::{self, Method, MiBenchConfig, ResultTable, SweepConfig, PAIRED_DELTA};
use crate::rng::{self, StreamRng};
use crate::scm::LinearScmConfig;
use crate::trainer::{predictor_gradient, predictor_objective, run_on_linear_scm, LinearPredictor, TrainConfig};

/// Identifiers of every criterion, in order.
pub const ALL: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl CheckOutcome {
    /// One-line report, e.g. `[PASS] 2 lambda_crit oracle: ... (0.00s)`.
    pub fn line(&self) -> String {
        format!(
            "[{}] {} {}: {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub workers: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

pub fn name(id: u8) -> &'static str {
    match id {
        1 => "causal vs naive closed form",
        2 => "lambda_crit oracle",
        3 => "lossless regime",
        4 => "gamma equivalence",
        5 => "purification oracle",
        6 => "MI estimator sandwich",
        7 => "noise sweep replication",
        8 => "diagnostic decay",
        9 => "gradient checks",
        10 => "determinism",
        _ => "unknown",
    }
}

/// Run criterion `id`. Errors count as failures.
pub fn run(id: u8, options: &CheckOptions) -> CheckOutcome {
    let start = Instant::now();
    let result = match id {
        1 => causal_vs_naive(),
        2 => lambda_crit_oracle(),
        3 => lossless_regime(),
        4 => gamma_equivalence(),
        5 => purification(),
        6 => mi_sandwich(),
        7 => noise_sweep(options.workers),
        8 => diagnostic_decay(),
        9 => gradient_checks(),
        10 => determinism(options.workers),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome {
        id,
        name: name(id),
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

type Verdict = Result<(bool, String)>;

fn random_params(rng: &mut StreamRng) -> Result<GaussianScmParams> {
    let coef = |rng: &mut StreamRng| {
        let v: f64 = rng.random_range(0.1..3.0);
        if rng.random_bool(0.5) {
            -v
        } else {
            v
        }
    };
    let (alpha, beta, rho, delta) = (coef(rng), coef(rng), coef(rng), coef(rng));
    GaussianScmParams::new(
        alpha,
        beta,
        rho,
        delta,
        rng.random_range(0.1..3.0),
        rng.random_range(0.1..3.0),
        rng.random_range(0.1..3.0),
        rng.random_range(0.1..3.0),
    )
}

fn causal_vs_naive() -> Verdict {
    let mut rng = rng::stream(1, "checks/causal-vs-naive");
    let mut worst: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    for _ in 0..100 {
        let p = random_params(&mut rng)?;
        for lambda in [0.1, 0.5, 1.0, 2.0] {
            let gap =
                j_value(&p, RepresentationSpec::Causal, lambda)? - j_value(&p, RepresentationSpec::Naive, lambda)?;
            worst = worst.max((gap - lambda * mi_tnc_z_given_tc(&p)).abs());
            min_gap = min_gap.min(gap);
        }
    }
    Ok((
        worst <= 1e-12 && min_gap > 0.0,
        format!("max deviation {worst:.3e} nats, min gap {min_gap:.3e}"),
    ))
}

fn lambda_crit_oracle() -> Verdict {
    let p = GaussianScmParams::all_ones();
    let lc = lambda_crit(&p)?;
    let h = 1e-5;
    let du = (utility(&p, h)? - utility(&p, 0.0)?) / h;
    let dp = (penalty(&p, h)? - penalty(&p, 0.0)?) / h;
    let fd = du.abs() / dp.abs();
    Ok((
        lc == 2.0 && (fd - lc).abs() <= 1e-4,
        format!("lambda_crit {lc}, finite-difference ratio {fd:.8}"),
    ))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn lossless_regime() -> Verdict {
    let p = GaussianScmParams::all_ones();
    let grid = log_grid(1e-3, 1e3, 30);
    let beats = |lambda: f64| -> Result<usize> {
        let causal = j_value(&p, RepresentationSpec::Causal, lambda)?;
        let mut n = 0;
        for &var_g in &grid {
            if j_value(&p, RepresentationSpec::CompressedCausal { var_g }, lambda)? > causal {
                n += 1;
            }
        }
        Ok(n)
    };
    let (below, above) = (beats(1.0)?, beats(5.0)?);
    Ok((
        below == 0 && above > 0,
        format!("compressed beats causal at {below}/30 points for lambda=1, {above}/30 for lambda=5"),
    ))
}

fn gamma_equivalence() -> Verdict {
    let mut rng = rng::stream(4, "checks/gamma-equivalence");
    let mut mismatches = 0;
    for _ in 0..20 {
        let p = random_params(&mut rng)?;
        let mut menu = vec![RepresentationSpec::Causal, RepresentationSpec::Naive];
        let extra = rng.random_range(1..6);
        for _ in 0..extra {
            let var_g = 10f64.powf(rng.random_range(-3.0..3.0));
            menu.push(RepresentationSpec::CompressedCausal { var_g });
        }
        let lambda: f64 = rng.random_range(0.01..10.0);
        if rank_by_j(&p, &menu, lambda)? != rank_by_l_gamma(&p, &menu, gamma_of_lambda(lambda)?)? {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches}/20 rankings differ")))
}

fn random_simplex(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// A random joint over `(G, Y, Z)` in which `Y` depends on `G` only through
/// the coarsening `map`, together with that map and its range size.
pub fn purification_instance(rng: &mut StreamRng, max_alphabet: usize) -> Result<(DiscreteJoint, Vec<usize>, usize)> {
    let ng = rng.random_range(2..=max_alphabet);
    let nbar = rng.random_range(1..=ng);
    let ny = rng.random_range(2..=max_alphabet);
    let nz = rng.random_range(2..=max_alphabet);
    let map: Vec<usize> = (0..ng)
        .map(|g| if g < nbar { g } else { rng.random_range(0..nbar) })
        .collect();
    let pz = random_simplex(rng, nz);
    let pg_z: Vec<Vec<f64>> = (0..nz).map(|_| random_simplex(rng, ng)).collect();
    let py: Vec<Vec<Vec<f64>>> = (0..nbar)
        .map(|_| (0..nz).map(|_| random_simplex(rng, ny)).collect())
        .collect();
    let joint = DiscreteJoint::from_fn([ng, ny, nz], |g, y, z| pz[z] * pg_z[z][g] * py[map[g]][z][y])?;
    Ok((joint, map, nbar))
}

fn j_discrete(gyz: &DiscreteJoint, lambda: f64) -> Result<f64> {
    let gzy = gyz.reorder([0, 2, 1])?;
    Ok(discrete_mi(gyz, MiQuery::AbGivenC) - lambda * discrete_mi(&gzy, MiQuery::Ab))
}

fn purification() -> Verdict {
    let mut rng = rng::stream(5, "checks/purification");
    let mut worst: f64 = 0.0;
    let mut min_lhs = f64::INFINITY;
    for _ in 0..200 {
        let (gyz, map, nbar) = purification_instance(&mut rng, 8)?;
        let lambda: f64 = rng.random_range(0.0..5.0);
        let lhs = j_discrete(&gyz.coarsen_a(&map, nbar)?, lambda)? - j_discrete(&gyz, lambda)?;
        let [ng, ny, nz] = gyz.dims();
        let gzbar = DiscreteJoint::from_fn([ng, nz, nbar], |g, z, b| {
            if map[g] == b {
                (0..ny).map(|y| gyz.prob(g, y, z)).sum()
            } else {
                0.0
            }
        })?;
        let rhs = lambda * discrete_mi(&gzbar, MiQuery::AbGivenC);
        worst = worst.max((lhs - rhs).abs());
        min_lhs = min_lhs.min(lhs);
    }
    Ok((
        worst <= 1e-10 && min_lhs >= -1e-10,
        format!("max deviation {worst:.3e} nats, min J gain {min_lhs:.3e}"),
    ))
}

fn mi_sandwich() -> Verdict {
    let rows = harness::mi_bench(&MiBenchConfig::default())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &rows {
        match r.estimate {
            Ok((lo, hi)) => {
                let pass = lo <= r.true_mi + 0.1 && hi >= r.true_mi - 0.15;
                ok &= pass;
                parts.push(format!(
                    "corr {}: true {:.4} lower {:.4} upper {:.4}{}",
                    r.corr,
                    r.true_mi,
                    lo,
                    hi,
                    if pass { "" } else { " (out of band)" }
                ));
            }
            Err(ref e) => {
                ok = false;
                parts.push(format!("corr {}: {e}", r.corr));
            }
        }
    }
    Ok((ok, parts.join("; ")))
}

/// Properties (a)-(c) of a full sweep table at every noise level.
pub fn evaluate_sweep(table: &ResultTable, grid: &[f64]) -> (bool, String) {
    let mut ok = table.failures() == 0;
    let mut parts = vec![format!("{} failed runs", table.failures())];
    for &s in grid {
        let (Some(b), Some(c), Some(d)) = (
            table.aggregate(Method::Baseline.as_str(), s),
            table.aggregate(Method::Crl.as_str(), s),
            table.aggregate(PAIRED_DELTA, s),
        ) else {
            ok = false;
            parts.push(format!("sigma_y {s}: missing aggregates"));
            continue;
        };
        let a = c.sensitivity.median < 0.2 * b.sensitivity.median;
        let bb = b.sensitivity.median > 5.0 * b.sensitivity.iqr;
        let cc = d.mae.median.abs() < d.mae.iqr;
        ok &= a && bb && cc;
        parts.push(format!(
            "sigma_y {s}: (a) crl/base sens {:.4}/{:.4} {} (b) base median/IQR {:.2} {} (c) |dMAE med| {:.4} vs IQR {:.4} {}",
            c.sensitivity.median,
            b.sensitivity.median,
            mark(a),
            b.sensitivity.median / b.sensitivity.iqr,
            mark(bb),
            d.mae.median.abs(),
            d.mae.iqr,
            mark(cc)
        ));
    }
    (ok, parts.join("; "))
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn noise_sweep(workers: usize) -> Verdict {
    let config = SweepConfig {
        workers,
        ..SweepConfig::default()
    };
    let table = harness::run_sweep(&config)?;
    Ok(evaluate_sweep(&table, &config.sigma_y_grid))
}

/// Late-window mean of the InfoNCE trace over its peak in the ramp window.
pub fn decay_ratio(trace: &[f64], config: &TrainConfig) -> f64 {
    let peak = trace[config.ramp_start..config.ramp_end.min(trace.len())]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let tail = &trace[trace.len() - (trace.len() / 20).max(1)..];
    tail.iter().sum::<f64>() / tail.len() as f64 / peak
}

fn diagnostic_decay() -> Verdict {
    let config = TrainConfig::default();
    let scm = LinearScmConfig {
        sigma_y: 0.5,
        ..LinearScmConfig::default()
    };
    let run = run_on_linear_scm(&config, &scm, 0)?;
    let ratio = decay_ratio(&run.trace_lower, &config);
    Ok((ratio <= 0.5, format!("late/peak InfoNCE ratio {ratio:.4}")))
}

fn randn(rows: usize, cols: usize, rng: &mut StreamRng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Central differences of `f` over every entry of `at`.
fn numeric_grad(at: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    let mut x = at.to_vec();
    (0..at.len())
        .map(|i| {
            x[i] = at[i] + h;
            let up = f(&x);
            x[i] = at[i] - h;
            let down = f(&x);
            x[i] = at[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / norm(analytic).max(norm(numeric)).max(1e-12)
}

fn gradient_checks() -> Verdict {
    let mut rng = rng::stream(9, "checks/gradients");
    let (b, d, k) = (6, 4, 3);
    let x = randn(b, d, &mut rng);
    let t = randn(b, d, &mut rng);
    let y = Array1::from_shape_simple_fn(b, || rng.sample(StandardNormal));
    let critic = BilinearCritic::new(randn(k, d, &mut rng) * 0.7, randn(k, d, &mut rng) * 0.7, 0.8)?;
    let model = LinearPredictor {
        w_x: Array1::from_shape_simple_fn(d, || rng.sample(StandardNormal)),
        w_t: Array1::from_shape_simple_fn(d, || rng.sample(StandardNormal)),
        b: 0.3,
    };
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();

    for lambda in [0.0, 0.5] {
        let g = predictor_gradient(&model, &critic, &x.view(), &t.view(), &y.view(), lambda)?;
        let mut analytic = g.d_w_x.to_vec();
        analytic.extend(g.d_w_t.iter());
        analytic.push(g.d_b);
        let flat: Vec<f64> = model
            .w_x
            .iter()
            .chain(model.w_t.iter())
            .copied()
            .chain([model.b])
            .collect();
        let numeric = numeric_grad(&flat, |v| {
            let m = LinearPredictor {
                w_x: Array1::from(v[..d].to_vec()),
                w_t: Array1::from(v[d..2 * d].to_vec()),
                b: v[2 * d],
            };
            predictor_objective(&m, &critic, &x.view(), &t.view(), &y.view(), lambda).unwrap()
        });
        let e = rel_err(&analytic, &numeric);
        worst = worst.max(e);
        parts.push(format!("predictor(lambda={lambda}) {e:.2e}"));
    }

    let h = model.representation(&t.view());
    let g = infonce_with_grad(&critic, &h.view(), &x.view())?;
    let wg = critic.w_g.clone().into_raw_vec_and_offset().0;
    let numeric = numeric_grad(&wg, |v| {
        let c = BilinearCritic::new(
            Array2::from_shape_vec((k, d), v.to_vec()).unwrap(),
            critic.w_x.clone(),
            critic.tau,
        )
        .unwrap();
        infonce_loss(&c, &h.view(), &x.view()).unwrap().loss
    });
    let e_g = rel_err(g.d_w_g.as_slice().expect("standard layout"), &numeric);
    let wx = critic.w_x.clone().into_raw_vec_and_offset().0;
    let numeric = numeric_grad(&wx, |v| {
        let c = BilinearCritic::new(
            critic.w_g.clone(),
            Array2::from_shape_vec((k, d), v.to_vec()).unwrap(),
            critic.tau,
        )
        .unwrap();
        infonce_loss(&c, &h.view(), &x.view()).unwrap().loss
    });
    let e_x = rel_err(g.d_w_x.as_slice().expect("standard layout"), &numeric);
    worst = worst.max(e_g).max(e_x);
    parts.push(format!("critic w_g {e_g:.2e} w_x {e_x:.2e}"));

    // encoder h = t * w upstream of a reversal layer with weight 0.7
    let lambda = 0.7;
    let mut d_h = g.d_reps.clone();
    GradReverse { lambda }.backward(&mut d_h);
    let analytic: Vec<f64> = (0..d).map(|j| (0..b).map(|i| d_h[[i, j]] * t[[i, j]]).sum()).collect();
    let w = model.w_t.to_vec();
    let numeric = numeric_grad(&w, |v| {
        let enc = LinearPredictor {
            w_t: Array1::from(v.to_vec()),
            ..model.clone()
        };
        -lambda
            * infonce_loss(&critic, &enc.representation(&t.view()).view(), &x.view())
                .unwrap()
                .loss
    });
    let e = rel_err(&analytic, &numeric);
    worst = worst.max(e);
    parts.push(format!("grad-reverse composition {e:.2e}"));

    Ok((worst <= 1e-4, parts.join(", ")))
}

fn determinism(workers: usize) -> Verdict {
    let dir = std::env::temp_dir().join(format!("crl-determinism-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let sweep = SweepConfig {
        sigma_y_grid: vec![0.0, 0.5],
        seeds: 3,
        train: TrainConfig {
            epochs: 60,
            ramp_start: 10,
            ramp_end: 40,
            ..TrainConfig::default()
        },
        ..SweepConfig::default()
    };
    let bench = MiBenchConfig {
        correlations: vec![0.0, 0.8],
        steps: 300,
        eval_batches: 10,
        ..MiBenchConfig::default()
    };
    let mut outputs = Vec::new();
    for (i, w) in [1, workers.max(2)].into_iter().enumerate() {
        let sweep_path = dir.join(format!("sweep-{i}.csv"));
        harness::run_sweep(&SweepConfig {
            workers: w,
            ..sweep.clone()
        })?
        .save(&sweep_path)?;
        let bench_path = dir.join(format!("mi-{i}.csv"));
        harness::run_mi_bench(&bench, &bench_path)?;
        outputs.push((std::fs::read(&sweep_path)?, std::fs::read(&bench_path)?));
    }
    std::fs::remove_dir_all(&dir)?;
    let same_sweep = outputs[0].0 == outputs[1].0;
    let same_bench = outputs[0].1 == outputs[1].1;
    Ok((
        same_sweep && same_bench,
        format!(
            "sweep files identical: {same_sweep}, mi-bench files identical: {same_bench} ({} and {} bytes)",
            outputs[0].0.len(),
            outputs[0].1.len()
        ),
    ))
}
