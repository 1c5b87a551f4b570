use approx::assert_abs_diff_eq;
use crl_core::analytic::{penalty, utility, GaussianScmParams, RepresentationSpec};
use crl_core::harness::*;
use crl_core::trainer::TrainConfig;
use crl_core::Error;
use proptest::prelude::*;

fn short_train() -> TrainConfig {
    TrainConfig {
        epochs: 40,
        ramp_start: 5,
        ramp_end: 30,
        ..TrainConfig::default()
    }
}

fn small_sweep() -> SweepConfig {
    SweepConfig {
        sigma_y_grid: vec![0.0, 0.5],
        seeds: 3,
        train: short_train(),
        ..SweepConfig::default()
    }
}

#[test]
fn noiseless_single_baseline_run_fits() {
    let cfg = SweepConfig {
        sigma_y_grid: vec![0.0],
        seeds: 1,
        methods: vec![Method::Baseline],
        ..SweepConfig::default()
    };
    let table = run_sweep(&cfg).unwrap();
    assert_eq!(table.raw.len(), 1);
    let m = table.raw[0].outcome.as_ref().unwrap();
    assert!(m.mae < 0.05, "{m:?}");
}

#[test]
fn sweep_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    run_sweep(&small_sweep()).unwrap().save(&a).unwrap();
    run_sweep(&SweepConfig {
        workers: 3,
        ..small_sweep()
    })
    .unwrap()
    .save(&b)
    .unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn job_order_does_not_change_rows() {
    let cfg = small_sweep();
    let table = run_sweep(&cfg).unwrap();
    let mut jobs = cfg.jobs();
    jobs.reverse();
    for job in jobs {
        let row = run_job(&cfg, job);
        assert!(table.raw.contains(&row), "{row:?}");
    }
}

#[test]
fn paired_runs_share_data() {
    let cfg = SweepConfig {
        train: TrainConfig {
            lambda_max: 0.0,
            ..short_train()
        },
        ..small_sweep()
    };
    let table = run_sweep(&cfg).unwrap();
    let d = table.aggregate(PAIRED_DELTA, 0.5).unwrap();
    assert_eq!(d.mae.median, 0.0);
    assert_eq!(d.mae.iqr, 0.0);
}

#[test]
fn sweep_config_validation() {
    let bad = [
        SweepConfig {
            sigma_y_grid: vec![],
            ..SweepConfig::default()
        },
        SweepConfig {
            seeds: 0,
            ..SweepConfig::default()
        },
        SweepConfig {
            sigma_y_grid: vec![1.5],
            ..SweepConfig::default()
        },
        SweepConfig {
            methods: vec![],
            ..SweepConfig::default()
        },
    ];
    for cfg in bad {
        assert!(matches!(run_sweep(&cfg), Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn result_table_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let table = run_sweep(&small_sweep()).unwrap();
    table.save(&path).unwrap();
    assert_eq!(load_result_table(&path).unwrap(), table);
}

fn sample_table() -> ResultTable {
    let mut raw = Vec::new();
    for seed in 0..4u64 {
        for method in [Method::Baseline, Method::Crl] {
            raw.push(RawRow {
                method,
                sigma_y: 0.25,
                seed,
                outcome: Ok(RunMetrics {
                    mae: 0.1 * seed as f64 + if method == Method::Crl { 0.01 } else { 0.0 },
                    sensitivity: 1.0 / (seed + 1) as f64,
                }),
            });
        }
    }
    raw.push(RawRow {
        method: Method::Crl,
        sigma_y: 0.25,
        seed: 4,
        outcome: Err("non-finite loss at epoch 3".into()),
    });
    ResultTable::from_raw(raw)
}

#[test]
fn failed_runs_are_kept_but_not_aggregated() {
    let t = sample_table();
    assert_eq!(t.failures(), 1);
    let crl = t.aggregate("crl", 0.25).unwrap();
    assert_abs_diff_eq!(crl.mae.median, 0.16, epsilon = 1e-15);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    t.save(&path).unwrap();
    assert_eq!(load_result_table(&path).unwrap(), t);
}

#[test]
fn tampered_aggregate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let text = sample_table().to_csv_string().unwrap();
    let line = text.lines().find(|l| l.starts_with("median,crl,")).unwrap();
    let fields: Vec<&str> = line.split(',').collect();
    let tampered = format!(
        "{},{},{},{},0.5,{},{}",
        fields[0], fields[1], fields[2], fields[3], fields[5], fields[6]
    );
    std::fs::write(&path, text.replace(line, &tampered)).unwrap();
    match load_result_table(&path) {
        Err(Error::InconsistentAggregate { method, .. }) => assert_eq!(method, "crl"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_aggregate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let text = sample_table().to_csv_string().unwrap();
    let kept: String = text
        .lines()
        .filter(|l| !l.starts_with("iqr,baseline"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&path, kept).unwrap();
    assert!(matches!(
        load_result_table(&path),
        Err(Error::InconsistentAggregate { .. })
    ));
}

#[test]
fn empty_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, "").unwrap();
    assert!(matches!(load_result_table(&path), Err(Error::EmptyInput { .. })));
}

#[test]
fn malformed_row_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    let mut text = sample_table().to_csv_string().unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[3] = "raw,crl,0.25,zero,0.1,0.2,".into();
    text = lines.join("\n") + "\n";
    std::fs::write(&path, text).unwrap();
    match load_result_table(&path) {
        Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn analytic_curves_examples() {
    let p = GaussianScmParams::all_ones();
    let lambdas: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
    let t = analytic_curves(&p, &lambdas, &[0.0, 0.5, 2.0]).unwrap();
    assert_eq!(t.lambda_crit, Some(2.0));
    let at = |lambda: f64, rep: RepresentationSpec| {
        t.rows
            .iter()
            .find(|r| r.lambda == lambda && r.representation == rep)
            .unwrap()
            .j
    };
    let u0 = utility(&p, 0.0).unwrap();
    assert_eq!(at(0.0, RepresentationSpec::Causal), u0);
    assert_eq!(at(0.0, RepresentationSpec::CompressedCausal { var_g: 0.0 }), u0);
    for &l in &lambdas[1..] {
        assert!(at(l, RepresentationSpec::Causal) > at(l, RepresentationSpec::Naive));
    }
}

#[test]
fn crossover_near_lambda_crit_for_small_compression() {
    let step = 0.01;
    let lambdas: Vec<f64> = (0..=400).map(|i| i as f64 * step).collect();
    let t = analytic_curves(&GaussianScmParams::all_ones(), &lambdas, &[1e-7, 1e-6]).unwrap();
    let c = t.crossover().unwrap();
    assert!((2.0..=2.0 + step).contains(&c), "{c}");
}

#[test]
fn crossover_matches_finite_compression_oracle() {
    // J(v) > J(0) iff lambda > dU/dP, with dU = U(0) - U(v), dP = P(0) - P(v)
    let p = GaussianScmParams::all_ones();
    let var_gs = [0.1, 1.0, 10.0, 1000.0];
    let lambdas: Vec<f64> = (0..=500).map(|i| i as f64 * 0.005).collect();
    let ratio = |v: f64| {
        let u = |v: f64| {
            let (s, a) = (2.0, 1.0 / (1.0 + v));
            0.5 * (s / (s - a)).ln()
        };
        let pen = |v: f64| 0.5 * (1.0 + 1.0 / (1.0 + v)).ln();
        (u(0.0) - u(v)) / (pen(0.0) - pen(v))
    };
    for &v in &var_gs {
        assert_abs_diff_eq!(
            ratio(v),
            (utility(&p, 0.0).unwrap() - utility(&p, v).unwrap())
                / (penalty(&p, 0.0).unwrap() - penalty(&p, v).unwrap()),
            epsilon = 1e-9
        );
    }
    let threshold = var_gs.iter().map(|&v| ratio(v)).fold(f64::INFINITY, f64::min);
    let expected = lambdas.iter().copied().find(|&l| l > threshold).unwrap();
    let t = analytic_curves(&p, &lambdas, &var_gs).unwrap();
    assert_eq!(t.crossover(), Some(expected));
    assert!(expected < 1.01);
}

#[test]
fn degenerate_params_drop_lambda_crit_column() {
    let mut p = GaussianScmParams::all_ones();
    p.alpha = 0.0;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curves.csv");
    let t = emit_analytic_curves(&p, &[0.0, 1.0], &[0.5], &path).unwrap();
    assert!(t.lambda_crit.is_none() && t.degenerate.is_some());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "lambda,representation,var_g,j");
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    let ok = emit_analytic_curves(&GaussianScmParams::all_ones(), &[1.0], &[0.5], &path).unwrap();
    assert_eq!(ok.lambda_crit, Some(2.0));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",2"));
}

#[test]
fn empty_grids_are_rejected() {
    let p = GaussianScmParams::all_ones();
    assert!(analytic_curves(&p, &[], &[1.0]).is_err());
    assert!(analytic_curves(&p, &[1.0], &[]).is_err());
}

#[test]
fn mi_bench_examples() {
    let cfg = MiBenchConfig {
        correlations: vec![0.0, 0.8],
        ..MiBenchConfig::default()
    };
    let rows = mi_bench(&cfg).unwrap();
    assert_eq!(rows[0].true_mi, 0.0);
    let (lo0, _) = rows[0].estimate.clone().unwrap();
    assert!(lo0.abs() <= 0.05, "{lo0}");
    assert_abs_diff_eq!(rows[1].true_mi, 0.5108256237659907, epsilon = 1e-12);
    let (lo, hi) = rows[1].estimate.clone().unwrap();
    assert!(lo <= 0.61 && hi >= 0.36, "{lo} {hi}");
}

#[test]
fn mi_bench_file_and_true_mi_column() {
    let cfg = MiBenchConfig {
        correlations: vec![0.1, -0.3, 0.6, -0.9],
        steps: 50,
        eval_batches: 2,
        ..MiBenchConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mi.csv");
    let rows = run_mi_bench(&cfg, &path).unwrap();
    assert!(rows.windows(2).all(|w| w[1].true_mi > w[0].true_mi));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "corr,true_mi,lower,upper,error");
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn mi_bench_rejects_bad_correlation() {
    for corr in [1.0, -1.0, f64::NAN] {
        let cfg = MiBenchConfig {
            correlations: vec![corr],
            ..MiBenchConfig::default()
        };
        assert!(matches!(mi_bench(&cfg), Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn mi_bench_records_divergence_per_row() {
    let cfg = MiBenchConfig {
        correlations: vec![0.5, 0.9],
        lr: 1e200,
        steps: 20,
        eval_batches: 1,
        ..MiBenchConfig::default()
    };
    let rows = mi_bench(&cfg).unwrap();
    assert!(rows.iter().all(|r| r.estimate.is_err()), "{rows:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn aggregates_survive_save_and_load(
        values in prop::collection::vec((0usize..2, 0usize..3, 0.0f64..2.0, 0.0f64..2.0, any::<bool>()), 1..40)
    ) {
        let grid = [0.0, 0.25, 1.0];
        let raw: Vec<RawRow> = values
            .iter()
            .enumerate()
            .map(|(i, &(m, s, mae, sens, fail))| RawRow {
                method: if m == 0 { Method::Baseline } else { Method::Crl },
                sigma_y: grid[s],
                seed: (i / 2) as u64,
                outcome: if fail && i % 5 == 0 {
                    Err("diverged".into())
                } else {
                    Ok(RunMetrics { mae, sensitivity: sens })
                },
            })
            .collect();
        let table = ResultTable::from_raw(raw);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        table.save(&path).unwrap();
        prop_assert_eq!(load_result_table(&path).unwrap(), table);
    }

    #[test]
    fn summary_quartiles_are_ordered(values in prop::collection::vec(-1e3f64..1e3, 1..60)) {
        let s = summarize(&values);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= max);
        prop_assert!(s.iqr >= 0.0);
    }
}
