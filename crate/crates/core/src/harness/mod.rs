//! Experiment drivers: noise sweeps, analytic curves and MI calibration, each
//! writing CSV tables.

mod curves;
mod mi_bench;
mod sweep;
mod table;

pub use curves::{analytic_curves, emit_analytic_curves, AnalyticConfig, CurveRow, CurveTable};
pub use mi_bench::{mi_bench, run_mi_bench, write_mi_bench_csv, MiBenchConfig, MiBenchRow};
pub use sweep::{run_job, run_sweep, SweepConfig, SweepJob, TrainRunConfig};
pub use table::{
    load_result_table, quantile_sorted, summarize, Aggregate, GroupKey, Method, RawRow, ResultTable, RunMetrics,
    Summary, PAIRED_DELTA,
};
