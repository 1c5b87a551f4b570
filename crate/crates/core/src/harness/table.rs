//! Sweep result tables: raw per-run rows plus per-(method, sigma_y) medians
//! and quartiles, stored together in one CSV.
//!
//! ```text
//! kind,method,sigma_y,seed,mae,sensitivity,error
//! raw,baseline,0.5,0,0.41,0.031,
//! raw,crl,0.5,0,0.40,0.004,
//! median,baseline,0.5,,0.41,0.031,
//! q1,baseline,0.5,,...
//! q3,baseline,0.5,,...
//! iqr,baseline,0.5,,...
//! median,paired_delta,0.5,,<dMAE>,<dSensitivity>,
//! ```
//!
//! `paired_delta` aggregates `crl - baseline` per seed. Quantiles use linear
//! interpolation between order statistics. A failed run is a `raw` row with
//! empty metrics and a non-empty `error`, and is left out of every aggregate.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Crl,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Crl => "crl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Method::Baseline),
            "crl" => Ok(Method::Crl),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// Name used for the paired `crl - baseline` aggregate rows.
pub const PAIRED_DELTA: &str = "paired_delta";

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub method: Method,
    pub sigma_y: f64,
    pub seed: u64,
    pub outcome: std::result::Result<RunMetrics, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub mae: f64,
    pub sensitivity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stat {
    Median,
    Q1,
    Q3,
    Iqr,
}

impl Stat {
    const ALL: [Stat; 4] = [Stat::Median, Stat::Q1, Stat::Q3, Stat::Iqr];

    fn as_str(&self) -> &'static str {
        match self {
            Stat::Median => "median",
            Stat::Q1 => "q1",
            Stat::Q3 => "q3",
            Stat::Iqr => "iqr",
        }
    }

    fn parse(s: &str) -> Option<Stat> {
        Stat::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Summary statistics of one metric over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

impl Summary {
    fn get(&self, stat: Stat) -> f64 {
        match stat {
            Stat::Median => self.median,
            Stat::Q1 => self.q1,
            Stat::Q3 => self.q3,
            Stat::Iqr => self.iqr,
        }
    }
}

/// Linear-interpolation quantile of sorted `values`.
pub fn quantile_sorted(values: &[f64], q: f64) -> f64 {
    match values.len() {
        0 => f64::NAN,
        1 => values[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
        }
    }
}

/// Median, quartiles and IQR of `values` (any order).
pub fn summarize(values: &[f64]) -> Summary {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25);
    let q3 = quantile_sorted(&v, 0.75);
    Summary {
        median: quantile_sorted(&v, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
    }
}

/// Key of an aggregate group: a method name or [`PAIRED_DELTA`], and the
/// noise level as raw bits so it can order a map.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupKey {
    pub group: String,
    pub sigma_bits: u64,
}

impl GroupKey {
    pub fn new(group: impl Into<String>, sigma_y: f64) -> Self {
        Self {
            group: group.into(),
            sigma_bits: sigma_y.to_bits(),
        }
    }

    pub fn sigma_y(&self) -> f64 {
        f64::from_bits(self.sigma_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mae: Summary,
    pub sensitivity: Summary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub raw: Vec<RawRow>,
    pub aggregates: BTreeMap<GroupKey, Aggregate>,
}

impl ResultTable {
    /// Build a table from raw rows, computing every aggregate.
    pub fn from_raw(raw: Vec<RawRow>) -> Self {
        let aggregates = compute_aggregates(&raw);
        Self { raw, aggregates }
    }

    pub fn failures(&self) -> usize {
        self.raw.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn aggregate(&self, group: &str, sigma_y: f64) -> Option<&Aggregate> {
        self.aggregates.get(&GroupKey::new(group, sigma_y))
    }

    /// Per-seed metrics of `method` at `sigma_y`, failures skipped.
    pub fn metrics(&self, method: Method, sigma_y: f64) -> Vec<(u64, RunMetrics)> {
        self.raw
            .iter()
            .filter(|r| r.method == method && r.sigma_y.to_bits() == sigma_y.to_bits())
            .filter_map(|r| r.outcome.as_ref().ok().map(|m| (r.seed, *m)))
            .collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["kind", "method", "sigma_y", "seed", "mae", "sensitivity", "error"])?;
        for r in &self.raw {
            let (mae, sens, err) = match &r.outcome {
                Ok(m) => (m.mae.to_string(), m.sensitivity.to_string(), String::new()),
                Err(e) => (String::new(), String::new(), e.clone()),
            };
            w.write_record([
                "raw",
                r.method.as_str(),
                &r.sigma_y.to_string(),
                &r.seed.to_string(),
                &mae,
                &sens,
                &err,
            ])?;
        }
        for (key, agg) in &self.aggregates {
            for stat in Stat::ALL {
                w.write_record([
                    stat.as_str(),
                    &key.group,
                    &key.sigma_y().to_string(),
                    "",
                    &agg.mae.get(stat).to_string(),
                    &agg.sensitivity.get(stat).to_string(),
                    "",
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }
}

fn compute_aggregates(raw: &[RawRow]) -> BTreeMap<GroupKey, Aggregate> {
    let mut groups: BTreeMap<GroupKey, Vec<RunMetrics>> = BTreeMap::new();
    let mut by_seed: BTreeMap<(u64, u64), BTreeMap<Method, RunMetrics>> = BTreeMap::new();
    for r in raw {
        if let Ok(m) = &r.outcome {
            groups
                .entry(GroupKey::new(r.method.as_str(), r.sigma_y))
                .or_default()
                .push(*m);
            by_seed
                .entry((r.sigma_y.to_bits(), r.seed))
                .or_default()
                .insert(r.method, *m);
        }
    }
    for ((sigma_bits, _), methods) in &by_seed {
        if let (Some(b), Some(c)) = (methods.get(&Method::Baseline), methods.get(&Method::Crl)) {
            groups
                .entry(GroupKey::new(PAIRED_DELTA, f64::from_bits(*sigma_bits)))
                .or_default()
                .push(RunMetrics {
                    mae: c.mae - b.mae,
                    sensitivity: c.sensitivity - b.sensitivity,
                });
        }
    }
    groups
        .into_iter()
        .map(|(k, ms)| {
            let mae: Vec<f64> = ms.iter().map(|m| m.mae).collect();
            let sens: Vec<f64> = ms.iter().map(|m| m.sensitivity).collect();
            (
                k,
                Aggregate {
                    mae: summarize(&mae),
                    sensitivity: summarize(&sens),
                },
            )
        })
        .collect()
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Load a table written by [`ResultTable::save`] and check that every
/// aggregate row equals its recomputation from the raw rows.
pub fn load_result_table(path: &Path) -> Result<ResultTable> {
    let text = std::fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(Error::EmptyInput {
            path: path.to_path_buf(),
        });
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let expected = ["kind", "method", "sigma_y", "seed", "mae", "sensitivity", "error"];
    if header.iter().ne(expected.iter().copied()) {
        return Err(malformed(
            path,
            1,
            format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        ));
    }

    let mut raw = Vec::new();
    let mut stated: BTreeMap<GroupKey, BTreeMap<Stat, (f64, f64)>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| malformed(path, line, e.to_string()))?;
        if rec.len() != expected.len() {
            return Err(malformed(path, line, format!("expected 7 fields, got {}", rec.len())));
        }
        let num = |idx: usize, what: &str| -> Result<f64> {
            rec[idx]
                .parse::<f64>()
                .map_err(|_| malformed(path, line, format!("bad {what} `{}`", &rec[idx])))
        };
        let sigma_y = num(2, "sigma_y")?;
        if &rec[0] == "raw" {
            let method: Method = rec[1]
                .parse()
                .map_err(|_| malformed(path, line, format!("bad method `{}`", &rec[1])))?;
            let seed = rec[3]
                .parse::<u64>()
                .map_err(|_| malformed(path, line, format!("bad seed `{}`", &rec[3])))?;
            let outcome = if rec[6].is_empty() {
                Ok(RunMetrics {
                    mae: num(4, "mae")?,
                    sensitivity: num(5, "sensitivity")?,
                })
            } else {
                Err(rec[6].to_string())
            };
            raw.push(RawRow {
                method,
                sigma_y,
                seed,
                outcome,
            });
        } else if let Some(stat) = Stat::parse(&rec[0]) {
            let group = &rec[1];
            if group != PAIRED_DELTA && group.parse::<Method>().is_err() {
                return Err(malformed(path, line, format!("bad aggregate group `{group}`")));
            }
            let prev = stated
                .entry(GroupKey::new(group, sigma_y))
                .or_default()
                .insert(stat, (num(4, "mae")?, num(5, "sensitivity")?));
            if prev.is_some() {
                return Err(malformed(path, line, "duplicate aggregate row"));
            }
        } else {
            return Err(malformed(path, line, format!("unknown row kind `{}`", &rec[0])));
        }
    }

    let table = ResultTable::from_raw(raw);
    for (key, agg) in &table.aggregates {
        let Some(rows) = stated.get(key) else {
            return Err(inconsistent(key, "aggregate rows missing"));
        };
        for stat in Stat::ALL {
            let want = (agg.mae.get(stat), agg.sensitivity.get(stat));
            match rows.get(&stat) {
                Some(got) if same(got.0, want.0) && same(got.1, want.1) => {}
                Some(got) => {
                    return Err(inconsistent(
                        key,
                        format!("{} is {:?}, recomputed {:?}", stat.as_str(), got, want),
                    ))
                }
                None => return Err(inconsistent(key, format!("{} row missing", stat.as_str()))),
            }
        }
    }
    if let Some(extra) = stated.keys().find(|k| !table.aggregates.contains_key(*k)) {
        return Err(inconsistent(extra, "aggregate without raw rows"));
    }
    Ok(table)
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

fn inconsistent(key: &GroupKey, reason: impl Into<String>) -> Error {
    Error::InconsistentAggregate {
        method: key.group.clone(),
        sigma_y: key.sigma_y(),
        reason: reason.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.q1, 1.75);
        assert_eq!(s.q3, 3.25);
        assert_eq!(s.iqr, 1.5);
        assert_eq!(summarize(&[7.0]).iqr, 0.0);
    }

    #[test]
    fn paired_delta_uses_matching_seeds() {
        let row = |method, seed, mae| RawRow {
            method,
            sigma_y: 0.5,
            seed,
            outcome: Ok(RunMetrics { mae, sensitivity: 0.0 }),
        };
        let t = ResultTable::from_raw(vec![
            row(Method::Baseline, 0, 1.0),
            row(Method::Crl, 0, 0.5),
            row(Method::Baseline, 1, 2.0),
            row(Method::Crl, 1, 2.5),
            row(Method::Baseline, 2, 9.0),
        ]);
        let d = t.aggregate(PAIRED_DELTA, 0.5).unwrap();
        assert_eq!(d.mae.median, 0.0);
        assert_eq!(d.mae.q1, -0.25);
        assert_eq!(t.aggregate("baseline", 0.5).unwrap().mae.median, 2.0);
    }
}
