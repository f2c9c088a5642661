//! Monte Carlo experiments: repeated seeded runs, per-rep trace files, and
//! quantile tables of the best valid objective at fixed evaluation counts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::comparators::{run_oic_random, run_sann, SannConfig};
use crate::error::{Error, Result};
use crate::optimizer::{optim_auglag, SearchConfig, Variant};
use crate::problem::ProblemSpec;
use crate::trace::ProgressTrace;

mod config;

pub use config::Settings;

/// Violation tolerance for the relaxed-validity column.
pub const RELAXED_TOL: f64 = 1e-3;

pub const DEFAULT_CHECKPOINTS: [usize; 3] = [25, 50, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Auglag(Variant),
    Sann,
    OicRandom,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Auglag(v) => v.name(),
            Method::Sann => "SANN",
            Method::OicRandom => "OIC-random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("SANN") {
            Ok(Method::Sann)
        } else if s.eq_ignore_ascii_case("OIC-random") {
            Ok(Method::OicRandom)
        } else {
            s.parse().map(Method::Auglag)
        }
    }
}

/// One optimization run with default settings for the method.
pub fn run_single(problem: &ProblemSpec, method: Method, budget: usize, seed: u64) -> Result<ProgressTrace> {
    let p = problem.build()?;
    match method {
        Method::Auglag(v) => optim_auglag(&p, &SearchConfig::new(v, budget, seed)),
        Method::Sann => run_sann(&p, &SannConfig::new(budget, seed)),
        Method::OicRandom => run_oic_random(&p, budget, seed),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub problem: ProblemSpec,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub budget: usize,
    pub base_seed: u64,
    pub checkpoints: Vec<usize>,
    pub out: PathBuf,
    /// Worker threads; results do not depend on this.
    pub workers: usize,
    /// Value used for reps without any valid point. Defaults to twice the
    /// largest `|f|` seen in any trace.
    pub placeholder: Option<f64>,
}

impl ExperimentSpec {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let budget = s.parsed_or("budget", 100)?;
        let methods = s
            .list::<Method>("method")?
            .unwrap_or_else(|| vec![Method::Auglag(Variant::Ei)]);
        let checkpoints = match s.list("checkpoints")? {
            Some(c) => c,
            None => default_checkpoints(budget),
        };
        let spec = ExperimentSpec {
            problem: s.problem()?,
            methods,
            reps: s.parsed_or("reps", 100)?,
            budget,
            base_seed: s.parsed_or("base-seed", 0)?,
            checkpoints,
            out: s.parsed_or("out", PathBuf::from("results"))?,
            workers: s.parsed_or("workers", default_workers())?,
            placeholder: s.parsed("placeholder")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.workers == 0 {
            return Err(Error::invalid("reps and workers must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods given"));
        }
        validate_checkpoints(&self.checkpoints, self.budget)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// The standard checkpoints that fit in the budget, plus the budget itself.
pub fn default_checkpoints(budget: usize) -> Vec<usize> {
    let mut c: Vec<usize> = DEFAULT_CHECKPOINTS.into_iter().filter(|n| *n <= budget).collect();
    if c.last() != Some(&budget) && budget > 0 {
        c.push(budget);
    }
    c
}

fn validate_checkpoints(checkpoints: &[usize], budget: usize) -> Result<()> {
    if checkpoints.is_empty() || checkpoints.iter().any(|n| *n == 0 || *n > budget) {
        return Err(Error::invalid(format!(
            "checkpoints {checkpoints:?} must be nonempty and within [1, {budget}]"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub n: usize,
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
    /// Mean best objective allowing violations up to [`RELAXED_TOL`].
    pub mean_relaxed: f64,
    pub reps: usize,
    /// Reps with no valid point by `n`; each contributes the placeholder.
    pub no_valid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub placeholder: f64,
}

impl SummaryTable {
    pub fn row(&self, method: &str, n: usize) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method && r.n == n)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "n", "mean", "q05", "q95", "mean_relaxed", "reps", "no_valid", "placeholder"])?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.n.to_string(),
                r.mean.to_string(),
                r.q05.to_string(),
                r.q95.to_string(),
                r.mean_relaxed.to_string(),
                r.reps.to_string(),
                r.no_valid.to_string(),
                self.placeholder.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (the default "type 7" estimator).
pub fn quantile_type7(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty() && (0.0..=1.0).contains(&p));
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Aggregate grouped traces at each checkpoint. Groups keep their order.
pub fn summarize(
    groups: &[(String, Vec<ProgressTrace>)],
    checkpoints: &[usize],
    placeholder: Option<f64>,
) -> Result<SummaryTable> {
    if groups.iter().all(|(_, t)| t.is_empty()) {
        return Err(Error::invalid("nothing to summarize"));
    }
    let shortest = groups.iter().flat_map(|(_, t)| t).map(ProgressTrace::len).min().unwrap_or(0);
    validate_checkpoints(checkpoints, shortest)?;
    let placeholder = placeholder.unwrap_or_else(|| {
        let worst = groups
            .iter()
            .flat_map(|(_, t)| t)
            .flat_map(|t| t.rows())
            .map(|r| r.f.abs())
            .fold(0.0, f64::max);
        2.0 * worst
    });
    let mut rows = Vec::new();
    for (method, traces) in groups.iter().filter(|(_, t)| !t.is_empty()) {
        for &n in checkpoints {
            let best: Vec<Option<f64>> = traces.iter().map(|t| t.best_valid_at(n)).collect();
            let values: Vec<f64> = best.iter().map(|b| b.unwrap_or(placeholder)).collect();
            let relaxed: Vec<f64> = traces
                .iter()
                .map(|t| t.best_relaxed_at(n, RELAXED_TOL).unwrap_or(placeholder))
                .collect();
            rows.push(SummaryRow {
                method: method.clone(),
                n,
                mean: mean(&values),
                q05: quantile_type7(&values, 0.05),
                q95: quantile_type7(&values, 0.95),
                mean_relaxed: mean(&relaxed),
                reps: traces.len(),
                no_valid: best.iter().filter(|b| b.is_none()).count(),
            });
        }
    }
    Ok(SummaryTable { rows, placeholder })
}

pub fn trace_path(dir: &Path, method: &str, rep: usize) -> PathBuf {
    dir.join(format!("{method}_rep{rep:03}.csv"))
}

pub fn write_trace_file(path: &Path, trace: &ProgressTrace, rep: usize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    trace.write_csv(&mut w, rep)?;
    w.flush()?;
    Ok(())
}

/// Read every `<method>_rep<k>.csv` in `dir`, grouped by method name and
/// ordered by rep.
pub fn read_trace_dir(dir: &Path) -> Result<Vec<(String, Vec<ProgressTrace>)>> {
    let mut groups: BTreeMap<String, BTreeMap<usize, ProgressTrace>> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let Some((method, _)) = stem.rsplit_once("_rep") else {
            continue;
        };
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let (rep, trace) = ProgressTrace::read_csv(BufReader::new(File::open(&path)?))?;
        if groups.entry(method.to_string()).or_default().insert(rep, trace).is_some() {
            return Err(Error::invalid(format!("duplicate rep {rep} for {method}")));
        }
    }
    if groups.is_empty() {
        return Err(Error::invalid(format!("no trace files in {}", dir.display())));
    }
    Ok(groups
        .into_iter()
        .map(|(m, reps)| (m, reps.into_values().collect()))
        .collect())
}

/// A rep that did not complete.
#[derive(Debug)]
pub struct RepFailure {
    pub method: Method,
    pub rep: usize,
    pub error: Error,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub summary: SummaryTable,
    pub failures: Vec<RepFailure>,
}

/// Run every rep of every method, write `traces/<method>_repNNN.csv` and
/// `summary.csv` under `spec.out`, and return the table.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let trace_dir = spec.out.join("traces");
    fs::create_dir_all(&trace_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;

    let mut groups = Vec::new();
    let mut failures = Vec::new();
    for &method in &spec.methods {
        let results: Vec<Result<ProgressTrace>> = pool.install(|| {
            (0..spec.reps)
                .into_par_iter()
                .map(|rep| run_single(&spec.problem, method, spec.budget, spec.base_seed + rep as u64))
                .collect()
        });
        let mut traces = Vec::new();
        for (rep, r) in results.into_iter().enumerate() {
            match r {
                Ok(t) => {
                    write_trace_file(&trace_path(&trace_dir, method.name(), rep), &t, rep)?;
                    traces.push(t);
                }
                Err(error) => {
                    log::warn!("{method} rep {rep} failed: {error}");
                    failures.push(RepFailure { method, rep, error });
                }
            }
        }
        groups.push((method.name().to_string(), traces));
    }
    if groups.iter().all(|(_, t)| t.is_empty()) {
        let first = failures.swap_remove(0);
        return Err(first.error);
    }
    if !failures.is_empty() {
        log::warn!("{} reps failed; summarizing the completed ones", failures.len());
    }
    let summary = summarize(&groups, &spec.checkpoints, spec.placeholder)?;
    let mut w = BufWriter::new(File::create(spec.out.join("summary.csv"))?);
    summary.write_csv(&mut w)?;
    w.flush()?;
    Ok(ExperimentReport { summary, failures })
}
