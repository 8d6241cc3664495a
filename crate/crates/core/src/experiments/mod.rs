//! Monte Carlo experiment runner.
//!
//! An [`ExperimentSpec`] fully determines a run. Replica `i` of a component
//! tagged `t` always draws from stream `i` of `subseed(seed, t)`, and
//! per-replica values are merged in replica order, so results do not depend
//! on the worker count.

mod config;
mod identities;
mod numerics;
pub mod tolerances;
mod walks;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{parse_config, ExperimentSpec, EXPERIMENTS};
pub use identities::{
    check_brownian_closed_forms, check_combinatorial_oracles, check_green_asymptote, check_green_identities,
    check_hitting_identity, check_lemma_identities, run_identity_suite,
};
pub use numerics::{gamma2_samples, run_couple, run_cx, run_gamma, run_green};
pub use walks::{run_clt_second_order, run_clt_with_gamma, run_hoelder_trend, run_killed_range, run_range_law};

use crate::brownian::BrownError;
use crate::coupling::CouplingError;
use crate::green::GreenError;
use crate::stats::Moments;
use crate::stepdist::LawError;
use crate::walk::WalkError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error(transparent)]
    Brown(#[from] BrownError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A reported number with its uncertainty: a Monte Carlo standard error
/// (with sample count) or a deterministic bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub passed: bool,
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    pub detail: String,
}

/// A CSV artifact produced by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec_hash: String,
    pub version: String,
    pub seed: u64,
    pub law: String,
}

/// The JSON envelope of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub spec: ExperimentSpec,
    pub estimates: Vec<EstimateRecord>,
    pub verdicts: Vec<Verdict>,
    pub runtime_s: f64,
    pub provenance: Provenance,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl ExperimentResult {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn estimate(&self, name: &str) -> Option<&EstimateRecord> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn verdict(&self, criterion: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.criterion == criterion)
    }

    /// Write `<experiment>.json` and every CSV table into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::fs::File::create(dir.join(format!("{}.json", self.experiment)))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        for t in &self.tables {
            std::fs::write(dir.join(&t.file), &t.content)?;
        }
        Ok(())
    }
}

/// Accumulates estimates, verdicts and tables during a run.
#[derive(Debug, Default)]
pub struct Report {
    pub estimates: Vec<EstimateRecord>,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn mc(&mut self, name: impl Into<String>, m: &Moments) {
        self.estimates.push(EstimateRecord {
            name: name.into(),
            value: m.mean,
            std_error: Some(m.std_error()),
            n_samples: Some(m.n),
            bound: None,
        });
    }

    pub fn mc_value(&mut self, name: impl Into<String>, value: f64, std_error: f64, n: u64) {
        self.estimates.push(EstimateRecord { name: name.into(), value, std_error: Some(std_error), n_samples: Some(n), bound: None });
    }

    pub fn bounded(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.estimates.push(EstimateRecord { name: name.into(), value, std_error: None, n_samples: None, bound: Some(bound) });
    }

    /// Pass when `|measured - target| <= tolerance`.
    pub fn within(&mut self, criterion: impl Into<String>, measured: f64, target: f64, tolerance: f64, detail: impl Into<String>) -> bool {
        let passed = (measured - target).abs() <= tolerance;
        self.push(criterion, passed, measured, target, tolerance, detail)
    }

    pub fn push(
        &mut self,
        criterion: impl Into<String>,
        passed: bool,
        measured: f64,
        target: f64,
        tolerance: f64,
        detail: impl Into<String>,
    ) -> bool {
        self.verdicts.push(Verdict { criterion: criterion.into(), passed, measured, target, tolerance, detail: detail.into() });
        passed
    }

    pub fn table(&mut self, file: impl Into<String>, content: String) {
        self.tables.push(Table { file: file.into(), content });
    }

    pub fn extend(&mut self, other: Report) {
        self.estimates.extend(other.estimates);
        self.verdicts.extend(other.verdicts);
        self.tables.extend(other.tables);
    }
}

/// Run `f` on a pool of `workers` threads (0 = all cores).
pub(crate) fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
    pool.install(f)
}

/// `f(0), …, f(n - 1)` in parallel, returned in index order.
pub(crate) fn replicas<T: Send>(n: usize, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..n as u64).into_par_iter().map(f).collect()
}

pub(crate) fn finish(spec: &ExperimentSpec, law: &crate::StepLaw, start: Instant, report: Report) -> ExperimentResult {
    ExperimentResult {
        experiment: spec.experiment.clone(),
        spec: spec.clone(),
        estimates: report.estimates,
        verdicts: report.verdicts,
        runtime_s: start.elapsed().as_secs_f64(),
        provenance: Provenance {
            spec_hash: spec.hash(law),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: spec.seed,
            law: law.to_table(),
        },
        tables: report.tables,
    }
}

pub(crate) fn csv_string(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<String, ExperimentError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

/// Dispatch by experiment name.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    match spec.experiment.as_str() {
        "range" => run_range_law(spec),
        "killed-range" => run_killed_range(spec),
        "clt" => run_clt_second_order(spec),
        "identities" => run_identity_suite(spec),
        "hoelder" => run_hoelder_trend(spec),
        "green" => run_green(spec),
        "cx" => run_cx(spec),
        "gamma" => run_gamma(spec),
        "couple" => run_couple(spec),
        other => Err(ExperimentError::UnknownExperiment(other.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub experiment: String,
    pub passed: bool,
    pub spec_hash: Option<String>,
    pub seed: u64,
    pub runtime_s: f64,
    pub verdicts: Vec<Verdict>,
    pub error: Option<String>,
}

/// Machine-readable outcome of [`run_all`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: bool,
    pub failed_criteria: Vec<String>,
    pub entries: Vec<SummaryEntry>,
}

impl Summary {
    /// 0 when everything passed, 1 on a failed verdict, 2 on a run error.
    pub fn exit_code(&self) -> i32 {
        if self.entries.iter().any(|e| e.error.is_some()) {
            2
        } else if self.passed {
            0
        } else {
            1
        }
    }
}

/// Run every spec, writing artifacts to each spec's `out` directory when
/// set. Failures are recorded and the remaining specs still run.
pub fn run_all(specs: &[ExperimentSpec]) -> (Summary, Vec<ExperimentResult>) {
    let mut entries = Vec::new();
    let mut results = Vec::new();
    let mut failed = Vec::new();
    for spec in specs {
        let outcome = run_experiment(spec).and_then(|r| {
            if let Some(dir) = &spec.out {
                r.write_to(dir)?;
            }
            Ok(r)
        });
        match outcome {
            Ok(r) => {
                failed.extend(r.verdicts.iter().filter(|v| !v.passed).map(|v| format!("{}: {}", r.experiment, v.criterion)));
                entries.push(SummaryEntry {
                    experiment: r.experiment.clone(),
                    passed: r.passed(),
                    spec_hash: Some(r.provenance.spec_hash.clone()),
                    seed: spec.seed,
                    runtime_s: r.runtime_s,
                    verdicts: r.verdicts.clone(),
                    error: None,
                });
                results.push(r);
            }
            Err(e) => {
                failed.push(format!("{}: error", spec.experiment));
                entries.push(SummaryEntry {
                    experiment: spec.experiment.clone(),
                    passed: false,
                    spec_hash: None,
                    seed: spec.seed,
                    runtime_s: 0.0,
                    verdicts: vec![],
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let summary = Summary { passed: failed.is_empty(), failed_criteria: failed, entries };
    (summary, results)
}
