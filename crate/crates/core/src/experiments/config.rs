//! Experiment parameters and the flat `key = value` config format.
//!
//! Keys apply to every experiment unless prefixed with an experiment name
//! (`range.replicas = 200`). Lists are comma separated. Later lines win.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::stepdist::StepLaw;

pub const EXPERIMENTS: &[&str] =
    &["range", "killed-range", "clt", "identities", "hoelder", "green", "cx", "gamma", "couple"];

/// Everything that determines a run. Worker count and output location do
/// not affect results and are left out of the serialized form and hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: String,
    pub law: Option<PathBuf>,
    pub n: Vec<usize>,
    pub lambda: Vec<f64>,
    /// Brownian grid step.
    pub h: f64,
    /// ε schedule; empty means {16h, 8h, 4h}.
    pub eps: Vec<f64>,
    pub k: usize,
    pub block: Vec<usize>,
    pub half_width: i64,
    pub replicas: usize,
    /// Brownian paths, where an experiment uses them.
    pub paths: usize,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Defaults for a named experiment.
    pub fn defaults(experiment: &str) -> Result<Self, ExperimentError> {
        let mut s = ExperimentSpec {
            experiment: experiment.to_string(),
            law: None,
            n: vec![],
            lambda: vec![],
            h: 1e-4,
            eps: vec![],
            k: 2,
            block: vec![],
            half_width: 10,
            replicas: 1000,
            paths: 0,
            seed: 20_240_601,
            workers: 0,
            out: None,
        };
        match experiment {
            "range" => s.n = vec![100_000, 1_000_000, 10_000_000],
            "killed-range" => {
                s.lambda = vec![0.05, 0.02, 0.01];
                s.replicas = 100_000;
            }
            "clt" => {
                s.n = vec![1 << 20];
                s.paths = 1000;
            }
            "identities" => {
                s.lambda = vec![0.2, 0.1, 0.05];
                s.replicas = 100_000;
                s.paths = 100;
            }
            "hoelder" => {
                s.lambda = vec![0.05, 0.02];
                s.replicas = 100_000;
            }
            "green" => s.lambda = vec![0.1],
            "cx" => s.lambda = vec![1e-3, 1e-4, 1e-5],
            "gamma" => s.paths = 200,
            "couple" => {
                s.block = vec![1, 16, 64];
                s.n = (6..=14).map(|j| 1 << j).collect();
            }
            other => return Err(ExperimentError::UnknownExperiment(other.to_string())),
        }
        Ok(s)
    }

    pub fn eps_schedule(&self) -> Vec<f64> {
        if self.eps.is_empty() {
            crate::brownian::default_schedule(self.h)
        } else {
            self.eps.clone()
        }
    }

    pub fn load_law(&self) -> Result<StepLaw, ExperimentError> {
        match &self.law {
            Some(p) => Ok(StepLaw::load(p)?),
            None => Ok(StepLaw::reference()),
        }
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "law" => self.law = Some(PathBuf::from(v)),
            "n" => self.n = parse_list(v, parse_count)?,
            "lambda" => self.lambda = parse_list(v, parse_f64)?,
            "h" => self.h = parse_f64(v)?,
            "eps" => self.eps = parse_list(v, parse_f64)?,
            "k" => self.k = parse_count(v)?,
            "block" => self.block = parse_list(v, parse_count)?,
            "half_width" => self.half_width = parse_count(v)? as i64,
            "replicas" => self.replicas = parse_count(v)?,
            "paths" => self.paths = parse_count(v)?,
            "seed" => self.seed = v.parse().map_err(|e| format!("seed: {e}"))?,
            "workers" => self.workers = parse_count(v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Apply a config file's settings relevant to this experiment.
    pub fn apply_config(&mut self, text: &str) -> Result<(), ExperimentError> {
        for (line, key, value) in parse_config(text)? {
            let key = match key.split_once('.') {
                Some((exp, k)) if exp == self.experiment => k,
                Some((exp, _)) if EXPERIMENTS.contains(&exp) => continue,
                Some(_) => return Err(ExperimentError::Config { line, msg: format!("unknown experiment in `{key}`") }),
                None => key.as_str(),
            };
            self.set(key, &value).map_err(|msg| ExperimentError::Config { line, msg })?;
        }
        Ok(())
    }

    /// SHA-256 over the serialized spec and the law table.
    pub fn hash(&self, law: &StepLaw) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("serializable"));
        h.update(law.to_table().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// (line number, key, value) triples; blank lines and `#` comments skipped.
pub fn parse_config(text: &str) -> Result<Vec<(usize, String, String)>, ExperimentError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ExperimentError::Config { line: i + 1, msg: "expected `key = value`".into() })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"))
}

/// Non-negative integer, accepting forms like `1e6` and `2^20`.
fn parse_count(s: &str) -> Result<usize, String> {
    let s = s.trim();
    if let Some((b, e)) = s.split_once('^') {
        let b: usize = b.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
        let e: u32 = e.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
        return b.checked_pow(e).ok_or_else(|| format!("`{s}` overflows"));
    }
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let f = parse_f64(s)?;
    if f >= 0.0 && f.fract() == 0.0 && f < 1e18 {
        Ok(f as usize)
    } else {
        Err(format!("`{s}` is not a non-negative integer"))
    }
}

fn parse_list<T>(s: &str, f: fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(f).collect()
}
