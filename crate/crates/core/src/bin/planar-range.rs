//! Command-line front end for the experiment runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use planar_range::experiments::{run_all, ExperimentError, ExperimentResult, ExperimentSpec, Summary, EXPERIMENTS};

#[derive(Parser, Debug)]
#[command(name = "planar-range", version, about = "Range of planar random walks: simulations, numerics and checks")]
struct Cli {
    /// Step-law file (`dx dy num den` per line); defaults to the reference walk.
    #[arg(long, global = true)]
    law: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory for JSON and CSV artifacts; without it the JSON goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct Overrides {
    /// Comma-separated n values (accepts 1e6 and 2^20).
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    /// Brownian paths.
    #[arg(long)]
    paths: Option<String>,
    /// Brownian grid step.
    #[arg(long)]
    h: Option<String>,
    /// ε schedule.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    k: Option<String>,
    /// Block sizes.
    #[arg(long)]
    block: Option<String>,
    #[arg(long = "half-width")]
    half_width: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, &String)> {
        [
            ("n", &self.n),
            ("lambda", &self.lambda),
            ("replicas", &self.replicas),
            ("paths", &self.paths),
            ("h", &self.h),
            ("eps", &self.eps),
            ("k", &self.k),
            ("block", &self.block),
            ("half_width", &self.half_width),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// E|R(n)|/n against the one- and two-term expansions.
    Range(Overrides),
    /// Killed range mean and L² expansion residuals.
    KilledRange(Overrides),
    /// Second-order fluctuations against -(2π)²γ₂(1).
    Clt(Overrides),
    /// Exact and closed-form identities.
    Identities(Overrides),
    /// Offset statistic trend in |y|.
    Hoelder(Overrides),
    /// Green's function table.
    Green(Overrides),
    /// The asymptotic constant c_X.
    Cx(Overrides),
    /// Renormalized Brownian self-intersection local times.
    Gamma(Overrides),
    /// Block coupling of walk and Gaussian increments.
    Couple(Overrides),
    /// Every experiment with its defaults (config keys may be prefixed by experiment name).
    All,
}

fn build_spec(cli: &Cli, name: &str, over: &Overrides) -> Result<ExperimentSpec, ExperimentError> {
    let mut spec = ExperimentSpec::defaults(name)?;
    if let Some(path) = &cli.config {
        spec.apply_config(&std::fs::read_to_string(path)?)?;
    }
    for (k, v) in over.pairs() {
        spec.set(k, v).map_err(|msg| ExperimentError::Parameter(format!("--{}: {msg}", k.replace('_', "-"))))?;
    }
    if let Some(l) = &cli.law {
        spec.law = Some(l.clone());
    }
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Some(w) = cli.workers {
        spec.workers = w;
    }
    if let Some(o) = &cli.out {
        spec.out = Some(o.clone());
    }
    Ok(spec)
}

fn report(r: &ExperimentResult) {
    for v in &r.verdicts {
        eprintln!(
            "{} {}: {} measured {:.6e} target {:.6e} tolerance {:.3e} ({})",
            if v.passed { "PASS" } else { "FAIL" },
            r.experiment,
            v.criterion,
            v.measured,
            v.target,
            v.tolerance,
            v.detail
        );
    }
    eprintln!("{} finished in {:.1}s", r.experiment, r.runtime_s);
}

fn run(cli: &Cli) -> Result<Summary, ExperimentError> {
    let specs = match &cli.command {
        Command::All => EXPERIMENTS.iter().map(|n| build_spec(cli, n, &Overrides::default())).collect::<Result<Vec<_>, _>>()?,
        Command::Range(o) => vec![build_spec(cli, "range", o)?],
        Command::KilledRange(o) => vec![build_spec(cli, "killed-range", o)?],
        Command::Clt(o) => vec![build_spec(cli, "clt", o)?],
        Command::Identities(o) => vec![build_spec(cli, "identities", o)?],
        Command::Hoelder(o) => vec![build_spec(cli, "hoelder", o)?],
        Command::Green(o) => vec![build_spec(cli, "green", o)?],
        Command::Cx(o) => vec![build_spec(cli, "cx", o)?],
        Command::Gamma(o) => vec![build_spec(cli, "gamma", o)?],
        Command::Couple(o) => vec![build_spec(cli, "couple", o)?],
    };
    let (summary, results) = run_all(&specs);
    for r in &results {
        report(r);
    }
    for e in summary.entries.iter().filter(|e| e.error.is_some()) {
        eprintln!("ERROR {}: {}", e.experiment, e.error.as_deref().unwrap_or(""));
    }
    let all = matches!(cli.command, Command::All);
    match &cli.out {
        Some(dir) if all => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        }
        Some(_) => {}
        None if all => println!("{}", serde_json::to_string_pretty(&summary)?),
        None => {
            for r in &results {
                println!("{}", serde_json::to_string_pretty(r)?);
            }
        }
    }
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            if !summary.failed_criteria.is_empty() {
                eprintln!("failed: {}", summary.failed_criteria.join(", "));
            }
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
