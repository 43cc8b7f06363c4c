//! `vrmec`: generate scenarios, run one algorithm, or sweep a parameter.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 when every
//! requested run was infeasible, 1 for anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::Value;
use vrmec_core::experiment::{run_algorithm, sweep_parameter, Algorithm, ExperimentConfig, SweepAxis};
use vrmec_core::model::validate_scenario;
use vrmec_core::{generate_scenario, Scenario, ScenarioConfig, SolverConfig};

#[derive(Parser)]
#[command(name = "vrmec", version, about = "Joint caching, power and offloading experiments for VR over MEC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a scenario from a generator configuration.
    Generate {
        /// Scenario settings as JSON. Missing fields take desk defaults; an
        /// experiment file is accepted and its `scenario` section used.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one algorithm on a saved scenario and write the result as JSON.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        /// jcpt, no, pea, pf or lru.
        #[arg(long)]
        algorithm: String,
        /// Relative gap at which the search stops.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Solver settings as JSON.
        #[arg(long)]
        solver: Option<PathBuf>,
        /// Seed for the LRU request trace.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bound trajectory CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one axis over several seeds and write a CSV.
    Sweep {
        /// Experiment settings as JSON.
        #[arg(long)]
        config: PathBuf,
        /// mes-cache-capacity, sbs-count, zipf-lambda or hmd-cache-capacity.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values; capacities in bits.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Defaults to the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Infeasible(String),
    Other(anyhow::Error),
}

impl Failure {
    fn config(e: impl Into<anyhow::Error>) -> Self {
        Failure::Config(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::config)?;
    serde_json::from_str(&text)
        .with_context(|| format!("{} is not valid JSON", path.display()))
        .map_err(Failure::config)
}

fn parse<T: serde::de::DeserializeOwned>(value: Value, path: &Path) -> Result<T, Failure> {
    serde_json::from_value(value)
        .with_context(|| format!("invalid settings in {}", path.display()))
        .map_err(Failure::config)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn generate(config: &Path, seed: u64, out: &Path) -> Result<(), Failure> {
    let mut json = read_json(config)?;
    if let Some(inner) = json.get_mut("scenario") {
        json = inner.take();
    }
    let settings: ScenarioConfig = parse(json, config)?;
    let s = generate_scenario(&settings, seed).map_err(Failure::config)?;
    write(out, &s.to_json().context("cannot serialize scenario")?)
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let s: Scenario = parse(read_json(path)?, path)?;
    let problems = validate_scenario(&s);
    if let Some(first) = problems.first() {
        return Err(Failure::Config(anyhow::anyhow!(
            "{}: {} ({} problem(s))",
            path.display(),
            first.message,
            problems.len()
        )));
    }
    Ok(s)
}

struct SolveArgs {
    scenario: PathBuf,
    algorithm: String,
    tolerance: Option<f64>,
    solver: Option<PathBuf>,
    seed: u64,
    trace: Option<PathBuf>,
    out: PathBuf,
}

fn solve(a: SolveArgs) -> Result<(), Failure> {
    let algorithm: Algorithm = a.algorithm.parse().map_err(Failure::config)?;
    let s = load_scenario(&a.scenario)?;
    let mut solver = match &a.solver {
        Some(path) => parse::<SolverConfig>(read_json(path)?, path)?,
        None => SolverConfig::default(),
    };
    if let Some(t) = a.tolerance {
        if !(t >= 0.0) {
            return Err(Failure::Config(anyhow::anyhow!("tolerance must be non-negative, got {t}")));
        }
        solver.tolerance = t;
    }
    let cfg = ExperimentConfig {
        solver,
        ..ExperimentConfig::default()
    };
    let result = run_algorithm(&s, algorithm, &cfg, a.seed).map_err(Failure::config)?;
    let json = serde_json::to_string_pretty(&result).context("cannot serialize result")?;
    write(&a.out, &json)?;
    if let Some(path) = &a.trace {
        let mut buf = Vec::new();
        result.write_trace_csv(&mut buf).context("cannot format trace")?;
        write(path, &String::from_utf8_lossy(&buf))?;
    }
    eprintln!(
        "{}: {} objective {:.6} hit ratio {:.3}",
        algorithm,
        result.status.label(),
        result.best_value,
        result.hit_ratio
    );
    if result.is_feasible() {
        Ok(())
    } else {
        Err(Failure::Infeasible(format!("{algorithm} found no feasible decision")))
    }
}

fn sweep(
    config: &Path,
    axis: Option<String>,
    values: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut cfg: ExperimentConfig = ExperimentConfig::from_json(
        &fs::read_to_string(config)
            .with_context(|| format!("cannot read {}", config.display()))
            .map_err(Failure::config)?,
    )
    .map_err(Failure::config)?;
    if let Some(seeds) = seeds {
        cfg.seeds = seeds;
    }
    let axis: SweepAxis = match axis {
        Some(a) => a.parse().map_err(Failure::config)?,
        None => cfg.axis,
    };
    let values = values.unwrap_or_else(|| cfg.values.clone());
    let out = out
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .ok_or_else(|| Failure::Config(anyhow::anyhow!("no output path: pass --out or set `output`")))?;
    let table = sweep_parameter(&cfg, axis, &values).map_err(|e| match e {
        vrmec_core::experiment::ExperimentError::Csv(_) => Failure::Other(e.into()),
        _ => Failure::config(e),
    })?;
    write(&out, &table.to_csv_string().context("cannot format results")?)?;
    if table.all_infeasible() {
        return Err(Failure::Infeasible("every cell was infeasible".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate { config, seed, out } => generate(&config, seed, &out),
        Command::Solve {
            scenario,
            algorithm,
            tolerance,
            solver,
            seed,
            trace,
            out,
        } => solve(SolveArgs {
            scenario,
            algorithm,
            tolerance,
            solver,
            seed,
            trace,
            out,
        }),
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            out,
        } => sweep(&config, axis, values, seeds, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
