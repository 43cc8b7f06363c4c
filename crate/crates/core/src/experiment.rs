//! Parameter sweeps over generated scenarios and CSV output.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::baselines::{solve_lru, solve_nearest_offloading, solve_popularity_first, solve_power_equal_with, RequestTrace};
use crate::jcpt::{jcpt_solve, SolveResult, SolveStatus, SolverConfig};
use crate::model::{generate_scenario, ModelError, Scenario, ScenarioConfig};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("could not write results: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Jcpt,
    No,
    Pea,
    Pf,
    Lru,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::Jcpt, Algorithm::No, Algorithm::Pea, Algorithm::Pf, Algorithm::Lru];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Jcpt => "jcpt",
            Algorithm::No => "no",
            Algorithm::Pea => "pea",
            Algorithm::Pf => "pf",
            Algorithm::Lru => "lru",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| ExperimentError::Config(format!("unknown algorithm `{s}` (expected jcpt, no, pea, pf or lru)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    MesCacheCapacity,
    SbsCount,
    ZipfLambda,
    HmdCacheCapacity,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [
        SweepAxis::MesCacheCapacity,
        SweepAxis::SbsCount,
        SweepAxis::ZipfLambda,
        SweepAxis::HmdCacheCapacity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::MesCacheCapacity => "mes-cache-capacity",
            SweepAxis::SbsCount => "sbs-count",
            SweepAxis::ZipfLambda => "zipf-lambda",
            SweepAxis::HmdCacheCapacity => "hmd-cache-capacity",
        }
    }

    /// Writes `value` into the matching scenario field. Capacities are in
    /// bits.
    pub fn apply(self, config: &mut ScenarioConfig, value: f64) -> Result<(), ExperimentError> {
        let bad = |why: &str| Err(ExperimentError::Config(format!("{} value {value}: {why}", self.name())));
        if !value.is_finite() {
            return bad("must be finite");
        }
        match self {
            SweepAxis::MesCacheCapacity | SweepAxis::HmdCacheCapacity if value < 0.0 => bad("must be non-negative"),
            SweepAxis::MesCacheCapacity => {
                config.mes_cache_bits = value;
                Ok(())
            }
            SweepAxis::HmdCacheCapacity => {
                config.hmd_cache_bits = value;
                Ok(())
            }
            SweepAxis::SbsCount if value < 1.0 || value.fract() != 0.0 => bad("must be a positive integer"),
            SweepAxis::SbsCount => {
                config.sbs_count = value as usize;
                Ok(())
            }
            SweepAxis::ZipfLambda if value < 0.0 => bad("must be non-negative"),
            SweepAxis::ZipfLambda => {
                config.zipf_lambda = value;
                Ok(())
            }
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                ExperimentError::Config(format!(
                    "unsupported axis `{s}` (expected mes-cache-capacity, sbs-count, zipf-lambda or hmd-cache-capacity)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub algorithms: Vec<Algorithm>,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub solver: SolverConfig,
    /// LRU traces hold `lru_trace_factor * N * U` requests.
    pub lru_trace_factor: usize,
    /// PEA covers an HMD from an SBS whose gain is at least the path-loss
    /// gain at this distance.
    pub coverage_distance_m: f64,
    /// Where the CLI writes the CSV when no `--out` is given.
    pub output: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::desk(),
            algorithms: Algorithm::ALL.to_vec(),
            axis: SweepAxis::MesCacheCapacity,
            values: vec![ScenarioConfig::desk().mes_cache_bits],
            seeds: vec![0],
            solver: SolverConfig::default(),
            lru_trace_factor: 20,
            coverage_distance_m: 50.0,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |why: &str| Err(ExperimentError::Config(why.to_string()));
        if self.algorithms.is_empty() {
            return bad("algorithm list is empty");
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty");
        }
        if self.values.is_empty() {
            return bad("sweep value list is empty");
        }
        let mut seen = self.algorithms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.algorithms.len() {
            return bad("algorithm list has duplicates");
        }
        if self.lru_trace_factor == 0 {
            return bad("lru_trace_factor must be at least 1");
        }
        if !(self.coverage_distance_m > 0.0) {
            return bad("coverage_distance_m must be positive");
        }
        if !(self.solver.tolerance >= 0.0) {
            return bad("solver tolerance must be non-negative");
        }
        for &v in &self.values {
            let mut c = self.scenario.clone();
            self.axis.apply(&mut c, v)?;
            c.check()?;
        }
        Ok(())
    }

    /// Effective scenario settings for one sweep value.
    pub fn scenario_at(&self, value: f64) -> Result<ScenarioConfig, ExperimentError> {
        let mut c = self.scenario.clone();
        self.axis.apply(&mut c, value)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub value: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub status: SolveStatus,
    pub infeasible: bool,
    pub objective: f64,
    pub unweighted_delay_sum: f64,
    pub hit_ratio: f64,
    pub lower_bound: f64,
    pub iterations: usize,
    pub boxes_explored: usize,
    /// Not written to CSV, which must be reproducible.
    pub wall_time_s: f64,
    pub result: SolveResult,
    /// Flattened effective configuration.
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub objective_mean: f64,
    pub objective_std: f64,
    pub hit_ratio_mean: f64,
    pub hit_ratio_std: f64,
    pub unweighted_mean: f64,
    pub unweighted_std: f64,
    pub feasible: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub axis: SweepAxis,
    pub rows: Vec<ResultRow>,
}

/// Mean and sample standard deviation; `NaN` for an empty sample.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        Value::Null => {
            out.insert(prefix.to_string(), String::new());
        }
        Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

impl ResultTable {
    /// Statistics over the feasible seeds of one (value, algorithm) cell.
    pub fn summary(&self, value: f64, algorithm: Algorithm) -> Summary {
        let rows: Vec<&ResultRow> = self
            .rows
            .iter()
            .filter(|r| r.value == value && r.algorithm == algorithm && !r.infeasible)
            .collect();
        let pick = |f: fn(&ResultRow) -> f64| mean_std(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (objective_mean, objective_std) = pick(|r| r.objective);
        let (hit_ratio_mean, hit_ratio_std) = pick(|r| r.hit_ratio);
        let (unweighted_mean, unweighted_std) = pick(|r| r.unweighted_delay_sum);
        Summary {
            objective_mean,
            objective_std,
            hit_ratio_mean,
            hit_ratio_std,
            unweighted_mean,
            unweighted_std,
            feasible: rows.len(),
        }
    }

    pub fn get(&self, value: f64, seed: u64, algorithm: Algorithm) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.value == value && r.seed == seed && r.algorithm == algorithm)
    }

    /// One row per (value, seed, algorithm) with the cell statistics and the
    /// full effective configuration repeated on every row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        let keys: Vec<String> = self
            .rows
            .first()
            .map(|r| r.provenance.keys().cloned().collect())
            .unwrap_or_default();
        let mut header: Vec<String> = [
            "axis",
            "axis_value",
            "seed",
            "algorithm",
            "status",
            "infeasible",
            "sum_of_delays",
            "unweighted_delay_sum",
            "cache_hit_ratio",
            "lower_bound",
            "iterations",
            "boxes_explored",
            "sum_of_delays_mean",
            "sum_of_delays_std",
            "cache_hit_ratio_mean",
            "cache_hit_ratio_std",
            "unweighted_delay_sum_mean",
            "unweighted_delay_sum_std",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(keys.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let sm = self.summary(r.value, r.algorithm);
            let mut rec = vec![
                self.axis.name().to_string(),
                r.value.to_string(),
                r.seed.to_string(),
                r.algorithm.name().to_string(),
                r.result.status.label().to_string(),
                (r.infeasible as u8).to_string(),
                r.objective.to_string(),
                r.unweighted_delay_sum.to_string(),
                r.hit_ratio.to_string(),
                r.lower_bound.to_string(),
                r.iterations.to_string(),
                r.boxes_explored.to_string(),
                sm.objective_mean.to_string(),
                sm.objective_std.to_string(),
                sm.hit_ratio_mean.to_string(),
                sm.hit_ratio_std.to_string(),
                sm.unweighted_mean.to_string(),
                sm.unweighted_std.to_string(),
            ];
            rec.extend(keys.iter().map(|k| r.provenance.get(k).cloned().unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, ExperimentError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn all_infeasible(&self) -> bool {
        self.rows.iter().all(|r| r.infeasible)
    }
}

/// Runs one algorithm on one scenario.
pub fn run_algorithm(
    s: &Scenario,
    algorithm: Algorithm,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<SolveResult, ExperimentError> {
    Ok(match algorithm {
        Algorithm::Jcpt => jcpt_solve(s, &cfg.solver),
        Algorithm::No => solve_nearest_offloading(s),
        Algorithm::Pea => {
            let coverage = cfg.scenario.path_loss.gain(cfg.coverage_distance_m);
            solve_power_equal_with(s, &cfg.solver, coverage)
        }
        Algorithm::Pf => solve_popularity_first(s, &cfg.solver),
        Algorithm::Lru => {
            let len = cfg.lru_trace_factor * s.viewpoint_count() * s.hmd_count;
            let trace = RequestTrace::generate(s, len, seed);
            solve_lru(s, &trace).map_err(|e| ExperimentError::Config(e.to_string()))?
        }
    })
}

/// Solves every (value, seed, algorithm) cell. Cells run in parallel; rows
/// come back ordered by value, seed, then algorithm as listed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    cfg.validate()?;
    let mut scenarios = Vec::new();
    for &value in &cfg.values {
        let sc = cfg.scenario_at(value)?;
        for &seed in &cfg.seeds {
            scenarios.push((value, seed, generate_scenario(&sc, seed)?));
        }
    }
    let cells: Vec<(usize, Algorithm)> = (0..scenarios.len())
        .flat_map(|k| cfg.algorithms.iter().map(move |&a| (k, a)))
        .collect();
    let results: Vec<Result<ResultRow, ExperimentError>> = cells
        .par_iter()
        .map(|&(k, algorithm)| {
            let (value, seed, ref s) = scenarios[k];
            let result = run_algorithm(s, algorithm, cfg, seed)?;
            let effective = ExperimentConfig {
                scenario: cfg.scenario_at(value)?,
                values: vec![value],
                seeds: vec![seed],
                algorithms: vec![algorithm],
                output: None,
                ..cfg.clone()
            };
            let mut provenance = BTreeMap::new();
            let json = serde_json::to_value(&effective).map_err(|e| ExperimentError::Config(e.to_string()))?;
            flatten("", &json, &mut provenance);
            Ok(ResultRow {
                value,
                seed,
                algorithm,
                status: result.status,
                infeasible: !result.is_feasible(),
                objective: result.best_value,
                unweighted_delay_sum: result.unweighted_delay_sum,
                hit_ratio: result.hit_ratio,
                lower_bound: result.global_lower_bound,
                iterations: result.iterations,
                boxes_explored: result.boxes_explored,
                wall_time_s: result.wall_time_s,
                result,
                provenance,
            })
        })
        .collect();
    Ok(ResultTable {
        axis: cfg.axis,
        rows: results.into_iter().collect::<Result<_, _>>()?,
    })
}

/// [`run_experiment`] with the axis and values replaced.
pub fn sweep_parameter(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<ResultTable, ExperimentError> {
    let cfg = ExperimentConfig {
        axis,
        values: values.to_vec(),
        ..cfg.clone()
    };
    run_experiment(&cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            scenario: ScenarioConfig {
                sbs_count: 2,
                hmd_count: 2,
                viewpoint_count: 3,
                ..ScenarioConfig::desk()
            },
            algorithms: vec![Algorithm::Jcpt],
            values: vec![8e6],
            seeds: vec![1],
            solver: SolverConfig {
                max_iterations: 200,
                restarts: 2,
                ..SolverConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn one_cell_one_row() {
        let t = run_experiment(&small()).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(!t.rows[0].infeasible);
    }

    #[test]
    fn cartesian_product_in_order() {
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::Lru, Algorithm::No, Algorithm::Jcpt],
            values: vec![4e6, 8e6],
            seeds: vec![3, 1],
            ..small()
        };
        let t = run_experiment(&cfg).unwrap();
        assert_eq!(t.rows.len(), 12);
        let order: Vec<(f64, u64, Algorithm)> = t.rows.iter().map(|r| (r.value, r.seed, r.algorithm)).collect();
        assert_eq!(order[0], (4e6, 3, Algorithm::Lru));
        assert_eq!(order[2], (4e6, 3, Algorithm::Jcpt));
        assert_eq!(order[3], (4e6, 1, Algorithm::Lru));
        assert_eq!(order[11], (8e6, 1, Algorithm::Jcpt));
    }

    #[test]
    fn empty_lists_are_config_errors() {
        for cfg in [
            ExperimentConfig { values: vec![], ..small() },
            ExperimentConfig { seeds: vec![], ..small() },
            ExperimentConfig {
                algorithms: vec![],
                ..small()
            },
        ] {
            assert!(matches!(run_experiment(&cfg), Err(ExperimentError::Config(_))));
        }
    }

    #[test]
    fn axis_values_are_checked() {
        let cfg = small();
        assert!(sweep_parameter(&cfg, SweepAxis::SbsCount, &[1.5]).is_err());
        assert!(sweep_parameter(&cfg, SweepAxis::MesCacheCapacity, &[-1.0]).is_err());
        assert!(sweep_parameter(&cfg, SweepAxis::ZipfLambda, &[-0.1]).is_err());
        assert!("cpu-frequency".parse::<SweepAxis>().is_err());
        assert_eq!("zipf-lambda".parse::<SweepAxis>().unwrap(), SweepAxis::ZipfLambda);
    }

    #[test]
    fn csv_is_reproducible_and_complete() {
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::No, Algorithm::Lru],
            seeds: vec![1, 2],
            ..small()
        };
        let a = run_experiment(&cfg).unwrap().to_csv_string().unwrap();
        let b = run_experiment(&cfg).unwrap().to_csv_string().unwrap();
        assert_eq!(a, b);
        let header = a.lines().next().unwrap();
        for col in ["infeasible", "sum_of_delays_mean", "scenario.mes_cache_bits", "solver.tolerance", "seeds"] {
            assert!(header.split(',').any(|c| c == col), "missing column {col}");
        }
        assert_eq!(a.lines().count(), 5);
    }

    #[test]
    fn sweep_value_reaches_provenance() {
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::No],
            ..small()
        };
        let t = sweep_parameter(&cfg, SweepAxis::SbsCount, &[1.0, 3.0]).unwrap();
        assert_eq!(t.rows[1].provenance["scenario.sbs_count"], "3");
        assert_eq!(t.rows[1].result.best_decision.as_ref().unwrap().power.p.len(), 3);
    }

    #[test]
    fn mean_and_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }

    #[test]
    fn config_json_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"axis": "zipf-lambda", "values": [0.5, 1.0]}"#).unwrap();
        assert_eq!(cfg.axis, SweepAxis::ZipfLambda);
        assert_eq!(cfg.algorithms.len(), 5);
        assert!(ExperimentConfig::from_json(r#"{"axes": "x"}"#).is_err());
    }
}
