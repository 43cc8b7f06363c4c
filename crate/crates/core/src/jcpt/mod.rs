//! Branch-reduce-and-bound over the binary caching/offloading lattice.
//!
//! Boxes live on the substituted lattice (see [`to_monotone`]); each box is
//! reduced against the structural constraints and the incumbent, bounded
//! from below by a per-request relaxation, and bounded from above by
//! randomized greedy completions. Powers are never part of the lattice:
//! every completion calls the configured inner power solver.

mod analysis;
mod cache;
mod complete;
mod improve;
mod lattice;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lattice::{branch, from_monotone, select_dimension, to_monotone, Coordinate, Lattice, SearchBox};

use crate::latency::{cache_hit_ratio, evaluate, BitTensor, Decision};
use crate::model::Scenario;
use crate::radio::PowerMode;
use analysis::{analyze, reduce_box, Context, Route};
use complete::{complete, heuristic_upper, Completed};
use improve::improve;


#[derive(Debug, Error, Clone, PartialEq)]
pub enum JcptError {
    #[error("decision dimensions do not match the scenario")]
    Shape,
    #[error("coordinate vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("coordinate {index} is {value}, expected 0 or 1")]
    NonBinary { index: usize, value: u8 },
    #[error("dimension {k} is outside the {dims}-dimensional lattice")]
    Dimension { k: usize, dims: usize },
    #[error("dimension {0} is already decided")]
    Decided(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once `incumbent - lower <= tolerance * incumbent`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Greedy restarts per bounded box.
    pub restarts: usize,
    pub seed: u64,
    pub power: PowerMode,
    /// A node's cache placement is enumerated exactly when it has at most
    /// `2^cache_exact_limit` candidate placements.
    pub cache_exact_limit: usize,
    /// Polish heuristic solutions that come within 2% of the incumbent by
    /// local search.
    pub local_search: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 0.02,
            max_iterations: 5000,
            restarts: 8,
            seed: 0,
            power: PowerMode::default(),
            cache_exact_limit: 14,
            local_search: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// The search space was exhausted or the gap closed to zero.
    Optimal,
    /// The relative gap fell below the tolerance.
    Converged,
    IterationLimit,
    /// A heuristic strategy with no optimality claim.
    Heuristic,
    Infeasible,
}

impl SolveStatus {
    pub fn label(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Converged => "converged",
            SolveStatus::IterationLimit => "iteration_limit",
            SolveStatus::Heuristic => "heuristic",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

/// Non-finite values are written as `null` and read back as `+inf`.
pub(crate) mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            ser.serialize_f64(*x)
        } else {
            ser.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(de)?.unwrap_or(f64::INFINITY))
    }
}

/// One row of the bound trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Global lower bound after the iteration.
    #[serde(with = "inf_as_null")]
    pub f_min: f64,
    /// Best upper bound among the boxes bounded in the iteration.
    #[serde(with = "inf_as_null")]
    pub f_max: f64,
    #[serde(with = "inf_as_null")]
    pub incumbent: f64,
    pub boxes_open: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub algorithm: String,
    pub status: SolveStatus,
    pub best_decision: Option<Decision>,
    /// Objective of `best_decision`; `+inf` when infeasible.
    #[serde(with = "inf_as_null")]
    pub best_value: f64,
    #[serde(with = "inf_as_null")]
    pub global_lower_bound: f64,
    pub iterations: usize,
    pub boxes_explored: usize,
    pub wall_time_s: f64,
    pub bound_trace: Vec<TraceRow>,
    #[serde(with = "inf_as_null")]
    pub unweighted_delay_sum: f64,
    pub hit_ratio: f64,
}

impl SolveResult {
    pub fn is_feasible(&self) -> bool {
        self.best_decision.is_some() && self.best_value.is_finite()
    }

    /// Result for a strategy that returns a single decision.
    pub fn from_decision(
        algorithm: &str,
        s: &Scenario,
        decision: Option<Decision>,
        status: SolveStatus,
        wall_time_s: f64,
    ) -> Self {
        let mut r = Self::infeasible(algorithm, wall_time_s);
        if let Some(d) = decision {
            if let Ok(e) = evaluate(s, &d) {
                r.status = status;
                r.best_value = e.weighted;
                r.unweighted_delay_sum = e.unweighted;
                r.hit_ratio = cache_hit_ratio(s, &d);
                r.best_decision = Some(d);
            }
        }
        r
    }

    pub fn infeasible(algorithm: &str, wall_time_s: f64) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            status: SolveStatus::Infeasible,
            best_decision: None,
            best_value: f64::INFINITY,
            global_lower_bound: f64::INFINITY,
            iterations: 0,
            boxes_explored: 0,
            wall_time_s,
            bound_trace: Vec::new(),
            unweighted_delay_sum: f64::INFINITY,
            hit_ratio: 0.0,
        }
    }

    /// `iteration,f_min,f_max,incumbent,boxes_open` with `inf` for
    /// unbounded values.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "f_min", "f_max", "incumbent", "boxes_open"])?;
        for row in &self.bound_trace {
            w.write_record([
                row.iteration.to_string(),
                row.f_min.to_string(),
                row.f_max.to_string(),
                row.incumbent.to_string(),
                row.boxes_open.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of bounding one box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: f64,
    pub upper: f64,
    pub decision: Option<Decision>,
    /// The box is solved: no point in it can beat `upper`.
    pub closed: bool,
}

fn bound_with(ctx: &Context, b: &SearchBox, incumbent: f64) -> BoxBounds {
    let infeasible = BoxBounds {
        lower: f64::INFINITY,
        upper: f64::INFINITY,
        decision: None,
        closed: true,
    };
    let Some(an) = analyze(ctx, b) else {
        return infeasible;
    };
    let (mut lower, upper, decision, closed) = if an.is_closed() {
        let routes: Vec<Route> = an.routes.iter().map(|r| r[0].0).collect();
        match complete(ctx, b, &routes, None) {
            Completed::Done(c) if c.exact => (c.value, c.value, Some(c.decision), true),
            Completed::Done(c) => (an.lower.max(c.lower), c.value, Some(c.decision), false),
            Completed::Infeasible => return infeasible,
            Completed::Unknown => (an.lower, f64::INFINITY, None, false),
        }
    } else {
        match heuristic_upper(ctx, b, &an) {
            Some(c) => {
                let c = if ctx.cfg.local_search && c.value < incumbent * 1.02 {
                    improve(ctx, b, &an, c)
                } else {
                    c
                };
                (an.lower, c.value, Some(c.decision), false)
            }
            None => (an.lower, f64::INFINITY, None, false),
        }
    };
    lower = lower.max(b.lower_bound).min(upper);
    BoxBounds {
        lower,
        upper,
        decision,
        closed,
    }
}

/// Lower and upper objective bounds over box `b`, with the decision that
/// attains the upper bound.
pub fn bound(s: &Scenario, cfg: &SolverConfig, b: &SearchBox) -> BoxBounds {
    let ctx = Context::new(s, cfg);
    bound_with(&ctx, b, f64::INFINITY)
}

/// Removes coordinate values that violate a structural constraint in every
/// completion or cannot beat `incumbent`; `None` when nothing survives.
pub fn reduce(s: &Scenario, cfg: &SolverConfig, b: SearchBox, incumbent: f64) -> Option<SearchBox> {
    let ctx = Context::new(s, cfg);
    reduce_box(&ctx, b, incumbent)
}

/// Caches and powers for a fixed offloading, using the node greedy (or
/// exact enumeration within `cfg.cache_exact_limit`) and `cfg.power`.
pub(crate) fn complete_offloading(
    s: &Scenario,
    cfg: &SolverConfig,
    offload_mes: &BitTensor,
    offload_cloud: &BitTensor,
) -> Result<Decision, String> {
    let ctx = Context::new(s, cfg);
    let l = ctx.lattice;
    if offload_mes.shape() != [l.viewpoints, l.sbs, l.hmds] || offload_cloud.shape() != offload_mes.shape() {
        return Err("offload tensors do not match the scenario".into());
    }
    let mut b = SearchBox::full(&l);
    let mut routes = Vec::with_capacity(ctx.pairs());
    for i in 0..l.viewpoints {
        for u in 0..l.hmds {
            let mes: Vec<usize> = (0..l.sbs).filter(|&m| offload_mes.get(i, m, u)).collect();
            let cloud: Vec<usize> = (0..l.sbs).filter(|&m| offload_cloud.get(i, m, u)).collect();
            let route = match (mes.as_slice(), cloud.as_slice()) {
                ([], []) => Route::Local,
                ([m], []) => Route::Mes(*m),
                ([], [m]) => Route::Cloud(*m),
                ([a], [c]) if a != c => Route::MesCloud(*a, *c),
                _ => return Err(format!("request ({i}, {u}) violates the single-server constraints")),
            };
            for m in 0..l.sbs {
                b.fix(&l, l.offload_mes(i, m, u), offload_mes.get(i, m, u));
                b.fix(&l, l.offload_cloud(i, m, u), offload_cloud.get(i, m, u));
            }
            routes.push(route);
        }
    }
    match complete(&ctx, &b, &routes, None) {
        Completed::Done(c) => Ok(c.decision),
        Completed::Infeasible => Err("no cache placement serves the offloading".into()),
        Completed::Unknown => Err("greedy placement found no feasible caching".into()),
    }
}

struct Open(SearchBox);

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // Max-heap order reversed: smallest lower bound first, then oldest box.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .lower_bound
            .total_cmp(&self.0.lower_bound)
            .then(other.0.id.cmp(&self.0.id))
    }
}

/// Solves over the whole lattice.
pub fn jcpt_solve(s: &Scenario, cfg: &SolverConfig) -> SolveResult {
    jcpt_solve_from(s, cfg, SearchBox::full(&Lattice::new(s)), "jcpt")
}

/// Solves over `root`, e.g. a box with some coordinates pinned.
pub fn jcpt_solve_from(s: &Scenario, cfg: &SolverConfig, root: SearchBox, algorithm: &str) -> SolveResult {
    let start = Instant::now();
    let ctx = Context::new(s, cfg);
    let mut next_id = 0u64;
    let mut incumbent = f64::INFINITY;
    let mut best: Option<Decision> = None;
    let mut heap: BinaryHeap<Open> = BinaryHeap::new();
    let mut trace = Vec::new();
    let mut boxes_explored = 0usize;

    let process = |mut b: SearchBox, incumbent: f64| -> Option<(SearchBox, bool)> {
        b = reduce_box(&ctx, b, incumbent)?;
        let bounds = bound_with(&ctx, &b, incumbent);
        if !bounds.lower.is_finite() && bounds.decision.is_none() {
            return None;
        }
        b.lower_bound = bounds.lower;
        b.upper_bound = bounds.upper;
        b.incumbent = bounds.decision;
        Some((b, bounds.closed))
    };

    let mut root = root;
    root.id = next_id;
    next_id += 1;
    root.lower_bound = 0.0;
    let accept = |b: SearchBox,
                      closed: bool,
                      incumbent: &mut f64,
                      best: &mut Option<Decision>,
                      heap: &mut BinaryHeap<Open>| {
        let mut b = b;
        if b.upper_bound < *incumbent {
            *incumbent = b.upper_bound;
            *best = b.incumbent.take();
        }
        if !closed && b.lower_bound < *incumbent {
            b.incumbent = None;
            heap.push(Open(b));
        }
    };
    let global_lower = |heap: &BinaryHeap<Open>, incumbent: f64| {
        heap.peek()
            .map_or(incumbent, |o| o.0.lower_bound.min(incumbent))
    };

    let mut f_max = f64::INFINITY;
    if let Some((b, closed)) = process(root, incumbent) {
        boxes_explored += 1;
        f_max = b.upper_bound;
        accept(b, closed, &mut incumbent, &mut best, &mut heap);
    }
    let mut lower = global_lower(&heap, incumbent);
    trace.push(TraceRow {
        iteration: 0,
        f_min: lower,
        f_max,
        incumbent,
        boxes_open: heap.len(),
    });

    let mut iterations = 0;
    let status = loop {
        if heap.is_empty() {
            break if incumbent.is_finite() {
                SolveStatus::Optimal
            } else {
                SolveStatus::Infeasible
            };
        }
        if incumbent.is_finite() && incumbent - lower <= cfg.tolerance * incumbent {
            break if incumbent - lower <= 0.0 {
                SolveStatus::Optimal
            } else {
                SolveStatus::Converged
            };
        }
        if iterations >= cfg.max_iterations {
            break if incumbent.is_finite() {
                SolveStatus::IterationLimit
            } else {
                SolveStatus::Infeasible
            };
        }
        let Open(parent) = heap.pop().expect("non-empty heap");
        if parent.lower_bound >= incumbent {
            continue;
        }
        let Some(k) = select_dimension(s, &parent) else {
            continue;
        };
        iterations += 1;
        let (mut c1, mut c2) = branch(&parent, k).expect("undecided dimension");
        c1.id = next_id;
        c2.id = next_id + 1;
        next_id += 2;
        let snapshot = incumbent;
        let (r1, r2) = rayon::join(|| process(c1, snapshot), || process(c2, snapshot));
        f_max = f64::INFINITY;
        for (b, closed) in [r1, r2].into_iter().flatten() {
            boxes_explored += 1;
            f_max = f_max.min(b.upper_bound);
            accept(b, closed, &mut incumbent, &mut best, &mut heap);
        }
        lower = global_lower(&heap, incumbent).max(lower).min(incumbent);
        trace.push(TraceRow {
            iteration: iterations,
            f_min: lower,
            f_max,
            incumbent,
            boxes_open: heap.len(),
        });
    };
    if heap.is_empty() {
        lower = incumbent;
        if let Some(last) = trace.last_mut() {
            last.f_min = lower;
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    let mut result = SolveResult::from_decision(algorithm, s, best, status, elapsed);
    if status == SolveStatus::Infeasible {
        result.status = SolveStatus::Infeasible;
    }
    result.global_lower_bound = lower.min(result.best_value);
    result.iterations = iterations;
    result.boxes_explored = boxes_explored;
    result.bound_trace = trace;
    result
}
