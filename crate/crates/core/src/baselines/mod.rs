//! Comparison strategies: nearest offloading (NO), equal power (PEA),
//! popularity-first caching (PF) and trace-driven LRU caching, plus the
//! greedy caching/power completion they share with the solver.

mod lru;

use std::time::Instant;

use thiserror::Error;

pub use lru::{solve_lru, RequestEntry, RequestTrace};

use crate::jcpt::{complete_offloading, jcpt_solve_from, Lattice, SearchBox, SolveResult, SolveStatus, SolverConfig};
use crate::latency::{check_feasibility, BitTensor, Decision};
use crate::model::{PathLoss, Scenario};
use crate::radio::{PowerAllocation, PowerMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("trace entry {t} references HMD {u} / viewpoint {i}, scenario has {hmds} HMDs and {viewpoints} viewpoints")]
    UnknownRequest {
        t: usize,
        u: usize,
        i: usize,
        hmds: usize,
        viewpoints: usize,
    },
}

fn greedy_config() -> SolverConfig {
    SolverConfig {
        cache_exact_limit: 0,
        ..SolverConfig::default()
    }
}

/// Greedy caching for a fixed offloading, followed by power allocation.
///
/// Each node starts from the smallest version of every viewpoint it must
/// hold, repairs energy overruns by upgrading MVs with the best energy
/// saving per bit, then spends spare capacity on the SV upgrades with the
/// best delay saving per bit.
pub fn greedy_cache_power(
    s: &Scenario,
    offload_mes: &BitTensor,
    offload_cloud: &BitTensor,
) -> Result<Decision, BaselineError> {
    let d = complete_offloading(s, &greedy_config(), offload_mes, offload_cloud).map_err(BaselineError::Infeasible)?;
    let report = check_feasibility(s, &d);
    if report.all_pass() {
        Ok(d)
    } else {
        let failing: Vec<&str> = report.failing().iter().map(|c| c.label()).collect();
        Err(BaselineError::Infeasible(format!("violates {}", failing.join(", "))))
    }
}

/// Per-node bookkeeping while admitting requests: state per viewpoint
/// (0 none, 1 MV, 2 SV), bits used, projection energy used.
struct Admission {
    state: Vec<u8>,
    load: f64,
    energy: f64,
    energy_by_item: Vec<f64>,
    capacity: f64,
    budget: f64,
}

impl Admission {
    fn new(n: usize, capacity: f64, budget: f64) -> Self {
        Self {
            state: vec![0; n],
            load: 0.0,
            energy: 0.0,
            energy_by_item: vec![0.0; n],
            capacity,
            budget,
        }
    }

    fn fits(&self, bits: f64) -> bool {
        self.load + bits <= self.capacity * (1.0 + 1e-12)
    }

    fn powers(&self, joules: f64) -> bool {
        self.energy + joules <= self.budget * (1.0 + 1e-12)
    }

    /// Tries to serve one request for viewpoint `i` whose projection would
    /// cost `e` joules; `mv` and `sv` are the version sizes.
    fn admit(&mut self, i: usize, mv: f64, sv: f64, e: f64) -> bool {
        match self.state[i] {
            2 => true,
            1 if self.powers(e) => {
                self.energy += e;
                self.energy_by_item[i] += e;
                true
            }
            1 if self.fits(sv - mv) => {
                self.load += sv - mv;
                self.energy -= self.energy_by_item[i];
                self.energy_by_item[i] = 0.0;
                self.state[i] = 2;
                true
            }
            1 => false,
            _ if self.fits(mv) && self.powers(e) => {
                self.load += mv;
                self.energy += e;
                self.energy_by_item[i] = e;
                self.state[i] = 1;
                true
            }
            _ if self.fits(sv) => {
                self.load += sv;
                self.state[i] = 2;
                true
            }
            _ => false,
        }
    }
}

/// Requests `(i, u)` by decreasing popularity, ties by `(i, u)`.
fn requests_by_popularity(s: &Scenario) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(s.viewpoint_count() * s.hmd_count);
    for i in s.popularity_order() {
        for u in 0..s.hmd_count {
            out.push((i, u));
        }
    }
    out
}

/// Nearest offloading: HMD-local when the HMD cache admits the viewpoint,
/// else the nearest MES when its cache and energy admit it, else the cloud
/// through the nearest SBS. Caching and power are then redone greedily.
pub fn solve_nearest_offloading(s: &Scenario) -> SolveResult {
    let start = Instant::now();
    let n = s.viewpoint_count();
    let mut offload_mes = BitTensor::zeros(n, s.sbs_count, s.hmd_count);
    let mut offload_cloud = BitTensor::zeros(n, s.sbs_count, s.hmd_count);
    let mut hmds: Vec<Admission> = (0..s.hmd_count)
        .map(|_| Admission::new(n, s.hmd_cache_bits, s.hmd_energy_budget_j))
        .collect();
    let mut mes: Vec<Admission> = (0..s.sbs_count)
        .map(|_| Admission::new(n, s.mes_cache_bits, s.mes_energy_budget_j))
        .collect();
    for (i, u) in requests_by_popularity(s) {
        let q = s.viewpoints[i].popularity;
        let mv = s.viewpoints[i].mv_size_bits;
        let sv = s.sv_size_bits(i);
        if hmds[u].admit(i, mv, sv, q * s.hmd_compute_energy(i)) {
            continue;
        }
        let m = s.nearest_sbs(u);
        if mes[m].admit(i, mv, sv, q * s.mes_compute_energy(i)) {
            offload_mes.set(i, m, u, true);
        } else {
            offload_cloud.set(i, m, u, true);
        }
    }
    let decision = greedy_cache_power(s, &offload_mes, &offload_cloud).ok();
    SolveResult::from_decision("no", s, decision, SolveStatus::Heuristic, start.elapsed().as_secs_f64())
}

/// Coverage threshold used by PEA: the default path-loss gain at 50 m.
pub fn default_coverage_gain() -> f64 {
    PathLoss::default().gain(50.0)
}

/// `P_T / |covered|` on every covered link; an HMD is always covered by its
/// nearest SBS so that every HMD can be reached.
pub fn equal_power_allocation(s: &Scenario, coverage_gain: f64) -> PowerAllocation {
    let mut p = PowerAllocation::for_scenario(s);
    for m in 0..s.sbs_count {
        let covered: Vec<usize> = (0..s.hmd_count)
            .filter(|&u| s.channel_gain[m][u] >= coverage_gain || s.nearest_sbs(u) == m)
            .collect();
        for &u in &covered {
            p.p[m][u] = s.total_power_w / covered.len() as f64;
        }
    }
    p
}

/// Equal power allocation over covered HMDs, pinned while the solver
/// chooses caching and offloading.
pub fn solve_power_equal(s: &Scenario, cfg: &SolverConfig) -> SolveResult {
    solve_power_equal_with(s, cfg, default_coverage_gain())
}

pub fn solve_power_equal_with(s: &Scenario, cfg: &SolverConfig, coverage_gain: f64) -> SolveResult {
    let start = Instant::now();
    let cfg = SolverConfig {
        power: PowerMode::Pinned(equal_power_allocation(s, coverage_gain)),
        ..cfg.clone()
    };
    let root = SearchBox::full(&Lattice::new(s));
    let mut r = jcpt_solve_from(s, &cfg, root, "pea");
    r.wall_time_s = start.elapsed().as_secs_f64();
    r
}

/// Fills one cache with the most popular viewpoints, SV when it fits,
/// otherwise MV, skipping viewpoints that fit in neither form.
pub fn popularity_fill(s: &Scenario, capacity: f64) -> Vec<u8> {
    let mut state = vec![0u8; s.viewpoint_count()];
    let mut load = 0.0;
    for i in s.popularity_order() {
        let (mv, sv) = (s.viewpoints[i].mv_size_bits, s.sv_size_bits(i));
        if load + sv <= capacity {
            load += sv;
            state[i] = 2;
        } else if load + mv <= capacity {
            load += mv;
            state[i] = 1;
        }
    }
    state
}

/// Root box with every cache coordinate pinned to the popularity fill.
pub fn popularity_first_box(s: &Scenario) -> SearchBox {
    let l = Lattice::new(s);
    let mut b = SearchBox::full(&l);
    let mes = popularity_fill(s, s.mes_cache_bits);
    let hmd = popularity_fill(s, s.hmd_cache_bits);
    for i in 0..s.viewpoint_count() {
        for m in 0..s.sbs_count {
            b.fix(&l, l.cache_mes_mv(i, m), mes[i] == 1);
            b.fix(&l, l.cache_mes_sv(i, m), mes[i] == 2);
        }
        for u in 0..s.hmd_count {
            b.fix(&l, l.cache_hmd_mv(i, u), hmd[i] == 1);
            b.fix(&l, l.cache_hmd_sv(i, u), hmd[i] == 2);
        }
    }
    b
}

/// Popularity-first caching, pinned while the solver chooses offloading and
/// power.
pub fn solve_popularity_first(s: &Scenario, cfg: &SolverConfig) -> SolveResult {
    jcpt_solve_from(s, cfg, popularity_first_box(s), "pf")
}
