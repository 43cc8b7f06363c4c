//! Exhaustive ground truth for tiny instances.
//!
//! Every binary decision is a choice of serving path per request plus a
//! cache state per node. For a fixed set of paths, the cache states of
//! different nodes never interact (capacity and projection energy are per
//! node) and the powers only affect transmission, so the enumeration visits
//! every path assignment, tabulates every cache state of every node, and
//! scans every admissible grid power vector for the links in use. This
//! visits every lattice point once while keeping the work additive.

use rayon::prelude::*;
use thiserror::Error;

use crate::latency::Decision;
use crate::model::Scenario;
use crate::radio::{link_rate, sinr, PowerAllocation};

/// Default bound on `path assignments * power grid points`.
pub const DEFAULT_CAP: u128 = 1 << 24;

/// Values within this relative distance of the optimum count as optimal.
const TIE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("instance needs about {estimate} evaluations, limit is {cap}")]
    TooLarge { estimate: u128, cap: u128 },
    #[error("power grid needs at least 2 levels, got {0}")]
    Levels(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Infinite when no decision is feasible.
    pub optimal_value: f64,
    /// One decision per optimal path assignment, in enumeration order. For
    /// each, cache states are the lexicographically smallest optimal ones
    /// and powers the first optimal grid point.
    pub optimal_decisions: Vec<Decision>,
    /// Feasible (cache, offload) points times power grid points.
    pub enumerated_count: u128,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Path {
    Local,
    Mes(usize),
    Cloud(usize),
    MesCloud(usize, usize),
}

fn paths(sbs: usize) -> Vec<Path> {
    let mut out = vec![Path::Local];
    out.extend((0..sbs).map(Path::Mes));
    out.extend((0..sbs).map(Path::Cloud));
    for a in 0..sbs {
        for c in 0..sbs {
            if a != c {
                out.push(Path::MesCloud(a, c));
            }
        }
    }
    out
}

/// Cache state of one viewpoint at one node: bit 0 MV, bit 1 SV.
fn state_bits(code: usize, i: usize) -> (bool, bool) {
    let k = (code >> (2 * i)) & 3;
    (k & 1 == 1, k & 2 == 2)
}

/// Requests a node must serve: `(viewpoint, popularity)` pairs.
struct NodeDemand {
    capacity: f64,
    budget: f64,
    delay: Vec<f64>,
    energy: Vec<f64>,
    served: Vec<f64>,
}

/// `(feasible count, best delay, smallest best state)` over all `4^N` states.
fn tabulate(s: &Scenario, node: &NodeDemand) -> (u128, f64, usize) {
    let n = s.viewpoint_count();
    let mut count = 0u128;
    let mut best = (f64::INFINITY, 0usize);
    for code in 0..1usize << (2 * n) {
        let (mut load, mut energy, mut delay) = (0.0, 0.0, 0.0);
        let mut ok = true;
        for i in 0..n {
            let (mv, sv) = state_bits(code, i);
            if mv {
                load += s.viewpoints[i].mv_size_bits;
            }
            if sv {
                load += s.sv_size_bits(i);
            }
            if node.served[i] > 0.0 {
                if !mv && !sv {
                    ok = false;
                    break;
                }
                if mv {
                    delay += node.served[i] * node.delay[i];
                }
                if !sv {
                    energy += node.served[i] * node.energy[i];
                }
            }
        }
        if !ok || load > node.capacity * (1.0 + 1e-9) || energy > node.budget * (1.0 + 1e-9) {
            continue;
        }
        count += 1;
        if delay < best.0 {
            best = (delay, code);
        }
    }
    (count, best.0, best.1)
}

/// Per-SBS budget splits: step vectors over `links` links summing to at most
/// `steps`.
fn splits(links: usize, steps: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; links];
    loop {
        if cur.iter().sum::<usize>() <= steps {
            out.push(cur.clone());
        }
        let mut k = 0;
        loop {
            if k == links {
                return out;
            }
            cur[k] += 1;
            if cur[k] <= steps {
                break;
            }
            cur[k] = 0;
            k += 1;
        }
    }
}

fn grid_size(links_per_sbs: &[usize], levels: usize) -> u128 {
    links_per_sbs
        .iter()
        .map(|&k| splits(k, levels - 1).len() as u128)
        .product()
}

struct PatternBest {
    value: f64,
    count: u128,
    decision: Option<Decision>,
}

struct Enumerator<'a> {
    s: &'a Scenario,
    levels: usize,
    paths: Vec<Path>,
    pairs: usize,
}

impl Enumerator<'_> {
    fn decode(&self, mut index: usize) -> Vec<Path> {
        let r = self.paths.len();
        (0..self.pairs)
            .map(|_| {
                let p = self.paths[index % r];
                index /= r;
                p
            })
            .collect()
    }

    fn evaluate(&self, index: usize) -> PatternBest {
        let s = self.s;
        let (n, hmds, sbs) = (s.viewpoint_count(), s.hmd_count, s.sbs_count);
        let assignment = self.decode(index);
        let none = PatternBest {
            value: f64::INFINITY,
            count: 0,
            decision: None,
        };

        let mut d = Decision::empty(s);
        let mut mes_served = vec![vec![0.0; n]; sbs];
        let mut hmd_served = vec![vec![0.0; n]; hmds];
        let mut weight = vec![vec![0.0; hmds]; sbs];
        let mut constant = 0.0;
        for (k, path) in assignment.iter().enumerate() {
            let (i, u) = (k / hmds, k % hmds);
            let q = s.viewpoints[i].popularity;
            let bits = s.sv_size_bits(i);
            match *path {
                Path::Local => hmd_served[u][i] += q,
                Path::Mes(m) => {
                    d.offload_mes.set(i, m, u, true);
                    mes_served[m][i] += q;
                    weight[m][u] += q * bits;
                }
                Path::Cloud(c) => {
                    d.offload_cloud.set(i, c, u, true);
                    weight[c][u] += q * bits;
                    constant += q * s.backhaul_delay_s;
                }
                Path::MesCloud(m, c) => {
                    d.offload_mes.set(i, m, u, true);
                    d.offload_cloud.set(i, c, u, true);
                    mes_served[m][i] += q;
                    weight[m][u] += q * bits;
                    weight[c][u] += q * bits;
                    constant += q * s.backhaul_delay_s;
                }
            }
        }

        let mut count = 1u128;
        let mut value = constant;
        for (m, served) in mes_served.into_iter().enumerate() {
            let node = NodeDemand {
                capacity: s.mes_cache_bits,
                budget: s.mes_energy_budget_j,
                delay: (0..n).map(|i| s.mes_compute_delay(i)).collect(),
                energy: (0..n).map(|i| s.mes_compute_energy(i)).collect(),
                served,
            };
            let (c, delay, code) = tabulate(s, &node);
            if c == 0 {
                return none;
            }
            count *= c;
            value += delay;
            for i in 0..n {
                let (mv, sv) = state_bits(code, i);
                d.cache_mes_mv.set(i, m, mv);
                d.cache_mes_sv.set(i, m, sv);
            }
        }
        for (u, served) in hmd_served.into_iter().enumerate() {
            let node = NodeDemand {
                capacity: s.hmd_cache_bits,
                budget: s.hmd_energy_budget_j,
                delay: (0..n).map(|i| s.hmd_compute_delay(i)).collect(),
                energy: (0..n).map(|i| s.hmd_compute_energy(i)).collect(),
                served,
            };
            let (c, delay, code) = tabulate(s, &node);
            if c == 0 {
                return none;
            }
            count *= c;
            value += delay;
            for i in 0..n {
                let (mv, sv) = state_bits(code, i);
                d.cache_hmd_mv.set(i, u, mv);
                d.cache_hmd_sv.set(i, u, sv);
            }
        }

        let (points, transmission, power) = self.best_power(&weight);
        d.power = power;
        PatternBest {
            value: value + transmission,
            count: count * points,
            decision: Some(d),
        }
    }

    /// Scans the joint grid on the links with positive weight.
    fn best_power(&self, weight: &[Vec<f64>]) -> (u128, f64, PowerAllocation) {
        let s = self.s;
        let links: Vec<Vec<usize>> = weight
            .iter()
            .map(|row| (0..row.len()).filter(|&u| row[u] > 0.0).collect())
            .collect();
        let options: Vec<Vec<Vec<usize>>> = links.iter().map(|l| splits(l.len(), self.levels - 1)).collect();
        let total: u128 = options.iter().map(|o| o.len() as u128).product();
        let step = s.total_power_w / (self.levels - 1) as f64;
        let mut best = (f64::INFINITY, PowerAllocation::for_scenario(s));
        let mut odometer = vec![0usize; s.sbs_count];
        let mut p = PowerAllocation::for_scenario(s);
        loop {
            for m in 0..s.sbs_count {
                for (slot, &u) in links[m].iter().enumerate() {
                    p.p[m][u] = options[m][odometer[m]][slot] as f64 * step;
                }
            }
            let mut cost = 0.0;
            for m in 0..s.sbs_count {
                for &u in &links[m] {
                    let rate = sinr(s, &p, m, u).and_then(|g| link_rate(s, g)).unwrap_or(0.0);
                    cost += if rate > 0.0 { weight[m][u] / rate } else { f64::INFINITY };
                }
            }
            if cost < best.0 {
                best = (cost, p.clone());
            }
            let mut m = 0;
            loop {
                if m == s.sbs_count {
                    return (total, best.0, best.1);
                }
                odometer[m] += 1;
                if odometer[m] < options[m].len() {
                    break;
                }
                odometer[m] = 0;
                m += 1;
            }
        }
    }
}

/// Evaluations needed by [`brute_force_solve`]: path assignments times the
/// largest power grid (every link active).
pub fn evaluation_estimate(s: &Scenario, levels: usize) -> u128 {
    let r = paths(s.sbs_count).len() as u128;
    let pairs = (s.viewpoint_count() * s.hmd_count) as u32;
    let grid = grid_size(&vec![s.hmd_count; s.sbs_count], levels.max(2));
    r.checked_pow(pairs)
        .and_then(|a| a.checked_mul(grid))
        .unwrap_or(u128::MAX)
}

pub fn brute_force_solve(s: &Scenario, levels: usize) -> Result<OracleResult, OracleError> {
    brute_force_solve_with_cap(s, levels, DEFAULT_CAP)
}

/// Exact optimum over every binary decision and every grid power vector
/// with `levels` levels `{0, P_T/(L-1), ..., P_T}` per active link, each
/// SBS within its budget.
pub fn brute_force_solve_with_cap(s: &Scenario, levels: usize, cap: u128) -> Result<OracleResult, OracleError> {
    if levels < 2 {
        return Err(OracleError::Levels(levels));
    }
    let estimate = evaluation_estimate(s, levels);
    let n = s.viewpoint_count();
    if estimate > cap || 2 * n >= usize::BITS as usize {
        return Err(OracleError::TooLarge { estimate, cap });
    }
    let e = Enumerator {
        s,
        levels,
        paths: paths(s.sbs_count),
        pairs: n * s.hmd_count,
    };
    let assignments = e.paths.len().pow(e.pairs as u32);
    let evaluated: Vec<PatternBest> = (0..assignments).into_par_iter().map(|k| e.evaluate(k)).collect();

    let enumerated_count = evaluated.iter().map(|p| p.count).sum();
    let optimal_value = evaluated.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
    let optimal_decisions = if optimal_value.is_finite() {
        let limit = optimal_value + TIE * optimal_value.abs();
        evaluated
            .into_iter()
            .filter(|p| p.value <= limit)
            .filter_map(|p| p.decision)
            .collect()
    } else {
        Vec::new()
    };
    Ok(OracleResult {
        optimal_value,
        optimal_decisions,
        enumerated_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latency::{check_feasibility, evaluate};
    use crate::testutil::tiny_scenario;

    #[test]
    fn path_count() {
        assert_eq!(paths(1).len(), 3);
        assert_eq!(paths(2).len(), 7);
        assert_eq!(paths(3).len(), 13);
    }

    #[test]
    fn splits_respect_budget() {
        let all = splits(2, 3);
        assert_eq!(all.len(), 10);
        assert!(all.iter().all(|v| v.iter().sum::<usize>() <= 3));
        assert_eq!(splits(0, 3), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn everything_local_is_free() {
        let mut s = tiny_scenario(1, 1, 2);
        s.hmd_cache_bits = 1e9;
        let r = brute_force_solve(&s, 2).unwrap();
        assert_eq!(r.optimal_value, 0.0);
        assert!(r.enumerated_count > 0);
    }

    #[test]
    fn single_link_closed_form() {
        let mut s = tiny_scenario(1, 1, 1);
        s.hmd_cache_bits = 0.0;
        s.mes_cache_bits = s.sv_size_bits(0);
        let r = brute_force_solve(&s, 2).unwrap();
        let rate = s.bandwidth_per_hmd_hz * (1.0 + s.total_power_w * s.channel_gain[0][0] / s.noise_power_w).log2();
        let expected = s.viewpoints[0].popularity * s.sv_size_bits(0) / rate;
        assert!((r.optimal_value - expected).abs() <= 1e-9 * expected);
        let d = &r.optimal_decisions[0];
        assert_eq!(d.power.p[0][0], s.total_power_w);
        assert!(d.cache_mes_sv.get(0, 0));
    }

    #[test]
    fn reported_decisions_evaluate_to_the_optimum() {
        let s = tiny_scenario(2, 2, 2);
        let r = brute_force_solve(&s, 3).unwrap();
        assert!(!r.optimal_decisions.is_empty());
        for d in &r.optimal_decisions {
            assert!(check_feasibility(&s, d).all_pass());
            let v = evaluate(&s, d).unwrap().weighted;
            assert!((v - r.optimal_value).abs() <= 1e-9 * r.optimal_value.max(1e-12));
        }
    }

    #[test]
    fn finer_grid_never_hurts() {
        let s = tiny_scenario(2, 1, 2);
        let coarse = brute_force_solve(&s, 2).unwrap().optimal_value;
        let fine = brute_force_solve(&s, 3).unwrap().optimal_value;
        assert!(fine <= coarse * (1.0 + 1e-12));
    }

    #[test]
    fn refuses_large_instances() {
        let s = tiny_scenario(3, 3, 4);
        match brute_force_solve(&s, 4) {
            Err(OracleError::TooLarge { estimate, cap }) => assert!(estimate > cap),
            other => panic!("expected refusal, got {other:?}"),
        }
        assert_eq!(brute_force_solve(&s, 1).unwrap_err(), OracleError::Levels(1));
    }

    #[test]
    fn infeasible_instance_has_no_decisions() {
        let mut s = tiny_scenario(1, 1, 1);
        s.channel_gain[0][0] = 0.0;
        s.hmd_cache_bits = 0.0;
        let r = brute_force_solve(&s, 2).unwrap();
        assert!(r.optimal_value.is_infinite());
        assert!(r.optimal_decisions.is_empty());
    }
}
