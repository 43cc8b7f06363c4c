//! Trace-driven LRU caching at the HMD and its nearest MES.

use std::time::Instant;

use indexmap::IndexMap;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::jcpt::{SolveResult, SolveStatus};
use crate::latency::{check_feasibility, Decision};
use crate::model::Scenario;
use crate::radio::{all_rates, allocate_for_demand, LinkDemand, PowerAllocation, DEFAULT_POWER_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestEntry {
    pub t: usize,
    pub u: usize,
    pub i: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestTrace {
    pub entries: Vec<RequestEntry>,
}

impl RequestTrace {
    /// `20 * N * U`.
    pub fn default_length(s: &Scenario) -> usize {
        20 * s.viewpoint_count() * s.hmd_count
    }

    /// HMDs take turns; each draws its viewpoint from the popularity law.
    pub fn generate(s: &Scenario, len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = s.viewpoints.iter().map(|v| v.popularity).collect();
        let entries = match WeightedIndex::new(&weights) {
            Ok(dist) if s.hmd_count > 0 => (0..len)
                .map(|t| RequestEntry {
                    t,
                    u: t % s.hmd_count,
                    i: dist.sample(&mut rng),
                })
                .collect(),
            _ => Vec::new(),
        };
        Self { entries }
    }

    pub fn from_pairs(pairs: &[(usize, usize)]) -> Self {
        Self {
            entries: pairs
                .iter()
                .enumerate()
                .map(|(t, &(u, i))| RequestEntry { t, u, i })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Least recently used entries first. Values are `true` for SV.
struct LruCache {
    items: IndexMap<usize, bool>,
    load: f64,
    capacity: f64,
}

impl LruCache {
    fn new(capacity: f64) -> Self {
        Self {
            items: IndexMap::new(),
            load: 0.0,
            capacity,
        }
    }

    /// Looks up `i` and marks it most recently used.
    fn touch(&mut self, i: usize) -> Option<bool> {
        let sv = self.items.shift_remove(&i)?;
        self.items.insert(i, sv);
        Some(sv)
    }

    /// Inserts the SV if it fits an empty cache, else the MV, evicting from
    /// the LRU end until it fits. Versions larger than the cache are not
    /// inserted.
    fn insert(&mut self, s: &Scenario, i: usize) {
        let (bits, sv) = if s.sv_size_bits(i) <= self.capacity {
            (s.sv_size_bits(i), true)
        } else if s.viewpoints[i].mv_size_bits <= self.capacity {
            (s.viewpoints[i].mv_size_bits, false)
        } else {
            return;
        };
        while self.load + bits > self.capacity {
            let Some((old, old_sv)) = self.items.shift_remove_index(0) else {
                break;
            };
            self.load -= if old_sv {
                s.sv_size_bits(old)
            } else {
                s.viewpoints[old].mv_size_bits
            };
        }
        self.items.insert(i, sv);
        self.load += bits;
    }
}

/// Simulates LRU caches over `trace`. Each request is served by the HMD
/// cache, else by the nearest MES cache, else by the cloud through the
/// nearest SBS; every cache on the path that missed inserts the viewpoint.
/// Powers serve the expected nearest-SBS demand. The objective is `U` times
/// the mean request latency over the second half of the trace and the hit
/// ratio is the share of those requests served without the cloud.
///
/// The returned decision is the final cache state with each request routed
/// as the simulation would route it, dropped to the cloud where a projection
/// budget would be exceeded; its unweighted delay sum is reported.
pub fn solve_lru(s: &Scenario, trace: &RequestTrace) -> Result<SolveResult, BaselineError> {
    let start = Instant::now();
    let n = s.viewpoint_count();
    for e in &trace.entries {
        if e.u >= s.hmd_count || e.i >= n {
            return Err(BaselineError::UnknownRequest {
                t: e.t,
                u: e.u,
                i: e.i,
                hmds: s.hmd_count,
                viewpoints: n,
            });
        }
    }

    let mut demand = LinkDemand::zeros(s);
    for u in 0..s.hmd_count {
        let load: f64 = (0..n).map(|i| s.viewpoints[i].popularity * s.sv_size_bits(i)).sum();
        demand.add(s.nearest_sbs(u), u, load);
    }
    let (power, _) = allocate_for_demand(s, &demand, DEFAULT_POWER_EPSILON);
    let rates = all_rates(s, &power);

    let mut hmd: Vec<LruCache> = (0..s.hmd_count).map(|_| LruCache::new(s.hmd_cache_bits)).collect();
    let mut mes: Vec<LruCache> = (0..s.sbs_count).map(|_| LruCache::new(s.mes_cache_bits)).collect();
    let warmup = trace.len() / 2;
    let (mut total, mut hits, mut counted) = (0.0, 0usize, 0usize);
    for (k, e) in trace.entries.iter().enumerate() {
        let (i, u) = (e.i, e.u);
        let m = s.nearest_sbs(u);
        let transfer = s.sv_size_bits(i) / rates[m * s.hmd_count + u];
        let (latency, hit) = if let Some(sv) = hmd[u].touch(i) {
            (if sv { 0.0 } else { s.hmd_compute_delay(i) }, true)
        } else if let Some(sv) = mes[m].touch(i) {
            hmd[u].insert(s, i);
            (transfer + if sv { 0.0 } else { s.mes_compute_delay(i) }, true)
        } else {
            mes[m].insert(s, i);
            hmd[u].insert(s, i);
            (transfer + s.backhaul_delay_s, false)
        };
        if k >= warmup {
            total += latency;
            hits += hit as usize;
            counted += 1;
        }
    }

    let d = snapshot(s, &hmd, &mes, power);
    let mut r = SolveResult::from_decision("lru", s, Some(d), SolveStatus::Heuristic, 0.0);
    let feasible = r.best_decision.as_ref().is_some_and(|d| check_feasibility(s, d).all_pass());
    if !feasible {
        r = SolveResult::infeasible("lru", 0.0);
    } else if counted > 0 {
        r.best_value = s.hmd_count as f64 * total / counted as f64;
        r.hit_ratio = hits as f64 / counted as f64;
    }
    r.wall_time_s = start.elapsed().as_secs_f64();
    Ok(r)
}

fn snapshot(s: &Scenario, hmd: &[LruCache], mes: &[LruCache], power: PowerAllocation) -> Decision {
    let mut d = Decision::empty(s);
    d.power = power;
    for (u, c) in hmd.iter().enumerate() {
        for (&i, &sv) in &c.items {
            if sv {
                d.cache_hmd_sv.set(i, u, true);
            } else {
                d.cache_hmd_mv.set(i, u, true);
            }
        }
    }
    for (m, c) in mes.iter().enumerate() {
        for (&i, &sv) in &c.items {
            if sv {
                d.cache_mes_sv.set(i, m, true);
            } else {
                d.cache_mes_mv.set(i, m, true);
            }
        }
    }
    let mut hmd_energy = vec![0.0; s.hmd_count];
    let mut mes_energy = vec![0.0; s.sbs_count];
    for i in s.popularity_order() {
        let q = s.viewpoints[i].popularity;
        for u in 0..s.hmd_count {
            let m = s.nearest_sbs(u);
            if d.cache_hmd_sv.get(i, u) {
                continue;
            }
            if d.cache_hmd_mv.get(i, u) && hmd_energy[u] + q * s.hmd_compute_energy(i) <= s.hmd_energy_budget_j {
                hmd_energy[u] += q * s.hmd_compute_energy(i);
                continue;
            }
            if d.cache_mes_sv.get(i, m) {
                d.offload_mes.set(i, m, u, true);
            } else if d.cache_mes_mv.get(i, m) && mes_energy[m] + q * s.mes_compute_energy(i) <= s.mes_energy_budget_j {
                mes_energy[m] += q * s.mes_compute_energy(i);
                d.offload_mes.set(i, m, u, true);
            } else {
                d.offload_cloud.set(i, m, u, true);
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny_scenario;

    #[test]
    fn repeated_viewpoint_always_hits_after_warmup() {
        let s = tiny_scenario(1, 1, 3);
        let trace = RequestTrace::from_pairs(&vec![(0, 1); 10]);
        let r = solve_lru(&s, &trace).unwrap();
        assert_eq!(r.hit_ratio, 1.0);
    }

    #[test]
    fn zero_capacity_never_hits() {
        let mut s = tiny_scenario(1, 2, 3);
        s.hmd_cache_bits = 0.0;
        s.mes_cache_bits = 0.0;
        let trace = RequestTrace::generate(&s, 200, 1);
        let r = solve_lru(&s, &trace).unwrap();
        assert_eq!(r.hit_ratio, 0.0);
        let backhaul_floor = s.hmd_count as f64 * s.backhaul_delay_s;
        assert!(r.best_value > backhaul_floor);
    }

    #[test]
    fn cyclic_trace_thrashes_single_slot_caches() {
        let mut s = tiny_scenario(1, 1, 3);
        for v in &mut s.viewpoints {
            v.mv_size_bits = 1e6;
        }
        s.hmd_cache_bits = s.sv_size_bits(0);
        s.mes_cache_bits = s.sv_size_bits(0);
        let pairs: Vec<(usize, usize)> = (0..30).map(|t| (0, t % 3)).collect();
        let r = solve_lru(&s, &RequestTrace::from_pairs(&pairs)).unwrap();
        assert_eq!(r.hit_ratio, 0.0);
    }

    #[test]
    fn unknown_viewpoint_is_rejected() {
        let s = tiny_scenario(1, 1, 2);
        let trace = RequestTrace::from_pairs(&[(0, 5)]);
        assert!(matches!(solve_lru(&s, &trace), Err(BaselineError::UnknownRequest { i: 5, .. })));
    }

    #[test]
    fn deterministic() {
        let s = tiny_scenario(2, 3, 4);
        let trace = RequestTrace::generate(&s, RequestTrace::default_length(&s), 9);
        assert_eq!(trace, RequestTrace::generate(&s, trace.len(), 9));
        let a = solve_lru(&s, &trace).unwrap();
        let b = solve_lru(&s, &trace).unwrap();
        assert_eq!(a.best_value, b.best_value);
        assert_eq!(a.best_decision, b.best_decision);
        assert!(check_feasibility(&s, a.best_decision.as_ref().unwrap()).all_pass());
    }
}
