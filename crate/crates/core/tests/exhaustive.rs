//! Cross-checks against a naive enumerator that walks every binary decision
//! and every per-link power level, with no decomposition at all.

use proptest::prelude::*;
use vrmec_core::baselines::{greedy_cache_power, solve_nearest_offloading, solve_popularity_first, solve_power_equal};
use vrmec_core::jcpt::{bound, branch, from_monotone, to_monotone, Lattice, SearchBox};
use vrmec_core::latency::{evaluate, BitTensor};
use vrmec_core::oracle::brute_force_solve;
use vrmec_core::testutil::tiny_scenario;
use vrmec_core::*;

const LEVELS: usize = 4;

fn close(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12)
}

fn small(m: usize, u: usize, n: usize, seed: u64, mes: f64, hmd: f64) -> Scenario {
    let cfg = ScenarioConfig {
        sbs_count: m,
        hmd_count: u,
        viewpoint_count: n,
        mes_cache_bits: mes,
        hmd_cache_bits: hmd,
        ..ScenarioConfig::desk()
    };
    generate_scenario(&cfg, seed).unwrap()
}

fn grid_cfg() -> SolverConfig {
    SolverConfig {
        tolerance: 0.0,
        max_iterations: usize::MAX,
        power: PowerMode::Grid { levels: LEVELS },
        ..SolverConfig::default()
    }
}

/// Every power matrix with entries in `{0, P/(L-1), ..., P}`.
fn power_grid(s: &Scenario) -> Vec<PowerAllocation> {
    let links = s.sbs_count * s.hmd_count;
    let total = LEVELS.pow(links as u32);
    (0..total)
        .map(|mut code| {
            let mut p = PowerAllocation::zeros(s.sbs_count, s.hmd_count);
            for k in 0..links {
                let level = code % LEVELS;
                code /= LEVELS;
                p.p[k / s.hmd_count][k % s.hmd_count] = s.total_power_w * level as f64 / (LEVELS - 1) as f64;
            }
            p
        })
        .collect()
}

/// Minimum objective over feasible decisions whose lattice point lies in
/// `[lower, upper]`.
fn naive_min(s: &Scenario, lower: &[bool], upper: &[bool]) -> f64 {
    let dims = lower.len();
    assert!(dims <= 16, "naive enumeration needs a tiny lattice");
    let powers = power_grid(s);
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << dims) {
        let coords: Vec<u8> = (0..dims).map(|k| (mask >> k & 1) as u8).collect();
        if (0..dims).any(|k| (coords[k] == 1) < lower[k] || (coords[k] == 1) > upper[k]) {
            continue;
        }
        let mut d = from_monotone(s, &coords).unwrap();
        for p in &powers {
            d.power = p.clone();
            if check_feasibility(s, &d).all_pass() {
                let v = evaluate(s, &d).unwrap().weighted;
                if v < best {
                    best = v;
                }
            }
        }
    }
    best
}

fn naive_optimum(s: &Scenario) -> f64 {
    let dims = Lattice::new(s).dims();
    naive_min(s, &vec![false; dims], &vec![true; dims])
}

#[test]
fn oracle_matches_naive_enumeration_single_link() {
    for seed in 0..4 {
        for (mes, hmd) in [(8e6, 4e6), (4e6, 1e6), (0.0, 0.0)] {
            let s = small(1, 1, 2, seed, mes, hmd);
            let naive = naive_optimum(&s);
            let oracle = brute_force_solve(&s, LEVELS).unwrap().optimal_value;
            assert!(close(naive, oracle), "seed {seed}: naive {naive} oracle {oracle}");
        }
    }
}

#[test]
fn oracle_matches_naive_enumeration_two_sbs() {
    for seed in 0..4 {
        for (mes, hmd) in [(8e6, 4e6), (2e6, 0.0)] {
            let s = small(2, 1, 1, seed, mes, hmd);
            let naive = naive_optimum(&s);
            let oracle = brute_force_solve(&s, LEVELS).unwrap().optimal_value;
            assert!(close(naive, oracle), "seed {seed}: naive {naive} oracle {oracle}");
        }
    }
}

#[test]
fn jcpt_matches_naive_enumeration() {
    for seed in 0..3 {
        for s in [small(1, 1, 2, seed, 4e6, 1e6), small(2, 1, 1, seed, 2e6, 0.0)] {
            let naive = naive_optimum(&s);
            let r = jcpt_solve(&s, &grid_cfg());
            assert!(close(naive, r.best_value), "seed {seed}: naive {naive} jcpt {}", r.best_value);
        }
    }
}

#[test]
fn greedy_caching_matches_exhaustive_for_fixed_offloading() {
    let capacities = [1e6, 4e6, 8e6, 12e6];
    for &mes in &capacities {
        for &hmd in &capacities {
            let mut s = tiny_scenario(1, 1, 2);
            s.mes_cache_bits = mes;
            s.hmd_cache_bits = hmd;
            let mut offload_mes = BitTensor::zeros(2, 1, 1);
            offload_mes.set(0, 0, 0, true);
            let offload_cloud = BitTensor::zeros(2, 1, 1);
            let greedy = greedy_cache_power(&s, &offload_mes, &offload_cloud);

            let mut best = f64::INFINITY;
            let template = greedy.as_ref().map(|d| d.power.clone()).unwrap_or_else(|_| {
                let mut p = PowerAllocation::zeros(1, 1);
                p.p[0][0] = s.total_power_w;
                p
            });
            for mask in 0u32..256 {
                let mut d = Decision::empty(&s);
                d.offload_mes = offload_mes.clone();
                d.power = template.clone();
                let bit = |k: u32| mask >> k & 1 == 1;
                for i in 0..2 {
                    let k = 4 * i as u32;
                    d.cache_mes_mv.set(i, 0, bit(k));
                    d.cache_mes_sv.set(i, 0, bit(k + 1));
                    d.cache_hmd_mv.set(i, 0, bit(k + 2));
                    d.cache_hmd_sv.set(i, 0, bit(k + 3));
                }
                if check_feasibility(&s, &d).all_pass() {
                    best = best.min(evaluate(&s, &d).unwrap().weighted);
                }
            }
            match greedy {
                Ok(d) => {
                    let v = evaluate(&s, &d).unwrap().weighted;
                    assert!(close(v, best), "caps {mes}/{hmd}: greedy {v} exhaustive {best}");
                }
                Err(_) => assert!(best.is_infinite(), "caps {mes}/{hmd}: greedy refused, exhaustive {best}"),
            }
        }
    }
}

#[test]
fn jcpt_never_worse_than_restricted_strategies() {
    let cfg = SolverConfig {
        tolerance: 0.0,
        max_iterations: usize::MAX,
        ..SolverConfig::default()
    };
    for seed in 0..4 {
        let s = small(2, 2, 3, seed, 8e6, 4e6);
        let j = jcpt_solve(&s, &cfg);
        assert!(j.is_feasible());
        for r in [solve_nearest_offloading(&s), solve_popularity_first(&s, &cfg)] {
            assert!(
                j.best_value <= r.best_value * (1.0 + 1e-9),
                "seed {seed}: jcpt {} > {} {}",
                j.best_value,
                r.algorithm,
                r.best_value
            );
        }
    }
}

#[test]
fn equal_power_baseline_is_feasible_and_no_better_than_jcpt() {
    let cfg = SolverConfig {
        tolerance: 0.0,
        max_iterations: usize::MAX,
        ..SolverConfig::default()
    };
    for seed in 0..4 {
        let s = small(2, 2, 3, seed, 8e6, 4e6);
        let r = solve_power_equal(&s, &cfg);
        let d = r.best_decision.as_ref().expect("feasible");
        assert!(check_feasibility(&s, d).all_pass());
        let j = jcpt_solve(&s, &cfg);
        assert!(j.best_value <= r.best_value * (1.0 + 1e-9), "seed {seed}: jcpt {} pea {}", j.best_value, r.best_value);
    }
}

fn random_box(lattice: &Lattice, picks: &[(bool, bool)]) -> SearchBox {
    let mut b = SearchBox::full(lattice);
    for (k, &(fixed, value)) in picks.iter().enumerate().take(b.dims()) {
        if fixed {
            b.lower[k] = value;
            b.upper[k] = value;
        }
    }
    b
}

fn inside(b: &SearchBox, coords: &[u8]) -> bool {
    coords
        .iter()
        .enumerate()
        .all(|(k, &c)| (c == 1) >= b.lower[k] && (c == 1) <= b.upper[k])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn box_bounds_bracket_the_box_optimum(
        seed in 0u64..1000,
        picks in prop::collection::vec((prop::bool::weighted(0.3), any::<bool>()), 12),
    ) {
        let s = small(1, 1, 2, seed, 4e6, 2e6);
        let lattice = Lattice::new(&s);
        let b = random_box(&lattice, &picks);
        let truth = naive_min(&s, &b.lower, &b.upper);
        let bb = bound(&s, &grid_cfg(), &b);
        let tol = 1e-9 * truth.abs().max(1e-12);
        prop_assert!(bb.lower <= truth + tol, "lower {} above box optimum {}", bb.lower, truth);
        prop_assert!(bb.lower <= bb.upper);
        match &bb.decision {
            Some(d) => {
                prop_assert!(bb.upper >= truth - tol, "upper {} below box optimum {}", bb.upper, truth);
                prop_assert!(check_feasibility(&s, d).all_pass());
                prop_assert!(inside(&b, &to_monotone(&s, d).unwrap()));
                prop_assert!(close(evaluate(&s, d).unwrap().weighted, bb.upper));
            }
            None => prop_assert!(bb.upper.is_infinite()),
        }
        if bb.closed && truth.is_finite() {
            prop_assert!(close(bb.upper, truth), "closed box upper {} vs optimum {}", bb.upper, truth);
        }
    }

    #[test]
    fn branching_partitions_the_box(
        seed in 0u64..1000,
        picks in prop::collection::vec((prop::bool::weighted(0.3), any::<bool>()), 12),
        which in 0usize..12,
    ) {
        let s = small(1, 1, 2, seed, 4e6, 2e6);
        let lattice = Lattice::new(&s);
        let b = random_box(&lattice, &picks);
        let free: Vec<usize> = (0..b.dims()).filter(|&k| !b.is_decided(k)).collect();
        prop_assume!(!free.is_empty());
        let k = free[which % free.len()];
        let (left, right) = branch(&b, k).unwrap();
        let dims = b.dims();
        for mask in 0u32..(1 << dims) {
            let coords: Vec<u8> = (0..dims).map(|j| (mask >> j & 1) as u8).collect();
            let count = inside(&left, &coords) as u8 + inside(&right, &coords) as u8;
            prop_assert_eq!(count, inside(&b, &coords) as u8);
        }
    }
}
