use proptest::prelude::*;
use vrmec_core::baselines::{solve_lru, solve_nearest_offloading, solve_popularity_first, solve_power_equal, RequestTrace};
use vrmec_core::latency::{energy_usage, evaluate, request_latency};
use vrmec_core::model::zipf_popularity;
use vrmec_core::radio::{allocate_for_demand, sinr, transmission_cost, LinkDemand, DEFAULT_POWER_EPSILON};
use vrmec_core::*;

fn scenario(m: usize, u: usize, n: usize, seed: u64) -> Scenario {
    let cfg = ScenarioConfig {
        sbs_count: m,
        hmd_count: u,
        viewpoint_count: n,
        mes_cache_bits: 6e6,
        hmd_cache_bits: 3e6,
        ..ScenarioConfig::desk()
    };
    generate_scenario(&cfg, seed).unwrap()
}

fn power_matrix(s: &Scenario, shares: &[f64]) -> PowerAllocation {
    let mut p = PowerAllocation::zeros(s.sbs_count, s.hmd_count);
    for m in 0..s.sbs_count {
        let row = &shares[m * s.hmd_count..(m + 1) * s.hmd_count];
        let sum: f64 = row.iter().sum::<f64>().max(1.0);
        for u in 0..s.hmd_count {
            p.p[m][u] = s.total_power_w * row[u] / sum;
        }
    }
    p
}

/// Random demand on a random subset of links.
fn demand(s: &Scenario, picks: &[(bool, f64)]) -> LinkDemand {
    let mut d = Decision::empty(s);
    for (k, &(on, _)) in picks.iter().enumerate().take(s.sbs_count * s.hmd_count) {
        if on {
            let (m, u) = (k / s.hmd_count, k % s.hmd_count);
            d.offload_cloud.set(k % s.viewpoint_count(), m, u, true);
        }
    }
    LinkDemand::from_decision(s, &d)
}

fn equal_split(s: &Scenario, demand: &LinkDemand) -> PowerAllocation {
    let links = demand.active_links();
    let mut p = PowerAllocation::zeros(s.sbs_count, s.hmd_count);
    for &(m, u) in &links {
        let k = links.iter().filter(|l| l.0 == m).count();
        p.p[m][u] = s.total_power_w / k as f64;
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zipf_is_a_non_increasing_distribution(n in 1usize..60, lambda in 0.0f64..3.0) {
        let q = zipf_popularity(n, lambda).unwrap();
        prop_assert_eq!(q.len(), n);
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(q.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(q.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn sinr_is_monotone_in_own_and_other_power(
        seed in 0u64..500,
        shares in prop::collection::vec(0.01f64..1.0, 9),
        link in 0usize..9,
        bump in 1.01f64..2.0,
    ) {
        let s = scenario(3, 3, 2, seed);
        let p = power_matrix(&s, &shares);
        let (m, u) = (link / 3, link % 3);
        let mut q = p.clone();
        q.p[m][u] *= bump;
        let own_before = sinr(&s, &p, m, u).unwrap();
        let own_after = sinr(&s, &q, m, u).unwrap();
        prop_assert!(own_after > own_before);
        for b in 0..3 {
            for v in 0..3 {
                if (b, v) != (m, u) {
                    prop_assert!(sinr(&s, &q, b, v).unwrap() <= sinr(&s, &p, b, v).unwrap());
                }
            }
        }
    }

    #[test]
    fn power_allocation_respects_budget_and_beats_equal_split(
        seed in 0u64..500,
        picks in prop::collection::vec((any::<bool>(), 0.0f64..1.0), 6),
    ) {
        let s = scenario(2, 3, 3, seed);
        let demand = demand(&s, &picks);
        let (p, cost) = allocate_for_demand(&s, &demand, DEFAULT_POWER_EPSILON);
        for m in 0..s.sbs_count {
            prop_assert!(p.sbs_total(m) <= s.total_power_w * (1.0 + 1e-12));
            for u in 0..s.hmd_count {
                prop_assert!(p.p[m][u] >= 0.0);
                if !demand.is_active(m, u) {
                    prop_assert_eq!(p.p[m][u], 0.0);
                }
            }
        }
        let start = transmission_cost(&s, &demand, &equal_split(&s, &demand));
        prop_assert!(cost <= start * (1.0 + 1e-12));
        prop_assert!((transmission_cost(&s, &demand, &p) - cost).abs() <= 1e-9 * cost.max(1e-12));
    }

    #[test]
    fn objective_is_the_popularity_weighted_latency_sum(seed in 0u64..500) {
        let s = scenario(2, 3, 4, seed);
        let r = solve_nearest_offloading(&s);
        let d = r.best_decision.unwrap();
        let mut total = 0.0;
        let mut plain = 0.0;
        for i in 0..s.viewpoint_count() {
            for u in 0..s.hmd_count {
                let t = request_latency(&s, &d, i, u).unwrap().seconds();
                total += s.viewpoints[i].popularity * t;
                plain += t;
            }
        }
        let e = evaluate(&s, &d).unwrap();
        prop_assert!((e.weighted - total).abs() <= 1e-12 * total.max(1e-12));
        prop_assert!((e.unweighted - plain).abs() <= 1e-12 * plain.max(1e-12));
        prop_assert!((r.best_value - total).abs() <= 1e-12 * total.max(1e-12));
    }

    #[test]
    fn energy_scales_with_popularity(seed in 0u64..500, factor in 0.1f64..4.0) {
        let s = scenario(2, 2, 3, seed);
        let d = solve_nearest_offloading(&s).best_decision.unwrap();
        let mut scaled = s.clone();
        for v in &mut scaled.viewpoints {
            v.popularity *= factor;
        }
        let (a, b) = (energy_usage(&s, &d), energy_usage(&scaled, &d));
        for (x, y) in a.mes.iter().chain(&a.hmd).zip(b.mes.iter().chain(&b.hmd)) {
            prop_assert!((x * factor - y).abs() <= 1e-12 * y.abs().max(1e-12));
        }
    }

    #[test]
    fn baselines_return_feasible_decisions(seed in 0u64..500) {
        let s = scenario(2, 3, 4, seed);
        let cfg = SolverConfig { max_iterations: 20, restarts: 2, ..SolverConfig::default() };
        let trace = RequestTrace::generate(&s, RequestTrace::default_length(&s), seed);
        let runs = [
            solve_nearest_offloading(&s),
            solve_power_equal(&s, &cfg),
            solve_popularity_first(&s, &cfg),
            solve_lru(&s, &trace).unwrap(),
            jcpt_solve(&s, &cfg),
        ];
        for r in runs {
            let d = r.best_decision.as_ref();
            prop_assert!(d.is_some(), "{} returned nothing", r.algorithm);
            prop_assert!(check_feasibility(&s, d.unwrap()).all_pass(), "{} infeasible", r.algorithm);
            prop_assert!((0.0..=1.0).contains(&r.hit_ratio));
        }
    }

    #[test]
    fn solve_is_deterministic(seed in 0u64..500) {
        let s = scenario(2, 2, 3, seed);
        let cfg = SolverConfig { max_iterations: 30, ..SolverConfig::default() };
        let a = jcpt_solve(&s, &cfg);
        let b = jcpt_solve(&s, &cfg);
        prop_assert_eq!(a.best_value, b.best_value);
        prop_assert_eq!(a.best_decision, b.best_decision);
        prop_assert_eq!(a.bound_trace, b.bound_trace);
    }

    #[test]
    fn bound_trace_is_monotone(seed in 0u64..500) {
        let s = scenario(2, 3, 3, seed);
        let cfg = SolverConfig { max_iterations: 40, restarts: 2, ..SolverConfig::default() };
        let r = jcpt_solve(&s, &cfg);
        for w in r.bound_trace.windows(2) {
            prop_assert!(w[1].incumbent <= w[0].incumbent);
            prop_assert!(w[1].f_min >= w[0].f_min);
        }
        prop_assert!(r.global_lower_bound <= r.best_value * (1.0 + 1e-12));
    }
}

#[test]
fn more_mes_capacity_never_hurts_the_exact_optimum() {
    let cfg = SolverConfig {
        tolerance: 0.0,
        max_iterations: usize::MAX,
        power: PowerMode::Grid { levels: 3 },
        ..SolverConfig::default()
    };
    for seed in 0..3 {
        let mut last = f64::INFINITY;
        for mes in [0.0, 4e6, 8e6, 16e6] {
            let sc = ScenarioConfig {
                sbs_count: 2,
                hmd_count: 2,
                viewpoint_count: 3,
                mes_cache_bits: mes,
                hmd_cache_bits: 2e6,
                ..ScenarioConfig::desk()
            };
            let s = generate_scenario(&sc, seed).unwrap();
            let v = jcpt_solve(&s, &cfg).best_value;
            assert!(v <= last * (1.0 + 1e-12), "seed {seed} capacity {mes}: {v} > {last}");
            last = v;
        }
    }
}
