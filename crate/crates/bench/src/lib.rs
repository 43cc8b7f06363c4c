//! Fixtures shared by the benchmarks.

use vrmec_core::{generate_scenario, Scenario, ScenarioConfig, SolverConfig};

/// Desk-scale scenario for `seed`.
pub fn desk(seed: u64) -> Scenario {
    generate_scenario(&ScenarioConfig::desk(), seed).expect("desk preset is valid")
}

/// Two SBSs, two HMDs, three viewpoints: small enough for the oracle.
pub fn enumerable(seed: u64) -> Scenario {
    let cfg = ScenarioConfig {
        sbs_count: 2,
        hmd_count: 2,
        viewpoint_count: 3,
        mes_cache_bits: 8e6,
        hmd_cache_bits: 4e6,
        ..ScenarioConfig::desk()
    };
    generate_scenario(&cfg, seed).expect("small preset is valid")
}

/// Short search budget for timing the desk solver.
pub fn quick_solver() -> SolverConfig {
    SolverConfig {
        max_iterations: 10,
        ..SolverConfig::default()
    }
}
