//! Joint caching, power allocation and horizontal/vertical task offloading
//! for VR viewpoint delivery over MEC-enabled small cells.
//!
//! The crate is organised bottom-up: [`model`] describes the world,
//! [`radio`] and [`latency`] evaluate a candidate [`Decision`], [`jcpt`]
//! searches for a good one, [`baselines`] implements the comparison
//! strategies, [`oracle`] enumerates tiny instances exhaustively and
//! [`experiment`] runs parameter sweeps.

pub mod baselines;
pub mod experiment;
pub mod jcpt;
pub mod latency;
pub mod model;
pub mod oracle;
pub mod radio;

pub use jcpt::{jcpt_solve, SolveResult, SolveStatus, SolverConfig};
pub use latency::{check_feasibility, objective, Decision, FeasibilityReport, Latency};
pub use model::{generate_scenario, Scenario, ScenarioConfig};
pub use radio::{PowerAllocation, PowerMode};

/// Small hand-placed scenarios shared by unit and integration tests.
#[doc(hidden)]
pub mod testutil {
    use crate::model::{Position, Scenario, ScenarioConfig};

    /// `m` SBSs on a line at y = 0, `u` HMDs on a parallel line at y = 10,
    /// viewpoint sizes cycling through 1, 2 and 1.5 Mb.
    pub fn tiny_scenario(m: usize, u: usize, n: usize) -> Scenario {
        let config = ScenarioConfig {
            sbs_count: m,
            hmd_count: u,
            viewpoint_count: n,
            ..ScenarioConfig::desk()
        };
        let sbs = (0..m)
            .map(|k| Position {
                x: 5.0 + 30.0 * k as f64,
                y: 0.0,
            })
            .collect();
        let hmd = (0..u)
            .map(|k| Position {
                x: 10.0 + 20.0 * k as f64,
                y: 10.0,
            })
            .collect();
        let sizes: Vec<f64> = (0..n).map(|i| [1e6, 2e6, 1.5e6][i % 3]).collect();
        Scenario::from_geometry(&config, sbs, hmd, &sizes).expect("valid tiny scenario")
    }
}
