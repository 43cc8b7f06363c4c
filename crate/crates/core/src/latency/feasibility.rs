use std::fmt;

use serde::{Deserialize, Serialize};

use super::{energy_usage, Decision};
use crate::model::Scenario;

/// The modeled constraints. Labels are the stable ids used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintId {
    /// `T^M + T^C <= 1` per `(i, m, u)`.
    Eq1,
    /// At most one serving MES per request.
    Eq2,
    /// At most one cloud relay SBS per request.
    Eq3,
    /// MES cache capacity.
    Eq4,
    /// HMD cache capacity.
    Eq5,
    /// MES projection energy budget.
    Eq6,
    /// HMD projection energy budget.
    Eq7,
    /// Transmit powers finite and non-negative, so every rate is defined.
    Eq8,
    /// Per-SBS total power.
    Eq9,
    /// Offloading to an MES requires the MV or SV cached there.
    Eq11,
    /// A request without any offload must be cached on the HMD.
    Eq13,
}

impl ConstraintId {
    pub const ALL: [ConstraintId; 11] = [
        ConstraintId::Eq1,
        ConstraintId::Eq2,
        ConstraintId::Eq3,
        ConstraintId::Eq4,
        ConstraintId::Eq5,
        ConstraintId::Eq6,
        ConstraintId::Eq7,
        ConstraintId::Eq8,
        ConstraintId::Eq9,
        ConstraintId::Eq11,
        ConstraintId::Eq13,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ConstraintId::Eq1 => "eq1",
            ConstraintId::Eq2 => "eq2",
            ConstraintId::Eq3 => "eq3",
            ConstraintId::Eq4 => "eq4",
            ConstraintId::Eq5 => "eq5",
            ConstraintId::Eq6 => "eq6",
            ConstraintId::Eq7 => "eq7",
            ConstraintId::Eq8 => "eq8",
            ConstraintId::Eq9 => "eq9",
            ConstraintId::Eq11 => "eq11",
            ConstraintId::Eq13 => "eq13",
        }
    }

    fn description(self) -> &'static str {
        match self {
            ConstraintId::Eq1 => "single server per (i,m,u)",
            ConstraintId::Eq2 => "at most one serving MES",
            ConstraintId::Eq3 => "at most one cloud relay",
            ConstraintId::Eq4 => "MES cache capacity",
            ConstraintId::Eq5 => "HMD cache capacity",
            ConstraintId::Eq6 => "MES energy budget",
            ConstraintId::Eq7 => "HMD energy budget",
            ConstraintId::Eq8 => "powers finite, non-negative",
            ConstraintId::Eq9 => "SBS power budget",
            ConstraintId::Eq11 => "offload needs MES cache",
            ConstraintId::Eq13 => "local service needs HMD cache",
        }
    }
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub id: ConstraintId,
    pub holds: bool,
    /// Largest amount by which the constraint is exceeded (0 when it holds).
    pub worst_violation: f64,
    /// Index tuples of the offending entries.
    pub offending: Vec<Vec<usize>>,
}

impl ConstraintCheck {
    fn new(id: ConstraintId) -> Self {
        Self {
            id,
            holds: true,
            worst_violation: 0.0,
            offending: Vec::new(),
        }
    }

    fn flag(&mut self, magnitude: f64, at: Vec<usize>) {
        self.holds = false;
        self.worst_violation = self.worst_violation.max(magnitude);
        self.offending.push(at);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub checks: Vec<ConstraintCheck>,
}

impl FeasibilityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn get(&self, id: ConstraintId) -> &ConstraintCheck {
        self.checks
            .iter()
            .find(|c| c.id == id)
            .expect("report covers every constraint")
    }

    pub fn failing(&self) -> Vec<ConstraintId> {
        self.checks.iter().filter(|c| !c.holds).map(|c| c.id).collect()
    }

    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<6} {:<32} {:<6} {:>14} {:>9}\n",
            "id", "constraint", "status", "worst", "entries"
        );
        for c in &self.checks {
            out.push_str(&format!(
                "{:<6} {:<32} {:<6} {:>14.6e} {:>9}\n",
                c.id.label(),
                c.id.description(),
                if c.holds { "ok" } else { "FAIL" },
                c.worst_violation,
                c.offending.len()
            ));
        }
        out
    }
}

/// Relative slack for continuous limits (capacity, energy, power). Limits
/// are inclusive.
const LIMIT_TOLERANCE: f64 = 1e-9;

fn excess(value: f64, limit: f64) -> Option<f64> {
    if value > limit + LIMIT_TOLERANCE * limit.abs() || value.is_nan() {
        Some(value - limit)
    } else {
        None
    }
}

/// Evaluates every modeled constraint. A decision whose dimensions do not
/// match the scenario fails all of them with an infinite magnitude.
pub fn check_feasibility(s: &Scenario, d: &Decision) -> FeasibilityReport {
    let mut checks: Vec<ConstraintCheck> =
        ConstraintId::ALL.iter().map(|&id| ConstraintCheck::new(id)).collect();
    if !d.shape_matches(s) {
        for c in &mut checks {
            c.flag(f64::INFINITY, Vec::new());
        }
        return FeasibilityReport { checks };
    }
    let at = |id: ConstraintId| ConstraintId::ALL.iter().position(|&x| x == id).unwrap();
    let (n, sbs, hmd) = (s.viewpoint_count(), s.sbs_count, s.hmd_count);

    for i in 0..n {
        for u in 0..hmd {
            let mut mes_count = 0;
            let mut cloud_count = 0;
            for m in 0..sbs {
                let tm = d.offload_mes.get(i, m, u);
                let tc = d.offload_cloud.get(i, m, u);
                mes_count += tm as usize;
                cloud_count += tc as usize;
                if tm && tc {
                    checks[at(ConstraintId::Eq1)].flag(1.0, vec![i, m, u]);
                }
                if tm && !d.cache_mes_mv.get(i, m) && !d.cache_mes_sv.get(i, m) {
                    checks[at(ConstraintId::Eq11)].flag(1.0, vec![i, m, u]);
                }
            }
            if mes_count > 1 {
                checks[at(ConstraintId::Eq2)].flag((mes_count - 1) as f64, vec![i, u]);
            }
            if cloud_count > 1 {
                checks[at(ConstraintId::Eq3)].flag((cloud_count - 1) as f64, vec![i, u]);
            }
            if mes_count + cloud_count == 0 && !d.cache_hmd_mv.get(i, u) && !d.cache_hmd_sv.get(i, u)
            {
                checks[at(ConstraintId::Eq13)].flag(1.0, vec![i, u]);
            }
        }
    }

    let load = |mv: &super::BitMatrix, sv: &super::BitMatrix, node: usize| -> f64 {
        (0..n)
            .map(|i| {
                let size = s.viewpoints[i].mv_size_bits;
                (mv.get(i, node) as u8 as f64 + s.sv_ratio * sv.get(i, node) as u8 as f64) * size
            })
            .sum()
    };
    for m in 0..sbs {
        if let Some(x) = excess(load(&d.cache_mes_mv, &d.cache_mes_sv, m), s.mes_cache_bits) {
            checks[at(ConstraintId::Eq4)].flag(x, vec![m]);
        }
    }
    for u in 0..hmd {
        if let Some(x) = excess(load(&d.cache_hmd_mv, &d.cache_hmd_sv, u), s.hmd_cache_bits) {
            checks[at(ConstraintId::Eq5)].flag(x, vec![u]);
        }
    }

    let energy = energy_usage(s, d);
    for (m, &e) in energy.mes.iter().enumerate() {
        if let Some(x) = excess(e, s.mes_energy_budget_j) {
            checks[at(ConstraintId::Eq6)].flag(x, vec![m]);
        }
    }
    for (u, &e) in energy.hmd.iter().enumerate() {
        if let Some(x) = excess(e, s.hmd_energy_budget_j) {
            checks[at(ConstraintId::Eq7)].flag(x, vec![u]);
        }
    }

    for m in 0..sbs {
        for u in 0..hmd {
            let p = d.power.p[m][u];
            if !p.is_finite() {
                checks[at(ConstraintId::Eq8)].flag(f64::INFINITY, vec![m, u]);
            } else if p < 0.0 {
                checks[at(ConstraintId::Eq8)].flag(-p, vec![m, u]);
            }
        }
        if let Some(x) = excess(d.power.sbs_total(m), s.total_power_w) {
            checks[at(ConstraintId::Eq9)].flag(x, vec![m]);
        }
    }

    FeasibilityReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny_scenario;

    #[test]
    fn empty_decision_fails_local_coupling_everywhere() {
        let s = tiny_scenario(2, 2, 3);
        let r = check_feasibility(&s, &Decision::empty(&s));
        let eq13 = r.get(ConstraintId::Eq13);
        assert!(!eq13.holds);
        assert_eq!(eq13.offending.len(), 6);
        assert_eq!(r.checks.len(), 11);
    }

    #[test]
    fn offload_without_mes_cache() {
        let s = tiny_scenario(2, 2, 3);
        let mut d = Decision::empty(&s);
        for i in 0..3 {
            for u in 0..2 {
                d.cache_hmd_sv.set(i, u, true);
            }
        }
        d.offload_mes.set(1, 0, 1, true);
        let r = check_feasibility(&s, &d);
        assert_eq!(r.get(ConstraintId::Eq11).offending, vec![vec![1, 0, 1]]);
    }

    #[test]
    fn capacity_boundary_is_inclusive() {
        let mut s = tiny_scenario(1, 1, 2);
        let mut d = Decision::empty(&s);
        d.cache_hmd_sv.set(0, 0, true);
        d.cache_hmd_sv.set(1, 0, true);
        d.cache_mes_mv.set(0, 0, true);
        d.cache_mes_sv.set(1, 0, true);
        s.mes_cache_bits = s.viewpoints[0].mv_size_bits + s.sv_ratio * s.viewpoints[1].mv_size_bits;
        s.hmd_cache_bits = 1e12;
        assert!(check_feasibility(&s, &d).get(ConstraintId::Eq4).holds);
        s.mes_cache_bits *= 0.999;
        assert!(!check_feasibility(&s, &d).get(ConstraintId::Eq4).holds);
    }

    #[test]
    fn table_renders_every_row() {
        let s = tiny_scenario(1, 1, 1);
        let table = check_feasibility(&s, &Decision::empty(&s)).render_table();
        assert_eq!(table.lines().count(), 12);
        assert!(table.contains("eq13"));
    }
}
