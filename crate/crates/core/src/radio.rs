//! Downlink SINR and Shannon rates under universal frequency reuse, plus
//! the continuous power-allocation subproblem for a fixed routing.
//!
//! Interference follows the link model literally: link `(m, u)` sees
//! `sum_{b != m} sum_{v != u} p_bv h_bv` from other cells and
//! `zeta * sum_{v != u} p_mv h_mv` from its own cell.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::Decision;
use crate::model::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("link ({m}, {u}) is outside the {sbs}x{hmd} network")]
    IndexOutOfRange {
        m: usize,
        u: usize,
        sbs: usize,
        hmd: usize,
    },
    #[error("power matrix is {rows}x{cols}, expected {sbs}x{hmd}")]
    Shape {
        rows: usize,
        cols: usize,
        sbs: usize,
        hmd: usize,
    },
    #[error("SINR must be non-negative, got {0}")]
    NegativeSinr(f64),
    #[error("power grid needs at least 2 levels, got {0}")]
    GridLevels(usize),
    #[error("power grid has {0} combinations, above the enumeration cap")]
    GridTooLarge(u128),
}

/// Transmit powers in watts, indexed `[sbs][hmd]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p: Vec<Vec<f64>>,
}

impl PowerAllocation {
    pub fn zeros(sbs: usize, hmd: usize) -> Self {
        Self {
            p: vec![vec![0.0; hmd]; sbs],
        }
    }

    pub fn for_scenario(s: &Scenario) -> Self {
        Self::zeros(s.sbs_count, s.hmd_count)
    }

    pub fn sbs_total(&self, m: usize) -> f64 {
        self.p[m].iter().sum()
    }

    pub fn check_shape(&self, s: &Scenario) -> Result<(), RadioError> {
        let cols = self.p.first().map_or(0, Vec::len);
        if self.p.len() != s.sbs_count || self.p.iter().any(|r| r.len() != s.hmd_count) {
            return Err(RadioError::Shape {
                rows: self.p.len(),
                cols,
                sbs: s.sbs_count,
                hmd: s.hmd_count,
            });
        }
        Ok(())
    }

    fn from_flat(flat: &[f64], hmd: usize) -> Self {
        Self {
            p: flat.chunks(hmd).map(<[f64]>::to_vec).collect(),
        }
    }
}

/// Signal-to-interference-plus-noise ratio of link `(m, u)`.
pub fn sinr(s: &Scenario, p: &PowerAllocation, m: usize, u: usize) -> Result<f64, RadioError> {
    p.check_shape(s)?;
    if m >= s.sbs_count || u >= s.hmd_count {
        return Err(RadioError::IndexOutOfRange {
            m,
            u,
            sbs: s.sbs_count,
            hmd: s.hmd_count,
        });
    }
    let mut inter = 0.0;
    let mut intra = 0.0;
    for b in 0..s.sbs_count {
        for v in 0..s.hmd_count {
            if v == u {
                continue;
            }
            let rx = p.p[b][v] * s.channel_gain[b][v];
            if b == m {
                intra += rx;
            } else {
                inter += rx;
            }
        }
    }
    let signal = p.p[m][u] * s.channel_gain[m][u];
    Ok(signal / (inter + s.orthogonality * intra + s.noise_power_w))
}

/// Shannon rate `W log2(1 + gamma)` in bits/s.
pub fn link_rate(s: &Scenario, gamma: f64) -> Result<f64, RadioError> {
    if !(gamma >= 0.0) {
        return Err(RadioError::NegativeSinr(gamma));
    }
    Ok(shannon(s.bandwidth_per_hmd_hz, gamma))
}

#[inline]
pub(crate) fn shannon(bandwidth: f64, gamma: f64) -> f64 {
    bandwidth * gamma.ln_1p() / std::f64::consts::LN_2
}

/// Rates of every link, flat `m * U + u`.
pub(crate) fn all_rates(s: &Scenario, p: &PowerAllocation) -> Vec<f64> {
    let field = Field::new(s, p.p.iter().flatten().copied().collect());
    (0..s.sbs_count * s.hmd_count)
        .map(|k| shannon(s.bandwidth_per_hmd_hz, field.sinr(k / s.hmd_count, k % s.hmd_count)))
        .collect()
}

/// Transmission load per link: `sum_i q_i * alpha * d_i` over every request
/// routed on the link (MES or cloud path). A link is active iff its load is
/// positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkDemand {
    pub(crate) hmd: usize,
    pub(crate) weight: Vec<f64>,
}

impl LinkDemand {
    pub fn zeros(s: &Scenario) -> Self {
        Self {
            hmd: s.hmd_count,
            weight: vec![0.0; s.sbs_count * s.hmd_count],
        }
    }

    pub fn from_decision(s: &Scenario, d: &Decision) -> Self {
        let mut demand = Self::zeros(s);
        for i in 0..s.viewpoint_count() {
            let load = s.viewpoints[i].popularity * s.sv_size_bits(i);
            for m in 0..s.sbs_count {
                for u in 0..s.hmd_count {
                    let routed = d.offload_mes.get(i, m, u) as u8 + d.offload_cloud.get(i, m, u) as u8;
                    if routed > 0 {
                        demand.add(m, u, load * routed as f64);
                    }
                }
            }
        }
        demand
    }

    pub(crate) fn add(&mut self, m: usize, u: usize, load: f64) {
        self.weight[m * self.hmd + u] += load;
    }

    pub fn weight(&self, m: usize, u: usize) -> f64 {
        self.weight[m * self.hmd + u]
    }

    pub fn is_active(&self, m: usize, u: usize) -> bool {
        self.weight(m, u) > 0.0
    }

    /// Active links in ascending `(m, u)` order.
    pub fn active_links(&self) -> Vec<(usize, usize)> {
        self.weight
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(k, _)| (k / self.hmd, k % self.hmd))
            .collect()
    }
}

/// Received-power bookkeeping that makes a single-coordinate change O(1).
struct Field<'a> {
    s: &'a Scenario,
    p: Vec<f64>,
    rx: Vec<f64>,
    row: Vec<f64>,
    col: Vec<f64>,
    sbs_power: Vec<f64>,
    total: f64,
}

impl<'a> Field<'a> {
    fn new(s: &'a Scenario, p: Vec<f64>) -> Self {
        let hmd = s.hmd_count;
        let mut field = Self {
            s,
            rx: vec![0.0; p.len()],
            p,
            row: vec![0.0; s.sbs_count],
            col: vec![0.0; hmd],
            sbs_power: vec![0.0; s.sbs_count],
            total: 0.0,
        };
        field.resync();
        field
    }

    fn resync(&mut self) {
        let hmd = self.s.hmd_count;
        self.row.iter_mut().for_each(|x| *x = 0.0);
        self.col.iter_mut().for_each(|x| *x = 0.0);
        self.sbs_power.iter_mut().for_each(|x| *x = 0.0);
        self.total = 0.0;
        for (k, &pk) in self.p.iter().enumerate() {
            let (m, u) = (k / hmd, k % hmd);
            let r = pk * self.s.channel_gain[m][u];
            self.rx[k] = r;
            self.row[m] += r;
            self.col[u] += r;
            self.sbs_power[m] += pk;
            self.total += r;
        }
    }

    fn set(&mut self, m: usize, u: usize, value: f64) {
        let k = m * self.s.hmd_count + u;
        let r = value * self.s.channel_gain[m][u];
        let dr = r - self.rx[k];
        self.sbs_power[m] += value - self.p[k];
        self.p[k] = value;
        self.rx[k] = r;
        self.row[m] += dr;
        self.col[u] += dr;
        self.total += dr;
    }

    #[inline]
    fn sinr(&self, m: usize, u: usize) -> f64 {
        let own = self.rx[m * self.s.hmd_count + u];
        if own <= 0.0 {
            return 0.0;
        }
        let inter = (self.total - self.row[m] - self.col[u] + own).max(0.0);
        let intra = (self.row[m] - own).max(0.0);
        own / (inter + self.s.orthogonality * intra + self.s.noise_power_w)
    }

    fn cost(&self, demand: &LinkDemand, links: &[(usize, usize)]) -> f64 {
        let w = self.s.bandwidth_per_hmd_hz;
        let mut total = 0.0;
        for &(m, u) in links {
            let rate = shannon(w, self.sinr(m, u));
            if rate <= 0.0 {
                return f64::INFINITY;
            }
            total += demand.weight(m, u) / rate;
        }
        total
    }
}

/// `sum_links load / rate` for a fixed allocation; infinite if an active link
/// has zero rate.
pub fn transmission_cost(s: &Scenario, demand: &LinkDemand, p: &PowerAllocation) -> f64 {
    let field = Field::new(s, p.p.iter().flatten().copied().collect());
    field.cost(demand, &demand.active_links())
}

const GOLDEN_ITERATIONS: usize = 40;
const MAX_CYCLES: usize = 200;
pub const DEFAULT_POWER_EPSILON: f64 = 1e-6;

/// Cyclic coordinate descent with golden-section line search, starting
/// from an equal split of `P_T` over each SBS's active links. Stops when a
/// full cycle improves the transmission cost by less than
/// `rel_epsilon * initial_cost`. Inactive links get zero power.
pub fn allocate_power(s: &Scenario, d: &Decision, rel_epsilon: f64) -> PowerAllocation {
    allocate_for_demand(s, &LinkDemand::from_decision(s, d), rel_epsilon).0
}

pub(crate) fn equal_split(s: &Scenario, links: &[(usize, usize)]) -> Vec<f64> {
    let mut per_sbs = vec![0usize; s.sbs_count];
    for &(m, _) in links {
        per_sbs[m] += 1;
    }
    let mut flat = vec![0.0; s.sbs_count * s.hmd_count];
    for &(m, u) in links {
        flat[m * s.hmd_count + u] = s.total_power_w / per_sbs[m] as f64;
    }
    flat
}

pub fn allocate_for_demand(
    s: &Scenario,
    demand: &LinkDemand,
    rel_epsilon: f64,
) -> (PowerAllocation, f64) {
    let links = demand.active_links();
    if links.is_empty() {
        return (PowerAllocation::for_scenario(s), 0.0);
    }
    let mut field = Field::new(s, equal_split(s, &links));
    let mut cost = field.cost(demand, &links);
    let tolerance = rel_epsilon * cost;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;

    for _ in 0..MAX_CYCLES {
        field.resync();
        let cycle_start = cost;
        for &(m, u) in &links {
            let k = m * s.hmd_count + u;
            let current = field.p[k];
            let residual = (s.total_power_w - (field.sbs_power[m] - current)).max(0.0);
            let eval = |x: f64, field: &mut Field| {
                field.set(m, u, x);
                field.cost(demand, &links)
            };
            let (mut lo, mut hi) = (0.0, residual);
            let mut c = hi - inv_phi * (hi - lo);
            let mut d = lo + inv_phi * (hi - lo);
            let mut fc = eval(c, &mut field);
            let mut fd = eval(d, &mut field);
            for _ in 0..GOLDEN_ITERATIONS {
                if fc <= fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - inv_phi * (hi - lo);
                    fc = eval(c, &mut field);
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + inv_phi * (hi - lo);
                    fd = eval(d, &mut field);
                }
            }
            let mid = 0.5 * (lo + hi);
            let mut best = (current, cost);
            for x in [mid, residual] {
                let f = eval(x, &mut field);
                if f < best.1 {
                    best = (x, f);
                }
            }
            field.set(m, u, best.0);
            cost = best.1;
        }
        let gain = cycle_start - cost;
        if !(gain > 0.0) || gain < tolerance {
            break;
        }
    }
    field.resync();
    let cost = field.cost(demand, &links);
    (PowerAllocation::from_flat(&field.p, s.hmd_count), cost)
}

/// Grid cap for exhaustive power enumeration.
pub const GRID_CAP: u128 = 4_000_000;

/// Number of ways to give `links` links levels in `0..levels` with total
/// step count at most `levels - 1`: `C(links + levels - 1, links)`.
pub fn grid_points_per_sbs(links: usize, levels: usize) -> u128 {
    let steps = (levels - 1) as u128;
    let mut acc: u128 = 1;
    for k in 1..=links as u128 {
        acc = acc * (steps + k) / k;
    }
    acc
}

/// Step vectors for one SBS in lexicographic order.
fn compositions(links: usize, steps: usize) -> Vec<Vec<usize>> {
    fn rec(links: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == links {
            out.push(prefix.clone());
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(links, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(links, steps, &mut Vec::new(), &mut out);
    out
}

/// Exhaustive search over powers `{0, P_T/(L-1), ..., P_T}` on active links
/// subject to the per-SBS budget. Ties keep the first combination in
/// enumeration order.
pub fn grid_power_search(
    s: &Scenario,
    demand: &LinkDemand,
    levels: usize,
) -> Result<(PowerAllocation, f64), RadioError> {
    if levels < 2 {
        return Err(RadioError::GridLevels(levels));
    }
    let links = demand.active_links();
    if links.is_empty() {
        return Ok((PowerAllocation::for_scenario(s), 0.0));
    }
    let mut per_sbs: Vec<Vec<usize>> = vec![Vec::new(); s.sbs_count];
    for &(m, u) in &links {
        per_sbs[m].push(u);
    }
    let count: u128 = per_sbs
        .iter()
        .map(|l| grid_points_per_sbs(l.len(), levels))
        .product();
    if count > GRID_CAP {
        return Err(RadioError::GridTooLarge(count));
    }
    let options: Vec<Vec<Vec<usize>>> = per_sbs
        .iter()
        .map(|l| compositions(l.len(), levels - 1))
        .collect();
    let step = s.total_power_w / (levels - 1) as f64;
    let mut field = Field::new(s, vec![0.0; s.sbs_count * s.hmd_count]);
    let mut odometer = vec![0usize; s.sbs_count];
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        for m in 0..s.sbs_count {
            for (slot, &u) in per_sbs[m].iter().enumerate() {
                field.set(m, u, options[m][odometer[m]][slot] as f64 * step);
            }
        }
        field.resync();
        let cost = field.cost(demand, &links);
        if best.as_ref().is_none_or(|(_, b)| cost < *b) {
            best = Some((field.p.clone(), cost));
        }
        let mut m = 0;
        loop {
            if m == s.sbs_count {
                let (p, cost) = best.expect("at least one grid point");
                return Ok((PowerAllocation::from_flat(&p, s.hmd_count), cost));
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

/// How the solvers obtain transmit powers for a routing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    Descent { rel_epsilon: f64 },
    Grid { levels: usize },
    /// Powers pinned in advance (every listed link transmits).
    Fixed(PowerAllocation),
    /// Links carrying traffic transmit at the listed power; idle links are
    /// silent.
    Pinned(PowerAllocation),
}

impl Default for PowerMode {
    fn default() -> Self {
        PowerMode::Descent {
            rel_epsilon: DEFAULT_POWER_EPSILON,
        }
    }
}

pub fn solve_power(
    s: &Scenario,
    demand: &LinkDemand,
    mode: &PowerMode,
) -> Result<(PowerAllocation, f64), RadioError> {
    match mode {
        PowerMode::Descent { rel_epsilon } => Ok(allocate_for_demand(s, demand, *rel_epsilon)),
        PowerMode::Grid { levels } => grid_power_search(s, demand, *levels),
        PowerMode::Fixed(p) => {
            p.check_shape(s)?;
            Ok((p.clone(), transmission_cost(s, demand, p)))
        }
        PowerMode::Pinned(p) => {
            p.check_shape(s)?;
            let mut active = PowerAllocation::for_scenario(s);
            for (m, u) in demand.active_links() {
                active.p[m][u] = p.p[m][u];
            }
            let cost = transmission_cost(s, demand, &active);
            Ok((active, cost))
        }
    }
}

/// Per-link rate that no allocation admissible under `mode` can exceed.
pub(crate) fn rate_upper_bounds(s: &Scenario, mode: &PowerMode) -> Vec<f64> {
    match mode {
        PowerMode::Fixed(p) => all_rates(s, p),
        PowerMode::Pinned(p) => (0..s.sbs_count)
            .flat_map(|m| {
                (0..s.hmd_count).map(move |u| {
                    shannon(s.bandwidth_per_hmd_hz, p.p[m][u] * s.channel_gain[m][u] / s.noise_power_w)
                })
            })
            .collect(),
        _ => (0..s.sbs_count)
            .flat_map(|m| {
                (0..s.hmd_count).map(move |u| {
                    shannon(
                        s.bandwidth_per_hmd_hz,
                        s.total_power_w * s.channel_gain[m][u] / s.noise_power_w,
                    )
                })
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny_scenario;

    fn two_user_cell() -> Scenario {
        let mut s = tiny_scenario(1, 2, 1);
        s.channel_gain = vec![vec![1e-6, 1e-6]];
        s.noise_power_w = 1e-9;
        s.orthogonality = 1.0;
        s
    }

    #[test]
    fn isolated_link_sinr() {
        let mut s = tiny_scenario(1, 1, 1);
        s.channel_gain = vec![vec![1e-6]];
        s.noise_power_w = 1e-9;
        let p = PowerAllocation { p: vec![vec![1.0]] };
        assert!((sinr(&s, &p, 0, 0).unwrap() - 1000.0).abs() < 1e-9);
        let p = PowerAllocation { p: vec![vec![0.0]] };
        assert_eq!(sinr(&s, &p, 0, 0).unwrap(), 0.0);
    }

    #[test]
    fn two_user_intra_cell_sinr() {
        let s = two_user_cell();
        let p = PowerAllocation {
            p: vec![vec![0.5, 0.5]],
        };
        let expected = 0.5e-6 / (0.5e-6 + 1e-9);
        let got = sinr(&s, &p, 0, 0).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn sinr_index_errors() {
        let s = two_user_cell();
        let p = PowerAllocation::for_scenario(&s);
        assert!(matches!(sinr(&s, &p, 1, 0), Err(RadioError::IndexOutOfRange { .. })));
        let bad = PowerAllocation::zeros(2, 2);
        assert!(matches!(sinr(&s, &bad, 0, 0), Err(RadioError::Shape { .. })));
    }

    #[test]
    fn shannon_rates() {
        let mut s = tiny_scenario(1, 1, 1);
        s.bandwidth_per_hmd_hz = 1e6;
        assert!((link_rate(&s, 3.0).unwrap() - 2e6).abs() < 1e-6);
        assert_eq!(link_rate(&s, 0.0).unwrap(), 0.0);
        assert!(link_rate(&s, -1.0).is_err());
        s.bandwidth_per_hmd_hz = 1e9 / 100.0;
        let r = link_rate(&s, 1000.0).unwrap();
        assert!((r - 1e7 * 1001f64.log2()).abs() / r < 1e-12);
        assert!((r - 9.9672e7).abs() < 1e4);
    }

    #[test]
    fn field_matches_direct_sinr() {
        let s = tiny_scenario(3, 4, 1);
        let p = PowerAllocation {
            p: vec![
                vec![0.1, 0.2, 0.0, 0.3],
                vec![0.0, 0.4, 0.1, 0.1],
                vec![0.5, 0.0, 0.0, 0.2],
            ],
        };
        let field = Field::new(&s, p.p.iter().flatten().copied().collect());
        for m in 0..3 {
            for u in 0..4 {
                let a = sinr(&s, &p, m, u).unwrap();
                let b = field.sinr(m, u);
                assert!((a - b).abs() <= 1e-9 * a.max(1e-30), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn single_link_gets_full_power() {
        let s = tiny_scenario(1, 1, 1);
        let mut demand = LinkDemand::zeros(&s);
        demand.add(0, 0, 1e6);
        let (p, _) = allocate_for_demand(&s, &demand, DEFAULT_POWER_EPSILON);
        assert_eq!(p.p[0][0], s.total_power_w);
    }

    #[test]
    fn no_active_links_gives_zero_matrix() {
        let s = tiny_scenario(2, 2, 1);
        let (p, cost) = allocate_for_demand(&s, &LinkDemand::zeros(&s), DEFAULT_POWER_EPSILON);
        assert_eq!(p, PowerAllocation::zeros(2, 2));
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn grid_counts() {
        assert_eq!(grid_points_per_sbs(2, 4), 10);
        assert_eq!(grid_points_per_sbs(1, 4), 4);
        assert_eq!(grid_points_per_sbs(0, 4), 1);
        assert_eq!(compositions(2, 3).len(), 10);
    }
}
