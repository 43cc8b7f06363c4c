//! Per-request route sets of a box, the box lower bound and reduction.
//!
//! Every request `(i, u)` is served along exactly one route: locally from
//! the HMD cache, by one MES, from the cloud through one SBS, or (allowed by
//! the constraints although never useful) by an MES and the cloud at once.
//! A box restricts the routes through its offload coordinates and the cache
//! versions through its cache coordinates.

use super::cache::within;
use super::lattice::{Lattice, SearchBox};
use super::SolverConfig;
use crate::model::Scenario;
use crate::radio::rate_upper_bounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Route {
    Local,
    Mes(usize),
    Cloud(usize),
    MesCloud(usize, usize),
}

impl Route {
    pub fn mes(self) -> Option<usize> {
        match self {
            Route::Mes(m) | Route::MesCloud(m, _) => Some(m),
            _ => None,
        }
    }

    pub fn cloud(self) -> Option<usize> {
        match self {
            Route::Cloud(m) | Route::MesCloud(_, m) => Some(m),
            _ => None,
        }
    }

    pub fn uses(self, node: Node, u: usize) -> bool {
        match node {
            Node::Mes(m) => self.mes() == Some(m),
            Node::Hmd(v) => self == Route::Local && u == v,
        }
    }
}

/// A caching node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Node {
    Mes(usize),
    Hmd(usize),
}

/// Shared per-solve data.
pub(crate) struct Context<'a> {
    pub s: &'a Scenario,
    pub cfg: &'a SolverConfig,
    pub lattice: Lattice,
    pub all_routes: Vec<Route>,
    /// Rate no admissible allocation can beat, flat `m * U + u`.
    pub rate_ub: Vec<f64>,
}

impl<'a> Context<'a> {
    pub fn new(s: &'a Scenario, cfg: &'a SolverConfig) -> Self {
        let sbs = s.sbs_count;
        let mut all_routes = vec![Route::Local];
        all_routes.extend((0..sbs).map(Route::Mes));
        all_routes.extend((0..sbs).map(Route::Cloud));
        for a in 0..sbs {
            for b in 0..sbs {
                if a != b {
                    all_routes.push(Route::MesCloud(a, b));
                }
            }
        }
        Self {
            s,
            cfg,
            lattice: Lattice::new(s),
            all_routes,
            rate_ub: rate_upper_bounds(s, &cfg.power),
        }
    }

    pub fn pairs(&self) -> usize {
        self.s.viewpoint_count() * self.s.hmd_count
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> {
        (0..self.s.sbs_count)
            .map(Node::Mes)
            .chain((0..self.s.hmd_count).map(Node::Hmd))
    }


    /// Lattice indices of the MV and SV cache coordinates of `i` at `node`.
    pub fn cache_coords(&self, node: Node, i: usize) -> (usize, usize) {
        match node {
            Node::Mes(m) => (self.lattice.cache_mes_mv(i, m), self.lattice.cache_mes_sv(i, m)),
            Node::Hmd(u) => (self.lattice.cache_hmd_mv(i, u), self.lattice.cache_hmd_sv(i, u)),
        }
    }

    pub fn capacity(&self, node: Node) -> f64 {
        match node {
            Node::Mes(_) => self.s.mes_cache_bits,
            Node::Hmd(_) => self.s.hmd_cache_bits,
        }
    }

    pub fn energy_budget(&self, node: Node) -> f64 {
        match node {
            Node::Mes(_) => self.s.mes_energy_budget_j,
            Node::Hmd(_) => self.s.hmd_energy_budget_j,
        }
    }

    pub fn compute_delay(&self, node: Node, i: usize) -> f64 {
        match node {
            Node::Mes(_) => self.s.mes_compute_delay(i),
            Node::Hmd(_) => self.s.hmd_compute_delay(i),
        }
    }

    pub fn compute_energy(&self, node: Node, i: usize) -> f64 {
        match node {
            Node::Mes(_) => self.s.mes_compute_energy(i),
            Node::Hmd(_) => self.s.hmd_compute_energy(i),
        }
    }

    /// Allowed `(mv, sv)` cache states of `i` at `node`, indexed by state.
    pub fn allowed_states(&self, b: &SearchBox, node: Node, i: usize) -> [bool; 4] {
        let (kmv, ksv) = self.cache_coords(node, i);
        let l = &self.lattice;
        let mv = [b.allows(l, kmv, false), b.allows(l, kmv, true)];
        let sv = [b.allows(l, ksv, false), b.allows(l, ksv, true)];
        [mv[0] && sv[0], mv[1] && sv[0], mv[0] && sv[1], mv[1] && sv[1]]
    }

    /// Cheapest compute delay for one request of `i` served at `node`, if
    /// the box admits a version there.
    pub fn cache_cost_lb(&self, b: &SearchBox, node: Node, i: usize) -> Option<f64> {
        let allowed = self.allowed_states(b, node, i);
        let q = self.s.viewpoints[i].popularity;
        if allowed[2] {
            Some(0.0)
        } else if allowed[1] || allowed[3] {
            Some(q * self.compute_delay(node, i))
        } else {
            None
        }
    }

    pub fn transmission_lb(&self, i: usize, m: usize, u: usize) -> f64 {
        let q = self.s.viewpoints[i].popularity;
        q * self.s.sv_size_bits(i) / self.rate_ub[m * self.s.hmd_count + u]
    }

    /// Whether the box's offload coordinates admit route `r` for `(i, u)`.
    pub fn offload_admits(&self, b: &SearchBox, i: usize, u: usize, r: Route) -> bool {
        let l = &self.lattice;
        (0..self.s.sbs_count).all(|m| {
            b.allows(l, l.offload_mes(i, m, u), r.mes() == Some(m))
                && b.allows(l, l.offload_cloud(i, m, u), r.cloud() == Some(m))
        })
    }

    /// Lower bound on the popularity-weighted latency of `(i, u)` along `r`.
    pub fn route_lb(&self, b: &SearchBox, i: usize, u: usize, r: Route) -> Option<f64> {
        let q = self.s.viewpoints[i].popularity;
        let mut cost = 0.0;
        if r == Route::Local {
            cost += self.cache_cost_lb(b, Node::Hmd(u), i)?;
        }
        if let Some(m) = r.mes() {
            cost += self.cache_cost_lb(b, Node::Mes(m), i)? + self.transmission_lb(i, m, u);
        }
        if let Some(m) = r.cloud() {
            cost += self.transmission_lb(i, m, u) + q * self.s.backhaul_delay_s;
        }
        cost.is_finite().then_some(cost)
    }
}

/// Surviving routes of every request with their lower bounds.
#[derive(Debug, Clone)]
pub(crate) struct Analysis {
    /// `routes[i * U + u]`, never empty.
    pub routes: Vec<Vec<(Route, f64)>>,
    pub lower: f64,
}

impl Analysis {
    pub fn min_cost(&self, p: usize) -> f64 {
        self.routes[p].iter().map(|r| r.1).fold(f64::INFINITY, f64::min)
    }

    pub fn is_closed(&self) -> bool {
        self.routes.iter().all(|r| r.len() == 1)
    }

    fn recompute_lower(&mut self) {
        self.lower = (0..self.routes.len()).map(|p| self.min_cost(p)).sum();
    }
}

/// Load and energy a node must carry in every completion of the box.
struct NodeFloor {
    /// Per item: bits that must be stored.
    contrib: Vec<f64>,
    load: f64,
    energy: f64,
    /// Per request `(i, u)` that must be served here: whether it must also
    /// pay projection energy (SV excluded by the box).
    required_item: Vec<bool>,
}

fn node_floor(ctx: &Context, b: &SearchBox, routes: &[Vec<(Route, f64)>], node: Node) -> Option<NodeFloor> {
    let s = ctx.s;
    let hmd = s.hmd_count;
    let n = s.viewpoint_count();
    let l = &ctx.lattice;
    let mut floor = NodeFloor {
        contrib: vec![0.0; n],
        load: 0.0,
        energy: 0.0,
        required_item: vec![false; n],
    };
    for i in 0..n {
        let q = s.viewpoints[i].popularity;
        let users: Vec<usize> = match node {
            Node::Mes(_) => (0..hmd).collect(),
            Node::Hmd(u) => vec![u],
        };
        let (kmv, ksv) = ctx.cache_coords(node, i);
        let sv_possible = b.allows(l, ksv, true);
        for u in users {
            let rs = &routes[i * hmd + u];
            if rs.iter().all(|(r, _)| r.uses(node, u)) {
                floor.required_item[i] = true;
                if !sv_possible {
                    floor.energy += q * ctx.compute_energy(node, i);
                }
            }
        }
        let must_mv = !b.allows(l, kmv, false);
        let must_sv = !b.allows(l, ksv, false);
        let d = s.viewpoints[i].mv_size_bits;
        let mut c = must_mv as u8 as f64 * d + must_sv as u8 as f64 * s.sv_size_bits(i);
        if floor.required_item[i] && c == 0.0 {
            c = if b.allows(l, kmv, true) {
                d
            } else if sv_possible {
                s.sv_size_bits(i)
            } else {
                return None;
            };
        }
        floor.contrib[i] = c;
        floor.load += c;
    }
    (within(floor.load, ctx.capacity(node)) && within(floor.energy, ctx.energy_budget(node)))
        .then_some(floor)
}

fn min_cache_size(ctx: &Context, b: &SearchBox, node: Node, i: usize) -> f64 {
    let (kmv, ksv) = ctx.cache_coords(node, i);
    if b.allows(&ctx.lattice, kmv, true) {
        ctx.s.viewpoints[i].mv_size_bits
    } else if b.allows(&ctx.lattice, ksv, true) {
        ctx.s.sv_size_bits(i)
    } else {
        f64::INFINITY
    }
}

/// Routes each request can still take given the box's offload coordinates,
/// cache coordinates, finite link rates, and per-node capacity and energy
/// floors. `None` if some request has no route or a node floor is already
/// over its limit.
pub(crate) fn analyze(ctx: &Context, b: &SearchBox) -> Option<Analysis> {
    let s = ctx.s;
    let hmd = s.hmd_count;
    let mut routes: Vec<Vec<(Route, f64)>> = Vec::with_capacity(ctx.pairs());
    for i in 0..s.viewpoint_count() {
        for u in 0..hmd {
            let rs: Vec<(Route, f64)> = ctx
                .all_routes
                .iter()
                .filter(|&&r| ctx.offload_admits(b, i, u, r))
                .filter_map(|&r| ctx.route_lb(b, i, u, r).map(|c| (r, c)))
                .collect();
            if rs.is_empty() {
                return None;
            }
            routes.push(rs);
        }
    }

    for node in ctx.nodes().collect::<Vec<_>>() {
        let floor = node_floor(ctx, b, &routes, node)?;
        let cap = ctx.capacity(node);
        let budget = ctx.energy_budget(node);
        for i in 0..s.viewpoint_count() {
            let q = s.viewpoints[i].popularity;
            let extra_load = if floor.contrib[i] > 0.0 {
                0.0
            } else {
                min_cache_size(ctx, b, node, i)
            };
            let (_, ksv) = ctx.cache_coords(node, i);
            let extra_energy = if b.allows(&ctx.lattice, ksv, true) {
                0.0
            } else {
                q * ctx.compute_energy(node, i)
            };
            let fits = within(floor.load + extra_load, cap);
            let powered = within(floor.energy + extra_energy, budget);
            if fits && powered {
                continue;
            }
            for u in 0..hmd {
                let rs = &mut routes[i * hmd + u];
                if rs.iter().all(|(r, _)| r.uses(node, u)) {
                    // Already counted in the floor.
                    continue;
                }
                rs.retain(|(r, _)| !r.uses(node, u));
            }
        }
    }
    let mut an = Analysis {
        routes,
        lower: 0.0,
    };
    an.recompute_lower();
    Some(an)
}

/// Shrinks `b` to the points that satisfy the structural constraints and
/// can still beat `incumbent`; `None` if no such point remains. Repeats
/// until nothing changes.
pub(crate) fn reduce_box(ctx: &Context, mut b: SearchBox, incumbent: f64) -> Option<SearchBox> {
    let s = ctx.s;
    let l = ctx.lattice;
    let hmd = s.hmd_count;
    loop {
        let mut an = analyze(ctx, &b)?;
        if incumbent.is_finite() {
            if an.lower >= incumbent {
                return None;
            }
            for p in 0..an.routes.len() {
                let slack = an.lower - an.min_cost(p);
                an.routes[p].retain(|(_, c)| slack + c < incumbent);
            }
            an.recompute_lower();
        }

        let mut changed = false;
        let mut fix = |b: &mut SearchBox, k: usize, x: bool| {
            if !b.is_decided(k) {
                let ok = b.fix(&l, k, x);
                debug_assert!(ok);
                changed = true;
            }
        };
        for i in 0..s.viewpoint_count() {
            for u in 0..hmd {
                let rs = &an.routes[i * hmd + u];
                for m in 0..s.sbs_count {
                    let kt = l.offload_mes(i, m, u);
                    let used = rs.iter().filter(|(r, _)| r.mes() == Some(m)).count();
                    if used == 0 {
                        fix(&mut b, kt, false);
                    } else if used == rs.len() {
                        fix(&mut b, kt, true);
                    }
                    let kc = l.offload_cloud(i, m, u);
                    let used = rs.iter().filter(|(r, _)| r.cloud() == Some(m)).count();
                    if used == 0 {
                        fix(&mut b, kc, false);
                    } else if used == rs.len() {
                        fix(&mut b, kc, true);
                    }
                }
                let mut required: Vec<Node> = (0..s.sbs_count)
                    .map(Node::Mes)
                    .filter(|&nd| rs.iter().all(|(r, _)| r.uses(nd, u)))
                    .collect();
                if rs.iter().all(|(r, _)| *r == Route::Local) {
                    required.push(Node::Hmd(u));
                }
                for node in required {
                    let (kmv, ksv) = ctx.cache_coords(node, i);
                    if !b.allows(&l, ksv, true) {
                        fix(&mut b, kmv, true);
                    } else if !b.allows(&l, kmv, true) {
                        fix(&mut b, ksv, true);
                    }
                }
            }
        }

        // Cache bits that alone would overflow the node.
        for node in ctx.nodes().collect::<Vec<_>>() {
            let floor = node_floor(ctx, &b, &an.routes, node)?;
            let cap = ctx.capacity(node);
            for i in 0..s.viewpoint_count() {
                let (kmv, ksv) = ctx.cache_coords(node, i);
                let d = s.viewpoints[i].mv_size_bits;
                let sv = s.sv_size_bits(i);
                let must_mv = !b.allows(&l, kmv, false);
                let must_sv = !b.allows(&l, ksv, false);
                let base = floor.load - floor.contrib[i];
                if !b.is_decided(kmv) && !within(base + d + must_sv as u8 as f64 * sv, cap) {
                    fix(&mut b, kmv, false);
                }
                if !b.is_decided(ksv) && !within(base + sv + must_mv as u8 as f64 * d, cap) {
                    fix(&mut b, ksv, false);
                }
            }
        }
        if !changed {
            return Some(b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny_scenario;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn full_box_admits_every_route() {
        let s = tiny_scenario(2, 2, 3);
        let c = cfg();
        let ctx = Context::new(&s, &c);
        let b = SearchBox::full(&ctx.lattice);
        let an = analyze(&ctx, &b).unwrap();
        assert_eq!(an.routes[0].len(), 1 + 2 + 2 + 2);
        // Local SV costs nothing, so the relaxed bound is zero.
        assert_eq!(an.lower, 0.0);
    }

    #[test]
    fn oversized_sv_bit_is_fixed_off() {
        let mut s = tiny_scenario(1, 1, 2);
        s.mes_cache_bits = 3e6;
        let c = cfg();
        let ctx = Context::new(&s, &c);
        let b = reduce_box(&ctx, SearchBox::full(&ctx.lattice), f64::INFINITY).unwrap();
        let k = ctx.lattice.cache_mes_sv(0, 0);
        assert!(b.is_decided(k));
        assert!(!b.allows(&ctx.lattice, k, true));
        // The 1 Mb MV still fits.
        assert!(!b.is_decided(ctx.lattice.cache_mes_mv(0, 0)));
    }

    #[test]
    fn zero_incumbent_prunes_positive_bounds() {
        let mut s = tiny_scenario(1, 1, 2);
        s.hmd_cache_bits = 0.0;
        let c = cfg();
        let ctx = Context::new(&s, &c);
        let b = SearchBox::full(&ctx.lattice);
        assert!(analyze(&ctx, &b).unwrap().lower > 0.0);
        assert!(reduce_box(&ctx, b, 0.0).is_none());
    }

    #[test]
    fn decided_feasible_box_is_a_fixpoint() {
        let s = tiny_scenario(1, 2, 2);
        let c = cfg();
        let ctx = Context::new(&s, &c);
        let l = ctx.lattice;
        let mut b = SearchBox::full(&l);
        for i in 0..2 {
            for u in 0..2 {
                b.fix(&l, l.offload_cloud(i, 0, u), true);
            }
        }
        for k in 0..l.dims() {
            b.fix(&l, k, false);
        }
        let reduced = reduce_box(&ctx, b.clone(), f64::INFINITY).unwrap();
        assert_eq!(reduced, b);
    }

    #[test]
    fn exclusivity_fixes_siblings() {
        let s = tiny_scenario(2, 1, 1);
        let c = cfg();
        let ctx = Context::new(&s, &c);
        let l = ctx.lattice;
        let mut b = SearchBox::full(&l);
        b.fix(&l, l.offload_mes(0, 1, 0), true);
        let r = reduce_box(&ctx, b, f64::INFINITY).unwrap();
        assert!(!r.allows(&l, l.offload_mes(0, 0, 0), true));
        assert!(!r.allows(&l, l.offload_cloud(0, 1, 0), true));
        // The MES must now hold a version of the viewpoint.
        let an = analyze(&ctx, &r).unwrap();
        assert!(an.routes[0].iter().all(|(rt, _)| rt.mes() == Some(1)));
    }
}
