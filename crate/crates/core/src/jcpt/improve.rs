//! Local search on a completed decision.
//!
//! With the powers held fixed, a request's transmission cost only depends
//! on its own route, so moving one request (or swapping a remote request
//! with a locally served one on the same HMD) changes the objective by the
//! cache delay change of the one or two nodes involved plus the request's
//! own transmission change. Improving moves are applied in popularity
//! order; powers are re-solved after each pass.

use super::analysis::{Analysis, Context, Node, Route};
use super::cache::NodeOutcome;
use super::complete::{complete, node_index, node_problem, Completed, Completion};
use super::lattice::SearchBox;
use crate::latency::{check_feasibility, evaluate, Decision};
use crate::radio::all_rates;

const MAX_PASSES: usize = 4;

/// New cache states and delay for one node.
type NodeUpdate = (usize, Vec<u8>, f64);

fn routes_of(ctx: &Context, d: &Decision) -> Vec<Route> {
    let s = ctx.s;
    (0..ctx.pairs())
        .map(|p| {
            let (i, u) = (p / s.hmd_count, p % s.hmd_count);
            let mes = (0..s.sbs_count).find(|&m| d.offload_mes.get(i, m, u));
            let cloud = (0..s.sbs_count).find(|&m| d.offload_cloud.get(i, m, u));
            match (mes, cloud) {
                (None, None) => Route::Local,
                (Some(m), None) => Route::Mes(m),
                (None, Some(c)) => Route::Cloud(c),
                (Some(m), Some(c)) => Route::MesCloud(m, c),
            }
        })
        .collect()
}

fn states_of(ctx: &Context, d: &Decision) -> Vec<Vec<u8>> {
    let s = ctx.s;
    ctx.nodes()
        .map(|node| {
            (0..s.viewpoint_count())
                .map(|i| {
                    let (mv, sv) = match node {
                        Node::Mes(m) => (d.cache_mes_mv.get(i, m), d.cache_mes_sv.get(i, m)),
                        Node::Hmd(u) => (d.cache_hmd_mv.get(i, u), d.cache_hmd_sv.get(i, u)),
                    };
                    mv as u8 | (sv as u8) << 1
                })
                .collect()
        })
        .collect()
}

fn node_of(r: Route, u: usize) -> Option<Node> {
    match r {
        Route::Local => Some(Node::Hmd(u)),
        _ => r.mes().map(Node::Mes),
    }
}

struct Search<'a> {
    ctx: &'a Context<'a>,
    b: &'a SearchBox,
    routes: Vec<Route>,
    states: Vec<Vec<u8>>,
    delays: Vec<f64>,
    rates: Vec<f64>,
}

impl Search<'_> {
    /// Transmission plus backhaul cost of request `p` on route `r`.
    fn link_cost(&self, p: usize, r: Route) -> f64 {
        let s = self.ctx.s;
        let hmd = s.hmd_count;
        let (i, u) = (p / hmd, p % hmd);
        let q = s.viewpoints[i].popularity;
        let w = q * s.sv_size_bits(i);
        let mut cost = 0.0;
        for m in [r.mes(), r.cloud()].into_iter().flatten() {
            let rate = self.rates[m * hmd + u];
            if rate <= 0.0 {
                return f64::INFINITY;
            }
            cost += w / rate;
        }
        if r.cloud().is_some() {
            cost += q * s.backhaul_delay_s;
        }
        cost
    }

    /// Objective change of re-routing the listed requests, with the new
    /// states of the touched nodes. Leaves `self` unchanged.
    fn trial(&mut self, moves: &[(usize, Route)]) -> Option<(f64, Vec<NodeUpdate>)> {
        let hmd = self.ctx.s.hmd_count;
        let mut nodes: Vec<Node> = Vec::new();
        let mut delta = 0.0;
        let old: Vec<Route> = moves.iter().map(|&(p, _)| self.routes[p]).collect();
        for (&(p, r), &r0) in moves.iter().zip(&old) {
            delta += self.link_cost(p, r) - self.link_cost(p, r0);
            for n in [node_of(r0, p % hmd), node_of(r, p % hmd)].into_iter().flatten() {
                if !nodes.contains(&n) {
                    nodes.push(n);
                }
            }
        }
        if !delta.is_finite() {
            return None;
        }
        for &(p, r) in moves {
            self.routes[p] = r;
        }
        let mut updates = Vec::with_capacity(nodes.len());
        let mut ok = true;
        for node in nodes {
            let k = node_index(self.ctx, node);
            let problem = node_problem(self.ctx, self.b, &self.routes, node);
            match problem.solve(self.ctx.cfg.cache_exact_limit, Some(&self.states[k])) {
                NodeOutcome::Solved(sol) => {
                    delta += sol.delay - self.delays[k];
                    updates.push((k, sol.states, sol.delay));
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        for (&(p, _), &r0) in moves.iter().zip(&old) {
            self.routes[p] = r0;
        }
        ok.then_some((delta, updates))
    }

    fn apply(&mut self, moves: &[(usize, Route)], updates: Vec<NodeUpdate>) {
        for &(p, r) in moves {
            self.routes[p] = r;
        }
        for (k, states, delay) in updates {
            self.states[k] = states;
            self.delays[k] = delay;
        }
    }

    /// One sweep over requests by decreasing popularity. Returns whether
    /// anything moved.
    fn pass(&mut self, an: &Analysis, scale: f64) -> bool {
        let s = self.ctx.s;
        let hmd = s.hmd_count;
        let mut order: Vec<usize> = (0..self.ctx.pairs()).collect();
        let key = |p: usize| s.viewpoints[p / hmd].popularity;
        order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
        let mut moved = false;
        for p in order {
            let u = p % hmd;
            let current = self.routes[p];
            let mut best: Option<(f64, Vec<(usize, Route)>, Vec<NodeUpdate>)> = None;
            let mut consider = |search: &mut Self, moves: Vec<(usize, Route)>| {
                if let Some((delta, updates)) = search.trial(&moves) {
                    if delta < -1e-12 * scale && best.as_ref().is_none_or(|b| delta < b.0) {
                        best = Some((delta, moves, updates));
                    }
                }
            };
            for &(r, _) in &an.routes[p] {
                if r != current {
                    consider(self, vec![(p, r)]);
                }
            }
            let local_ok = an.routes[p].iter().any(|(r, _)| *r == Route::Local);
            if current != Route::Local && local_ok {
                let partners: Vec<usize> = (0..s.viewpoint_count())
                    .map(|j| j * hmd + u)
                    .filter(|&q| self.routes[q] == Route::Local && an.routes[q].iter().any(|(r, _)| *r == current))
                    .collect();
                for q in partners {
                    consider(self, vec![(p, Route::Local), (q, current)]);
                }
            }
            if let Some((_, moves, updates)) = best {
                self.apply(&moves, updates);
                moved = true;
            }
        }
        moved
    }

    fn decision(&self, base: &Decision) -> Decision {
        let s = self.ctx.s;
        let hmd = s.hmd_count;
        let mut d = Decision::empty(s);
        d.power = base.power.clone();
        for (p, r) in self.routes.iter().enumerate() {
            let (i, u) = (p / hmd, p % hmd);
            if let Some(m) = r.mes() {
                d.offload_mes.set(i, m, u, true);
            }
            if let Some(m) = r.cloud() {
                d.offload_cloud.set(i, m, u, true);
            }
        }
        for node in self.ctx.nodes() {
            for (i, &st) in self.states[node_index(self.ctx, node)].iter().enumerate() {
                let (mv, sv) = (st & 1 == 1, st & 2 == 2);
                match node {
                    Node::Mes(m) => {
                        d.cache_mes_mv.set(i, m, mv);
                        d.cache_mes_sv.set(i, m, sv);
                    }
                    Node::Hmd(u) => {
                        d.cache_hmd_mv.set(i, u, mv);
                        d.cache_hmd_sv.set(i, u, sv);
                    }
                }
            }
        }
        d
    }
}

/// Moves every remote request of one HMD to another SBS: MES routes to that
/// SBS's MES where the box allows it, the rest to the cloud through it.
/// Candidates are the SBSs already in use plus the HMD's nearest. Each move
/// is re-completed with fresh powers and kept if it lowers the objective.
fn rehome(ctx: &Context, b: &SearchBox, an: &Analysis, mut best: Completion) -> Completion {
    let s = ctx.s;
    let hmd = s.hmd_count;
    let allowed = |p: usize, r: Route| an.routes[p].iter().any(|(x, _)| *x == r);
    for u in 0..hmd {
        let routes = routes_of(ctx, &best.decision);
        let mut targets: Vec<usize> = routes.iter().flat_map(|r| [r.mes(), r.cloud()]).flatten().collect();
        targets.push(s.nearest_sbs(u));
        targets.sort_unstable();
        targets.dedup();
        for m in targets {
            let mut moved = routes.clone();
            let mut changed = false;
            for i in 0..s.viewpoint_count() {
                let p = i * hmd + u;
                let r = routes[p];
                if r == Route::Local {
                    continue;
                }
                let wanted = if r.mes().is_some() && allowed(p, Route::Mes(m)) {
                    Route::Mes(m)
                } else {
                    Route::Cloud(m)
                };
                let next = if allowed(p, wanted) { wanted } else { r };
                changed |= next != r;
                moved[p] = next;
            }
            if !changed {
                continue;
            }
            let hints = states_of(ctx, &best.decision);
            if let Completed::Done(c) = complete(ctx, b, &moved, Some(&hints)) {
                if c.value < best.value * (1.0 - 1e-12) {
                    best = Completion {
                        lower: best.lower.min(c.value),
                        exact: false,
                        ..c
                    };
                }
            }
        }
    }
    best
}

/// Improves `start` by single-request moves, local/remote swaps and HMD
/// re-homing inside box `b`. The result is feasible and never worse than
/// `start`.
pub(crate) fn improve(ctx: &Context, b: &SearchBox, an: &Analysis, start: Completion) -> Completion {
    let mut best = polish(ctx, b, an, start);
    for _ in 0..MAX_PASSES {
        let before = best.value;
        best = rehome(ctx, b, an, best);
        if best.value >= before {
            break;
        }
        best = polish(ctx, b, an, best);
    }
    best
}

fn polish(ctx: &Context, b: &SearchBox, an: &Analysis, start: Completion) -> Completion {
    let mut best = start;
    for _ in 0..MAX_PASSES {
        let routes = routes_of(ctx, &best.decision);
        let states = states_of(ctx, &best.decision);
        let delays: Option<Vec<f64>> = ctx
            .nodes()
            .map(|node| node_problem(ctx, b, &routes, node).evaluate(&states[node_index(ctx, node)]))
            .collect();
        let Some(delays) = delays else {
            return best;
        };
        let mut search = Search {
            ctx,
            b,
            rates: all_rates(ctx.s, &best.decision.power),
            routes,
            states,
            delays,
        };
        if !search.pass(an, best.value) {
            return best;
        }
        let mut candidates = Vec::new();
        let moved = search.decision(&best.decision);
        if check_feasibility(ctx.s, &moved).all_pass() {
            if let Ok(e) = evaluate(ctx.s, &moved) {
                candidates.push((e.weighted, moved));
            }
        }
        if let Completed::Done(c) = complete(ctx, b, &search.routes, Some(&search.states)) {
            candidates.push((c.value, c.decision));
        }
        let Some((value, decision)) = candidates.into_iter().min_by(|a, b| a.0.total_cmp(&b.0)) else {
            return best;
        };
        if value >= best.value * (1.0 - 1e-12) {
            return best;
        }
        best = Completion {
            decision,
            value,
            exact: false,
            lower: best.lower.min(value),
        };
    }
    best
}
