//! Turning a routing into a full decision (caches per node, then powers),
//! and the randomized greedy routing used for upper bounds.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::analysis::{Analysis, Context, Node, Route};
use super::cache::{has_mv, has_sv, within, NodeItem, NodeOutcome, NodeProblem, BOTH, MV, SV};
use super::lattice::SearchBox;
use crate::latency::{check_feasibility, evaluate, Decision};
use crate::radio::{allocate_for_demand, shannon, solve_power, LinkDemand, PowerMode, DEFAULT_POWER_EPSILON};

#[derive(Debug, Clone)]
pub(crate) struct Completion {
    pub decision: Decision,
    pub value: f64,
    /// Every node placement was solved exactly and the power step is the
    /// configured inner solver's answer.
    pub exact: bool,
    /// Lower bound over all completions of the same routing.
    pub lower: f64,
}

pub(crate) enum Completed {
    Done(Completion),
    Infeasible,
    Unknown,
}

pub(super) fn node_index(ctx: &Context, node: Node) -> usize {
    match node {
        Node::Mes(m) => m,
        Node::Hmd(u) => ctx.s.sbs_count + u,
    }
}

pub(super) fn node_problem(ctx: &Context, b: &SearchBox, routes: &[Route], node: Node) -> NodeProblem {
    let s = ctx.s;
    let hmd = s.hmd_count;
    let items = (0..s.viewpoint_count())
        .map(|i| {
            let q = s.viewpoints[i].popularity;
            let served = (0..hmd).filter(|&u| routes[i * hmd + u].uses(node, u)).count() as f64;
            NodeItem {
                size_mv: s.viewpoints[i].mv_size_bits,
                size_sv: s.sv_size_bits(i),
                delay: served * q * ctx.compute_delay(node, i),
                energy: served * q * ctx.compute_energy(node, i),
                needed: served > 0.0,
                allowed: ctx.allowed_states(b, node, i),
            }
        })
        .collect();
    NodeProblem {
        capacity: ctx.capacity(node),
        energy_budget: ctx.energy_budget(node),
        items,
    }
}

/// Completes `routes` inside box `b`: optimal or greedy cache placement per
/// node, then powers from the configured inner solver.
pub(crate) fn complete(
    ctx: &Context,
    b: &SearchBox,
    routes: &[Route],
    hints: Option<&[Vec<u8>]>,
) -> Completed {
    let s = ctx.s;
    let hmd = s.hmd_count;
    let mut d = Decision::empty(s);
    let mut cloud_constant = 0.0;
    for i in 0..s.viewpoint_count() {
        let q = s.viewpoints[i].popularity;
        for u in 0..hmd {
            let r = routes[i * hmd + u];
            if let Some(m) = r.mes() {
                d.offload_mes.set(i, m, u, true);
            }
            if let Some(m) = r.cloud() {
                d.offload_cloud.set(i, m, u, true);
                cloud_constant += q * s.backhaul_delay_s;
            }
        }
    }

    let mut exact = true;
    let mut node_lower = 0.0;
    let mut unknown = false;
    for node in ctx.nodes().collect::<Vec<_>>() {
        let problem = node_problem(ctx, b, routes, node);
        let hint = hints.map(|h| h[node_index(ctx, node)].as_slice());
        let solution = match problem.solve(ctx.cfg.cache_exact_limit, hint) {
            NodeOutcome::Solved(sol) => sol,
            NodeOutcome::Infeasible => return Completed::Infeasible,
            NodeOutcome::Unknown => {
                unknown = true;
                continue;
            }
        };
        exact &= solution.exact;
        node_lower += solution.lower;
        for (i, &st) in solution.states.iter().enumerate() {
            match node {
                Node::Mes(m) => {
                    d.cache_mes_mv.set(i, m, has_mv(st));
                    d.cache_mes_sv.set(i, m, has_sv(st));
                }
                Node::Hmd(u) => {
                    d.cache_hmd_mv.set(i, u, has_mv(st));
                    d.cache_hmd_sv.set(i, u, has_sv(st));
                }
            }
        }
    }
    if unknown {
        return Completed::Unknown;
    }

    let demand = LinkDemand::from_decision(s, &d);
    let (power, power_exact) = match solve_power(s, &demand, &ctx.cfg.power) {
        Ok((p, _)) => (p, true),
        Err(_) => (allocate_for_demand(s, &demand, DEFAULT_POWER_EPSILON).0, false),
    };
    d.power = power;
    let value = match evaluate(s, &d) {
        Ok(e) if e.weighted.is_finite() => e.weighted,
        _ => return Completed::Unknown,
    };
    if !check_feasibility(s, &d).all_pass() {
        return Completed::Unknown;
    }
    let exact = exact && power_exact;
    let lower = if exact {
        value
    } else {
        let transmission: f64 = demand
            .active_links()
            .into_iter()
            .map(|(m, u)| demand.weight(m, u) / ctx.rate_ub[m * hmd + u])
            .sum();
        (node_lower + transmission + cloud_constant).min(value)
    };
    Completed::Done(Completion {
        decision: d,
        value,
        exact,
        lower,
    })
}

/// Transmission-cost estimate used while routing: equal split of `P_T` over
/// each SBS's active links (or the pinned powers) with the full
/// interference model, or fixed rates when every link transmits regardless.
struct LinkModel<'a> {
    ctx: &'a Context<'a>,
    fixed_rates: Option<Vec<f64>>,
    weight: Vec<f64>,
    count: Vec<usize>,
    rates: Vec<f64>,
    cost: f64,
}

impl<'a> LinkModel<'a> {
    fn new(ctx: &'a Context<'a>) -> Self {
        let links = ctx.s.sbs_count * ctx.s.hmd_count;
        let fixed_rates = match &ctx.cfg.power {
            PowerMode::Fixed(_) => Some(ctx.rate_ub.clone()),
            _ => None,
        };
        Self {
            ctx,
            fixed_rates,
            weight: vec![0.0; links],
            count: vec![0; ctx.s.sbs_count],
            rates: vec![0.0; links],
            cost: 0.0,
        }
    }

    /// Rates and total cost for the given weights and per-SBS link counts.
    fn evaluate(&self, weight: &[f64], count: &[usize]) -> (Vec<f64>, f64) {
        let s = self.ctx.s;
        let hmd = s.hmd_count;
        let mut rx = vec![0.0; weight.len()];
        let mut row = vec![0.0; s.sbs_count];
        let mut col = vec![0.0; hmd];
        let mut total = 0.0;
        for (k, &w) in weight.iter().enumerate() {
            if w > 0.0 {
                let (m, u) = (k / hmd, k % hmd);
                let p = match &self.ctx.cfg.power {
                    PowerMode::Pinned(pinned) => pinned.p[m][u],
                    _ => s.total_power_w / count[m] as f64,
                };
                let r = p * s.channel_gain[m][u];
                rx[k] = r;
                row[m] += r;
                col[u] += r;
                total += r;
            }
        }
        let mut rates = vec![0.0; weight.len()];
        let mut cost = 0.0;
        for (k, &w) in weight.iter().enumerate() {
            if w > 0.0 {
                let (m, u) = (k / hmd, k % hmd);
                let own = rx[k];
                let inter = (total - row[m] - col[u] + own).max(0.0);
                let intra = (row[m] - own).max(0.0);
                let gamma = own / (inter + s.orthogonality * intra + s.noise_power_w);
                rates[k] = shannon(s.bandwidth_per_hmd_hz, gamma);
                cost += w / rates[k];
            }
        }
        (rates, cost)
    }

    fn marginal(&self, m: usize, u: usize, w: f64) -> f64 {
        let k = m * self.ctx.s.hmd_count + u;
        if let Some(r) = &self.fixed_rates {
            return w / r[k];
        }
        if self.weight[k] > 0.0 {
            return w / self.rates[k];
        }
        let mut weight = self.weight.clone();
        weight[k] = w;
        let mut count = self.count.clone();
        count[m] += 1;
        self.evaluate(&weight, &count).1 - self.cost
    }

    fn commit(&mut self, m: usize, u: usize, w: f64) {
        let k = m * self.ctx.s.hmd_count + u;
        if self.fixed_rates.is_some() {
            self.weight[k] += w;
            return;
        }
        if self.weight[k] <= 0.0 {
            self.count[m] += 1;
        }
        self.weight[k] += w;
        let (rates, cost) = self.evaluate(&self.weight, &self.count);
        self.rates = rates;
        self.cost = cost;
    }
}

/// Provisional cache contents of one node while routing.
#[derive(Clone)]
struct NodeTrack {
    states: Vec<u8>,
    item_energy: Vec<f64>,
    load: f64,
    energy: f64,
}

struct Placement {
    state: u8,
    load: f64,
    energy: f64,
    item_energy: f64,
    delay: f64,
}

fn place(ctx: &Context, b: &SearchBox, track: &NodeTrack, node: Node, i: usize) -> Option<Placement> {
    let s = ctx.s;
    let q = s.viewpoints[i].popularity;
    let cap = ctx.capacity(node);
    let budget = ctx.energy_budget(node);
    let delay = q * ctx.compute_delay(node, i);
    let e = q * ctx.compute_energy(node, i);
    let mv = s.viewpoints[i].mv_size_bits;
    let sv = s.sv_size_bits(i);
    let st = track.states[i];
    let allowed = ctx.allowed_states(b, node, i);
    let keep = |state: u8, load: f64, energy: f64, item_energy: f64| {
        Some(Placement {
            state,
            load,
            energy,
            item_energy,
            delay: if has_mv(state) { delay } else { 0.0 },
        })
    };
    if has_sv(st) {
        return keep(st, track.load, track.energy, 0.0);
    }
    let item_energy = track.item_energy[i];
    if has_mv(st) {
        if within(track.energy + e, budget) {
            return keep(st, track.load, track.energy + e, item_energy + e);
        }
        // Upgrading to an SV removes this item's energy entirely.
        let freed = track.energy - item_energy;
        if allowed[SV as usize] && within(track.load - mv + sv, cap) {
            return keep(SV, track.load - mv + sv, freed, 0.0);
        }
        if allowed[BOTH as usize] && within(track.load + sv, cap) {
            return keep(BOTH, track.load + sv, freed, 0.0);
        }
        return None;
    }
    if allowed[MV as usize] && within(track.load + mv, cap) && within(track.energy + e, budget) {
        // Spare room for the SV means a later upgrade can remove the delay.
        let sv_later = allowed[SV as usize] && within(track.load + sv, cap);
        let mut pl = keep(MV, track.load + mv, track.energy + e, e)?;
        if sv_later {
            pl.delay = 0.0;
        }
        return Some(pl);
    }
    if allowed[SV as usize] && within(track.load + sv, cap) {
        return keep(SV, track.load + sv, track.energy, 0.0);
    }
    if allowed[BOTH as usize] && within(track.load + mv + sv, cap) {
        return keep(BOTH, track.load + mv + sv, track.energy, 0.0);
    }
    None
}

fn initial_tracks(ctx: &Context, b: &SearchBox) -> Vec<NodeTrack> {
    let s = ctx.s;
    let l = &ctx.lattice;
    ctx.nodes()
        .map(|node| {
            let states: Vec<u8> = (0..s.viewpoint_count())
                .map(|i| {
                    let (kmv, ksv) = ctx.cache_coords(node, i);
                    (!b.allows(l, kmv, false)) as u8 | ((!b.allows(l, ksv, false)) as u8) << 1
                })
                .collect();
            let load = states
                .iter()
                .enumerate()
                .map(|(i, &st)| {
                    has_mv(st) as u8 as f64 * s.viewpoints[i].mv_size_bits
                        + has_sv(st) as u8 as f64 * s.sv_size_bits(i)
                })
                .sum();
            NodeTrack {
                item_energy: vec![0.0; states.len()],
                states,
                load,
                energy: 0.0,
            }
        })
        .collect()
}

fn route_nodes(r: Route, u: usize) -> Option<Node> {
    match r {
        Route::Local => Some(Node::Hmd(u)),
        _ => r.mes().map(Node::Mes),
    }
}

/// SBSs by decreasing geometric-mean gain to the HMDs.
fn central_sbs(ctx: &Context) -> Vec<usize> {
    let s = ctx.s;
    let score = |m: usize| -> f64 { s.channel_gain[m].iter().map(|h| h.max(f64::MIN_POSITIVE).ln()).sum() };
    let mut order: Vec<usize> = (0..s.sbs_count).collect();
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    order
}

/// Number of restarts that anchor every HMD on one shared SBS.
const SHARED_RESTARTS: usize = 3;

/// Greedy route assignment. Restart 0 visits requests by decreasing
/// `q_i * d_i` and picks the cheapest route. Restart 1 visits them by
/// decreasing popularity and serves each locally if the HMD cache admits
/// it, else at the nearest MES, else from the cloud through the nearest
/// SBS. The next restarts do the same with every HMD anchored on one of the
/// most central SBSs instead of its nearest, since same-cell interference
/// is damped by the orthogonality factor. Remaining restarts visit requests
/// in random order, odd ones keeping to the nearest SBS, and pick the
/// cheapest route or, with probability 1/2, the second cheapest.
fn greedy_routes(
    ctx: &Context,
    b: &SearchBox,
    an: &Analysis,
    restart: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<Route>, Vec<Vec<u8>>)> {
    let s = ctx.s;
    let hmd = s.hmd_count;
    let pairs = ctx.pairs();
    let mut tracks = initial_tracks(ctx, b);
    let mut links = LinkModel::new(ctx);
    let mut chosen: Vec<Option<Route>> = vec![None; pairs];

    let shared = SHARED_RESTARTS.min(s.sbs_count);
    let nearest: Vec<usize> = (0..hmd).map(|u| s.nearest_sbs(u)).collect();
    let (anchor, local_first, random) = match restart {
        0 => (None, false, false),
        1 => (Some(nearest), true, false),
        r if r < 2 + shared => (Some(vec![central_sbs(ctx)[r - 2]; hmd]), true, false),
        r => ((r % 2 == 1).then_some(nearest), false, true),
    };

    let mut order: Vec<usize> = (0..pairs).filter(|&p| an.routes[p].len() == 1).collect();
    let mut rest: Vec<usize> = (0..pairs).filter(|&p| an.routes[p].len() > 1).collect();
    if random {
        rest.shuffle(rng);
    } else if local_first {
        let key = |p: usize| s.viewpoints[p / hmd].popularity;
        rest.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    } else {
        let key = |p: usize| {
            let v = &s.viewpoints[p / hmd];
            v.popularity * v.mv_size_bits
        };
        rest.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    }
    order.extend(rest);

    for p in order {
        let (i, u) = (p / hmd, p % hmd);
        let q = s.viewpoints[i].popularity;
        let w = q * s.sv_size_bits(i);
        let mut cands: Vec<Route> = an.routes[p].iter().map(|r| r.0).collect();
        if cands.iter().any(|r| !matches!(r, Route::MesCloud(..))) {
            cands.retain(|r| !matches!(r, Route::MesCloud(..)));
        }
        if let Some(anchor) = &anchor {
            let home = anchor[u];
            let preferred: Vec<Route> = cands
                .iter()
                .copied()
                .filter(|r| r.mes().is_none_or(|m| m == home) && r.cloud().is_none_or(|m| m == home))
                .collect();
            if !preferred.is_empty() {
                cands = preferred;
            }
        }
        let mut options: Vec<(Route, f64, Option<Placement>)> = Vec::new();
        for r in cands {
            let placement = match route_nodes(r, u) {
                Some(node) => match place(ctx, b, &tracks[node_index(ctx, node)], node, i) {
                    Some(pl) => Some(pl),
                    None => continue,
                },
                None => None,
            };
            let mut cost = placement.as_ref().map_or(0.0, |pl| pl.delay);
            if let Some(m) = r.mes() {
                cost += links.marginal(m, u, w);
            }
            if let Some(m) = r.cloud() {
                cost += links.marginal(m, u, w) + q * s.backhaul_delay_s;
            }
            if cost.is_finite() {
                options.push((r, cost, placement));
            }
        }
        if options.is_empty() {
            return None;
        }
        let rank = |r: &Route| match r {
            Route::Local => 0,
            Route::Mes(_) => 1,
            _ => 2,
        };
        let pick = if local_first {
            (0..options.len())
                .min_by(|&a, &b| rank(&options[a].0).cmp(&rank(&options[b].0)).then(options[a].1.total_cmp(&options[b].1)))
                .expect("non-empty options")
        } else {
            let mut by_cost: Vec<usize> = (0..options.len()).collect();
            by_cost.sort_by(|&a, &b| options[a].1.total_cmp(&options[b].1).then(a.cmp(&b)));
            if random && by_cost.len() > 1 && rng.gen_bool(0.5) {
                by_cost[1]
            } else {
                by_cost[0]
            }
        };
        let (r, _, placement) = options.swap_remove(pick);
        if let (Some(node), Some(pl)) = (route_nodes(r, u), placement) {
            let t = &mut tracks[node_index(ctx, node)];
            t.states[i] = pl.state;
            t.load = pl.load;
            t.energy = pl.energy;
            t.item_energy[i] = pl.item_energy;
        }
        if let Some(m) = r.mes() {
            links.commit(m, u, w);
        }
        if let Some(m) = r.cloud() {
            links.commit(m, u, w);
        }
        chosen[p] = Some(r);
    }
    let routes = chosen.into_iter().map(|r| r.expect("every request routed")).collect();
    Some((routes, tracks.into_iter().map(|t| t.states).collect()))
}

fn restart_seed(seed: u64, box_id: u64, restart: usize) -> u64 {
    // splitmix64 finalizer over the combined inputs.
    let mut z = seed
        ^ box_id.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (restart as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Best completion over the configured number of greedy restarts.
pub(crate) fn heuristic_upper(ctx: &Context, b: &SearchBox, an: &Analysis) -> Option<Completion> {
    let mut best: Option<Completion> = None;
    for restart in 0..ctx.cfg.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(ctx.cfg.seed, b.id, restart));
        let Some((routes, hints)) = greedy_routes(ctx, b, an, restart, &mut rng) else {
            continue;
        };
        let done = complete(ctx, b, &routes, Some(&hints));
        if let Completed::Done(c) = done {
            if best.as_ref().is_none_or(|bst| c.value < bst.value) {
                best = Some(c);
            }
        }
    }
    best
}
