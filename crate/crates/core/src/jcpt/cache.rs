//! Cache placement at a single node (one MES or one HMD) once routing is
//! fixed. Nodes are independent given the routing: a node's placement only
//! affects the compute delay and energy of the requests it serves.

/// Item states, encoded as `mv | sv << 1`.
pub(crate) const NONE: u8 = 0;
pub(crate) const MV: u8 = 1;
pub(crate) const SV: u8 = 2;
pub(crate) const BOTH: u8 = 3;

#[inline]
pub(crate) fn has_mv(state: u8) -> bool {
    state & MV != 0
}

#[inline]
pub(crate) fn has_sv(state: u8) -> bool {
    state & SV != 0
}

/// Relative slack applied to capacity and energy limits, matching the
/// feasibility checker.
pub(crate) fn within(value: f64, limit: f64) -> bool {
    value <= limit + 1e-9 * limit.abs()
}

#[derive(Debug, Clone)]
pub(crate) struct NodeItem {
    pub size_mv: f64,
    pub size_sv: f64,
    /// Compute delay summed over served requests (popularity weighted),
    /// paid when the MV is cached.
    pub delay: f64,
    /// Projection energy summed over served requests, paid unless the SV is
    /// cached.
    pub energy: f64,
    /// Some request is served from this node, so a version must be cached.
    pub needed: bool,
    /// `allowed[state]` for the four states.
    pub allowed: [bool; 4],
}

impl NodeItem {
    pub fn size(&self, state: u8) -> f64 {
        has_mv(state) as u8 as f64 * self.size_mv + has_sv(state) as u8 as f64 * self.size_sv
    }

    pub fn delay_of(&self, state: u8) -> f64 {
        if has_mv(state) {
            self.delay
        } else {
            0.0
        }
    }

    pub fn energy_of(&self, state: u8) -> f64 {
        if has_sv(state) {
            0.0
        } else {
            self.energy
        }
    }

    /// States worth considering: for a needed item any allowed state that
    /// caches something, dropping `BOTH` when `SV` alone is allowed (it is
    /// larger with the same energy and more delay). For an unneeded item the
    /// smallest allowed state.
    pub fn candidates(&self) -> Vec<u8> {
        if !self.needed {
            let smallest = (0..4u8)
                .filter(|&st| self.allowed[st as usize])
                .min_by(|&a, &b| self.size(a).total_cmp(&self.size(b)));
            return smallest.into_iter().collect();
        }
        let mut out: Vec<u8> = [MV, SV, BOTH]
            .into_iter()
            .filter(|&st| self.allowed[st as usize])
            .collect();
        if self.allowed[SV as usize] {
            out.retain(|&st| st != BOTH);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NodeProblem {
    pub capacity: f64,
    pub energy_budget: f64,
    pub items: Vec<NodeItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NodeSolution {
    pub states: Vec<u8>,
    pub delay: f64,
    /// Proven optimal for this node.
    pub exact: bool,
    /// Lower bound on the node's delay.
    pub lower: f64,
}

pub(crate) enum NodeOutcome {
    Solved(NodeSolution),
    /// No placement exists (proved by enumeration or by the minimum load).
    Infeasible,
    /// The greedy found nothing but infeasibility is not proved.
    Unknown,
}

impl NodeProblem {

    /// Relaxed lower bound: every needed item at its cheapest allowed state.
    pub fn relaxed_lower(&self) -> f64 {
        self.items
            .iter()
            .filter(|it| it.needed)
            .map(|it| {
                it.candidates()
                    .into_iter()
                    .map(|st| it.delay_of(st))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    }

    fn totals(&self, states: &[u8]) -> (f64, f64, f64) {
        let mut load = 0.0;
        let mut energy = 0.0;
        let mut delay = 0.0;
        for (it, &st) in self.items.iter().zip(states) {
            load += it.size(st);
            energy += it.energy_of(st);
            delay += it.delay_of(st);
        }
        (load, energy, delay)
    }

    /// Delay of `states` if it is a valid placement.
    pub fn evaluate(&self, states: &[u8]) -> Option<f64> {
        if states.len() != self.items.len() {
            return None;
        }
        for (it, &st) in self.items.iter().zip(states) {
            if !it.allowed[st as usize] || (it.needed && st == NONE) {
                return None;
            }
        }
        let (load, energy, delay) = self.totals(states);
        (within(load, self.capacity) && within(energy, self.energy_budget)).then_some(delay)
    }

    pub fn solve(&self, exact_limit: usize, hint: Option<&[u8]>) -> NodeOutcome {
        let lower = self.relaxed_lower();
        let combos = self
            .items
            .iter()
            .map(|it| it.candidates().len() as f64)
            .product::<f64>();
        if combos <= 2f64.powi(exact_limit as i32) {
            return match self.exact() {
                Some((states, delay)) => NodeOutcome::Solved(NodeSolution {
                    states,
                    delay,
                    exact: true,
                    lower: delay,
                }),
                None => NodeOutcome::Infeasible,
            };
        }
        let greedy = self.greedy();
        let hinted = hint.and_then(|h| self.evaluate(h).map(|d| (h.to_vec(), d)));
        let best = match (greedy, hinted) {
            (Some(g), Some(h)) => Some(if h.1 < g.1 { h } else { g }),
            (g, h) => g.or(h),
        };
        match best {
            Some((states, delay)) => NodeOutcome::Solved(NodeSolution {
                states,
                delay,
                exact: false,
                lower,
            }),
            None if !self.min_load_fits() => NodeOutcome::Infeasible,
            None => NodeOutcome::Unknown,
        }
    }

    fn min_load_fits(&self) -> bool {
        let mut load = 0.0;
        for it in &self.items {
            let c = it.candidates();
            if c.is_empty() {
                return false;
            }
            load += c.iter().map(|&st| it.size(st)).fold(f64::INFINITY, f64::min);
        }
        within(load, self.capacity)
    }

    /// Depth-first enumeration with load, energy and delay pruning. Ties
    /// keep the first placement found.
    pub fn exact(&self) -> Option<(Vec<u8>, f64)> {
        let cands: Vec<Vec<u8>> = self.items.iter().map(NodeItem::candidates).collect();
        if cands.iter().any(Vec::is_empty) {
            return None;
        }
        let mut best: Option<(Vec<u8>, f64)> = None;
        let mut current = vec![NONE; self.items.len()];
        self.dfs(&cands, 0, 0.0, 0.0, 0.0, &mut current, &mut best);
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        cands: &[Vec<u8>],
        k: usize,
        load: f64,
        energy: f64,
        delay: f64,
        current: &mut Vec<u8>,
        best: &mut Option<(Vec<u8>, f64)>,
    ) {
        if !within(load, self.capacity) || !within(energy, self.energy_budget) {
            return;
        }
        if let Some((_, b)) = best {
            if delay >= *b {
                return;
            }
        }
        if k == self.items.len() {
            *best = Some((current.clone(), delay));
            return;
        }
        let it = &self.items[k];
        for &st in &cands[k] {
            current[k] = st;
            self.dfs(
                cands,
                k + 1,
                load + it.size(st),
                energy + it.energy_of(st),
                delay + it.delay_of(st),
                current,
                best,
            );
        }
    }

    /// Smallest versions first, then upgrades that remove projection energy
    /// (largest energy saved per extra bit) until the budget holds, then
    /// upgrades that remove compute delay (largest delay saved per extra
    /// bit) while they fit. Item benefits do not interact, so one ranking
    /// per phase equals re-ranking after every insertion.
    pub fn greedy(&self) -> Option<(Vec<u8>, f64)> {
        let cands: Vec<Vec<u8>> = self.items.iter().map(NodeItem::candidates).collect();
        if cands.iter().any(Vec::is_empty) {
            return None;
        }
        let mut states: Vec<u8> = self
            .items
            .iter()
            .zip(&cands)
            .map(|(it, c)| {
                *c.iter()
                    .min_by(|&&a, &&b| it.size(a).total_cmp(&it.size(b)))
                    .expect("non-empty")
            })
            .collect();
        let (mut load, mut energy, _) = self.totals(&states);
        if !within(load, self.capacity) {
            return None;
        }

        // Energy repair.
        if !within(energy, self.energy_budget) {
            let mut moves: Vec<(usize, u8, f64, f64)> = Vec::new();
            for (k, it) in self.items.iter().enumerate() {
                let cur = states[k];
                if it.energy_of(cur) <= 0.0 {
                    continue;
                }
                if let Some(&to) = cands[k]
                    .iter()
                    .filter(|&&st| has_sv(st))
                    .min_by(|&&a, &&b| it.size(a).total_cmp(&it.size(b)))
                {
                    let extra = it.size(to) - it.size(cur);
                    moves.push((k, to, it.energy_of(cur) / extra.max(f64::MIN_POSITIVE), extra));
                }
            }
            moves.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
            for (k, to, _, extra) in moves {
                if within(energy, self.energy_budget) {
                    break;
                }
                if within(load + extra, self.capacity) {
                    energy -= self.items[k].energy_of(states[k]);
                    load += extra;
                    states[k] = to;
                }
            }
            if !within(energy, self.energy_budget) {
                return None;
            }
        }

        // Delay upgrades.
        let mut moves: Vec<(usize, u8, f64, f64)> = Vec::new();
        for (k, it) in self.items.iter().enumerate() {
            let cur = states[k];
            if it.delay_of(cur) <= 0.0 {
                continue;
            }
            if let Some(&to) = cands[k].iter().find(|&&st| st == SV) {
                let extra = it.size(to) - it.size(cur);
                moves.push((k, to, it.delay_of(cur) / extra.max(f64::MIN_POSITIVE), extra));
            }
        }
        moves.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        for (k, to, _, extra) in moves {
            if within(load + extra, self.capacity) {
                load += extra;
                states[k] = to;
            }
        }
        let delay = self.totals(&states).2;
        Some((states, delay))
    }
}
