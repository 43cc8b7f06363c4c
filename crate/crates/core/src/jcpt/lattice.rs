//! The binary decision lattice after the monotone substitution, and boxes
//! `[a, b]` over it.

use serde::{Deserialize, Serialize};

use super::JcptError;
use crate::latency::Decision;
use crate::model::Scenario;

/// Which decision entry a lattice coordinate stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    OffloadMes { i: usize, m: usize, u: usize },
    OffloadCloud { i: usize, m: usize, u: usize },
    CacheMesMv { i: usize, m: usize },
    CacheMesSv { i: usize, m: usize },
    CacheHmdMv { i: usize, u: usize },
    CacheHmdSv { i: usize, u: usize },
}

impl Coordinate {
    pub fn viewpoint(self) -> usize {
        match self {
            Coordinate::OffloadMes { i, .. }
            | Coordinate::OffloadCloud { i, .. }
            | Coordinate::CacheMesMv { i, .. }
            | Coordinate::CacheMesSv { i, .. }
            | Coordinate::CacheHmdMv { i, .. }
            | Coordinate::CacheHmdSv { i, .. } => i,
        }
    }

    /// MV-cache and offload variables are stored complemented.
    pub fn is_complemented(self) -> bool {
        !matches!(self, Coordinate::CacheMesSv { .. } | Coordinate::CacheHmdSv { .. })
    }

    pub fn is_offload(self) -> bool {
        matches!(self, Coordinate::OffloadMes { .. } | Coordinate::OffloadCloud { .. })
    }
}

/// Coordinate layout: `offload_mes`, `offload_cloud` (each `N*M*U`, index
/// `(i*M + m)*U + u`), then `cache_mes_mv`, `cache_mes_sv` (`i*M + m`), then
/// `cache_hmd_mv`, `cache_hmd_sv` (`i*U + u`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    pub viewpoints: usize,
    pub sbs: usize,
    pub hmds: usize,
}

impl Lattice {
    pub fn new(s: &Scenario) -> Self {
        Self {
            viewpoints: s.viewpoint_count(),
            sbs: s.sbs_count,
            hmds: s.hmd_count,
        }
    }

    fn tensor(&self) -> usize {
        self.viewpoints * self.sbs * self.hmds
    }

    fn mes_block(&self) -> usize {
        self.viewpoints * self.sbs
    }

    fn hmd_block(&self) -> usize {
        self.viewpoints * self.hmds
    }

    pub fn dims(&self) -> usize {
        2 * self.tensor() + 2 * self.mes_block() + 2 * self.hmd_block()
    }

    /// Number of offload coordinates; they occupy indices `0..offload_dims()`.
    pub fn offload_dims(&self) -> usize {
        2 * self.tensor()
    }

    #[inline]
    pub fn offload_mes(&self, i: usize, m: usize, u: usize) -> usize {
        (i * self.sbs + m) * self.hmds + u
    }

    #[inline]
    pub fn offload_cloud(&self, i: usize, m: usize, u: usize) -> usize {
        self.tensor() + self.offload_mes(i, m, u)
    }

    #[inline]
    pub fn cache_mes_mv(&self, i: usize, m: usize) -> usize {
        2 * self.tensor() + i * self.sbs + m
    }

    #[inline]
    pub fn cache_mes_sv(&self, i: usize, m: usize) -> usize {
        self.cache_mes_mv(i, m) + self.mes_block()
    }

    #[inline]
    pub fn cache_hmd_mv(&self, i: usize, u: usize) -> usize {
        2 * self.tensor() + 2 * self.mes_block() + i * self.hmds + u
    }

    #[inline]
    pub fn cache_hmd_sv(&self, i: usize, u: usize) -> usize {
        self.cache_hmd_mv(i, u) + self.hmd_block()
    }

    pub fn coordinate(&self, k: usize) -> Coordinate {
        let t = self.tensor();
        let split3 = |r: usize| (r / (self.sbs * self.hmds), (r / self.hmds) % self.sbs, r % self.hmds);
        if k < t {
            let (i, m, u) = split3(k);
            return Coordinate::OffloadMes { i, m, u };
        }
        if k < 2 * t {
            let (i, m, u) = split3(k - t);
            return Coordinate::OffloadCloud { i, m, u };
        }
        let r = k - 2 * t;
        let mb = self.mes_block();
        if r < mb {
            return Coordinate::CacheMesMv { i: r / self.sbs, m: r % self.sbs };
        }
        if r < 2 * mb {
            let r = r - mb;
            return Coordinate::CacheMesSv { i: r / self.sbs, m: r % self.sbs };
        }
        let r = r - 2 * mb;
        let hb = self.hmd_block();
        if r < hb {
            return Coordinate::CacheHmdMv { i: r / self.hmds, u: r % self.hmds };
        }
        let r = r - hb;
        Coordinate::CacheHmdSv { i: r / self.hmds, u: r % self.hmds }
    }

    #[inline]
    pub fn is_complemented(&self, k: usize) -> bool {
        let t = self.tensor();
        let mb = self.mes_block();
        let hb = self.hmd_block();
        k < 2 * t
            || (2 * t..2 * t + mb).contains(&k)
            || (2 * t + 2 * mb..2 * t + 2 * mb + hb).contains(&k)
    }
}

fn original_bits(d: &Decision) -> Vec<bool> {
    [
        d.offload_mes.as_slice(),
        d.offload_cloud.as_slice(),
        d.cache_mes_mv.as_slice(),
        d.cache_mes_sv.as_slice(),
        d.cache_hmd_mv.as_slice(),
        d.cache_hmd_sv.as_slice(),
    ]
    .concat()
}

/// Maps the binary part of `d` onto the substituted lattice: MV-cache and
/// offload entries become `1 - x`, SV-cache entries are copied.
pub fn to_monotone(s: &Scenario, d: &Decision) -> Result<Vec<u8>, JcptError> {
    if !d.shape_matches(s) {
        return Err(JcptError::Shape);
    }
    let lattice = Lattice::new(s);
    Ok(original_bits(d)
        .into_iter()
        .enumerate()
        .map(|(k, x)| (x ^ lattice.is_complemented(k)) as u8)
        .collect())
}

/// Inverse of [`to_monotone`]. The returned decision has zero power.
pub fn from_monotone(s: &Scenario, coords: &[u8]) -> Result<Decision, JcptError> {
    let lattice = Lattice::new(s);
    if coords.len() != lattice.dims() {
        return Err(JcptError::Length {
            got: coords.len(),
            expected: lattice.dims(),
        });
    }
    let mut d = Decision::empty(s);
    for (k, &c) in coords.iter().enumerate() {
        let x = match c {
            0 => false,
            1 => true,
            other => return Err(JcptError::NonBinary { index: k, value: other }),
        };
        set_original(&lattice, &mut d, k, x ^ lattice.is_complemented(k));
    }
    Ok(d)
}

pub(crate) fn set_original(lattice: &Lattice, d: &mut Decision, k: usize, x: bool) {
    match lattice.coordinate(k) {
        Coordinate::OffloadMes { i, m, u } => d.offload_mes.set(i, m, u, x),
        Coordinate::OffloadCloud { i, m, u } => d.offload_cloud.set(i, m, u, x),
        Coordinate::CacheMesMv { i, m } => d.cache_mes_mv.set(i, m, x),
        Coordinate::CacheMesSv { i, m } => d.cache_mes_sv.set(i, m, x),
        Coordinate::CacheHmdMv { i, u } => d.cache_hmd_mv.set(i, u, x),
        Coordinate::CacheHmdSv { i, u } => d.cache_hmd_sv.set(i, u, x),
    }
}

/// A box `[lower, upper]` of the substituted lattice with its bound
/// bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    /// Vertex `a`.
    pub lower: Vec<bool>,
    /// Vertex `b`.
    pub upper: Vec<bool>,
    /// Lower bound on the objective over the box, seconds.
    pub lower_bound: f64,
    /// Objective of the best feasible point found in the box, seconds.
    pub upper_bound: f64,
    pub incumbent: Option<Decision>,
    pub id: u64,
}

impl SearchBox {
    /// The whole lattice.
    pub fn full(lattice: &Lattice) -> Self {
        let dims = lattice.dims();
        Self {
            lower: vec![false; dims],
            upper: vec![true; dims],
            lower_bound: 0.0,
            upper_bound: f64::INFINITY,
            incumbent: None,
            id: 0,
        }
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn is_decided(&self, k: usize) -> bool {
        self.lower[k] == self.upper[k]
    }

    pub fn undecided(&self) -> usize {
        (0..self.dims()).filter(|&k| !self.is_decided(k)).count()
    }

    /// Whether the original (unsubstituted) variable `k` may take value `x`.
    #[inline]
    pub fn allows(&self, lattice: &Lattice, k: usize, x: bool) -> bool {
        let v = x ^ lattice.is_complemented(k);
        if v {
            self.upper[k]
        } else {
            !self.lower[k]
        }
    }

    /// Pins the original variable `k` to `x`. Returns false (and leaves the
    /// box untouched) if `x` is outside the box.
    pub fn fix(&mut self, lattice: &Lattice, k: usize, x: bool) -> bool {
        if !self.allows(lattice, k, x) {
            return false;
        }
        let v = x ^ lattice.is_complemented(k);
        self.lower[k] = v;
        self.upper[k] = v;
        true
    }

    /// Number of binary points in the box, saturating at `u128::MAX`.
    pub fn lattice_points(&self) -> u128 {
        let free = self.undecided() as u32;
        1u128.checked_shl(free).unwrap_or(u128::MAX)
    }

    fn child(&self, lower: Vec<bool>, upper: Vec<bool>) -> Self {
        Self {
            lower,
            upper,
            lower_bound: self.lower_bound,
            upper_bound: f64::INFINITY,
            incumbent: None,
            id: self.id,
        }
    }
}

/// Splits `b` on coordinate `k`: `[a, a']` with `a' = b, a'_k = 0` and
/// `[b', b]` with `b' = a, b'_k = 1`. Children inherit the parent's lower
/// bound and id.
pub fn branch(b: &SearchBox, k: usize) -> Result<(SearchBox, SearchBox), JcptError> {
    if k >= b.dims() {
        return Err(JcptError::Dimension { k, dims: b.dims() });
    }
    if b.is_decided(k) {
        return Err(JcptError::Decided(k));
    }
    let mut a_prime = b.upper.clone();
    a_prime[k] = false;
    let mut b_prime = b.lower.clone();
    b_prime[k] = true;
    Ok((
        b.child(b.lower.clone(), a_prime),
        b.child(b_prime, b.upper.clone()),
    ))
}

/// Next coordinate to branch on: undecided offload coordinates first, then
/// cache coordinates; within a group the largest `q_i * d_i` wins and ties
/// go to the lowest index.
pub fn select_dimension(s: &Scenario, b: &SearchBox) -> Option<usize> {
    let lattice = Lattice::new(s);
    let score = |k: usize| {
        let v = &s.viewpoints[lattice.coordinate(k).viewpoint()];
        v.popularity * v.mv_size_bits
    };
    let pick = |range: std::ops::Range<usize>| {
        let mut best: Option<(usize, f64)> = None;
        for k in range {
            if b.is_decided(k) {
                continue;
            }
            let sc = score(k);
            if best.is_none_or(|(_, bs)| sc > bs) {
                best = Some((k, sc));
            }
        }
        best.map(|(k, _)| k)
    };
    pick(0..lattice.offload_dims()).or_else(|| pick(lattice.offload_dims()..lattice.dims()))
}
