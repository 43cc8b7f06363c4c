//! Delay components, energy usage, the popularity-weighted objective,
//! feasibility checking and the cache-hit-ratio metric.

mod decision;
mod feasibility;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decision::{BitMatrix, BitTensor, Decision};
pub use feasibility::{check_feasibility, ConstraintCheck, ConstraintId, FeasibilityReport};

use crate::model::Scenario;
use crate::radio::all_rates;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatencyError {
    #[error("request ({i}, {u}) is outside the {n}x{hmd} catalog/HMD range")]
    IndexOutOfRange { i: usize, u: usize, n: usize, hmd: usize },
    #[error("decision dimensions do not match the scenario")]
    Shape,
}

/// Delay in seconds, or the marker for a request whose serving link has
/// zero rate. `Unreachable` compares greater than every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Latency {
    Finite(f64),
    Unreachable,
}

impl Latency {
    pub fn from_seconds(x: f64) -> Self {
        if x.is_finite() {
            Latency::Finite(x)
        } else {
            Latency::Unreachable
        }
    }

    /// `f64::INFINITY` for `Unreachable`.
    pub fn seconds(self) -> f64 {
        match self {
            Latency::Finite(x) => x,
            Latency::Unreachable => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Latency::Finite(_))
    }
}

impl PartialOrd for Latency {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.seconds().partial_cmp(&other.seconds())
    }
}

impl fmt::Display for Latency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Latency::Finite(x) => write!(f, "{x:.6} s"),
            Latency::Unreachable => f.write_str("unreachable"),
        }
    }
}

/// The three additive parts of one request's end-to-end latency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyParts {
    pub mes: f64,
    pub local: f64,
    pub cloud: f64,
}

impl LatencyParts {
    pub fn total(&self) -> f64 {
        self.mes + self.local + self.cloud
    }
}

pub(crate) fn latency_parts(
    s: &Scenario,
    d: &Decision,
    rates: &[f64],
    i: usize,
    u: usize,
) -> LatencyParts {
    let size = s.viewpoints[i].mv_size_bits;
    let sv_bits = s.sv_ratio * size;
    let mut parts = LatencyParts {
        mes: 0.0,
        local: 0.0,
        cloud: 0.0,
    };
    let mut offloaded = false;
    for m in 0..s.sbs_count {
        let rate = rates[m * s.hmd_count + u];
        if d.offload_mes.get(i, m, u) {
            offloaded = true;
            let compute = if d.cache_mes_mv.get(i, m) {
                s.mes_compute_delay(i)
            } else {
                0.0
            };
            parts.mes += compute + sv_bits / rate;
        }
        if d.offload_cloud.get(i, m, u) {
            offloaded = true;
            parts.cloud += sv_bits / rate + s.backhaul_delay_s;
        }
    }
    if !offloaded && d.cache_hmd_mv.get(i, u) {
        parts.local = s.hmd_compute_delay(i);
    }
    parts
}

fn check_request(s: &Scenario, d: &Decision, i: usize, u: usize) -> Result<(), LatencyError> {
    if !d.shape_matches(s) {
        return Err(LatencyError::Shape);
    }
    if i >= s.viewpoint_count() || u >= s.hmd_count {
        return Err(LatencyError::IndexOutOfRange {
            i,
            u,
            n: s.viewpoint_count(),
            hmd: s.hmd_count,
        });
    }
    Ok(())
}

pub fn request_latency_parts(
    s: &Scenario,
    d: &Decision,
    i: usize,
    u: usize,
) -> Result<LatencyParts, LatencyError> {
    check_request(s, d, i, u)?;
    Ok(latency_parts(s, d, &all_rates(s, &d.power), i, u))
}

/// End-to-end latency of HMD `u` requesting viewpoint `i`.
pub fn request_latency(s: &Scenario, d: &Decision, i: usize, u: usize) -> Result<Latency, LatencyError> {
    request_latency_parts(s, d, i, u).map(|p| Latency::from_seconds(p.total()))
}

/// Evaluates every request once against a shared rate table.
pub struct Evaluation {
    /// `tau[i * U + u]`, infinite when unreachable.
    pub tau: Vec<f64>,
    pub weighted: f64,
    pub unweighted: f64,
}

pub fn evaluate(s: &Scenario, d: &Decision) -> Result<Evaluation, LatencyError> {
    if !d.shape_matches(s) {
        return Err(LatencyError::Shape);
    }
    let rates = all_rates(s, &d.power);
    let mut tau = Vec::with_capacity(s.viewpoint_count() * s.hmd_count);
    let mut weighted = 0.0;
    let mut unweighted = 0.0;
    for i in 0..s.viewpoint_count() {
        let q = s.viewpoints[i].popularity;
        for u in 0..s.hmd_count {
            let t = latency_parts(s, d, &rates, i, u).total();
            tau.push(t);
            weighted += q * t;
            unweighted += t;
        }
    }
    Ok(Evaluation {
        tau,
        weighted,
        unweighted,
    })
}

/// `sum_u sum_i q_i tau_iu`.
pub fn objective(s: &Scenario, d: &Decision) -> Result<Latency, LatencyError> {
    evaluate(s, d).map(|e| Latency::from_seconds(e.weighted))
}

/// `sum_u sum_i tau_iu`, the popularity-free variant.
pub fn unweighted_delay_sum(s: &Scenario, d: &Decision) -> Result<Latency, LatencyError> {
    evaluate(s, d).map(|e| Latency::from_seconds(e.unweighted))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyUsage {
    pub mes: Vec<f64>,
    pub hmd: Vec<f64>,
}

/// Expected projection energy per MES and per HMD. An MES is charged only
/// for the requests it serves itself.
pub fn energy_usage(s: &Scenario, d: &Decision) -> EnergyUsage {
    let mut mes = vec![0.0; s.sbs_count];
    let mut hmd = vec![0.0; s.hmd_count];
    for i in 0..s.viewpoint_count() {
        let q = s.viewpoints[i].popularity;
        let e_mes = s.mes_compute_energy(i);
        let e_hmd = s.hmd_compute_energy(i);
        for u in 0..s.hmd_count {
            let mut offloaded = false;
            for m in 0..s.sbs_count {
                if d.offload_mes.get(i, m, u) {
                    offloaded = true;
                    if !d.cache_mes_sv.get(i, m) {
                        mes[m] += q * e_mes;
                    }
                }
                offloaded |= d.offload_cloud.get(i, m, u);
            }
            if !offloaded && !d.cache_hmd_sv.get(i, u) {
                hmd[u] += q * e_hmd;
            }
        }
    }
    EnergyUsage { mes, hmd }
}

/// Popularity-weighted share of requests served without the cloud, averaged
/// over HMDs.
pub fn cache_hit_ratio(s: &Scenario, d: &Decision) -> f64 {
    let mut hits = 0.0;
    for i in 0..s.viewpoint_count() {
        let q = s.viewpoints[i].popularity;
        for u in 0..s.hmd_count {
            let local = d.is_local(i, u) && (d.cache_hmd_mv.get(i, u) || d.cache_hmd_sv.get(i, u));
            if local || d.served_by_mes(i, u) {
                hits += q;
            }
        }
    }
    hits / s.hmd_count as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny_scenario;

    fn rel_eq(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1e-300)
    }

    /// One SBS, one HMD, one viewpoint with d = 1e6, w = 50 and a link
    /// whose rate is exactly 1e8 bit/s.
    fn single_link() -> (Scenario, Decision) {
        let mut s = tiny_scenario(1, 1, 1);
        s.viewpoints[0].mv_size_bits = 1e6;
        s.viewpoints[0].cycles_per_bit = 50.0;
        s.sv_ratio = 4.0;
        s.mes_cpu_hz = 1e10;
        s.hmd_cpu_hz = 2e9;
        s.backhaul_delay_s = 0.1;
        s.bandwidth_per_hmd_hz = 1e8;
        // gamma = 1 gives log2(2) = 1, so R = W.
        s.channel_gain = vec![vec![1e-6]];
        s.noise_power_w = 1e-6 * s.total_power_w;
        let mut d = Decision::empty(&s);
        d.power.p[0][0] = s.total_power_w;
        (s, d)
    }

    #[test]
    fn sv_at_serving_mes() {
        let (s, mut d) = single_link();
        d.cache_mes_sv.set(0, 0, true);
        d.offload_mes.set(0, 0, 0, true);
        let t = request_latency(&s, &d, 0, 0).unwrap().seconds();
        assert!(rel_eq(t, 0.04), "{t}");
    }

    #[test]
    fn mv_at_serving_mes() {
        let (s, mut d) = single_link();
        d.cache_mes_mv.set(0, 0, true);
        d.offload_mes.set(0, 0, 0, true);
        let parts = request_latency_parts(&s, &d, 0, 0).unwrap();
        assert!(rel_eq(parts.mes, 0.045));
        assert_eq!(parts.local, 0.0);
        assert_eq!(parts.cloud, 0.0);
    }

    #[test]
    fn local_paths() {
        let (s, mut d) = single_link();
        d.cache_hmd_sv.set(0, 0, true);
        assert_eq!(request_latency(&s, &d, 0, 0).unwrap(), Latency::Finite(0.0));
        let (s, mut d) = single_link();
        d.cache_hmd_mv.set(0, 0, true);
        assert!(rel_eq(request_latency(&s, &d, 0, 0).unwrap().seconds(), 0.025));
    }

    #[test]
    fn cloud_path() {
        let (s, mut d) = single_link();
        d.offload_cloud.set(0, 0, 0, true);
        assert!(rel_eq(request_latency(&s, &d, 0, 0).unwrap().seconds(), 0.14));
    }

    #[test]
    fn dead_link_is_unreachable() {
        let (s, mut d) = single_link();
        d.offload_cloud.set(0, 0, 0, true);
        d.power.p[0][0] = 0.0;
        assert_eq!(request_latency(&s, &d, 0, 0).unwrap(), Latency::Unreachable);
        assert_eq!(objective(&s, &d).unwrap(), Latency::Unreachable);
        assert!(Latency::Unreachable > Latency::Finite(1e300));
    }

    #[test]
    fn request_errors() {
        let (s, d) = single_link();
        assert!(matches!(
            request_latency(&s, &d, 1, 0),
            Err(LatencyError::IndexOutOfRange { .. })
        ));
        let other = tiny_scenario(2, 1, 1);
        assert_eq!(request_latency(&other, &d, 0, 0), Err(LatencyError::Shape));
    }

    #[test]
    fn weighted_objective() {
        // U=1, N=2, q=(2/3, 1/3): local MV compute delays of 0.03 and 0.06 s.
        let mut s = tiny_scenario(1, 1, 2);
        s.viewpoints[0].popularity = 2.0 / 3.0;
        s.viewpoints[1].popularity = 1.0 / 3.0;
        s.hmd_cpu_hz = 1e9;
        s.viewpoints[0].mv_size_bits = 0.03e9 / 50.0;
        s.viewpoints[1].mv_size_bits = 0.06e9 / 50.0;
        let mut d = Decision::empty(&s);
        d.cache_hmd_mv.set(0, 0, true);
        d.cache_hmd_mv.set(1, 0, true);
        let obj = objective(&s, &d).unwrap().seconds();
        assert!(rel_eq(obj, 0.04), "{obj}");
        s.hmd_cpu_hz /= 2.0;
        assert!(rel_eq(objective(&s, &d).unwrap().seconds(), 0.08));
    }

    #[test]
    fn all_local_sv_is_zero() {
        let s = tiny_scenario(2, 3, 4);
        let mut d = Decision::empty(&s);
        for i in 0..4 {
            for u in 0..3 {
                d.cache_hmd_sv.set(i, u, true);
            }
        }
        assert_eq!(objective(&s, &d).unwrap(), Latency::Finite(0.0));
        assert_eq!(cache_hit_ratio(&s, &d), 1.0);
        let e = energy_usage(&s, &d);
        assert!(e.hmd.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn energy_examples() {
        let mut s = tiny_scenario(1, 1, 1);
        s.viewpoints[0].popularity = 1.0;
        s.viewpoints[0].mv_size_bits = 1e6;
        s.viewpoints[0].cycles_per_bit = 50.0;
        s.mes_energy_coeff = 1e-27;
        s.mes_cpu_hz = 1e10;
        let mut d = Decision::empty(&s);
        d.cache_mes_mv.set(0, 0, true);
        d.offload_mes.set(0, 0, 0, true);
        let e = energy_usage(&s, &d);
        assert!(rel_eq(e.mes[0], 5.0), "{}", e.mes[0]);
        assert_eq!(e.hmd[0], 0.0);

        s.viewpoints[0].popularity = 0.5;
        s.hmd_energy_coeff = 1e-27;
        s.hmd_cpu_hz = 2e9;
        let mut d = Decision::empty(&s);
        d.cache_hmd_mv.set(0, 0, true);
        let e = energy_usage(&s, &d);
        assert!(rel_eq(e.hmd[0], 0.1), "{}", e.hmd[0]);
        assert_eq!(e.mes[0], 0.0);

        d.cache_hmd_sv.set(0, 0, true);
        d.cache_mes_sv.set(0, 0, true);
        let e = energy_usage(&s, &d);
        assert_eq!((e.mes[0], e.hmd[0]), (0.0, 0.0));
    }

    #[test]
    fn hit_ratio_examples() {
        let mut s = tiny_scenario(1, 1, 3);
        for (v, q) in s.viewpoints.iter_mut().zip([0.5, 0.3, 0.2]) {
            v.popularity = q;
        }
        let mut d = Decision::empty(&s);
        d.cache_hmd_sv.set(0, 0, true);
        d.cache_mes_sv.set(1, 0, true);
        d.offload_mes.set(1, 0, 0, true);
        d.offload_cloud.set(2, 0, 0, true);
        assert!((cache_hit_ratio(&s, &d) - 0.8).abs() < 1e-12);

        let mut d = Decision::empty(&s);
        for i in 0..3 {
            d.offload_cloud.set(i, 0, 0, true);
        }
        assert_eq!(cache_hit_ratio(&s, &d), 0.0);
    }

    #[test]
    fn decision_json_round_trip() {
        let (s, mut d) = single_link();
        d.cache_mes_mv.set(0, 0, true);
        d.offload_mes.set(0, 0, 0, true);
        let text = d.to_json().unwrap();
        let back: Decision = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
        assert!(back.shape_matches(&s));
        let bad = text.replacen("1", "2", 1);
        assert!(serde_json::from_str::<Decision>(&bad).is_err());
    }
}
