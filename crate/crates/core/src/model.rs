//! Scenario world: small-cell base stations with co-located edge servers,
//! head-mounted displays, the viewpoint catalog and every physical constant.
//!
//! A [`Scenario`] is immutable once built. [`generate_scenario`] is a pure
//! function of `(ScenarioConfig, seed)`: geometry and viewpoint sizes are
//! drawn from independent ChaCha streams so that sweeping one count (for
//! example the number of SBSs) leaves the other draws untouched.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("viewpoint catalog is empty")]
    EmptyCatalog,
    #[error("zipf skewness must be non-negative, got {0}")]
    NegativeSkewness(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Distance-based channel gain `G0 * max(d, d0)^-beta`. No fading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub reference_gain: f64,
    pub reference_distance_m: f64,
    pub exponent: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        Self {
            reference_gain: 1e-3,
            reference_distance_m: 1.0,
            exponent: 3.5,
        }
    }
}

impl PathLoss {
    pub fn gain(&self, distance_m: f64) -> f64 {
        self.reference_gain * distance_m.max(self.reference_distance_m).powf(-self.exponent)
    }
}

/// Generation parameters. Every field is echoed into experiment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub sbs_count: usize,
    pub hmd_count: usize,
    pub viewpoint_count: usize,
    pub area_side_m: f64,
    pub size_min_bits: f64,
    pub size_max_bits: f64,
    pub cycles_per_bit: f64,
    pub zipf_lambda: f64,
    pub sv_ratio: f64,
    pub total_bandwidth_hz: f64,
    /// Overrides `total_bandwidth_hz / hmd_count` when set.
    pub bandwidth_per_hmd_hz: Option<f64>,
    pub noise_power_w: f64,
    pub orthogonality: f64,
    pub tx_power_dbm: f64,
    pub mes_cpu_hz: f64,
    pub hmd_cpu_hz: f64,
    pub mes_energy_coeff: f64,
    pub hmd_energy_coeff: f64,
    pub mes_cache_bits: f64,
    pub hmd_cache_bits: f64,
    pub mes_energy_budget_j: f64,
    pub hmd_energy_budget_j: f64,
    pub backhaul_delay_s: f64,
    pub path_loss: PathLoss,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ScenarioConfig {
    /// Small instance that JCPT can search meaningfully on one core.
    pub fn desk() -> Self {
        Self {
            sbs_count: 8,
            hmd_count: 12,
            viewpoint_count: 20,
            area_side_m: 100.0,
            size_min_bits: 1e6,
            size_max_bits: 3e6,
            cycles_per_bit: 50.0,
            zipf_lambda: 0.8,
            sv_ratio: 4.0,
            total_bandwidth_hz: 1e9,
            bandwidth_per_hmd_hz: None,
            noise_power_w: 1e-10,
            orthogonality: 0.5,
            tx_power_dbm: 30.0,
            mes_cpu_hz: 10e9,
            hmd_cpu_hz: 2e9,
            mes_energy_coeff: 1e-27,
            hmd_energy_coeff: 1e-27,
            mes_cache_bits: 24e6,
            hmd_cache_bits: 8e6,
            mes_energy_budget_j: 20.0,
            hmd_energy_budget_j: 1.0,
            backhaul_delay_s: 0.1,
            path_loss: PathLoss::default(),
        }
    }

    /// Full-size setting: 40 SBSs, 100 HMDs, 100 viewpoints of 10-30 Mb in
    /// a 100 m square, 30 dBm, 1 GHz downlink.
    pub fn full_scale() -> Self {
        Self {
            sbs_count: 40,
            hmd_count: 100,
            viewpoint_count: 100,
            size_min_bits: 10e6,
            size_max_bits: 30e6,
            mes_cache_bits: 200e6,
            hmd_cache_bits: 80e6,
            mes_energy_budget_j: 200.0,
            hmd_energy_budget_j: 10.0,
            ..Self::desk()
        }
    }

    pub fn total_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    pub fn bandwidth_per_hmd(&self) -> f64 {
        self.bandwidth_per_hmd_hz
            .unwrap_or(self.total_bandwidth_hz / self.hmd_count.max(1) as f64)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::Config(what.to_string()));
        if self.sbs_count == 0 || self.hmd_count == 0 {
            return bad("sbs_count and hmd_count must be at least 1");
        }
        if self.viewpoint_count == 0 {
            return Err(ModelError::EmptyCatalog);
        }
        if !(self.area_side_m > 0.0) {
            return bad("area_side_m must be positive");
        }
        if !(self.size_min_bits > 0.0) || !(self.size_max_bits >= self.size_min_bits) {
            return bad("viewpoint sizes must satisfy 0 < size_min_bits <= size_max_bits");
        }
        if self.zipf_lambda < 0.0 {
            return Err(ModelError::NegativeSkewness(self.zipf_lambda));
        }
        let positive = [
            ("cycles_per_bit", self.cycles_per_bit),
            ("total_bandwidth_hz", self.bandwidth_per_hmd()),
            ("noise_power_w", self.noise_power_w),
            ("mes_cpu_hz", self.mes_cpu_hz),
            ("hmd_cpu_hz", self.hmd_cpu_hz),
            ("mes_energy_coeff", self.mes_energy_coeff),
            ("hmd_energy_coeff", self.hmd_energy_coeff),
            ("path_loss.reference_gain", self.path_loss.reference_gain),
            ("path_loss.reference_distance_m", self.path_loss.reference_distance_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::Config(format!("{name} must be positive and finite")));
            }
        }
        let non_negative = [
            ("mes_cache_bits", self.mes_cache_bits),
            ("hmd_cache_bits", self.hmd_cache_bits),
            ("mes_energy_budget_j", self.mes_energy_budget_j),
            ("hmd_energy_budget_j", self.hmd_energy_budget_j),
            ("backhaul_delay_s", self.backhaul_delay_s),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ModelError::Config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// One deliverable content unit. `mv_size_bits` is the monocular size; the
/// stereoscopic version is `sv_ratio` times larger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub id: usize,
    pub mv_size_bits: f64,
    pub cycles_per_bit: f64,
    pub popularity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Where a scenario came from, kept alongside it for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: ScenarioConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub sbs_count: usize,
    pub hmd_count: usize,
    pub viewpoints: Vec<Viewpoint>,
    pub sv_ratio: f64,
    /// Linear power gain indexed `[sbs][hmd]`.
    pub channel_gain: Vec<Vec<f64>>,
    pub bandwidth_per_hmd_hz: f64,
    pub noise_power_w: f64,
    pub orthogonality: f64,
    pub total_power_w: f64,
    pub mes_cpu_hz: f64,
    pub hmd_cpu_hz: f64,
    pub mes_energy_coeff: f64,
    pub hmd_energy_coeff: f64,
    pub mes_cache_bits: f64,
    pub hmd_cache_bits: f64,
    pub mes_energy_budget_j: f64,
    pub hmd_energy_budget_j: f64,
    pub backhaul_delay_s: f64,
    pub sbs_positions: Vec<Position>,
    pub hmd_positions: Vec<Position>,
    pub provenance: Option<Provenance>,
}

impl Scenario {
    /// Builds a scenario from explicit positions, deriving gains from the
    /// configured path-loss law.
    pub fn from_geometry(
        config: &ScenarioConfig,
        sbs_positions: Vec<Position>,
        hmd_positions: Vec<Position>,
        mv_sizes: &[f64],
    ) -> Result<Self, ModelError> {
        config.check()?;
        if sbs_positions.is_empty() || hmd_positions.is_empty() {
            return Err(ModelError::Config("at least one SBS and one HMD required".into()));
        }
        let popularity = zipf_popularity(mv_sizes.len(), config.zipf_lambda)?;
        let viewpoints = mv_sizes
            .iter()
            .zip(&popularity)
            .enumerate()
            .map(|(id, (&mv_size_bits, &popularity))| Viewpoint {
                id,
                mv_size_bits,
                cycles_per_bit: config.cycles_per_bit,
                popularity,
            })
            .collect();
        let channel_gain = sbs_positions
            .iter()
            .map(|b| {
                hmd_positions
                    .iter()
                    .map(|h| config.path_loss.gain(b.distance(h)))
                    .collect()
            })
            .collect();
        Ok(Self {
            sbs_count: sbs_positions.len(),
            hmd_count: hmd_positions.len(),
            viewpoints,
            sv_ratio: config.sv_ratio,
            channel_gain,
            bandwidth_per_hmd_hz: config
                .bandwidth_per_hmd_hz
                .unwrap_or(config.total_bandwidth_hz / hmd_positions.len() as f64),
            noise_power_w: config.noise_power_w,
            orthogonality: config.orthogonality,
            total_power_w: config.total_power_w(),
            mes_cpu_hz: config.mes_cpu_hz,
            hmd_cpu_hz: config.hmd_cpu_hz,
            mes_energy_coeff: config.mes_energy_coeff,
            hmd_energy_coeff: config.hmd_energy_coeff,
            mes_cache_bits: config.mes_cache_bits,
            hmd_cache_bits: config.hmd_cache_bits,
            mes_energy_budget_j: config.mes_energy_budget_j,
            hmd_energy_budget_j: config.hmd_energy_budget_j,
            backhaul_delay_s: config.backhaul_delay_s,
            sbs_positions,
            hmd_positions,
            provenance: None,
        })
    }

    pub fn viewpoint_count(&self) -> usize {
        self.viewpoints.len()
    }

    pub fn gain(&self, m: usize, u: usize) -> f64 {
        self.channel_gain[m][u]
    }

    pub fn sv_size_bits(&self, i: usize) -> f64 {
        self.sv_ratio * self.viewpoints[i].mv_size_bits
    }

    /// Projection workload `d_i * w_i` in CPU cycles.
    pub fn workload_cycles(&self, i: usize) -> f64 {
        let v = &self.viewpoints[i];
        v.mv_size_bits * v.cycles_per_bit
    }

    pub fn mes_compute_delay(&self, i: usize) -> f64 {
        self.workload_cycles(i) / self.mes_cpu_hz
    }

    pub fn hmd_compute_delay(&self, i: usize) -> f64 {
        self.workload_cycles(i) / self.hmd_cpu_hz
    }

    /// `k_M f_M^2 d_i w_i`
    pub fn mes_compute_energy(&self, i: usize) -> f64 {
        self.mes_energy_coeff * self.mes_cpu_hz * self.mes_cpu_hz * self.workload_cycles(i)
    }

    /// `k_V f_V^2 d_i w_i`
    pub fn hmd_compute_energy(&self, i: usize) -> f64 {
        self.hmd_energy_coeff * self.hmd_cpu_hz * self.hmd_cpu_hz * self.workload_cycles(i)
    }

    /// SBS indices sorted by Euclidean distance to `u` (ties by index).
    pub fn sbs_by_distance(&self, u: usize) -> Vec<usize> {
        let hmd = &self.hmd_positions[u];
        let mut order: Vec<usize> = (0..self.sbs_count).collect();
        order.sort_by(|&a, &b| {
            let da = self.sbs_positions[a].distance(hmd);
            let db = self.sbs_positions[b].distance(hmd);
            da.total_cmp(&db).then(a.cmp(&b))
        });
        order
    }

    pub fn nearest_sbs(&self, u: usize) -> usize {
        self.sbs_by_distance(u)[0]
    }

    /// Viewpoint indices by decreasing popularity, ties by index.
    pub fn popularity_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.viewpoint_count()).collect();
        order.sort_by(|&a, &b| {
            self.viewpoints[b]
                .popularity
                .total_cmp(&self.viewpoints[a].popularity)
                .then(a.cmp(&b))
        });
        order
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Zipf request probabilities `q_i = i^-lambda / sum_j j^-lambda`, `i = 1..=n`.
pub fn zipf_popularity(n: usize, lambda: f64) -> Result<Vec<f64>, ModelError> {
    if n == 0 {
        return Err(ModelError::EmptyCatalog);
    }
    if !(lambda >= 0.0) {
        return Err(ModelError::NegativeSkewness(lambda));
    }
    let weights: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-lambda)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

const SBS_STREAM: u64 = 1;
const HMD_STREAM: u64 = 2;
const SIZE_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario, ModelError> {
    config.check()?;
    let side = config.area_side_m;
    let place = |count: usize, id: u64| {
        let mut rng = stream(seed, id);
        (0..count)
            .map(|_| Position {
                x: rng.gen::<f64>() * side,
                y: rng.gen::<f64>() * side,
            })
            .collect::<Vec<_>>()
    };
    let sbs = place(config.sbs_count, SBS_STREAM);
    let hmd = place(config.hmd_count, HMD_STREAM);
    let mut rng = stream(seed, SIZE_STREAM);
    let span = config.size_max_bits - config.size_min_bits;
    let sizes: Vec<f64> = (0..config.viewpoint_count)
        .map(|_| config.size_min_bits + rng.gen::<f64>() * span)
        .collect();
    let mut scenario = Scenario::from_geometry(config, sbs, hmd, &sizes)?;
    scenario.provenance = Some(Provenance {
        config: config.clone(),
        seed,
    });
    Ok(scenario)
}

/// One failed scenario invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |field: &str, message: String| {
        out.push(Violation {
            field: field.to_string(),
            message,
        })
    };

    if !(s.sv_ratio > 2.0) {
        flag("sv_ratio", format!("sv_ratio must exceed 2, got {}", s.sv_ratio));
    }
    if !(0.0..=1.0).contains(&s.orthogonality) {
        flag(
            "orthogonality",
            format!("orthogonality must lie in [0, 1], got {}", s.orthogonality),
        );
    }
    if s.sbs_count == 0 || s.hmd_count == 0 {
        flag("sbs_count", "sbs_count and hmd_count must be at least 1".into());
    }
    if s.channel_gain.len() != s.sbs_count
        || s.channel_gain.iter().any(|row| row.len() != s.hmd_count)
    {
        flag(
            "channel_gain",
            format!("channel_gain must be {}x{}", s.sbs_count, s.hmd_count),
        );
    } else if s
        .channel_gain
        .iter()
        .flatten()
        .any(|&h| !(h > 0.0) || !h.is_finite())
    {
        flag("channel_gain", "every channel gain must be positive and finite".into());
    }
    let strictly_positive = [
        ("bandwidth_per_hmd_hz", s.bandwidth_per_hmd_hz),
        ("noise_power_w", s.noise_power_w),
        ("total_power_w", s.total_power_w),
        ("mes_cpu_hz", s.mes_cpu_hz),
        ("hmd_cpu_hz", s.hmd_cpu_hz),
        ("mes_energy_coeff", s.mes_energy_coeff),
        ("hmd_energy_coeff", s.hmd_energy_coeff),
    ];
    for (name, v) in strictly_positive {
        if !(v > 0.0) || !v.is_finite() {
            flag(name, format!("{name} must be positive and finite, got {v}"));
        }
    }
    let non_negative = [
        ("mes_cache_bits", s.mes_cache_bits),
        ("hmd_cache_bits", s.hmd_cache_bits),
        ("mes_energy_budget_j", s.mes_energy_budget_j),
        ("hmd_energy_budget_j", s.hmd_energy_budget_j),
        ("backhaul_delay_s", s.backhaul_delay_s),
    ];
    for (name, v) in non_negative {
        if !(v >= 0.0) || !v.is_finite() {
            flag(name, format!("{name} must be non-negative, got {v}"));
        }
    }
    if s.viewpoints.is_empty() {
        flag("viewpoints", "catalog must contain at least one viewpoint".into());
    }
    for v in &s.viewpoints {
        if !(v.mv_size_bits > 0.0) {
            flag("viewpoints.mv_size_bits", format!("viewpoint {} has non-positive size", v.id));
        }
        if !(v.cycles_per_bit > 0.0) {
            flag(
                "viewpoints.cycles_per_bit",
                format!("viewpoint {} has non-positive cycles per bit", v.id),
            );
        }
        if !(v.popularity > 0.0 && v.popularity <= 1.0) {
            flag(
                "viewpoints.popularity",
                format!("viewpoint {} popularity must lie in (0, 1]", v.id),
            );
        }
    }
    let total: f64 = s.viewpoints.iter().map(|v| v.popularity).sum();
    if !s.viewpoints.is_empty() && (total - 1.0).abs() > 1e-9 {
        flag("viewpoints.popularity", format!("popularities sum to {total}, expected 1"));
    }
    out
}
