use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::Scenario;
use crate::radio::PowerAllocation;

/// Dense binary matrix; serialized as nested arrays of 0/1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.cols + c] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

}

impl Serialize for BitMatrix {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let nested: Vec<Vec<u8>> = self
            .bits
            .chunks(self.cols.max(1))
            .take(self.rows)
            .map(|r| r.iter().map(|&b| b as u8).collect())
            .collect();
        nested.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for BitMatrix {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let nested = Vec::<Vec<u8>>::deserialize(de)?;
        let rows = nested.len();
        let cols = nested.first().map_or(0, Vec::len);
        let mut bits = Vec::with_capacity(rows * cols);
        for row in &nested {
            if row.len() != cols {
                return Err(serde::de::Error::custom("ragged binary matrix"));
            }
            for &b in row {
                match b {
                    0 => bits.push(false),
                    1 => bits.push(true),
                    other => {
                        return Err(serde::de::Error::custom(format!(
                            "non-binary entry {other} in decision matrix"
                        )))
                    }
                }
            }
        }
        Ok(Self { rows, cols, bits })
    }
}

/// Dense binary tensor indexed `[viewpoint][sbs][hmd]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitTensor {
    dims: [usize; 3],
    bits: Vec<bool>,
}

impl BitTensor {
    pub fn zeros(n: usize, m: usize, u: usize) -> Self {
        Self {
            dims: [n, m, u],
            bits: vec![false; n * m * u],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    fn index(&self, i: usize, m: usize, u: usize) -> usize {
        (i * self.dims[1] + m) * self.dims[2] + u
    }

    #[inline]
    pub fn get(&self, i: usize, m: usize, u: usize) -> bool {
        self.bits[self.index(i, m, u)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, m: usize, u: usize, v: bool) {
        let k = self.index(i, m, u);
        self.bits[k] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

}

impl Serialize for BitTensor {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let [n, m, u] = self.dims;
        let nested: Vec<Vec<Vec<u8>>> = (0..n)
            .map(|i| {
                (0..m)
                    .map(|b| (0..u).map(|v| self.get(i, b, v) as u8).collect())
                    .collect()
            })
            .collect();
        nested.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for BitTensor {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let nested = Vec::<Vec<Vec<u8>>>::deserialize(de)?;
        let n = nested.len();
        let m = nested.first().map_or(0, Vec::len);
        let u = nested.first().and_then(|x| x.first()).map_or(0, Vec::len);
        let mut bits = Vec::with_capacity(n * m * u);
        for plane in &nested {
            if plane.len() != m {
                return Err(serde::de::Error::custom("ragged binary tensor"));
            }
            for row in plane {
                if row.len() != u {
                    return Err(serde::de::Error::custom("ragged binary tensor"));
                }
                for &b in row {
                    match b {
                        0 => bits.push(false),
                        1 => bits.push(true),
                        other => {
                            return Err(serde::de::Error::custom(format!(
                                "non-binary entry {other} in offload tensor"
                            )))
                        }
                    }
                }
            }
        }
        Ok(Self {
            dims: [n, m, u],
            bits,
        })
    }
}

/// One candidate solution: four cache placements, two offload tensors and
/// the transmit powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// MV of viewpoint `i` cached at MES `m` (`N x M`).
    pub cache_mes_mv: BitMatrix,
    /// SV of viewpoint `i` cached at MES `m` (`N x M`).
    pub cache_mes_sv: BitMatrix,
    /// MV cached at HMD `u` (`N x U`).
    pub cache_hmd_mv: BitMatrix,
    /// SV cached at HMD `u` (`N x U`).
    pub cache_hmd_sv: BitMatrix,
    /// Projection task of `(i, u)` offloaded to MES `m`.
    pub offload_mes: BitTensor,
    /// Viewpoint `i` for HMD `u` retrieved from the cloud via SBS `m`.
    pub offload_cloud: BitTensor,
    pub power: PowerAllocation,
}

impl Decision {
    pub fn empty(s: &Scenario) -> Self {
        let (n, m, u) = (s.viewpoint_count(), s.sbs_count, s.hmd_count);
        Self {
            cache_mes_mv: BitMatrix::zeros(n, m),
            cache_mes_sv: BitMatrix::zeros(n, m),
            cache_hmd_mv: BitMatrix::zeros(n, u),
            cache_hmd_sv: BitMatrix::zeros(n, u),
            offload_mes: BitTensor::zeros(n, m, u),
            offload_cloud: BitTensor::zeros(n, m, u),
            power: PowerAllocation::for_scenario(s),
        }
    }

    pub fn shape_matches(&self, s: &Scenario) -> bool {
        let (n, m, u) = (s.viewpoint_count(), s.sbs_count, s.hmd_count);
        self.cache_mes_mv.shape() == (n, m)
            && self.cache_mes_sv.shape() == (n, m)
            && self.cache_hmd_mv.shape() == (n, u)
            && self.cache_hmd_sv.shape() == (n, u)
            && self.offload_mes.shape() == [n, m, u]
            && self.offload_cloud.shape() == [n, m, u]
            && self.power.check_shape(s).is_ok()
    }

    /// True when `(i, u)` uses neither an MES nor the cloud.
    pub fn is_local(&self, i: usize, u: usize) -> bool {
        let sbs = self.offload_mes.shape()[1];
        (0..sbs).all(|m| !self.offload_mes.get(i, m, u) && !self.offload_cloud.get(i, m, u))
    }

    pub fn served_by_mes(&self, i: usize, u: usize) -> bool {
        let sbs = self.offload_mes.shape()[1];
        (0..sbs).any(|m| self.offload_mes.get(i, m, u))
    }


    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}
