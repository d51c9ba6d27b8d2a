use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::rt_e2::{Cqi, Rnti, Tti};

/// Spectral efficiency (bits per resource element) for CQI 1..=15, from the
/// LTE 4-bit CQI table.
pub const LTE_CQI_EFFICIENCY: [f64; 15] = [
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223, 3.9023,
    4.5234, 5.1152, 5.5547,
];

/// Data resource elements per RB per TTI.
pub const RE_PER_RB: f64 = 150.0;

/// Single multiplicative constant pinning CQI 15 on 50 RBs to 39 Mbps.
pub const CALIBRATION: f64 = 39e6 / (5.5547 * RE_PER_RB * 50.0 * 1000.0);

/// Bytes one RB carries in one TTI, indexed by CQI. Index 0 is unused.
pub type BytesPerRb = [u32; 16];

pub fn calibrated_bytes_per_rb() -> BytesPerRb {
    let mut t = [0u32; 16];
    for (i, eff) in LTE_CQI_EFFICIENCY.iter().enumerate() {
        t[i + 1] = (eff * RE_PER_RB / 8.0 * CALIBRATION).round() as u32;
    }
    t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    pub n_rbs: u32,
    pub queue_capacity_bytes: u64,
    /// A policy older than this many TTIs is ignored in favor of the
    /// fallback weights. 0 keeps the latest policy forever.
    pub stale_policy_ttis: Tti,
    /// Overrides the calibrated table: 15 entries for CQI 1..=15.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bytes_per_rb: Option<Vec<u32>>,
    /// Fallback weights; UEs without an entry weigh 1.
    #[serde(skip)]
    pub default_weights: BTreeMap<Rnti, f64>,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            n_rbs: 50,
            queue_capacity_bytes: 3_000_000,
            stale_policy_ttis: 100,
            bytes_per_rb: None,
            default_weights: BTreeMap::new(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CellError {
    #[error("n_rbs must be positive")]
    NoRbs,
    #[error("queue capacity must be positive")]
    NoQueue,
    #[error("bytes_per_rb needs 15 entries, found {0}")]
    TableLength(usize),
    #[error("bytes_per_rb must strictly increase with cqi (cqi {0})")]
    TableNotIncreasing(u8),
    #[error("fallback weight {weight} for rnti {rnti} is negative or not finite")]
    BadFallback { rnti: Rnti, weight: f64 },
}

impl CellConfig {
    pub fn table(&self) -> Result<BytesPerRb, CellError> {
        let t = match &self.bytes_per_rb {
            None => calibrated_bytes_per_rb(),
            Some(v) if v.len() != 15 => return Err(CellError::TableLength(v.len())),
            Some(v) => {
                let mut t = [0u32; 16];
                t[1..].copy_from_slice(v);
                t
            }
        };
        for c in 2..16 {
            if t[c] <= t[c - 1] {
                return Err(CellError::TableNotIncreasing(c as u8));
            }
        }
        if t[1] == 0 {
            return Err(CellError::TableNotIncreasing(1));
        }
        Ok(t)
    }

    pub fn validate(&self) -> Result<BytesPerRb, CellError> {
        if self.n_rbs == 0 {
            return Err(CellError::NoRbs);
        }
        if self.queue_capacity_bytes == 0 {
            return Err(CellError::NoQueue);
        }
        for (&rnti, &weight) in &self.default_weights {
            if !weight.is_finite() || weight < 0.0 {
                return Err(CellError::BadFallback { rnti, weight });
            }
        }
        self.table()
    }

    /// Cell throughput in bit/s with every RB at `cqi`.
    pub fn capacity_bps(&self, cqi: Cqi) -> Result<f64, CellError> {
        let t = self.table()?;
        Ok(t[cqi.get() as usize] as f64 * self.n_rbs as f64 * 8.0 * 1000.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_validated() {
        let mut c = CellConfig {
            bytes_per_rb: Some(vec![1; 3]),
            ..CellConfig::default()
        };
        assert_eq!(c.table(), Err(CellError::TableLength(3)));
        c.bytes_per_rb = Some((1..=15).collect());
        assert_eq!(c.table().unwrap()[15], 15);
        c.bytes_per_rb = Some((1..=15).map(|i| if i == 9 { 8 } else { i }).collect());
        assert_eq!(c.table(), Err(CellError::TableNotIncreasing(9)));
        c.bytes_per_rb = None;
        c.n_rbs = 0;
        assert_eq!(c.validate(), Err(CellError::NoRbs));
    }
}
