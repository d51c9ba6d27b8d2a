use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// TTI counter. One TTI is one millisecond of logical time.
pub type Tti = u64;

/// Radio network temporary identifier of a UE.
pub type Rnti = u32;

/// Channel quality indicator, always within `1..=15`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cqi(u8);

impl Cqi {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 15;

    pub const fn new(value: u8) -> Option<Self> {
        if value >= Self::MIN && value <= Self::MAX {
            Some(Cqi(value))
        } else {
            None
        }
    }

    /// Clamps any integer into the valid CQI range.
    pub fn saturating(value: i64) -> Self {
        Cqi(value.clamp(Self::MIN as i64, Self::MAX as i64) as u8)
    }

    pub const fn get(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Cqi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MsgError {
    #[error("rnti {0} appears more than once")]
    DuplicateRnti(Rnti),
    #[error("cqi {cqi} for rnti {rnti} is outside 1..=15")]
    CqiOutOfRange { rnti: Rnti, cqi: u8 },
    #[error("weight {weight} for rnti {rnti} is negative or not finite")]
    InvalidWeight { rnti: Rnti, weight: f64 },
    #[error("policy for {0} UEs has no positive weight")]
    AllWeightsZero(usize),
    #[error("media buffer {0} s is negative or not finite")]
    InvalidMediaBuffer(f64),
}

/// Per-UE slice of a [`ReportMsg`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UeReport {
    pub rnti: Rnti,
    pub cqi: Cqi,
    pub backlog_bytes: u64,
    pub tx_bytes_last_tti: u64,
}

/// RAN to RIC state snapshot, published once per TTI.
///
/// UEs are kept sorted by ascending rnti; every consumer that builds a
/// positional state vector relies on that order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportMsg {
    ran_time: Tti,
    ues: Vec<UeReport>,
}

impl ReportMsg {
    pub fn new(ran_time: Tti, mut ues: Vec<UeReport>) -> Result<Self, MsgError> {
        ues.sort_by_key(|u| u.rnti);
        if let Some(w) = ues.windows(2).find(|w| w[0].rnti == w[1].rnti) {
            return Err(MsgError::DuplicateRnti(w[0].rnti));
        }
        Ok(ReportMsg { ran_time, ues })
    }

    pub fn ran_time(&self) -> Tti {
        self.ran_time
    }

    pub fn ues(&self) -> &[UeReport] {
        &self.ues
    }

    pub fn ue(&self, rnti: Rnti) -> Option<&UeReport> {
        self.ues
            .binary_search_by_key(&rnti, |u| u.rnti)
            .ok()
            .map(|i| &self.ues[i])
    }
}

/// RIC to RAN control message carrying one scheduling weight per UE.
///
/// `ric_time` echoes the `ran_time` of the report the weights were computed
/// from. An empty weight map means "no preference" and makes the RAN use its
/// fallback weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyMsg {
    ric_time: Tti,
    weights: BTreeMap<Rnti, f64>,
}

impl PolicyMsg {
    pub fn new(ric_time: Tti, weights: BTreeMap<Rnti, f64>) -> Result<Self, MsgError> {
        for (&rnti, &weight) in &weights {
            if !weight.is_finite() || weight < 0.0 {
                return Err(MsgError::InvalidWeight { rnti, weight });
            }
        }
        if !weights.is_empty() && weights.values().all(|&w| w == 0.0) {
            return Err(MsgError::AllWeightsZero(weights.len()));
        }
        Ok(PolicyMsg { ric_time, weights })
    }

    /// Builds a policy, replacing an all-zero weight map by an empty one.
    pub fn or_empty(ric_time: Tti, weights: BTreeMap<Rnti, f64>) -> Result<Self, MsgError> {
        if weights.values().all(|&w| w == 0.0) {
            return Self::new(ric_time, BTreeMap::new());
        }
        Self::new(ric_time, weights)
    }

    pub fn ric_time(&self) -> Tti {
        self.ric_time
    }

    pub fn weights(&self) -> &BTreeMap<Rnti, f64> {
        &self.weights
    }

    pub fn weight(&self, rnti: Rnti) -> Option<f64> {
        self.weights.get(&rnti).copied()
    }
}

/// Application-level state published by a streaming client.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AppStateMsg {
    pub rnti: Rnti,
    /// TTI at which the client emitted the sample.
    pub emitted_at: Tti,
    pub media_buffer_s: f64,
}

impl AppStateMsg {
    pub fn new(rnti: Rnti, emitted_at: Tti, media_buffer_s: f64) -> Result<Self, MsgError> {
        if !media_buffer_s.is_finite() || media_buffer_s < 0.0 {
            return Err(MsgError::InvalidMediaBuffer(media_buffer_s));
        }
        Ok(AppStateMsg {
            rnti,
            emitted_at,
            media_buffer_s,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ue(rnti: Rnti, cqi: u8) -> UeReport {
        UeReport {
            rnti,
            cqi: Cqi::new(cqi).unwrap(),
            backlog_bytes: 0,
            tx_bytes_last_tti: 0,
        }
    }

    #[test]
    fn cqi_range() {
        assert!(Cqi::new(0).is_none());
        assert!(Cqi::new(16).is_none());
        assert_eq!(Cqi::new(15).unwrap().get(), 15);
        assert_eq!(Cqi::saturating(-3).get(), 1);
        assert_eq!(Cqi::saturating(40).get(), 15);
    }

    #[test]
    fn report_sorted_and_unique() {
        let r = ReportMsg::new(3, vec![ue(9, 4), ue(2, 7)]).unwrap();
        assert_eq!(r.ues()[0].rnti, 2);
        assert_eq!(r.ue(9).unwrap().cqi.get(), 4);
        assert!(r.ue(5).is_none());
        assert_eq!(
            ReportMsg::new(0, vec![ue(1, 1), ue(1, 2)]),
            Err(MsgError::DuplicateRnti(1))
        );
    }

    #[test]
    fn policy_validation() {
        let w = |v: &[(Rnti, f64)]| v.iter().copied().collect::<BTreeMap<_, _>>();
        assert!(PolicyMsg::new(0, w(&[(1, 0.0), (2, 3.0)])).is_ok());
        assert!(PolicyMsg::new(0, w(&[])).is_ok());
        assert_eq!(
            PolicyMsg::new(0, w(&[(1, 0.0), (2, 0.0)])),
            Err(MsgError::AllWeightsZero(2))
        );
        assert!(matches!(
            PolicyMsg::new(0, w(&[(1, -1.0)])),
            Err(MsgError::InvalidWeight { rnti: 1, .. })
        ));
        assert!(PolicyMsg::new(0, w(&[(1, f64::NAN)])).is_err());
        let p = PolicyMsg::or_empty(4, w(&[(1, 0.0)])).unwrap();
        assert!(p.weights().is_empty());
    }
}
