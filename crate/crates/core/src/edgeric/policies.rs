use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::policy_format::{softmax, Normalization, PolicyFileError, PolicyNetwork, StateLayout};
use crate::rt_e2::{AppStateMsg, ReportMsg, Rnti, Tti};

use super::EdgeRicError;

pub const DEFAULT_EWMA_ALPHA: f64 = 0.01;

fn default_alpha() -> f64 {
    DEFAULT_EWMA_ALPHA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyKind {
    CqiFair,
    PropFair {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    MaxWeight,
    Neural {
        path: PathBuf,
    },
    FixedEqual,
}

impl PolicyKind {
    pub fn validate(&self) -> Result<(), EdgeRicError> {
        if let PolicyKind::PropFair { alpha } = self {
            if !(*alpha > 0.0 && *alpha <= 1.0) {
                return Err(EdgeRicError::BadAlpha(*alpha));
            }
        }
        Ok(())
    }
}

pub type Weights = BTreeMap<Rnti, f64>;

pub fn weights_cqi_fair(report: &ReportMsg) -> Weights {
    report
        .ues()
        .iter()
        .map(|u| (u.rnti, u.cqi.get() as f64))
        .collect()
}

pub fn weights_max_weight(report: &ReportMsg) -> Weights {
    report
        .ues()
        .iter()
        .map(|u| (u.rnti, u.cqi.get() as f64 * u.backlog_bytes as f64))
        .collect()
}

pub fn weights_fixed_equal(report: &ReportMsg) -> Weights {
    report.ues().iter().map(|u| (u.rnti, 1.0)).collect()
}

/// EWMA of each UE's CQI. Values stay within `[1, 15]` once set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UeAverages {
    avg: BTreeMap<Rnti, f64>,
}

impl UeAverages {
    pub fn get(&self, rnti: Rnti) -> Option<f64> {
        self.avg.get(&rnti).copied()
    }

    pub fn set(&mut self, rnti: Rnti, avg: f64) {
        self.avg.insert(rnti, avg);
    }
}

/// Updates the averages with this report, then weighs each UE by
/// `cqi / avg_cqi`.
pub fn weights_prop_fair(report: &ReportMsg, avgs: &mut UeAverages, alpha: f64) -> Weights {
    report
        .ues()
        .iter()
        .map(|u| {
            let cqi = u.cqi.get() as f64;
            let avg = match avgs.avg.get(&u.rnti) {
                Some(&a) => (1.0 - alpha) * a + alpha * cqi,
                None => cqi,
            };
            avgs.avg.insert(u.rnti, avg);
            (u.rnti, cqi / avg)
        })
        .collect()
}

/// Normalized per-UE state in ascending rnti order: backlog, cqi, and for
/// the video layout the media buffer. A UE without app state gets 1.0 in
/// the media buffer slot.
pub fn neural_state(
    report: &ReportMsg,
    net: &PolicyNetwork,
    media_buffer_s: &BTreeMap<Rnti, f64>,
    out: &mut Vec<f64>,
) {
    encode_state(
        report,
        net.layout(),
        &net.normalization(),
        media_buffer_s,
        out,
    );
}

/// Normalized state vector in ascending rnti order. A UE without a media
/// buffer sample reads as a full-scale buffer.
pub fn encode_state(
    report: &ReportMsg,
    layout: StateLayout,
    norm: &Normalization,
    media_buffer_s: &BTreeMap<Rnti, f64>,
    out: &mut Vec<f64>,
) {
    out.clear();
    for u in report.ues() {
        out.push(u.backlog_bytes as f64 / norm.backlog_scale as f64);
        out.push(u.cqi.get() as f64 / norm.cqi_scale as f64);
        if layout == StateLayout::Video {
            out.push(match media_buffer_s.get(&u.rnti) {
                Some(mb) => mb / norm.media_buffer_scale as f64,
                None => 1.0,
            });
        }
    }
}

pub fn weights_neural(
    report: &ReportMsg,
    net: &PolicyNetwork,
    media_buffer_s: &BTreeMap<Rnti, f64>,
) -> Result<Weights, EdgeRicError> {
    if report.ues().len() != net.n_ues() {
        return Err(EdgeRicError::UeCount {
            network: net.n_ues(),
            report: report.ues().len(),
        });
    }
    let mut state = Vec::with_capacity(net.input_dim());
    neural_state(report, net, media_buffer_s, &mut state);
    let probs = softmax(&net.forward(&state)?);
    Ok(report.ues().iter().map(|u| u.rnti).zip(probs).collect())
}

/// A policy with the state it carries between TTIs.
#[derive(Clone, Debug)]
pub enum Scheduler {
    CqiFair,
    PropFair {
        alpha: f64,
        avgs: UeAverages,
    },
    MaxWeight,
    Neural {
        net: Arc<PolicyNetwork>,
        /// Latest media buffer per UE with its emission TTI.
        media: BTreeMap<Rnti, (Tti, f64)>,
        scratch: BTreeMap<Rnti, f64>,
    },
    FixedEqual,
}

impl Scheduler {
    /// Builds the scheduler; relative network paths resolve against
    /// `base_dir`.
    pub fn from_kind(kind: &PolicyKind, base_dir: Option<&Path>) -> Result<Self, EdgeRicError> {
        kind.validate()?;
        Ok(match kind {
            PolicyKind::CqiFair => Scheduler::CqiFair,
            PolicyKind::PropFair { alpha } => Scheduler::PropFair {
                alpha: *alpha,
                avgs: UeAverages::default(),
            },
            PolicyKind::MaxWeight => Scheduler::MaxWeight,
            PolicyKind::FixedEqual => Scheduler::FixedEqual,
            PolicyKind::Neural { path } => {
                let full = match base_dir {
                    Some(d) if path.is_relative() => d.join(path),
                    _ => path.clone(),
                };
                Scheduler::neural(Arc::new(PolicyNetwork::load(&full)?))
            }
        })
    }

    pub fn neural(net: Arc<PolicyNetwork>) -> Self {
        Scheduler::Neural {
            net,
            media: BTreeMap::new(),
            scratch: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheduler::CqiFair => "cqi_fair",
            Scheduler::PropFair { .. } => "prop_fair",
            Scheduler::MaxWeight => "max_weight",
            Scheduler::Neural { .. } => "neural",
            Scheduler::FixedEqual => "fixed_equal",
        }
    }

    pub fn decide(
        &mut self,
        report: &ReportMsg,
        app_states: &[AppStateMsg],
    ) -> Result<Weights, EdgeRicError> {
        Ok(match self {
            Scheduler::CqiFair => weights_cqi_fair(report),
            Scheduler::PropFair { alpha, avgs } => weights_prop_fair(report, avgs, *alpha),
            Scheduler::MaxWeight => weights_max_weight(report),
            Scheduler::FixedEqual => weights_fixed_equal(report),
            Scheduler::Neural {
                net,
                media,
                scratch,
            } => {
                for a in app_states {
                    let newer = media.get(&a.rnti).is_none_or(|&(t, _)| a.emitted_at >= t);
                    if newer {
                        media.insert(a.rnti, (a.emitted_at, a.media_buffer_s));
                    }
                }
                scratch.clear();
                scratch.extend(media.iter().map(|(&r, &(_, mb))| (r, mb)));
                weights_neural(report, net, scratch)?
            }
        })
    }
}

impl From<PolicyFileError> for EdgeRicError {
    fn from(e: PolicyFileError) -> Self {
        EdgeRicError::Network(e)
    }
}
