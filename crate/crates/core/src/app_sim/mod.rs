//! Application traffic: CBR loaders and a DASH-style video client.

mod cbr;
mod video;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::rt_e2::{AppStateMsg, Tti};

pub use cbr::CbrSource;
pub use video::{VideoConfig, VideoConfigError, VideoSession, VideoStep};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficSpec {
    Cbr { rate_mbps: f64 },
    Video(VideoConfig),
    Idle,
}

impl TrafficSpec {
    pub fn cbr_bps(rate_bps: u64) -> Self {
        TrafficSpec::Cbr {
            rate_mbps: rate_bps as f64 / 1e6,
        }
    }
}

/// Per-UE traffic generator driven by the RAN loop.
#[derive(Clone, Debug)]
pub enum TrafficSource {
    Cbr(CbrSource),
    Video(Box<VideoSession>),
    Idle,
}

impl TrafficSource {
    /// Bytes entering the UE's downlink queue at the start of a TTI.
    pub fn arrivals(&mut self) -> u64 {
        match self {
            TrafficSource::Cbr(c) => c.arrivals(),
            TrafficSource::Video(v) => v.server_arrivals(),
            TrafficSource::Idle => 0,
        }
    }

    /// Hands the bytes served in this TTI to the application.
    pub fn on_delivered(&mut self, bytes: u64, tti: Tti) -> Option<VideoStep> {
        match self {
            TrafficSource::Video(v) => Some(v.step(bytes, tti)),
            _ => None,
        }
    }

    pub fn video(&self) -> Option<&VideoSession> {
        match self {
            TrafficSource::Video(v) => Some(v),
            _ => None,
        }
    }
}

/// Holds application state messages until they have spent `delay` TTIs on
/// the uplink.
#[derive(Clone, Debug, Default)]
pub struct UplinkDelay {
    delay: Tti,
    pending: VecDeque<AppStateMsg>,
}

impl UplinkDelay {
    pub fn new(delay: Tti) -> Self {
        UplinkDelay {
            delay,
            pending: VecDeque::new(),
        }
    }

    pub fn push(&mut self, msg: AppStateMsg) {
        self.pending.push_back(msg);
    }

    /// Moves every message emitted at or before `now - delay` into `out`, in
    /// emission order.
    pub fn release(&mut self, now: Tti, out: &mut Vec<AppStateMsg>) {
        while let Some(m) = self.pending.front() {
            if m.emitted_at + self.delay > now {
                break;
            }
            out.extend(self.pending.pop_front());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uplink_delay_releases_on_time() {
        let mut u = UplinkDelay::new(20);
        u.push(AppStateMsg::new(1, 0, 3.0).unwrap());
        u.push(AppStateMsg::new(1, 40, 2.5).unwrap());
        let mut out = Vec::new();
        u.release(19, &mut out);
        assert!(out.is_empty());
        u.release(20, &mut out);
        assert_eq!(out.len(), 1);
        u.release(59, &mut out);
        assert_eq!(out.len(), 1);
        u.release(60, &mut out);
        assert_eq!(out[1].emitted_at, 40);
    }

    #[test]
    fn traffic_spec_toml() {
        #[derive(Deserialize)]
        struct W {
            t: TrafficSpec,
        }
        let w: W = toml::from_str("t = { kind = \"cbr\", rate_mbps = 17.5 }").unwrap();
        assert_eq!(w.t, TrafficSpec::Cbr { rate_mbps: 17.5 });
        let w: W = toml::from_str("t = { kind = \"video\", bitrate_bps = 4000000 }").unwrap();
        let TrafficSpec::Video(v) = w.t else {
            panic!("expected video")
        };
        assert_eq!(v.bitrate_bps, 4_000_000);
        assert_eq!(v.fps, 24);
        let w: W = toml::from_str("t = { kind = \"idle\" }").unwrap();
        assert_eq!(w.t, TrafficSpec::Idle);
    }
}
