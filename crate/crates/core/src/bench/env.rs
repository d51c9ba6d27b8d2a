//! Training environment served as JSON lines over a Unix stream socket.
//!
//! Requests are objects tagged by `op`: `reset` (optional `seed`), `step`
//! (`weights`, one per UE in ascending rnti order), `info` and `close`. Every
//! reply carries `ok`; failed requests get `ok: false` and an `error` string
//! and leave the session usable.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use crate::app_sim::UplinkDelay;
use crate::edgeric::encode_state;
use crate::policy_format::{Normalization, StateLayout};
use crate::ran_emu::RanEmulator;
use crate::rt_e2::{PolicyMsg, Rnti, Tti};

use super::config::{ConfigError, ScenarioConfig};

/// Per-UE reward while the media buffer is below 2 s.
pub const STALL_RISK_REWARD: f64 = -20.0;
pub const SAFE_BUFFER_REWARD: f64 = 2.0;
pub const SAFE_BUFFER_S: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Throughput,
    Video,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Reset {
        #[serde(default)]
        seed: Option<u64>,
    },
    Step {
        weights: Vec<f64>,
    },
    Info,
    Close,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reply {
    Step {
        ok: bool,
        state: Vec<f64>,
        reward: f64,
        ran_time: Tti,
    },
    Reset {
        ok: bool,
        state: Vec<f64>,
        ran_time: Tti,
    },
    Info {
        ok: bool,
        task: Task,
        n_ues: usize,
        rntis: Vec<Rnti>,
        state_dim: usize,
        cqi_scale: f32,
        backlog_scale: f32,
        media_buffer_scale: f32,
    },
    Error {
        ok: bool,
        error: String,
    },
    Closed {
        ok: bool,
        closed: bool,
    },
}

impl Reply {
    fn error(msg: impl Into<String>) -> Self {
        Reply::Error {
            ok: false,
            error: msg.into(),
        }
    }
}

/// Total served throughput of one TTI in Mbps.
pub fn throughput_reward(served_bytes: u64) -> f64 {
    served_bytes as f64 * 8.0 / 1000.0
}

pub fn video_reward(media_buffers_s: &[f64]) -> f64 {
    media_buffers_s
        .iter()
        .map(|&mb| {
            if mb < SAFE_BUFFER_S {
                STALL_RISK_REWARD
            } else {
                SAFE_BUFFER_REWARD
            }
        })
        .sum()
}

/// One environment episode driver; transport-agnostic.
pub struct EnvSession {
    cfg: ScenarioConfig,
    task: Task,
    layout: StateLayout,
    norm: Normalization,
    ran: Option<RanEmulator>,
    uplink: UplinkDelay,
    media: BTreeMap<Rnti, f64>,
    released: Vec<crate::rt_e2::AppStateMsg>,
    steps: u64,
}

impl EnvSession {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let (task, layout) = if cfg.has_video() {
            (Task::Video, StateLayout::Video)
        } else {
            (Task::Throughput, StateLayout::Throughput)
        };
        let norm = Normalization::new(cfg.cell.queue_capacity_bytes as f32);
        let uplink = UplinkDelay::new(cfg.uplink_delay_ttis());
        Ok(EnvSession {
            cfg,
            task,
            layout,
            norm,
            ran: None,
            uplink,
            media: BTreeMap::new(),
            released: Vec::new(),
            steps: 0,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn normalization(&self) -> Normalization {
        self.norm
    }

    /// Steps taken since the last reset.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn emulator(&self) -> Option<&RanEmulator> {
        self.ran.as_ref()
    }

    fn state(&self, ran: &RanEmulator) -> Result<Vec<f64>, String> {
        let report = ran.snapshot_report().map_err(|e| e.to_string())?;
        let mut out = Vec::new();
        encode_state(&report, self.layout, &self.norm, &self.media, &mut out);
        Ok(out)
    }

    pub fn handle(&mut self, req: Request) -> Reply {
        match req {
            Request::Reset { seed } => self.reset(seed.unwrap_or(self.cfg.seed)),
            Request::Step { weights } => self.step(&weights),
            Request::Info => {
                let rntis: Vec<Rnti> = self.cfg.ues.iter().map(|u| u.rnti).collect();
                let mut sorted = rntis.clone();
                sorted.sort_unstable();
                Reply::Info {
                    ok: true,
                    task: self.task,
                    n_ues: sorted.len(),
                    state_dim: sorted.len() * self.layout.features_per_ue(),
                    rntis: sorted,
                    cqi_scale: self.norm.cqi_scale,
                    backlog_scale: self.norm.backlog_scale,
                    media_buffer_scale: self.norm.media_buffer_scale,
                }
            }
            Request::Close => Reply::Closed {
                ok: true,
                closed: true,
            },
        }
    }

    fn reset(&mut self, seed: u64) -> Reply {
        let ran = match self.cfg.build_emulator(seed) {
            Ok(r) => r,
            Err(e) => return Reply::error(e.to_string()),
        };
        self.uplink = UplinkDelay::new(self.cfg.uplink_delay_ttis());
        self.media.clear();
        self.steps = 0;
        let state = match self.state(&ran) {
            Ok(s) => s,
            Err(e) => return Reply::error(e),
        };
        self.ran = Some(ran);
        Reply::Reset {
            ok: true,
            state,
            ran_time: 0,
        }
    }

    fn step(&mut self, weights: &[f64]) -> Reply {
        let Some(mut ran) = self.ran.take() else {
            return Reply::error("step before reset");
        };
        let reply = self.step_with(&mut ran, weights);
        self.ran = Some(ran);
        reply
    }

    fn step_with(&mut self, ran: &mut RanEmulator, weights: &[f64]) -> Reply {
        let n = ran.ues().len();
        if weights.len() != n {
            return Reply::error(format!("expected {n} weights, got {}", weights.len()));
        }
        let map = ran.rntis().zip(weights.iter().copied()).collect();
        let policy = match PolicyMsg::or_empty(ran.tti(), map) {
            Ok(p) => p,
            Err(e) => return Reply::error(e.to_string()),
        };
        ran.deliver_policy(policy);
        if let Err(e) = ran.serve_tti() {
            return Reply::error(e.to_string());
        }
        let rec = ran.last_record();
        let t = rec.tti;
        let reward = match self.task {
            Task::Throughput => throughput_reward(rec.ues.iter().map(|u| u.served).sum()),
            Task::Video => {
                let mbs: Vec<f64> = ran
                    .ues()
                    .iter()
                    .filter_map(|u| u.traffic().video().map(|v| v.media_buffer_s()))
                    .collect();
                video_reward(&mbs)
            }
        };
        for u in &rec.ues {
            if let Some(a) = u.video.and_then(|v| v.app_state) {
                self.uplink.push(a);
            }
        }
        self.released.clear();
        self.uplink.release(t, &mut self.released);
        for a in &self.released {
            self.media.insert(a.rnti, a.media_buffer_s);
        }
        self.steps += 1;
        match self.state(ran) {
            Ok(state) => Reply::Step {
                ok: true,
                state,
                reward,
                ran_time: ran.tti(),
            },
            Err(e) => Reply::error(e),
        }
    }

    /// Handles one request line. Returns the reply line and whether the
    /// client asked to close.
    pub fn handle_line(&mut self, line: &str) -> (String, bool) {
        let reply = match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(req),
            Err(e) => Reply::error(format!("bad request: {e}")),
        };
        let close = matches!(reply, Reply::Closed { .. });
        let text = serde_json::to_string(&reply)
            .unwrap_or_else(|e| format!("{{\"ok\":false,\"error\":\"{e}\"}}"));
        (text, close)
    }

    /// Serves one connected client until it closes or disconnects.
    pub fn serve_stream(&mut self, stream: UnixStream) -> io::Result<()> {
        let mut writer = stream.try_clone()?;
        for line in BufReader::new(stream).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (reply, close) = self.handle_line(&line);
            writer.write_all(reply.as_bytes())?;
            writer.write_all(b"\n")?;
            if close {
                break;
            }
        }
        Ok(())
    }
}

/// Binds `path` and serves clients one after another. With `once`, returns
/// after the first client leaves.
pub fn serve(session: &mut EnvSession, path: &Path, once: bool) -> io::Result<()> {
    if path.exists() {
        std::fs::remove_file(path)?;
    }
    let listener = UnixListener::bind(path)?;
    info!(socket = %path.display(), "env endpoint listening");
    let result = (|| {
        for stream in listener.incoming() {
            let stream = stream?;
            debug!("env client connected");
            if let Err(e) = session.serve_stream(stream) {
                debug!(error = %e, "env client dropped");
            }
            if once {
                break;
            }
        }
        Ok(())
    })();
    let _ = std::fs::remove_file(path);
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn video_reward_table() {
        assert_eq!(video_reward(&[1.5, 5.0]), -18.0);
        assert_eq!(video_reward(&[2.0]), 2.0);
    }

    #[test]
    fn throughput_reward_is_mbps() {
        assert_eq!(throughput_reward(4875), 39.0);
    }
}
