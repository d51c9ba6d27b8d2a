use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rt_e2::{AppStateMsg, Rnti, Tti};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoConfig {
    pub bitrate_bps: u64,
    pub segment_s: u64,
    pub buffer_cap_s: u64,
    pub fps: u64,
    pub stall_threshold_s: u64,
    /// Client-side media buffer sampling period.
    pub emit_period_ttis: Tti,
    pub uplink_delay_ttis: Tti,
}

impl Default for VideoConfig {
    fn default() -> Self {
        VideoConfig {
            bitrate_bps: 6_000_000,
            segment_s: 2,
            buffer_cap_s: 6,
            fps: 24,
            stall_threshold_s: 2,
            emit_period_ttis: 40,
            uplink_delay_ttis: 20,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VideoConfigError {
    #[error("video {0} must be positive")]
    Zero(&'static str),
    #[error("buffer cap {cap} s cannot hold one {segment} s segment")]
    CapBelowSegment { cap: u64, segment: u64 },
    #[error("fps {0} exceeds one frame per TTI")]
    FpsTooHigh(u64),
}

impl VideoConfig {
    pub fn validate(&self) -> Result<(), VideoConfigError> {
        for (name, v) in [
            ("bitrate_bps", self.bitrate_bps),
            ("segment_s", self.segment_s),
            ("buffer_cap_s", self.buffer_cap_s),
            ("fps", self.fps),
            ("emit_period_ttis", self.emit_period_ttis),
        ] {
            if v == 0 {
                return Err(VideoConfigError::Zero(name));
            }
        }
        if self.buffer_cap_s < self.segment_s {
            return Err(VideoConfigError::CapBelowSegment {
                cap: self.buffer_cap_s,
                segment: self.segment_s,
            });
        }
        if self.fps > 1000 {
            return Err(VideoConfigError::FpsTooHigh(self.fps));
        }
        Ok(())
    }

    pub fn segment_bytes(&self) -> u64 {
        self.bitrate_bps * self.segment_s / 8
    }
}

/// What happened to a session during one TTI.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VideoStep {
    pub app_state: Option<AppStateMsg>,
    pub stall_started: bool,
    pub stall_ended: bool,
    pub segment_completed: bool,
    /// Stall state at the end of the TTI.
    pub stalled: bool,
}

/// DASH-style client plus its constant-bitrate segment server.
///
/// The buffer is counted in whole frames. Playout starts once the buffer
/// exceeds the stall threshold and consumes one frame at the start of each
/// frame slot of a playout clock that only runs while playing and not
/// stalled. One segment is in flight at a time and is requested when it
/// fits under the buffer cap.
#[derive(Clone, Debug)]
pub struct VideoSession {
    cfg: VideoConfig,
    rnti: Rnti,
    segment_frames: u64,
    cap_frames: u64,
    threshold_frames: u64,
    segment_bytes: u64,
    buffer_frames: u64,
    in_flight: u64,
    to_enqueue: u64,
    playing: bool,
    stall_active: bool,
    playout_ttis: u64,
    frames_played: u64,
    stall_ttis: u64,
    stall_start: Option<Tti>,
    stalls: Vec<(Tti, Tti)>,
    segments_completed: u64,
    bytes_delivered: u64,
}

impl VideoSession {
    /// Session starting with an empty buffer and its first segment requested.
    pub fn new(rnti: Rnti, cfg: VideoConfig) -> Result<Self, VideoConfigError> {
        cfg.validate()?;
        let mut s = VideoSession {
            rnti,
            segment_frames: cfg.segment_s * cfg.fps,
            cap_frames: cfg.buffer_cap_s * cfg.fps,
            threshold_frames: cfg.stall_threshold_s * cfg.fps,
            segment_bytes: cfg.segment_bytes(),
            cfg,
            buffer_frames: 0,
            in_flight: 0,
            to_enqueue: 0,
            playing: false,
            stall_active: false,
            playout_ttis: 0,
            frames_played: 0,
            stall_ttis: 0,
            stall_start: None,
            stalls: Vec::new(),
            segments_completed: 0,
            bytes_delivered: 0,
        };
        s.maybe_request();
        Ok(s)
    }

    /// Session already playing with `buffer_s` seconds buffered.
    pub fn with_buffer(
        rnti: Rnti,
        cfg: VideoConfig,
        buffer_s: u64,
    ) -> Result<Self, VideoConfigError> {
        let mut s = Self::new(rnti, cfg)?;
        s.in_flight = 0;
        s.to_enqueue = 0;
        s.buffer_frames = (buffer_s * s.cfg.fps).min(s.cap_frames);
        s.playing = s.buffer_frames > s.threshold_frames;
        s.maybe_request();
        Ok(s)
    }

    fn maybe_request(&mut self) {
        if self.in_flight == 0 && self.buffer_frames + self.segment_frames <= self.cap_frames {
            self.in_flight = self.segment_bytes;
            self.to_enqueue = self.segment_bytes;
        }
    }

    /// Bytes the server pushes into the downlink queue this TTI.
    pub fn server_arrivals(&mut self) -> u64 {
        std::mem::take(&mut self.to_enqueue)
    }

    /// Advances the client by one TTI after `delivered` bytes reached it.
    pub fn step(&mut self, delivered: u64, tti: Tti) -> VideoStep {
        let mut out = VideoStep::default();
        let delivered = delivered.min(self.in_flight);
        self.bytes_delivered += delivered;
        if delivered > 0 {
            self.in_flight -= delivered;
            if self.in_flight == 0 {
                out.segment_completed = true;
                self.segments_completed += 1;
                self.buffer_frames =
                    (self.buffer_frames + self.segment_frames).min(self.cap_frames);
                if self.stall_active && self.buffer_frames > self.threshold_frames {
                    self.stall_active = false;
                    let start = self.stall_start.take().unwrap_or(tti);
                    self.stalls.push((start, tti));
                    out.stall_ended = true;
                }
                if !self.playing && self.buffer_frames > self.threshold_frames {
                    self.playing = true;
                }
            }
        }

        if self.playing && !self.stall_active {
            // frame k is consumed at playout time k / fps
            let due = self.playout_ttis * self.cfg.fps / 1000 + 1;
            self.playout_ttis += 1;
            if self.frames_played < due {
                self.frames_played += 1;
                self.buffer_frames = self.buffer_frames.saturating_sub(1);
                if self.buffer_frames < self.threshold_frames {
                    self.stall_active = true;
                    self.stall_start = Some(tti);
                    out.stall_started = true;
                }
            }
        }
        if self.stall_active {
            self.stall_ttis += 1;
        }
        out.stalled = self.stall_active;

        self.maybe_request();

        if tti.is_multiple_of(self.cfg.emit_period_ttis) {
            out.app_state = Some(AppStateMsg {
                rnti: self.rnti,
                emitted_at: tti,
                media_buffer_s: self.media_buffer_s(),
            });
        }
        out
    }

    pub fn config(&self) -> &VideoConfig {
        &self.cfg
    }

    pub fn media_buffer_s(&self) -> f64 {
        self.buffer_frames as f64 / self.cfg.fps as f64
    }

    pub fn buffer_frames(&self) -> u64 {
        self.buffer_frames
    }

    pub fn is_playing(&self) -> bool {
        self.playing
    }

    pub fn is_stalled(&self) -> bool {
        self.stall_active
    }

    pub fn frames_played(&self) -> u64 {
        self.frames_played
    }

    pub fn stall_total_ttis(&self) -> u64 {
        self.stall_ttis
    }

    pub fn stall_total_s(&self) -> f64 {
        self.stall_ttis as f64 / 1000.0
    }

    /// Completed stalls as `[start, end)` TTI ranges.
    pub fn stalls(&self) -> &[(Tti, Tti)] {
        &self.stalls
    }

    pub fn open_stall_start(&self) -> Option<Tti> {
        self.stall_start
    }

    pub fn segments_completed(&self) -> u64 {
        self.segments_completed
    }

    pub fn bytes_delivered(&self) -> u64 {
        self.bytes_delivered
    }

    pub fn segment_bytes(&self) -> u64 {
        self.segment_bytes
    }

    /// Bytes of the in-flight segment not yet delivered.
    pub fn in_flight_bytes(&self) -> u64 {
        self.in_flight
    }
}
