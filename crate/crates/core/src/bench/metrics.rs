use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::edgeric::RicStats;
use crate::ran_emu::{TtiRecord, WeightSource};
use crate::rt_e2::{Rnti, Tti};

use super::config::RunMode;

pub const SERIES_MAGIC: [u8; 4] = *b"RWMS";
pub const SERIES_VERSION: u16 = 1;
/// Bytes per UE per TTI in `series.bin`.
pub const SAMPLE_LEN: usize = 4 + 4 + 1 + 2 + 4 + 4 + 1;

/// Per-UE values of one TTI.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UeSample {
    pub served: u32,
    pub backlog: u32,
    pub cqi: u8,
    pub rbs: u16,
    pub weight: f32,
    pub dropped: u32,
    pub stalled: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediaSample {
    pub tti: Tti,
    pub rnti: Rnti,
    pub media_buffer_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    StallStart,
    StallEnd,
    DropsBegin,
    DropsEnd,
    FallbackBegin,
    FallbackEnd,
    RicLost,
}

impl EventKind {
    fn as_str(self) -> &'static str {
        match self {
            EventKind::StallStart => "stall_start",
            EventKind::StallEnd => "stall_end",
            EventKind::DropsBegin => "drops_begin",
            EventKind::DropsEnd => "drops_end",
            EventKind::FallbackBegin => "fallback_begin",
            EventKind::FallbackEnd => "fallback_end",
            EventKind::RicLost => "ric_lost",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub tti: Tti,
    pub kind: EventKind,
    pub rnti: Option<Rnti>,
}

/// Counters of the RAN/RIC exchange.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncCounters {
    /// TTIs in which no new policy reached the RAN.
    pub ran_lazy_ric_ttis: u64,
    pub policies_applied: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ric: Option<RicStats>,
}

/// Wall-clock measurements of a realtime run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub ttis: u64,
    pub overruns: u64,
    pub max_lateness_us: f64,
    pub rtt_samples: u64,
    pub rtt_median_us: f64,
    pub rtt_p99_us: f64,
    pub rtt_max_us: f64,
    /// Policies that reached the RAN before the end of the TTI of their
    /// report, over all reports published.
    pub decisions_in_tti: u64,
    pub reports_published: u64,
    pub in_tti_fraction: f64,
    pub tti_compute_p99_us: f64,
    pub dropped_sends: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeSummary {
    pub rnti: Rnti,
    pub avg_throughput_mbps: f64,
    pub mean_backlog_mb: f64,
    pub max_backlog_bytes: u64,
    pub stall_s: f64,
    pub dropped_bytes: u64,
}

/// Whole-run figures, all derived from the per-TTI series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub duration_ttis: Tti,
    pub n_ues: usize,
    pub avg_throughput_mbps: f64,
    pub mean_total_backlog_mb: f64,
    pub max_total_backlog_bytes: u64,
    pub stall_total_s: f64,
    pub dropped_bytes: u64,
    pub policy_ttis: u64,
    pub fallback_ttis: u64,
    pub idle_ttis: u64,
    pub per_ue: Vec<UeSummary>,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub name: String,
    pub seed: u64,
    pub mode: RunMode,
    pub policy: String,
    pub delay_ttis: Tti,
    pub summary: Summary,
    pub sync: SyncCounters,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsLog {
    pub name: String,
    pub seed: u64,
    pub mode: RunMode,
    pub policy: String,
    pub delay_ttis: Tti,
    pub rntis: Vec<Rnti>,
    /// `n_ttis * rntis.len()` samples, TTI-major.
    pub samples: Vec<UeSample>,
    /// One [`WeightSource`] tag per TTI.
    pub sources: Vec<u8>,
    pub media: Vec<MediaSample>,
    pub events: Vec<Event>,
    pub sync: SyncCounters,
    pub timing: Option<TimingStats>,
    dropping: Vec<bool>,
    in_fallback: bool,
}

fn sat32(v: u64) -> u32 {
    v.min(u32::MAX as u64) as u32
}

impl MetricsLog {
    pub fn new(name: &str, seed: u64, mode: RunMode, rntis: Vec<Rnti>) -> Self {
        let n = rntis.len();
        MetricsLog {
            name: name.to_string(),
            seed,
            mode,
            policy: String::new(),
            delay_ttis: 0,
            rntis,
            samples: Vec::new(),
            sources: Vec::new(),
            media: Vec::new(),
            events: Vec::new(),
            sync: SyncCounters::default(),
            timing: None,
            dropping: vec![false; n],
            in_fallback: false,
        }
    }

    pub fn reserve(&mut self, ttis: usize) {
        self.samples.reserve(ttis * self.rntis.len());
        self.sources.reserve(ttis);
    }

    pub fn n_ttis(&self) -> usize {
        self.sources.len()
    }

    pub fn tti_samples(&self, tti: usize) -> &[UeSample] {
        let n = self.rntis.len();
        &self.samples[tti * n..(tti + 1) * n]
    }

    pub fn record(&mut self, rec: &TtiRecord) {
        let t = rec.tti;
        let fallback = rec.source == WeightSource::Fallback;
        if fallback != self.in_fallback {
            self.in_fallback = fallback;
            self.events.push(Event {
                tti: t,
                kind: if fallback {
                    EventKind::FallbackBegin
                } else {
                    EventKind::FallbackEnd
                },
                rnti: None,
            });
        }
        self.sources.push(rec.source as u8);
        for (i, u) in rec.ues.iter().enumerate() {
            if let Some(v) = &u.video {
                if v.stall_started {
                    self.events.push(Event {
                        tti: t,
                        kind: EventKind::StallStart,
                        rnti: Some(u.rnti),
                    });
                }
                if v.stall_ended {
                    self.events.push(Event {
                        tti: t,
                        kind: EventKind::StallEnd,
                        rnti: Some(u.rnti),
                    });
                }
                if let Some(a) = v.app_state {
                    self.media.push(MediaSample {
                        tti: t,
                        rnti: u.rnti,
                        media_buffer_s: a.media_buffer_s,
                    });
                }
            }
            let dropping = u.dropped > 0;
            if dropping != self.dropping[i] {
                self.dropping[i] = dropping;
                self.events.push(Event {
                    tti: t,
                    kind: if dropping {
                        EventKind::DropsBegin
                    } else {
                        EventKind::DropsEnd
                    },
                    rnti: Some(u.rnti),
                });
            }
            let stalled = u.video.is_some_and(|v| v.stalled) as u8;
            self.samples.push(UeSample {
                served: sat32(u.served),
                backlog: sat32(u.backlog),
                cqi: u.cqi.get(),
                rbs: u.rbs.min(u16::MAX as u32) as u16,
                weight: u.weight as f32,
                dropped: sat32(u.dropped),
                stalled,
            });
        }
    }

    pub fn push_event(&mut self, tti: Tti, kind: EventKind, rnti: Option<Rnti>) {
        self.events.push(Event { tti, kind, rnti });
    }

    pub fn summarize(&self) -> Summary {
        let n = self.rntis.len();
        let t = self.n_ttis();
        let secs = t as f64 / 1000.0;
        let mut served = vec![0u64; n];
        let mut backlog_sum = vec![0u64; n];
        let mut backlog_max = vec![0u64; n];
        let mut stall = vec![0u64; n];
        let mut dropped = vec![0u64; n];
        let mut max_total = 0u64;
        let mut total_backlog_sum = 0u64;
        for k in 0..t {
            let mut total = 0u64;
            for (i, s) in self.tti_samples(k).iter().enumerate() {
                served[i] += s.served as u64;
                backlog_sum[i] += s.backlog as u64;
                backlog_max[i] = backlog_max[i].max(s.backlog as u64);
                stall[i] += s.stalled as u64;
                dropped[i] += s.dropped as u64;
                total += s.backlog as u64;
            }
            total_backlog_sum += total;
            max_total = max_total.max(total);
        }
        let count =
            |src: WeightSource| self.sources.iter().filter(|&&s| s == src as u8).count() as u64;
        let mbps = |bytes: u64| {
            if t == 0 {
                0.0
            } else {
                bytes as f64 * 8.0 / secs / 1e6
            }
        };
        let mean_mb = |sum: u64| {
            if t == 0 {
                0.0
            } else {
                sum as f64 / t as f64 / 1e6
            }
        };
        Summary {
            duration_ttis: t as Tti,
            n_ues: n,
            avg_throughput_mbps: mbps(served.iter().sum()),
            mean_total_backlog_mb: mean_mb(total_backlog_sum),
            max_total_backlog_bytes: max_total,
            stall_total_s: stall.iter().sum::<u64>() as f64 / 1000.0,
            dropped_bytes: dropped.iter().sum(),
            policy_ttis: count(WeightSource::Policy),
            fallback_ttis: count(WeightSource::Fallback),
            idle_ttis: count(WeightSource::Idle),
            per_ue: (0..n)
                .map(|i| UeSummary {
                    rnti: self.rntis[i],
                    avg_throughput_mbps: mbps(served[i]),
                    mean_backlog_mb: mean_mb(backlog_sum[i]),
                    max_backlog_bytes: backlog_max[i],
                    stall_s: stall[i] as f64 / 1000.0,
                    dropped_bytes: dropped[i],
                })
                .collect(),
        }
    }

    pub fn summary_file(&self) -> SummaryFile {
        SummaryFile {
            name: self.name.clone(),
            seed: self.seed,
            mode: self.mode,
            policy: self.policy.clone(),
            delay_ttis: self.delay_ttis,
            summary: self.summarize(),
            sync: self.sync,
        }
    }

    /// Mbps per UE and in total over consecutive 1000-TTI windows.
    pub fn throughput_windows(&self) -> Vec<(usize, Vec<f64>, f64)> {
        let n = self.rntis.len();
        (0..self.n_ttis())
            .step_by(1000)
            .map(|start| {
                let end = (start + 1000).min(self.n_ttis());
                let secs = (end - start) as f64 / 1000.0;
                let mut per = vec![0u64; n];
                for k in start..end {
                    for (i, s) in self.tti_samples(k).iter().enumerate() {
                        per[i] += s.served as u64;
                    }
                }
                let total = per.iter().sum::<u64>() as f64 * 8.0 / secs / 1e6;
                let mbps = per.iter().map(|&b| b as f64 * 8.0 / secs / 1e6).collect();
                (start / 1000, mbps, total)
            })
            .collect()
    }

    pub fn series_bin(&self) -> Vec<u8> {
        let n = self.rntis.len();
        let mut b = Vec::with_capacity(22 + 4 * n + self.n_ttis() * (1 + n * SAMPLE_LEN));
        b.extend_from_slice(&SERIES_MAGIC);
        b.extend_from_slice(&SERIES_VERSION.to_le_bytes());
        b.extend_from_slice(&(n as u32).to_le_bytes());
        b.extend_from_slice(&(self.n_ttis() as u64).to_le_bytes());
        for r in &self.rntis {
            b.extend_from_slice(&r.to_le_bytes());
        }
        for k in 0..self.n_ttis() {
            b.push(self.sources[k]);
            for s in self.tti_samples(k) {
                b.extend_from_slice(&s.served.to_le_bytes());
                b.extend_from_slice(&s.backlog.to_le_bytes());
                b.push(s.cqi);
                b.extend_from_slice(&s.rbs.to_le_bytes());
                b.extend_from_slice(&s.weight.to_le_bytes());
                b.extend_from_slice(&s.dropped.to_le_bytes());
                b.push(s.stalled);
            }
        }
        b
    }

    /// Rebuilds the series part of a log from `series.bin` bytes.
    pub fn from_series_bin(bytes: &[u8]) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut pos = 0usize;
        let mut take = |n: usize| -> io::Result<&[u8]> {
            let s = bytes
                .get(pos..pos + n)
                .ok_or_else(|| bad("series.bin truncated"))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != SERIES_MAGIC {
            return Err(bad("series.bin: bad magic"));
        }
        if u16::from_le_bytes(take(2)?.try_into().unwrap()) != SERIES_VERSION {
            return Err(bad("series.bin: unsupported version"));
        }
        let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let t = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut rntis = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            rntis.push(u32::from_le_bytes(take(4)?.try_into().unwrap()));
        }
        let mut log = MetricsLog::new("", 0, RunMode::Logical, rntis);
        for _ in 0..t {
            log.sources.push(take(1)?[0]);
            for _ in 0..n {
                let s = take(SAMPLE_LEN)?;
                log.samples.push(UeSample {
                    served: u32::from_le_bytes(s[0..4].try_into().unwrap()),
                    backlog: u32::from_le_bytes(s[4..8].try_into().unwrap()),
                    cqi: s[8],
                    rbs: u16::from_le_bytes(s[9..11].try_into().unwrap()),
                    weight: f32::from_le_bytes(s[11..15].try_into().unwrap()),
                    dropped: u32::from_le_bytes(s[15..19].try_into().unwrap()),
                    stalled: s[19],
                });
            }
        }
        if pos != bytes.len() {
            return Err(bad("series.bin: trailing bytes"));
        }
        Ok(log)
    }

    pub fn series_csv(&self) -> String {
        let mut s = String::from(
            "tti,rnti,served_bytes,backlog_bytes,cqi,rbs,weight,dropped_bytes,stalled,source\n",
        );
        for k in 0..self.n_ttis() {
            let src = self.sources[k];
            for (i, u) in self.tti_samples(k).iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{k},{},{},{},{},{},{},{},{},{src}",
                    self.rntis[i],
                    u.served,
                    u.backlog,
                    u.cqi,
                    u.rbs,
                    u.weight,
                    u.dropped,
                    u.stalled
                );
            }
        }
        s
    }

    pub fn events_csv(&self) -> String {
        let mut s = String::from("tti,event,rnti\n");
        for e in &self.events {
            let rnti = e.rnti.map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{rnti}", e.tti, e.kind.as_str());
        }
        s
    }

    pub fn media_csv(&self) -> String {
        let mut s = String::from("tti,rnti,media_buffer_s\n");
        for m in &self.media {
            let _ = writeln!(s, "{},{},{}", m.tti, m.rnti, m.media_buffer_s);
        }
        s
    }

    pub fn throughput_csv(&self) -> String {
        let mut s = String::from("second");
        for r in &self.rntis {
            let _ = write!(s, ",ue_{r}_mbps");
        }
        s.push_str(",total_mbps\n");
        for (sec, per, total) in self.throughput_windows() {
            let _ = write!(s, "{sec}");
            for v in per {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{total}");
        }
        s
    }

    /// Writes every output file into `dir`, creating it if needed.
    pub fn write_all(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("series.csv"), self.series_csv())?;
        fs::write(dir.join("series.bin"), self.series_bin())?;
        fs::write(dir.join("events.csv"), self.events_csv())?;
        fs::write(dir.join("media.csv"), self.media_csv())?;
        fs::write(dir.join("throughput_1s.csv"), self.throughput_csv())?;
        let summary = serde_json::to_string_pretty(&self.summary_file())
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        fs::write(dir.join("summary.json"), summary + "\n")?;
        if let Some(t) = &self.timing {
            let timing = serde_json::to_string_pretty(t)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            fs::write(dir.join("timing.json"), timing + "\n")?;
        }
        Ok(())
    }
}

pub fn read_summary(dir: &Path) -> io::Result<SummaryFile> {
    let text = fs::read_to_string(dir.join("summary.json"))?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
