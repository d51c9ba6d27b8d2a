use crate::app_sim::{TrafficSource, VideoStep};
use crate::channel_models::CqiSource;
use crate::rt_e2::{Cqi, MsgError, PolicyMsg, ReportMsg, Rnti, Tti, UeReport};

use super::alloc::Allocator;
use super::cell::{BytesPerRb, CellConfig, CellError};

#[derive(Debug, thiserror::Error)]
pub enum RanError {
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error("rnti {0} configured twice")]
    DuplicateRnti(Rnti),
    #[error("no UEs configured")]
    NoUes,
    #[error("report rejected: {0}")]
    Report(#[from] MsgError),
}

/// Emulator-side state of one UE.
#[derive(Clone, Debug)]
pub struct UeContext {
    pub rnti: Rnti,
    cqi_source: CqiSource,
    traffic: TrafficSource,
    queue_bytes: u64,
    capacity: u64,
    cqi_next: Cqi,
    cum_tx_bytes: u64,
    cum_arrival_bytes: u64,
    cum_dropped_bytes: u64,
    last_tti_tx: u64,
}

impl UeContext {
    pub fn new(rnti: Rnti, cqi_source: CqiSource, traffic: TrafficSource) -> Self {
        UeContext {
            rnti,
            cqi_source,
            traffic,
            queue_bytes: 0,
            capacity: 0,
            cqi_next: Cqi::saturating(1),
            cum_tx_bytes: 0,
            cum_arrival_bytes: 0,
            cum_dropped_bytes: 0,
            last_tti_tx: 0,
        }
    }

    pub fn backlog(&self) -> u64 {
        self.queue_bytes
    }

    pub fn cum_tx_bytes(&self) -> u64 {
        self.cum_tx_bytes
    }

    pub fn cum_arrival_bytes(&self) -> u64 {
        self.cum_arrival_bytes
    }

    pub fn cum_dropped_bytes(&self) -> u64 {
        self.cum_dropped_bytes
    }

    pub fn last_tti_tx(&self) -> u64 {
        self.last_tti_tx
    }

    pub fn traffic(&self) -> &TrafficSource {
        &self.traffic
    }
}

/// Where the weights applied in a TTI came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum WeightSource {
    /// No UE had backlog.
    Idle = 0,
    Policy = 1,
    Fallback = 2,
}

/// Per-UE outcome of one TTI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UeTti {
    pub rnti: Rnti,
    pub arrivals: u64,
    pub dropped: u64,
    pub served: u64,
    /// Queue length after service.
    pub backlog: u64,
    /// CQI in effect during the TTI.
    pub cqi: Cqi,
    pub rbs: u32,
    /// Raw weight applied; 0 for UEs without backlog.
    pub weight: f64,
    pub video: Option<VideoStep>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TtiRecord {
    pub tti: Tti,
    pub source: WeightSource,
    pub ues: Vec<UeTti>,
}

/// Latest policy seen by the RAN and when it arrived.
#[derive(Clone, Debug, Default)]
struct PolicyTracker {
    latest: Option<(PolicyMsg, Tti)>,
}

impl PolicyTracker {
    fn current(&self, now: Tti, stale_after: Tti) -> Option<&PolicyMsg> {
        let (msg, at) = self.latest.as_ref()?;
        if stale_after > 0 && now - at >= stale_after {
            return None;
        }
        Some(msg)
    }
}

/// The DigitalTwin cell: queues, CQI-dependent capacity and proportional RB
/// allocation, advanced one TTI per [`RanEmulator::serve_tti`] call.
///
/// The CQI carried in the report for TTI `t` is the value in effect during
/// `t + 1`, so a RIC without delay schedules with the CQI the RAN will use.
pub struct RanEmulator {
    cell: CellConfig,
    table: BytesPerRb,
    ues: Vec<UeContext>,
    fallback: Vec<f64>,
    tti: Tti,
    policy: PolicyTracker,
    allocator: Allocator,
    weights: Vec<f64>,
    rbs: Vec<u32>,
    record: TtiRecord,
}

impl RanEmulator {
    pub fn new(cell: CellConfig, mut ues: Vec<UeContext>) -> Result<Self, RanError> {
        let table = cell.validate()?;
        if ues.is_empty() {
            return Err(RanError::NoUes);
        }
        ues.sort_by_key(|u| u.rnti);
        if let Some(w) = ues.windows(2).find(|w| w[0].rnti == w[1].rnti) {
            return Err(RanError::DuplicateRnti(w[0].rnti));
        }
        for u in &mut ues {
            u.capacity = cell.queue_capacity_bytes;
            u.cqi_next = u.cqi_source.next_cqi(0);
        }
        let fallback = ues
            .iter()
            .map(|u| cell.default_weights.get(&u.rnti).copied().unwrap_or(1.0))
            .collect();
        let n = ues.len();
        Ok(RanEmulator {
            cell,
            table,
            ues,
            fallback,
            tti: 0,
            policy: PolicyTracker::default(),
            allocator: Allocator::default(),
            weights: vec![0.0; n],
            rbs: vec![0; n],
            record: TtiRecord {
                tti: 0,
                source: WeightSource::Idle,
                ues: Vec::with_capacity(n),
            },
        })
    }

    /// Next TTI to be served.
    pub fn tti(&self) -> Tti {
        self.tti
    }

    pub fn cell(&self) -> &CellConfig {
        &self.cell
    }

    pub fn bytes_per_rb(&self) -> &BytesPerRb {
        &self.table
    }

    pub fn ues(&self) -> &[UeContext] {
        &self.ues
    }

    pub fn rntis(&self) -> impl Iterator<Item = Rnti> + '_ {
        self.ues.iter().map(|u| u.rnti)
    }

    /// Installs a policy; it applies from the next served TTI on.
    pub fn deliver_policy(&mut self, msg: PolicyMsg) {
        self.policy.latest = Some((msg, self.tti));
    }

    /// Report of the current queue and CQI state without serving a TTI.
    pub fn snapshot_report(&self) -> Result<ReportMsg, RanError> {
        let ues = self
            .ues
            .iter()
            .map(|u| UeReport {
                rnti: u.rnti,
                cqi: u.cqi_next,
                backlog_bytes: u.queue_bytes,
                tx_bytes_last_tti: u.last_tti_tx,
            })
            .collect();
        Ok(ReportMsg::new(self.tti.saturating_sub(1), ues)?)
    }

    /// Outcome of the most recently served TTI.
    pub fn last_record(&self) -> &TtiRecord {
        &self.record
    }

    /// Serves one TTI and returns its report. Never waits on anything.
    pub fn serve_tti(&mut self) -> Result<ReportMsg, RanError> {
        let t = self.tti;
        let mut arrivals = Vec::with_capacity(self.ues.len());
        for u in &mut self.ues {
            let offered = u.traffic.arrivals();
            let accepted = offered.min(u.capacity - u.queue_bytes);
            u.queue_bytes += accepted;
            u.cum_arrival_bytes += accepted;
            u.cum_dropped_bytes += offered - accepted;
            arrivals.push((offered, accepted));
        }

        let mut source = WeightSource::Idle;
        if self.ues.iter().any(|u| u.queue_bytes > 0) {
            if let Some(p) = self.policy.current(t, self.cell.stale_policy_ttis) {
                for (w, u) in self.weights.iter_mut().zip(&self.ues) {
                    *w = if u.queue_bytes > 0 {
                        p.weight(u.rnti).unwrap_or(0.0)
                    } else {
                        0.0
                    };
                }
                if self
                    .allocator
                    .split(&self.weights, self.cell.n_rbs, &mut self.rbs)
                {
                    source = WeightSource::Policy;
                }
            }
            if source == WeightSource::Idle {
                for ((w, u), f) in self.weights.iter_mut().zip(&self.ues).zip(&self.fallback) {
                    *w = if u.queue_bytes > 0 { *f } else { 0.0 };
                }
                if !self
                    .allocator
                    .split(&self.weights, self.cell.n_rbs, &mut self.rbs)
                {
                    for (w, u) in self.weights.iter_mut().zip(&self.ues) {
                        *w = if u.queue_bytes > 0 { 1.0 } else { 0.0 };
                    }
                    self.allocator
                        .split(&self.weights, self.cell.n_rbs, &mut self.rbs);
                }
                source = WeightSource::Fallback;
            }
        } else {
            self.weights.fill(0.0);
            self.rbs.fill(0);
        }

        self.record.tti = t;
        self.record.source = source;
        self.record.ues.clear();
        let mut reports = Vec::with_capacity(self.ues.len());
        for (i, u) in self.ues.iter_mut().enumerate() {
            let cqi = u.cqi_next;
            let cap = self.rbs[i] as u64 * self.table[cqi.get() as usize] as u64;
            let served = u.queue_bytes.min(cap);
            u.queue_bytes -= served;
            u.cum_tx_bytes += served;
            u.last_tti_tx = served;
            let video = u.traffic.on_delivered(served, t);
            u.cqi_next = u.cqi_source.next_cqi(t + 1);
            let (offered, accepted) = arrivals[i];
            self.record.ues.push(UeTti {
                rnti: u.rnti,
                arrivals: accepted,
                dropped: offered - accepted,
                served,
                backlog: u.queue_bytes,
                cqi,
                rbs: self.rbs[i],
                weight: self.weights[i],
                video,
            });
            reports.push(UeReport {
                rnti: u.rnti,
                cqi: u.cqi_next,
                backlog_bytes: u.queue_bytes,
                tx_bytes_last_tti: served,
            });
        }
        self.tti += 1;
        Ok(ReportMsg::new(t, reports)?)
    }
}
