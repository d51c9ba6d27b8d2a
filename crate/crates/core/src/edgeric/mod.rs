//! The EdgeRIC runtime: a TTI-synchronized host for one scheduling policy,
//! plus the delay line that turns it into a distant RIC.

mod delay;
mod policies;

use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy_format::PolicyFileError;
use crate::rt_e2::{
    AppStateMsg, LinkError, MsgError, PolicyMsg, ReportMsg, RicEndpoint, SyncAction, SyncState,
};

pub use delay::{DelayLine, DelayLineConfig};
pub use policies::{
    encode_state, neural_state, weights_cqi_fair, weights_fixed_equal, weights_max_weight,
    weights_neural, weights_prop_fair, PolicyKind, Scheduler, UeAverages, Weights,
    DEFAULT_EWMA_ALPHA,
};

#[derive(Debug, Error)]
pub enum EdgeRicError {
    #[error("ewma alpha {0} is outside (0, 1]")]
    BadAlpha(f64),
    #[error("network serves {network} UEs but the report has {report}")]
    UeCount { network: usize, report: usize },
    #[error("policy network: {0}")]
    Network(PolicyFileError),
    #[error("policy message: {0}")]
    Msg(#[from] MsgError),
    #[error("link: {0}")]
    Link(#[from] LinkError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RicStats {
    pub reports: u64,
    pub decisions: u64,
    pub lazy_ran_events: u64,
    pub lazy_ric_events: u64,
    pub skipped_ttis: u64,
    pub swaps: u64,
    pub compute_ns_total: u64,
    pub compute_ns_max: u64,
}

/// Runs one policy per report, keeping RIC time in step with RAN time.
pub struct EdgeRic {
    scheduler: Scheduler,
    sync: SyncState,
    swaps: Option<mpsc::Receiver<Scheduler>>,
    slow_decision: Duration,
    timed: bool,
    stats: RicStats,
}

impl EdgeRic {
    pub fn new(scheduler: Scheduler) -> Self {
        EdgeRic {
            scheduler,
            sync: SyncState::new(),
            swaps: None,
            slow_decision: Duration::ZERO,
            timed: true,
            stats: RicStats::default(),
        }
    }

    /// Makes every decision take at least `d` of wall time.
    pub fn with_slow_decision(mut self, d: Duration) -> Self {
        self.slow_decision = d;
        self
    }

    /// Skips wall-clock measurement; the compute fields of the stats stay
    /// zero so that logical runs are reproducible.
    pub fn untimed(mut self) -> Self {
        self.timed = false;
        self
    }

    /// Channel for replacing the policy between TTIs. The newest scheduler
    /// sent takes over at the next report.
    pub fn swap_handle(&mut self) -> mpsc::Sender<Scheduler> {
        let (tx, rx) = mpsc::channel();
        self.swaps = Some(rx);
        tx
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn sync(&self) -> &SyncState {
        &self.sync
    }

    pub fn stats(&self) -> RicStats {
        RicStats {
            lazy_ran_events: self.sync.lazy_ran_events,
            lazy_ric_events: self.sync.lazy_ric_events,
            skipped_ttis: self.sync.skipped_ttis,
            ..self.stats
        }
    }

    /// Produces the policy answering `report`, or `None` while paused for
    /// the RAN to catch up.
    pub fn handle_report(
        &mut self,
        report: &ReportMsg,
        app_states: &[AppStateMsg],
    ) -> Result<Option<PolicyMsg>, EdgeRicError> {
        if let Some(rx) = &self.swaps {
            while let Ok(s) = rx.try_recv() {
                self.scheduler = s;
                self.stats.swaps += 1;
            }
        }
        self.stats.reports += 1;
        if self.sync.step(report.ran_time()) == SyncAction::PauseRic {
            return Ok(None);
        }
        let start = Instant::now();
        let weights = self.scheduler.decide(report, app_states)?;
        let msg = PolicyMsg::or_empty(report.ran_time(), weights)?;
        if self.timed {
            let ns = start.elapsed().as_nanos() as u64;
            self.stats.compute_ns_total += ns;
            self.stats.compute_ns_max = self.stats.compute_ns_max.max(ns);
        }
        if !self.slow_decision.is_zero() {
            std::thread::sleep(self.slow_decision.saturating_sub(start.elapsed()));
        }
        self.sync.complete();
        self.stats.decisions += 1;
        Ok(Some(msg))
    }
}

/// Blocking RIC loop: subscribe to a report, decide, publish. Returns when
/// the RAN closes the link.
pub fn ric_loop<E: RicEndpoint + ?Sized>(
    endpoint: &mut E,
    ric: &mut EdgeRic,
) -> Result<RicStats, EdgeRicError> {
    let mut app_states = Vec::new();
    loop {
        let report = match endpoint.recv_report() {
            Ok(r) => r,
            Err(LinkError::Closed) => break,
            Err(e) => return Err(e.into()),
        };
        app_states.clear();
        match endpoint.poll_app_states(&mut app_states) {
            Ok(()) | Err(LinkError::Closed) => {}
            Err(e) => return Err(e.into()),
        }
        if let Some(policy) = ric.handle_report(&report, &app_states)? {
            match endpoint.publish_policy(policy) {
                Ok(()) => {}
                Err(LinkError::Closed) => break,
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(ric.stats())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rt_e2::{Cqi, UeReport};

    fn report(t: u64, ues: &[(u32, u8, u64)]) -> ReportMsg {
        ReportMsg::new(
            t,
            ues.iter()
                .map(|&(rnti, cqi, backlog)| UeReport {
                    rnti,
                    cqi: Cqi::new(cqi).unwrap(),
                    backlog_bytes: backlog,
                    tx_bytes_last_tti: 0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ric_time_echoes_report() {
        let mut ric = EdgeRic::new(Scheduler::CqiFair);
        let p = ric
            .handle_report(&report(0, &[(1, 15, 5), (2, 1, 5)]), &[])
            .unwrap()
            .unwrap();
        assert_eq!(p.ric_time(), 0);
        assert_eq!(p.weight(1), Some(15.0));
        let p = ric
            .handle_report(&report(9, &[(1, 3, 5)]), &[])
            .unwrap()
            .unwrap();
        assert_eq!(p.ric_time(), 9);
        assert_eq!(ric.stats().lazy_ric_events, 1);
        assert_eq!(ric.stats().skipped_ttis, 8);
        assert!(ric
            .handle_report(&report(4, &[(1, 3, 5)]), &[])
            .unwrap()
            .is_none());
        assert_eq!(ric.stats().lazy_ran_events, 1);
    }

    #[test]
    fn idle_max_weight_sends_empty_policy() {
        let mut ric = EdgeRic::new(Scheduler::MaxWeight);
        let p = ric
            .handle_report(&report(0, &[(1, 15, 0), (2, 4, 0)]), &[])
            .unwrap()
            .unwrap();
        assert!(p.weights().is_empty());
    }

    #[test]
    fn hot_swap_between_reports() {
        let mut ric = EdgeRic::new(Scheduler::CqiFair);
        let tx = ric.swap_handle();
        let r = report(0, &[(1, 10, 100), (2, 5, 1)]);
        assert_eq!(
            ric.handle_report(&r, &[]).unwrap().unwrap().weight(1),
            Some(10.0)
        );
        tx.send(Scheduler::MaxWeight).unwrap();
        let r = report(1, &[(1, 10, 100), (2, 5, 1)]);
        assert_eq!(
            ric.handle_report(&r, &[]).unwrap().unwrap().weight(1),
            Some(1000.0)
        );
        assert_eq!(ric.scheduler().name(), "max_weight");
        assert_eq!(ric.stats().swaps, 1);
    }

    #[test]
    fn bad_alpha_rejected() {
        for alpha in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                Scheduler::from_kind(&PolicyKind::PropFair { alpha }, None),
                Err(EdgeRicError::BadAlpha(_))
            ));
        }
        assert!(Scheduler::from_kind(&PolicyKind::PropFair { alpha: 1.0 }, None).is_ok());
    }
}
