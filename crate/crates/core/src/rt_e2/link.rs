use std::io;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use super::mailbox::{conflated, Closed, KeyedMailbox, Publisher, Received, Subscriber};
use super::msg::{AppStateMsg, PolicyMsg, ReportMsg, Rnti};
use super::wire::WireError;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("peer closed the link")]
    Closed,
    #[error("link i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed frame: {0}")]
    Wire(#[from] WireError),
    #[error("unexpected {0} frame on this side of the link")]
    Unexpected(&'static str),
}

impl From<Closed> for LinkError {
    fn from(_: Closed) -> Self {
        LinkError::Closed
    }
}

/// RAN side of the RT-E2 exchange. Nothing here may wait on the RIC except
/// [`RanEndpoint::wait_until`], which is bounded by the caller's deadline.
pub trait RanEndpoint {
    fn publish_report(&mut self, msg: ReportMsg) -> Result<(), LinkError>;

    fn publish_app_state(&mut self, msg: AppStateMsg) -> Result<(), LinkError>;

    /// Latest unread policy, or `None` right away.
    fn poll_policy(&mut self) -> Result<Option<Received<PolicyMsg>>, LinkError>;

    /// Idles until `deadline`, picking up policies as they arrive so their
    /// arrival instants are exact.
    fn wait_until(&mut self, deadline: Instant) -> Result<(), LinkError> {
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
        Ok(())
    }

    /// Tells the RIC that no further reports will come.
    fn close(&mut self) {}
}

/// RIC side of the RT-E2 exchange.
pub trait RicEndpoint {
    /// Blocks until a report is available and returns the newest one.
    fn recv_report(&mut self) -> Result<ReportMsg, LinkError>;

    fn try_recv_report(&mut self) -> Result<Option<ReportMsg>, LinkError>;

    /// Appends pending application state messages, newest per UE.
    fn poll_app_states(&mut self, out: &mut Vec<AppStateMsg>) -> Result<(), LinkError>;

    fn publish_policy(&mut self, msg: PolicyMsg) -> Result<(), LinkError>;
}

pub struct InProcRan {
    reports: Option<Publisher<ReportMsg>>,
    app_states: Arc<KeyedMailbox<Rnti, AppStateMsg>>,
    policies: Subscriber<PolicyMsg>,
    stash: Option<Received<PolicyMsg>>,
}

pub struct InProcRic {
    reports: Subscriber<ReportMsg>,
    app_states: Arc<KeyedMailbox<Rnti, AppStateMsg>>,
    policies: Publisher<PolicyMsg>,
}

/// Both ends of an in-process RT-E2 link.
pub fn in_process_link() -> (InProcRan, InProcRic) {
    let (report_tx, report_rx) = conflated();
    let (policy_tx, policy_rx) = conflated();
    let app_states = Arc::new(KeyedMailbox::default());
    (
        InProcRan {
            reports: Some(report_tx),
            app_states: app_states.clone(),
            policies: policy_rx,
            stash: None,
        },
        InProcRic {
            reports: report_rx,
            app_states,
            policies: policy_tx,
        },
    )
}

impl InProcRan {
    fn keep_newest(&mut self, r: Received<PolicyMsg>) {
        self.stash = Some(r);
    }
}

impl RanEndpoint for InProcRan {
    fn publish_report(&mut self, msg: ReportMsg) -> Result<(), LinkError> {
        match &self.reports {
            Some(tx) => Ok(tx.publish(msg)?),
            None => Err(LinkError::Closed),
        }
    }

    fn publish_app_state(&mut self, msg: AppStateMsg) -> Result<(), LinkError> {
        match &self.reports {
            Some(tx) if !tx.is_closed() => {
                self.app_states.publish(msg.rnti, msg);
                Ok(())
            }
            _ => Err(LinkError::Closed),
        }
    }

    fn poll_policy(&mut self) -> Result<Option<Received<PolicyMsg>>, LinkError> {
        match self.policies.try_recv() {
            Ok(Some(r)) => {
                self.stash = None;
                Ok(Some(r))
            }
            Ok(None) => Ok(self.stash.take()),
            Err(Closed) => match self.stash.take() {
                Some(r) => Ok(Some(r)),
                None => Err(LinkError::Closed),
            },
        }
    }

    fn wait_until(&mut self, deadline: Instant) -> Result<(), LinkError> {
        loop {
            match self.policies.recv_deadline(deadline) {
                Ok(Some(r)) => self.keep_newest(r),
                Ok(None) => return Ok(()),
                Err(Closed) => {
                    let now = Instant::now();
                    if deadline > now {
                        std::thread::sleep(deadline - now);
                    }
                    return Ok(());
                }
            }
        }
    }

    fn close(&mut self) {
        self.reports = None;
    }
}

impl RicEndpoint for InProcRic {
    fn recv_report(&mut self) -> Result<ReportMsg, LinkError> {
        Ok(self.reports.recv()?.msg)
    }

    fn try_recv_report(&mut self) -> Result<Option<ReportMsg>, LinkError> {
        Ok(self.reports.try_recv()?.map(|r| r.msg))
    }

    fn poll_app_states(&mut self, out: &mut Vec<AppStateMsg>) -> Result<(), LinkError> {
        self.app_states.drain_into(out);
        Ok(())
    }

    fn publish_policy(&mut self, msg: PolicyMsg) -> Result<(), LinkError> {
        Ok(self.policies.publish(msg)?)
    }
}
