use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::rt_e2::{PolicyMsg, ReportMsg, Tti};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayLineConfig {
    /// Applied to reports and policies alike. 0 is an edge placement.
    pub one_way_delay_ttis: Tti,
}

/// RAN-side shim that holds reports and policies for a fixed number of TTIs
/// in each direction.
///
/// Report `t` is handed to the RIC when report `t + d` is published. A
/// policy arriving at TTI `a` is released at TTI `a + d`.
#[derive(Clone, Debug, Default)]
pub struct DelayLine {
    delay: Tti,
    reports: VecDeque<ReportMsg>,
    policies: VecDeque<(Tti, PolicyMsg)>,
}

impl DelayLine {
    pub fn new(cfg: DelayLineConfig) -> Self {
        DelayLine {
            delay: cfg.one_way_delay_ttis,
            reports: VecDeque::new(),
            policies: VecDeque::new(),
        }
    }

    pub fn delay(&self) -> Tti {
        self.delay
    }

    /// Queues a freshly published report; returns the report that becomes
    /// visible to the RIC now, if any.
    pub fn push_report(&mut self, report: ReportMsg) -> Option<ReportMsg> {
        if self.delay == 0 {
            return Some(report);
        }
        let now = report.ran_time();
        self.reports.push_back(report);
        let mut out = None;
        while let Some(r) = self.reports.front() {
            if r.ran_time() + self.delay > now {
                break;
            }
            out = self.reports.pop_front();
        }
        out
    }

    pub fn push_policy(&mut self, msg: PolicyMsg, arrived_at: Tti) {
        self.policies.push_back((arrived_at + self.delay, msg));
    }

    /// Newest policy due at or before `now`; older due policies are
    /// superseded.
    pub fn pop_policy(&mut self, now: Tti) -> Option<PolicyMsg> {
        let mut out = None;
        while let Some((due, _)) = self.policies.front() {
            if *due > now {
                break;
            }
            out = self.policies.pop_front().map(|(_, m)| m);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn report(t: Tti) -> ReportMsg {
        ReportMsg::new(t, vec![]).unwrap()
    }

    fn policy(t: Tti) -> PolicyMsg {
        PolicyMsg::new(t, BTreeMap::new()).unwrap()
    }

    #[test]
    fn zero_delay_passes_through() {
        let mut d = DelayLine::new(DelayLineConfig::default());
        assert_eq!(d.push_report(report(4)).unwrap().ran_time(), 4);
        d.push_policy(policy(4), 5);
        assert!(d.pop_policy(4).is_none());
        assert_eq!(d.pop_policy(5).unwrap().ric_time(), 4);
    }

    #[test]
    fn report_visible_after_delay() {
        let mut d = DelayLine::new(DelayLineConfig {
            one_way_delay_ttis: 15,
        });
        for t in 0..15 {
            assert!(d.push_report(report(t)).is_none());
        }
        assert_eq!(d.push_report(report(15)).unwrap().ran_time(), 0);
        assert_eq!(d.push_report(report(16)).unwrap().ran_time(), 1);
    }

    #[test]
    fn policies_released_in_order() {
        let mut d = DelayLine::new(DelayLineConfig {
            one_way_delay_ttis: 3,
        });
        d.push_policy(policy(1), 10);
        d.push_policy(policy(2), 11);
        assert!(d.pop_policy(12).is_none());
        assert_eq!(d.pop_policy(13).unwrap().ric_time(), 1);
        assert_eq!(d.pop_policy(20).unwrap().ric_time(), 2);
        assert!(d.pop_policy(30).is_none());
    }
}
