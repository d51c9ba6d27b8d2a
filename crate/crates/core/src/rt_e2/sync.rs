use super::msg::Tti;

/// Resolution of one observed report against the RIC's TTI counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyncAction {
    /// RAN and RIC agree on the current TTI.
    Proceed,
    /// Lazy RAN: the report is older than the RIC's clock. The RIC holds
    /// until a report with `ran_time == ric_time` shows up.
    PauseRic,
    /// Lazy RIC: the RIC fell behind and jumped its clock to the report.
    FastForwardRic,
}

/// TTI bookkeeping on the RIC side.
///
/// `ric_time` is the TTI the RIC expects to act on next. It moves forward by
/// one when a decision completes ([`SyncState::complete`]) and jumps forward
/// when a newer report reveals that TTIs went by unanswered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SyncState {
    pub ran_time: Tti,
    pub ric_time: Tti,
    pub lazy_ran_events: u64,
    pub lazy_ric_events: u64,
    /// TTIs jumped over by fast-forwards.
    pub skipped_ttis: u64,
}

impl SyncState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&mut self, observed_ran_time: Tti) -> SyncAction {
        self.ran_time = self.ran_time.max(observed_ran_time);
        if observed_ran_time < self.ric_time {
            self.lazy_ran_events += 1;
            SyncAction::PauseRic
        } else if observed_ran_time > self.ric_time {
            self.lazy_ric_events += 1;
            self.skipped_ttis += observed_ran_time - self.ric_time;
            self.ric_time = observed_ran_time;
            SyncAction::FastForwardRic
        } else {
            SyncAction::Proceed
        }
    }

    /// Marks the decision for `ric_time` as published.
    pub fn complete(&mut self) {
        self.ric_time += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(ric_time: Tti) -> SyncState {
        SyncState {
            ric_time,
            ..SyncState::default()
        }
    }

    #[test]
    fn in_sync_proceeds() {
        let mut s = at(5);
        assert_eq!(s.step(5), SyncAction::Proceed);
        assert_eq!(s.ric_time, 5);
    }

    #[test]
    fn lazy_ran_pauses() {
        let mut s = at(8);
        assert_eq!(s.step(3), SyncAction::PauseRic);
        assert_eq!((s.ric_time, s.lazy_ran_events), (8, 1));
    }

    #[test]
    fn lazy_ric_fast_forwards() {
        let mut s = at(3);
        assert_eq!(s.step(9), SyncAction::FastForwardRic);
        assert_eq!((s.ric_time, s.lazy_ric_events, s.skipped_ttis), (9, 1, 6));
    }

    #[test]
    fn complete_advances() {
        let mut s = at(0);
        for t in 0..10 {
            assert_eq!(s.step(t), SyncAction::Proceed);
            s.complete();
        }
        assert_eq!(s.lazy_ric_events + s.lazy_ran_events, 0);
    }
}
