use serde::{Deserialize, Serialize};

use crate::time::SimTime;

/// Per-block stage durations in simulated microseconds. The stamps are
/// clamped into order before differencing, so `total_us` is the exact sum
/// of the three stages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    /// Proposal created until this replica accepted the pre-prepare.
    pub pre_prepare_us: u64,
    /// Pre-prepare accepted until a prepare quorum was seen.
    pub prepare_us: u64,
    /// Prepared until a commit quorum was seen.
    pub commit_us: u64,
    pub total_us: u64,
}

impl LatencyBreakdown {
    pub fn from_stamps(proposed: SimTime, pre_prepared: SimTime, prepared: SimTime, committed: SimTime) -> Self {
        let proposed = proposed.min(pre_prepared);
        let prepared = prepared.max(pre_prepared);
        let committed = committed.max(prepared);
        LatencyBreakdown {
            pre_prepare_us: (pre_prepared - proposed).micros(),
            prepare_us: (prepared - pre_prepared).micros(),
            commit_us: (committed - prepared).micros(),
            total_us: (committed - proposed).micros(),
        }
    }

    pub fn stages(&self) -> [u64; 3] {
        [self.pre_prepare_us, self.prepare_us, self.commit_us]
    }

    pub fn is_exact(&self) -> bool {
        self.stages().iter().sum::<u64>() == self.total_us
    }
}
