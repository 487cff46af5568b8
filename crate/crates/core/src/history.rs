use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::kinematics::{CameraPose, JointConfig};

pub const HISTORY_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub time: f64,
    pub q: JointConfig,
    pub pose: CameraPose,
}

/// The last few commanded configurations, newest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MotionHistory {
    entries: VecDeque<HistoryEntry>,
}

impl MotionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, q: JointConfig, pose: CameraPose) -> Result<()> {
        if let Some(last) = self.entries.front() {
            if !(time > last.time) {
                return Err(Error::invalid(format!(
                    "history timestamps must increase: {time} after {}",
                    last.time
                )));
            }
        }
        self.entries.push_front(HistoryEntry { time, q, pose });
        self.entries.truncate(HISTORY_DEPTH);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `k = 0` is the newest entry.
    pub fn get(&self, k: usize) -> Option<&HistoryEntry> {
        self.entries.get(k)
    }

    pub fn latest(&self) -> Option<&HistoryEntry> {
        self.entries.front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}
