use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Virtual time in milliseconds since simulation start.
pub type SimTime = u64;

pub const MS_PER_S: u64 = 1000;

/// Node address. Address 0 is always the DODAG root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u16);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for NodeId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(NodeId)
    }
}

pub fn secs(s: f64) -> SimTime {
    (s * MS_PER_S as f64).round() as SimTime
}
