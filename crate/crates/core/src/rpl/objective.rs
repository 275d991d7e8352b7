//! Rank computation and preferred-parent choice.

use serde::{Deserialize, Serialize};

use crate::types::NodeId;

pub type Rank = u16;

pub const INFINITE_RANK: Rank = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveFunction {
    /// ETX-scaled rank increase with parent-switch hysteresis.
    #[default]
    MrhofEtx,
    /// Fixed rank increase, lowest advertised rank wins.
    Of0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankParams {
    pub root_rank: Rank,
    /// Per-hop increase at ETX 1 under MRHOF.
    pub min_hop_rank_increase: Rank,
    pub of0_rank_increase: Rank,
    pub hysteresis: Rank,
}

impl Default for RankParams {
    fn default() -> Self {
        Self { root_rank: 128, min_hop_rank_increase: 128, of0_rank_increase: 256, hysteresis: 192 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: NodeId,
    /// Advertised rank.
    pub rank: Rank,
    pub etx: f64,
}

impl ObjectiveFunction {
    pub fn rank_increase(self, params: &RankParams, etx: f64) -> Rank {
        match self {
            ObjectiveFunction::MrhofEtx => {
                let inc = (params.min_hop_rank_increase as f64 * etx.max(1.0)).round();
                inc.min(INFINITE_RANK as f64) as Rank
            }
            ObjectiveFunction::Of0 => params.of0_rank_increase,
        }
    }

    pub fn path_cost(self, params: &RankParams, c: &Candidate) -> Rank {
        c.rank.saturating_add(self.rank_increase(params, c.etx))
    }

    /// Pick the preferred parent and the resulting own rank.
    ///
    /// `current` is the parent in use; under MRHOF it is kept unless another
    /// candidate is cheaper by more than the hysteresis. Ties go to the
    /// lowest address. Returns `None` for an empty candidate list.
    pub fn select(
        self,
        params: &RankParams,
        candidates: &[Candidate],
        current: Option<NodeId>,
    ) -> Option<(NodeId, Rank)> {
        let best = candidates
            .iter()
            .map(|c| (self.path_cost(params, c), c.id))
            .filter(|(cost, _)| *cost < INFINITE_RANK)
            .min()?;
        if self == ObjectiveFunction::MrhofEtx {
            if let Some(cur) = current.and_then(|id| candidates.iter().find(|c| c.id == id)) {
                let cur_cost = self.path_cost(params, cur);
                if cur_cost < INFINITE_RANK && best.0.saturating_add(params.hysteresis) > cur_cost {
                    return Some((cur.id, cur_cost));
                }
            }
        }
        Some((best.1, best.0))
    }
}
