//! CoSec-RPL detection engine.
//!
//! Every node running the detector owns one [`IdsState`]: a fixed-capacity
//! neighbor table counting DIOs per sender and a blacklist table of suspected
//! and permanently blocked senders. [`IdsState::process_dio`] is called from
//! the DIO handler for every received DIO; the periodic malicious-neighbor
//! check piggybacks on it once [`IdsState::tick`] has raised the `active`
//! flag.

use serde::{Deserialize, Serialize};

use crate::error::IdsError;
use crate::outlier::summary_of_sorted;
use crate::types::{NodeId, SimTime};

/// How the inter-DIO gap of an outlying neighbor is compared against the
/// safe DIO interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GapCheck {
    /// Last gap `t_recent - t_previous` against the configured safe interval.
    Literal,
    /// Last gap against `max(safe_interval, replay_margin)`.
    #[default]
    Effective,
    /// Smallest gap seen since the previous check against the configured
    /// safe interval.
    MinGapInWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdsConfig {
    /// Safe DIO interval, ms.
    pub safe_interval_ms: u64,
    /// Suspicions before a permanent block.
    pub block_threshold: u32,
    /// Fence multiplier on the IQR.
    pub delta: f64,
    /// Capacity of both tables.
    pub node_max: usize,
    pub activation_delay_ms: u64,
    pub check_period_ms: u64,
    pub gap_check: GapCheck,
    /// Tolerance used by [`GapCheck::Effective`], ms.
    pub replay_margin_ms: u64,
}

impl Default for IdsConfig {
    fn default() -> Self {
        Self {
            safe_interval_ms: 500,
            block_threshold: 5,
            delta: 1.0,
            node_max: 32,
            activation_delay_ms: 120_000,
            check_period_ms: 30_000,
            gap_check: GapCheck::Effective,
            replay_margin_ms: 4_500,
        }
    }
}

impl IdsConfig {
    /// Threshold the measured gap is compared against.
    pub fn gap_threshold_ms(&self) -> u64 {
        match self.gap_check {
            GapCheck::Literal | GapCheck::MinGapInWindow => self.safe_interval_ms,
            GapCheck::Effective => self.safe_interval_ms.max(self.replay_margin_ms),
        }
    }

    pub fn validate(&self) -> Result<(), crate::error::ConfigError> {
        use crate::error::ConfigError;
        if self.safe_interval_ms == 0 {
            return Err(ConfigError::new("ids.safe_interval_ms", "must be > 0"));
        }
        if self.block_threshold == 0 {
            return Err(ConfigError::new("ids.block_threshold", "must be >= 1"));
        }
        if !self.delta.is_finite() || self.delta <= 0.0 {
            return Err(ConfigError::new("ids.delta", "must be a finite value > 0"));
        }
        if self.node_max == 0 {
            return Err(ConfigError::new("ids.node_max", "must be >= 1"));
        }
        if self.check_period_ms == 0 {
            return Err(ConfigError::new("ids.check_period_ms", "must be > 0"));
        }
        Ok(())
    }
}

/// One neighbor-table slot. `from == None` marks an empty slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NeighborEntry {
    pub from: Option<NodeId>,
    pub t_previous: SimTime,
    pub t_recent: SimTime,
    pub dio_count: u64,
    /// Smallest gap since the last check; only maintained for
    /// [`GapCheck::MinGapInWindow`].
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub min_gap: Option<u64>,
}

impl NeighborEntry {
    pub fn is_live(&self) -> bool {
        self.from.is_some()
    }

    pub fn last_gap(&self) -> u64 {
        self.t_recent - self.t_previous
    }
}

/// One blacklist slot. `status == true` means permanently blocked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BlacklistEntry {
    pub bl_src_ip: Option<NodeId>,
    pub detection_count: u32,
    pub status: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DioAction {
    Accept,
    DiscardBlocked,
}

/// Outcome of feeding one DIO to the detector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DioVerdict {
    pub action: DioAction,
    pub check: Option<CheckOutcome>,
    /// The sender could not be tracked because the neighbor table is full.
    pub overflow: bool,
}

impl DioVerdict {
    fn accept() -> Self {
        Self { action: DioAction::Accept, check: None, overflow: false }
    }

    pub fn newly_suspected(&self) -> &[Suspicion] {
        self.check.as_ref().map_or(&[], |c| &c.suspected)
    }

    pub fn newly_blocked(&self) -> &[NodeId] {
        self.check.as_ref().map_or(&[], |c| &c.blocked)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Suspicion {
    pub node: NodeId,
    /// Detection count after this suspicion.
    pub detection_count: u32,
}

/// Result of one run of the malicious-neighbor check.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckOutcome {
    /// Neighbors suspected in this round that did not reach the block
    /// threshold.
    pub suspected: Vec<Suspicion>,
    /// Neighbors that reached the block threshold in this round.
    pub blocked: Vec<NodeId>,
    /// Suspicions that could not be recorded because the blacklist is full.
    pub blacklist_overflow: Vec<NodeId>,
    /// Upper fence used for this round, if any neighbor was live.
    pub upper_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsState {
    pub config: IdsConfig,
    pub neighbor_table: Vec<NeighborEntry>,
    pub blacklist_table: Vec<BlacklistEntry>,
    pub t_nodes: usize,
    pub n_blacklist: usize,
    pub t_empty: bool,
    pub active: bool,
    pub last_activation: Option<SimTime>,
    pub overflow_count: u64,
}

impl IdsState {
    /// Fresh, not yet initialized state. The first DIO initializes the
    /// tables.
    pub fn new(config: IdsConfig) -> Self {
        let cap = config.node_max;
        Self {
            config,
            neighbor_table: vec![NeighborEntry::default(); cap],
            blacklist_table: vec![BlacklistEntry::default(); cap],
            t_nodes: 0,
            n_blacklist: 0,
            t_empty: false,
            active: false,
            last_activation: None,
            overflow_count: 0,
        }
    }

    pub fn init_tables(&mut self) {
        self.init_neighbor_table();
        self.init_blacklist_table();
        self.t_nodes = 0;
        self.n_blacklist = 0;
        self.t_empty = true;
    }

    fn init_neighbor_table(&mut self) {
        let cap = self.config.node_max;
        self.neighbor_table.clear();
        self.neighbor_table.resize(cap, NeighborEntry::default());
    }

    fn init_blacklist_table(&mut self) {
        let cap = self.config.node_max;
        self.blacklist_table.clear();
        self.blacklist_table.resize(cap, BlacklistEntry::default());
    }

    pub fn neighbor(&self, addr: NodeId) -> Option<&NeighborEntry> {
        self.neighbor_table.iter().find(|e| e.from == Some(addr))
    }

    pub fn blacklist_entry(&self, addr: NodeId) -> Option<&BlacklistEntry> {
        self.blacklist_table[..self.n_blacklist]
            .iter()
            .find(|e| e.bl_src_ip == Some(addr))
    }

    pub fn is_blocked(&self, addr: NodeId) -> bool {
        self.blacklist_entry(addr).is_some_and(|e| e.status)
    }

    /// Per-DIO hook. Returns whether the DIO should be processed further.
    pub fn process_dio(&mut self, src_ip: NodeId, now: SimTime) -> DioVerdict {
        if !self.t_empty {
            self.init_tables();
        }

        // early detection
        if self.is_blocked(src_ip) {
            return DioVerdict { action: DioAction::DiscardBlocked, check: None, overflow: false };
        }

        let track_min_gap = self.config.gap_check == GapCheck::MinGapInWindow;
        let mut verdict = DioVerdict::accept();
        if let Some(entry) = self.neighbor_table.iter_mut().find(|e| e.from == Some(src_ip)) {
            entry.t_previous = entry.t_recent;
            entry.t_recent = now;
            entry.dio_count += 1;
            if track_min_gap {
                let gap = entry.last_gap();
                entry.min_gap = Some(entry.min_gap.map_or(gap, |g| g.min(gap)));
            }
        } else if let Some(entry) = self.neighbor_table.iter_mut().find(|e| !e.is_live()) {
            entry.from = Some(src_ip);
            // t_previous takes the slot's old t_recent, which is 0 for an
            // empty slot
            entry.t_previous = entry.t_recent;
            entry.t_recent = now;
            entry.dio_count += 1;
            entry.min_gap = None;
            self.t_nodes += 1;
        } else {
            self.overflow_count += 1;
            verdict.overflow = true;
        }

        if self.active {
            verdict.check = Some(self.check_malicious(now));
            self.active = false;
        }
        verdict
    }

    /// Flag every live neighbor whose DIO count is above the IQR fence and
    /// whose gap is within the safe interval.
    pub fn check_malicious(&mut self, _now: SimTime) -> CheckOutcome {
        let mut outcome = CheckOutcome::default();
        let mut live: Vec<usize> = (0..self.neighbor_table.len())
            .filter(|&i| self.neighbor_table[i].is_live())
            .collect();
        if live.is_empty() {
            return outcome;
        }
        if live.len() > 1 {
            // whole records move together; slot order breaks ties
            live.sort_by_key(|&i| (self.neighbor_table[i].dio_count, i));
        }
        let counts: Vec<f64> = live.iter().map(|&i| self.neighbor_table[i].dio_count as f64).collect();
        let summary = summary_of_sorted(&counts, self.config.delta);
        outcome.upper_limit = Some(summary.upper_limit);

        let threshold = self.config.gap_threshold_ms();
        let beta = self.config.block_threshold;
        for slot in live {
            let entry = self.neighbor_table[slot];
            let Some(addr) = entry.from else { continue };
            if !summary.is_outlier(entry.dio_count as f64) {
                continue;
            }
            let gap = match self.config.gap_check {
                GapCheck::MinGapInWindow => entry.min_gap.unwrap_or(entry.last_gap()),
                _ => entry.last_gap(),
            };
            if gap > threshold {
                continue;
            }

            let capacity = self.blacklist_table.len();
            let existing = self.blacklist_table[..self.n_blacklist]
                .iter()
                .position(|e| e.bl_src_ip == Some(addr));
            match existing {
                Some(j) => {
                    let bl = &mut self.blacklist_table[j];
                    if bl.detection_count < beta {
                        bl.detection_count += 1;
                        if bl.detection_count == beta {
                            bl.status = true;
                            outcome.blocked.push(addr);
                            self.remove_neighbor_entry(slot).expect("slot comes from the table");
                        } else {
                            outcome.suspected.push(Suspicion { node: addr, detection_count: bl.detection_count });
                        }
                    }
                }
                None if self.n_blacklist < capacity => {
                    let k = self.n_blacklist;
                    self.n_blacklist += 1;
                    let bl = &mut self.blacklist_table[k];
                    bl.bl_src_ip = Some(addr);
                    bl.detection_count += 1;
                    bl.status = false;
                    if bl.detection_count >= beta {
                        // beta == 1 blocks on the first suspicion
                        bl.status = true;
                        outcome.blocked.push(addr);
                        self.remove_neighbor_entry(slot).expect("slot comes from the table");
                    } else {
                        outcome.suspected.push(Suspicion { node: addr, detection_count: bl.detection_count });
                    }
                }
                None => {
                    self.overflow_count += 1;
                    outcome.blacklist_overflow.push(addr);
                }
            }
        }

        if self.config.gap_check == GapCheck::MinGapInWindow {
            for e in self.neighbor_table.iter_mut().filter(|e| e.is_live()) {
                e.min_gap = None;
            }
        }
        outcome
    }

    pub fn remove_neighbor_entry(&mut self, slot: usize) -> Result<(), IdsError> {
        let capacity = self.neighbor_table.len();
        let entry = self.neighbor_table.get_mut(slot).ok_or(IdsError::BadSlot { slot, capacity })?;
        let was_live = entry.is_live();
        *entry = NeighborEntry::default();
        if was_live {
            self.t_nodes -= 1;
        }
        Ok(())
    }

    /// Periodic scheduler hook: raises `active` once per check period after
    /// the activation delay.
    pub fn tick(&mut self, now: SimTime) {
        if now < self.config.activation_delay_ms {
            return;
        }
        let due = match self.last_activation {
            None => true,
            Some(t) => now - t >= self.config.check_period_ms,
        };
        if due {
            self.active = true;
            self.last_activation = Some(now);
        }
    }

    pub fn live_neighbors(&self) -> impl Iterator<Item = &NeighborEntry> {
        self.neighbor_table.iter().filter(|e| e.is_live())
    }
}
