//! Minimal RPL node: DODAG join, parent selection, trickle-driven DIOs, DIS
//! solicitation, link probing and upward data forwarding.
//!
//! The node is a pure state machine. Handlers return [`Action`]s that the
//! engine turns into radio transmissions, timer updates and trace records.

pub mod objective;
pub mod trickle;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ids::{DioAction, IdsState};
use crate::types::{NodeId, SimTime};

pub use objective::{Candidate, ObjectiveFunction, Rank, RankParams, INFINITE_RANK};
pub use trickle::{TrickleConfig, TricklePoll, TrickleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DioMessage {
    pub src: NodeId,
    pub dodag_id: u16,
    pub version: u32,
    pub rank: Rank,
    pub instance_id: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPacket {
    pub origin: NodeId,
    pub seq: u32,
    pub created: SimTime,
    pub size: u16,
    /// Nodes that have already handled this packet, origin first.
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Dio(DioMessage),
    Dis,
    /// Route registration towards `parent`; `None` withdraws it.
    Dao { parent: Option<NodeId> },
    Probe,
    ProbeAck,
    Data(DataPacket),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgKind {
    Dio,
    Dis,
    Dao,
    Probe,
    ProbeAck,
    Data,
}

impl MsgKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MsgKind::Dio => "dio",
            MsgKind::Dis => "dis",
            MsgKind::Dao => "dao",
            MsgKind::Probe => "probe",
            MsgKind::ProbeAck => "probe_ack",
            MsgKind::Data => "data",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "dio" => MsgKind::Dio,
            "dis" => MsgKind::Dis,
            "dao" => MsgKind::Dao,
            "probe" => MsgKind::Probe,
            "probe_ack" => MsgKind::ProbeAck,
            "data" => MsgKind::Data,
            _ => return None,
        })
    }
}

impl Message {
    pub fn kind(&self) -> MsgKind {
        match self {
            Message::Dio(_) => MsgKind::Dio,
            Message::Dis => MsgKind::Dis,
            Message::Dao { .. } => MsgKind::Dao,
            Message::Probe => MsgKind::Probe,
            Message::ProbeAck => MsgKind::ProbeAck,
            Message::Data(_) => MsgKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Broadcast,
    Unicast(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Root,
    Sensor,
    Attacker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    NoParent,
    Loop,
    MacFailure,
    QueueFull,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoParent => "no_parent",
            DropReason::Loop => "loop",
            DropReason::MacFailure => "mac_failure",
            DropReason::QueueFull => "queue_full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "no_parent" => DropReason::NoParent,
            "loop" => DropReason::Loop,
            "mac_failure" => DropReason::MacFailure,
            "queue_full" => DropReason::QueueFull,
            _ => return None,
        })
    }
}

/// Protocol-level happenings reported to the trace sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RplEvent {
    ParentSwitch { from: Option<NodeId>, to: Option<NodeId>, rank: Rank },
    TrickleReset,
    NewVersion { version: u32 },
    StaleDio { from: NodeId },
    DioDiscarded { from: NodeId },
    Suspected { node: NodeId, detection_count: u32 },
    Blocked { node: NodeId },
    IdsOverflow { node: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Send { dst: Destination, msg: Message },
    /// The trickle timer got a new deadline; re-arm it.
    TrickleRestarted,
    Event(RplEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RplConfig {
    pub objective_function: ObjectiveFunction,
    pub rank: RankParams,
    pub trickle: TrickleConfig,
    pub dodag_id: u16,
    pub instance_id: u8,
    /// Weight of the previous estimate in the ETX moving average.
    pub etx_alpha: f64,
    /// ETX sample recorded for a unicast that was never acknowledged.
    pub noack_penalty: f64,
    /// Links above this ETX are dropped from the parent set.
    pub max_link_etx: f64,
    /// How far above its lowest rank a node may move before detaching.
    pub max_rank_increase: Rank,
    pub probe_timeout_ms: u64,
    pub dis_interval_ms: u64,
}

impl Default for RplConfig {
    fn default() -> Self {
        Self {
            objective_function: ObjectiveFunction::MrhofEtx,
            rank: RankParams::default(),
            trickle: TrickleConfig::default(),
            dodag_id: 1,
            instance_id: 0,
            etx_alpha: 0.8,
            noack_penalty: 10.0,
            max_link_etx: 4.0,
            max_rank_increase: 1024,
            probe_timeout_ms: 1_000,
            dis_interval_ms: 10_000,
        }
    }
}

impl RplConfig {
    /// Under MRHOF a neighbor is admitted as a parent candidate only after a
    /// probe exchange; OF0 takes advertised DIOs at face value.
    pub fn probing(&self) -> bool {
        self.objective_function == ObjectiveFunction::MrhofEtx
    }

    pub fn validate(&self) -> Result<(), crate::error::ConfigError> {
        use crate::error::ConfigError;
        if self.trickle.i_min_ms < 2 {
            return Err(ConfigError::new("rpl.trickle.i_min_ms", "must be >= 2"));
        }
        if self.trickle.max_doublings > 20 {
            return Err(ConfigError::new("rpl.trickle.max_doublings", "must be <= 20"));
        }
        if !(0.0..1.0).contains(&self.etx_alpha) {
            return Err(ConfigError::new("rpl.etx_alpha", "must be in [0, 1)"));
        }
        if self.max_link_etx < 1.0 {
            return Err(ConfigError::new("rpl.max_link_etx", "must be >= 1"));
        }
        if self.rank.min_hop_rank_increase == 0 || self.rank.of0_rank_increase == 0 {
            return Err(ConfigError::new("rpl.rank", "rank increases must be > 0"));
        }
        if self.dis_interval_ms == 0 {
            return Err(ConfigError::new("rpl.dis_interval_ms", "must be > 0"));
        }
        Ok(())
    }
}

/// Link estimate for one neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborLink {
    pub etx: f64,
    /// A bidirectional exchange has succeeded.
    pub verified: bool,
    pub probe_sent_at: Option<SimTime>,
    pub last_rank: Rank,
    pub last_version: u32,
}

impl Default for NeighborLink {
    fn default() -> Self {
        Self { etx: 1.0, verified: false, probe_sent_at: None, last_rank: INFINITE_RANK, last_version: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParentEntry {
    pub id: NodeId,
    pub rank: Rank,
}

/// What to do with a data packet that just arrived (or was generated).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardDecision {
    Deliver,
    Forward(NodeId),
    Drop(DropReason),
}

/// Packets that have crossed more hops than this are treated as looping.
pub const MAX_HOPS: usize = 64;

#[derive(Debug, Clone)]
pub struct RplNode {
    pub id: NodeId,
    pub role: Role,
    pub rank: Rank,
    pub version: u32,
    lowest_rank: Rank,
    pub preferred_parent: Option<NodeId>,
    pub parent_set: Vec<ParentEntry>,
    pub links: BTreeMap<NodeId, NeighborLink>,
    pub children: BTreeSet<NodeId>,
    pub trickle: TrickleState,
    pub ids: Option<IdsState>,
    next_seq: u32,
}

impl RplNode {
    pub fn new(id: NodeId, role: Role, cfg: &RplConfig, ids: Option<IdsState>) -> Self {
        let rank = if role == Role::Root { cfg.rank.root_rank } else { INFINITE_RANK };
        Self {
            id,
            role,
            rank,
            version: 0,
            lowest_rank: rank,
            preferred_parent: None,
            parent_set: Vec::new(),
            links: BTreeMap::new(),
            children: BTreeSet::new(),
            trickle: TrickleState::new(cfg.trickle),
            ids: if role == Role::Attacker { None } else { ids },
            next_seq: 0,
        }
    }

    pub fn is_root(&self) -> bool {
        self.role == Role::Root
    }

    pub fn is_joined(&self) -> bool {
        self.is_root() || self.preferred_parent.is_some()
    }

    pub fn make_dio(&self, cfg: &RplConfig) -> DioMessage {
        DioMessage {
            src: self.id,
            dodag_id: cfg.dodag_id,
            version: self.version,
            rank: self.rank,
            instance_id: cfg.instance_id,
        }
    }

    /// Root only: start advertising.
    pub fn start_root<R: Rng>(&mut self, now: SimTime, rng: &mut R) -> Vec<Action> {
        debug_assert!(self.is_root());
        self.trickle.start(now, rng);
        vec![Action::TrickleRestarted]
    }

    pub fn handle_dio<R: Rng>(&mut self, cfg: &RplConfig, dio: &DioMessage, now: SimTime, rng: &mut R) -> Vec<Action> {
        let mut actions = Vec::new();
        if dio.src == self.id || self.role == Role::Attacker {
            return actions;
        }

        if let Some(ids) = self.ids.as_mut() {
            let verdict = ids.process_dio(dio.src, now);
            if verdict.overflow {
                actions.push(Action::Event(RplEvent::IdsOverflow { node: dio.src }));
            }
            if let Some(check) = &verdict.check {
                for s in &check.suspected {
                    actions.push(Action::Event(RplEvent::Suspected { node: s.node, detection_count: s.detection_count }));
                }
                for &b in &check.blocked {
                    let count = ids.blacklist_entry(b).map_or(0, |e| e.detection_count);
                    actions.push(Action::Event(RplEvent::Suspected { node: b, detection_count: count }));
                    actions.push(Action::Event(RplEvent::Blocked { node: b }));
                }
                for &b in &check.blocked {
                    self.forget_neighbor(b);
                }
                if !check.blocked.is_empty() {
                    self.reselect(cfg, now, rng, &mut actions);
                }
            }
            if verdict.action == DioAction::DiscardBlocked {
                actions.push(Action::Event(RplEvent::DioDiscarded { from: dio.src }));
                return actions;
            }
        }

        if dio.dodag_id != cfg.dodag_id || dio.instance_id != cfg.instance_id {
            return actions;
        }

        if self.is_root() {
            if dio.version == self.version {
                self.trickle.hear_consistent();
            }
            return actions;
        }

        if dio.version < self.version {
            actions.push(Action::Event(RplEvent::StaleDio { from: dio.src }));
            return actions;
        }
        if dio.version > self.version {
            self.version = dio.version;
            self.leave_dodag();
            actions.push(Action::Event(RplEvent::NewVersion { version: dio.version }));
        }

        let link = self.links.entry(dio.src).or_default();
        link.last_rank = dio.rank;
        link.last_version = dio.version;
        let verified = link.verified;

        let before = (self.preferred_parent, self.rank);
        if dio.rank == INFINITE_RANK {
            if self.remove_parent(dio.src) {
                self.reselect(cfg, now, rng, &mut actions);
            }
        } else if let Some(p) = self.parent_set.iter_mut().find(|p| p.id == dio.src) {
            p.rank = dio.rank;
            self.reselect(cfg, now, rng, &mut actions);
        } else if self.is_candidate(dio.src, dio.rank) {
            if cfg.probing() && !verified {
                let link = self.links.get_mut(&dio.src).expect("inserted above");
                let due = link.probe_sent_at.is_none_or(|t| now >= t + cfg.probe_timeout_ms);
                if due {
                    link.probe_sent_at = Some(now);
                    actions.push(Action::Send { dst: Destination::Unicast(dio.src), msg: Message::Probe });
                }
            } else {
                self.parent_set.push(ParentEntry { id: dio.src, rank: dio.rank });
                self.parent_set.sort_by_key(|p| p.id);
                self.reselect(cfg, now, rng, &mut actions);
            }
        }
        if before == (self.preferred_parent, self.rank) {
            self.trickle.hear_consistent();
        }
        actions
    }

    fn is_candidate(&self, id: NodeId, rank: Rank) -> bool {
        rank != INFINITE_RANK
            && (self.rank == INFINITE_RANK || rank < self.rank)
            && !self.children.contains(&id)
            && self.ids.as_ref().is_none_or(|ids| !ids.is_blocked(id))
    }

    pub fn handle_dis<R: Rng>(&mut self, now: SimTime, rng: &mut R) -> Vec<Action> {
        let mut actions = Vec::new();
        if self.role != Role::Attacker && self.is_joined() && self.trickle.reset(now, rng) {
            actions.push(Action::TrickleRestarted);
            actions.push(Action::Event(RplEvent::TrickleReset));
        }
        actions
    }

    pub fn handle_probe(&mut self, from: NodeId) -> Vec<Action> {
        if self.role == Role::Attacker {
            return Vec::new();
        }
        vec![Action::Send { dst: Destination::Unicast(from), msg: Message::ProbeAck }]
    }

    pub fn handle_probe_ack<R: Rng>(&mut self, cfg: &RplConfig, from: NodeId, now: SimTime, rng: &mut R) -> Vec<Action> {
        let mut actions = Vec::new();
        if self.role == Role::Attacker {
            return actions;
        }
        let link = self.links.entry(from).or_default();
        link.verified = true;
        link.probe_sent_at = None;
        let (rank, version) = (link.last_rank, link.last_version);
        if self.is_root() || version != self.version || self.parent_set.iter().any(|p| p.id == from) {
            return actions;
        }
        if self.is_candidate(from, rank) {
            self.parent_set.push(ParentEntry { id: from, rank });
            self.parent_set.sort_by_key(|p| p.id);
            self.reselect(cfg, now, rng, &mut actions);
        }
        actions
    }

    pub fn handle_dao(&mut self, from: NodeId, parent: Option<NodeId>) {
        if parent == Some(self.id) {
            self.children.insert(from);
            self.remove_parent(from);
        } else {
            self.children.remove(&from);
        }
    }

    /// Link-layer outcome of a unicast to `to` after `attempts` tries.
    pub fn on_unicast_result<R: Rng>(
        &mut self,
        cfg: &RplConfig,
        to: NodeId,
        acked: bool,
        attempts: u32,
        now: SimTime,
        rng: &mut R,
    ) -> Vec<Action> {
        let mut actions = Vec::new();
        let Some(link) = self.links.get_mut(&to) else { return actions };
        if !link.verified {
            return actions;
        }
        let sample = if acked { attempts as f64 } else { cfg.noack_penalty };
        link.etx = cfg.etx_alpha * link.etx + (1.0 - cfg.etx_alpha) * sample;
        if link.etx > cfg.max_link_etx {
            link.verified = false;
            link.etx = 1.0;
            if self.remove_parent(to) {
                self.reselect(cfg, now, rng, &mut actions);
            }
        } else if self.parent_set.iter().any(|p| p.id == to) {
            self.reselect(cfg, now, rng, &mut actions);
        }
        actions
    }

    pub fn trickle_tick<R: Rng>(&mut self, cfg: &RplConfig, now: SimTime, rng: &mut R) -> Option<DioMessage> {
        if !self.is_joined() {
            return None;
        }
        match self.trickle.poll(now, rng) {
            TricklePoll::Transmit => Some(self.make_dio(cfg)),
            _ => None,
        }
    }

    /// Periodic DIS solicitation while detached.
    pub fn dis_tick(&self) -> Option<Message> {
        (self.role == Role::Sensor && !self.is_joined()).then_some(Message::Dis)
    }

    pub fn generate_data(&mut self, now: SimTime, size: u16) -> DataPacket {
        let seq = self.next_seq;
        self.next_seq += 1;
        DataPacket { origin: self.id, seq, created: now, size, path: Vec::new() }
    }

    /// Decide what to do with a packet this node now holds, recording the
    /// node on the packet's path.
    pub fn route_data(&self, pkt: &mut DataPacket) -> ForwardDecision {
        if pkt.path.contains(&self.id) || pkt.path.len() >= MAX_HOPS {
            return ForwardDecision::Drop(DropReason::Loop);
        }
        pkt.path.push(self.id);
        if self.is_root() {
            return ForwardDecision::Deliver;
        }
        match self.preferred_parent {
            Some(p) => ForwardDecision::Forward(p),
            None => ForwardDecision::Drop(DropReason::NoParent),
        }
    }

    /// Root only: bump the DODAG version and restart advertising.
    pub fn global_repair<R: Rng>(&mut self, now: SimTime, rng: &mut R) -> Vec<Action> {
        debug_assert!(self.is_root());
        self.version += 1;
        self.trickle.start(now, rng);
        vec![Action::TrickleRestarted, Action::Event(RplEvent::NewVersion { version: self.version })]
    }

    fn leave_dodag(&mut self) {
        self.parent_set.clear();
        self.preferred_parent = None;
        self.rank = INFINITE_RANK;
        self.lowest_rank = INFINITE_RANK;
        self.children.clear();
        self.trickle.stop();
    }

    fn forget_neighbor(&mut self, id: NodeId) {
        self.remove_parent(id);
        self.links.remove(&id);
        self.children.remove(&id);
    }

    fn remove_parent(&mut self, id: NodeId) -> bool {
        let before = self.parent_set.len();
        self.parent_set.retain(|p| p.id != id);
        before != self.parent_set.len()
    }

    fn reselect<R: Rng>(&mut self, cfg: &RplConfig, now: SimTime, rng: &mut R, actions: &mut Vec<Action>) {
        if self.is_root() {
            return;
        }
        let of = cfg.objective_function;
        let candidates: Vec<Candidate> = self
            .parent_set
            .iter()
            .map(|p| Candidate {
                id: p.id,
                rank: p.rank,
                etx: self.links.get(&p.id).map_or(1.0, |l| l.etx),
            })
            .collect();
        let old_parent = self.preferred_parent;
        let old_rank = self.rank;

        let selection = of.select(&cfg.rank, &candidates, old_parent).filter(|&(_, rank)| {
            self.lowest_rank == INFINITE_RANK || rank <= self.lowest_rank.saturating_add(cfg.max_rank_increase)
        });
        let Some((parent, rank)) = selection else {
            if old_parent.is_some() {
                self.detach(cfg, actions);
            }
            return;
        };

        self.preferred_parent = Some(parent);
        self.rank = rank;
        self.lowest_rank = self.lowest_rank.min(rank);
        // max_depth rule: nothing at or below our own rank stays a candidate
        self.parent_set.retain(|p| p.id == parent || p.rank < rank);

        if old_parent != Some(parent) {
            actions.push(Action::Event(RplEvent::ParentSwitch { from: old_parent, to: Some(parent), rank }));
            if let Some(old) = old_parent {
                actions.push(Action::Send { dst: Destination::Unicast(old), msg: Message::Dao { parent: None } });
            }
            actions.push(Action::Send {
                dst: Destination::Unicast(parent),
                msg: Message::Dao { parent: Some(parent) },
            });
        }
        if (old_parent != Some(parent) || old_rank != rank) && self.trickle.reset(now, rng) {
            actions.push(Action::TrickleRestarted);
            actions.push(Action::Event(RplEvent::TrickleReset));
        }
    }

    /// Drop out of the DODAG, poisoning the sub-DODAG with an infinite-rank
    /// DIO.
    fn detach(&mut self, cfg: &RplConfig, actions: &mut Vec<Action>) {
        let old = self.preferred_parent;
        self.parent_set.clear();
        self.preferred_parent = None;
        self.rank = INFINITE_RANK;
        self.lowest_rank = INFINITE_RANK;
        self.children.clear();
        self.trickle.stop();
        actions.push(Action::Event(RplEvent::ParentSwitch { from: old, to: None, rank: INFINITE_RANK }));
        actions.push(Action::Send { dst: Destination::Broadcast, msg: Message::Dio(self.make_dio(cfg)) });
    }
}
