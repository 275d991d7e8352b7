//! Discrete-event simulation of one run.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attacker::AttackerState;
use crate::config::{ScenarioConfig, TopologyKind};
use crate::error::ConfigError;
use crate::ids::IdsState;
use crate::metrics::{MetricsAccumulator, RunMetrics};
use crate::mobility::{MobilityModel, Position, Walker};
use crate::radio::{self, ChannelLog, Reception, Receiver};
use crate::rpl::{Action, DataPacket, Destination, DropReason, ForwardDecision, Message, Role, RplEvent, RplNode};
use crate::trace::{TraceEvent, TraceRecord};
use crate::types::{NodeId, SimTime};

const STREAM_TOPOLOGY: u64 = 1;
const STREAM_RADIO: u64 = 2;
const STREAM_MOBILITY: u64 = 3;
const STREAM_MAC: u64 = 4;
const STREAM_TRICKLE: u64 = 5;
const STREAM_DATA: u64 = 6;

/// Independent random streams of one run.
struct Streams {
    radio: ChaCha8Rng,
    mobility: ChaCha8Rng,
    mac: ChaCha8Rng,
    trickle: ChaCha8Rng,
}

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone)]
enum EventKind {
    Deliver { to: NodeId, from: NodeId, msg: Message },
    TrickleFire { node: NodeId, generation: u64 },
    DataGen { node: NodeId },
    MobilityStep,
    AttackStep { node: NodeId },
    IdsTick { node: NodeId },
    TxAttempt { node: NodeId },
    DisTimer { node: NodeId },
    GlobalRepair,
}

#[derive(Debug)]
struct Event {
    t: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.t, self.seq) == (other.t, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap and we want the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        (other.t, other.seq).cmp(&(self.t, self.seq))
    }
}

#[derive(Debug, Clone)]
struct Frame {
    dst: Destination,
    msg: Message,
    attempt: u32,
    backoffs: u32,
}

/// Node placement for a scenario and seed: root, sensors, then attackers.
pub fn layout(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<Position>, ConfigError> {
    let n = &cfg.network;
    let n_att = cfg.active_attackers();
    match n.topology {
        TopologyKind::Explicit => {
            Ok(n.positions[..1 + n.n_sensors + n_att].iter().map(|p| Position::new(p[0], p[1])).collect())
        }
        TopologyKind::RandomGrid => {
            let mut rng = stream(seed, STREAM_TOPOLOGY);
            let root = Position::new(n.width / 2.0, n.height / 2.0);
            let range = cfg.radio.tx_range_m;
            let draw = |rng: &mut ChaCha8Rng| Position::new(rng.gen_range(0.0..=n.width), rng.gen_range(0.0..=n.height));
            let mut placed = None;
            for _ in 0..n.max_layout_attempts {
                let mut pos = vec![root];
                pos.extend((0..n.n_sensors).map(|_| draw(&mut rng)));
                if connected(&pos, range) {
                    placed = Some(pos);
                    break;
                }
            }
            let mut pos = placed.ok_or_else(|| {
                ConfigError::new("network.max_layout_attempts", "no connected sensor layout found")
            })?;
            // attackers are drawn afterwards so sensor placement does not
            // depend on whether the attack is enabled; each must hear at
            // least one legitimate node
            let legit = pos.len();
            for _ in 0..n_att {
                let mut p = draw(&mut rng);
                for _ in 0..n.max_layout_attempts {
                    if pos[..legit].iter().any(|q| q.distance(&p) <= range) {
                        break;
                    }
                    p = draw(&mut rng);
                }
                pos.push(p);
            }
            Ok(pos)
        }
    }
}

/// All of `pos` reachable from index 0 over links of length <= `range`.
pub fn connected(pos: &[Position], range: f64) -> bool {
    let mut seen = vec![false; pos.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..pos.len() {
            if !seen[v] && pos[u].distance(&pos[v]) <= range {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// Present when the run was asked to keep its trace.
    pub trace: Option<Vec<TraceRecord>>,
    pub final_nodes: Vec<RplNode>,
}

pub struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    seed: u64,
    now: SimTime,
    seq: u64,
    queue: BinaryHeap<Event>,
    nodes: Vec<RplNode>,
    positions: Vec<Position>,
    walkers: Vec<Option<Walker>>,
    attackers: Vec<Option<AttackerState>>,
    channel: ChannelLog,
    tx_queues: Vec<VecDeque<Frame>>,
    tx_scheduled: Vec<bool>,
    rng: Streams,
    acc: MetricsAccumulator,
    trace: Option<Vec<TraceRecord>>,
}

impl<'a> Engine<'a> {
    pub fn new(cfg: &'a ScenarioConfig, seed: u64, keep_trace: bool) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let positions = layout(cfg, seed)?;
        let n_sensors = cfg.network.n_sensors;
        let mut mob_rng = stream(seed, STREAM_MOBILITY);
        let mut nodes = Vec::with_capacity(positions.len());
        let mut walkers = Vec::with_capacity(positions.len());
        let mut attackers = Vec::with_capacity(positions.len());
        for (i, p) in positions.iter().enumerate() {
            let id = NodeId(i as u16);
            let role = if i == 0 {
                Role::Root
            } else if i <= n_sensors {
                Role::Sensor
            } else {
                Role::Attacker
            };
            let ids = cfg.ids_enabled.then(|| IdsState::new(cfg.ids.clone()));
            nodes.push(RplNode::new(id, role, &cfg.rpl, ids));
            let mobile = role != Role::Root && cfg.mobility.model == MobilityModel::RandomWaypoint;
            walkers.push(mobile.then(|| Walker::new(*p, &cfg.mobility, &mut mob_rng)));
            attackers.push((role == Role::Attacker).then(|| AttackerState::new(id, cfg.attacker)));
        }
        let n = positions.len();
        Ok(Self {
            cfg,
            seed,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            nodes,
            positions,
            walkers,
            attackers,
            channel: ChannelLog::new(),
            tx_queues: vec![VecDeque::new(); n],
            tx_scheduled: vec![false; n],
            rng: Streams {
                radio: stream(seed, STREAM_RADIO),
                mobility: mob_rng,
                mac: stream(seed, STREAM_MAC),
                trickle: stream(seed, STREAM_TRICKLE),
            },
            acc: MetricsAccumulator::new(),
            trace: keep_trace.then(Vec::new),
        })
    }

    fn schedule(&mut self, t: SimTime, kind: EventKind) {
        debug_assert!(t >= self.now);
        self.seq += 1;
        self.queue.push(Event { t, seq: self.seq, kind });
    }

    fn record(&mut self, node: NodeId, event: TraceEvent) {
        let r = TraceRecord { t: self.now, node, event };
        self.acc.observe(&r);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(r);
        }
    }

    fn role(&self, n: NodeId) -> Role {
        self.nodes[n.index()].role
    }

    pub fn run(mut self) -> RunOutput {
        let cfg = self.cfg;
        let duration = cfg.duration_ms();
        self.record(NodeId::ROOT, TraceEvent::Run { seed: self.seed, duration_ms: duration });
        for i in 0..self.nodes.len() {
            let p = self.positions[i];
            let role = self.nodes[i].role;
            self.record(NodeId(i as u16), TraceEvent::Node { role, x: p.x, y: p.y });
        }

        let mut data_rng = stream(self.seed, STREAM_DATA);
        let data_interval = cfg.network.data_interval_s * 1_000;
        for i in 0..self.nodes.len() {
            let id = NodeId(i as u16);
            match self.nodes[i].role {
                Role::Root => {
                    let actions = self.nodes[i].start_root(0, &mut self.rng.trickle);
                    self.apply(id, actions);
                }
                Role::Sensor => {
                    let phase = data_rng.gen_range(0..data_interval);
                    self.schedule(cfg.network.data_start_s * 1_000 + phase, EventKind::DataGen { node: id });
                    let first_dis = data_rng.gen_range(0..1_000);
                    self.schedule(first_dis, EventKind::DisTimer { node: id });
                    if cfg.ids_enabled {
                        self.schedule(cfg.ids.activation_delay_ms, EventKind::IdsTick { node: id });
                    }
                }
                Role::Attacker => {
                    self.schedule(cfg.attacker.attack_start_ms, EventKind::AttackStep { node: id });
                }
            }
        }
        if cfg.ids_enabled {
            self.schedule(cfg.ids.activation_delay_ms, EventKind::IdsTick { node: NodeId::ROOT });
        }
        if cfg.mobility.model == MobilityModel::RandomWaypoint {
            self.schedule(cfg.mobility.step_ms, EventKind::MobilityStep);
        }
        for &t in &cfg.network.global_repair_at_s {
            self.schedule(t * 1_000, EventKind::GlobalRepair);
        }

        while let Some(ev) = self.queue.pop() {
            if ev.t > duration {
                break;
            }
            debug_assert!(ev.t >= self.now);
            self.now = ev.t;
            self.dispatch(ev.kind);
        }
        RunOutput { metrics: self.acc.finish(), trace: self.trace, final_nodes: self.nodes }
    }

    fn dispatch(&mut self, kind: EventKind) {
        let cfg = self.cfg;
        let now = self.now;
        match kind {
            EventKind::Deliver { to, from, msg } => self.on_receive(to, from, msg),
            EventKind::TrickleFire { node, generation } => {
                let n = &mut self.nodes[node.index()];
                if n.trickle.generation != generation || !n.trickle.is_running() {
                    return;
                }
                if let Some(dio) = n.trickle_tick(&cfg.rpl, now, &mut self.rng.trickle) {
                    self.enqueue(node, Destination::Broadcast, Message::Dio(dio));
                }
                let n = &self.nodes[node.index()];
                if let Some(d) = n.trickle.next_deadline() {
                    if n.trickle.generation == generation {
                        let d = d.max(now + 1);
                        self.schedule(d, EventKind::TrickleFire { node, generation });
                    }
                }
            }
            EventKind::DataGen { node } => {
                let interval = cfg.network.data_interval_s * 1_000;
                if now + cfg.network.data_drain_s * 1_000 <= cfg.duration_ms() {
                    let mut pkt = self.nodes[node.index()].generate_data(now, cfg.network.data_size);
                    self.record(node, TraceEvent::DataGen { seq: pkt.seq });
                    let decision = self.nodes[node.index()].route_data(&mut pkt);
                    self.route(node, pkt, decision);
                }
                self.schedule(now + interval, EventKind::DataGen { node });
            }
            EventKind::MobilityStep => {
                let step = cfg.mobility.step_ms;
                for (i, w) in self.walkers.iter_mut().enumerate() {
                    if let Some(w) = w {
                        w.step(&cfg.mobility, step, now, &mut self.rng.mobility);
                        self.positions[i] = w.pos;
                    }
                }
                self.schedule(now + step, EventKind::MobilityStep);
            }
            EventKind::AttackStep { node } => {
                let a = self.attackers[node.index()].as_mut().expect("attack step for attacker");
                let first = a.launched_at.is_none();
                let next = a.next_tick(now);
                if let Some(dio) = a.attacker_step(now) {
                    if first {
                        let interval_ms = cfg.attacker.replay_interval_ms;
                        self.record(node, TraceEvent::AttackLaunch { interval_ms });
                    }
                    self.enqueue(node, Destination::Broadcast, Message::Dio(dio));
                }
                self.schedule(next, EventKind::AttackStep { node });
            }
            EventKind::IdsTick { node } => {
                if let Some(ids) = self.nodes[node.index()].ids.as_mut() {
                    ids.tick(now);
                }
                self.schedule(now + cfg.ids.check_period_ms, EventKind::IdsTick { node });
            }
            EventKind::TxAttempt { node } => self.tx_attempt(node),
            EventKind::DisTimer { node } => {
                if let Some(msg) = self.nodes[node.index()].dis_tick() {
                    self.enqueue(node, Destination::Broadcast, msg);
                }
                self.schedule(now + cfg.rpl.dis_interval_ms, EventKind::DisTimer { node });
            }
            EventKind::GlobalRepair => {
                let actions = self.nodes[0].global_repair(now, &mut self.rng.trickle);
                self.apply(NodeId::ROOT, actions);
            }
        }
    }

    fn on_receive(&mut self, to: NodeId, from: NodeId, msg: Message) {
        let cfg = self.cfg;
        let now = self.now;
        let i = to.index();
        if self.role(to) == Role::Attacker {
            if let Message::Dio(dio) = &msg {
                let d = self.positions[i].distance(&self.positions[from.index()]);
                self.attackers[i].as_mut().expect("attacker state").overhear(dio, d);
            }
            return;
        }
        let actions = match msg {
            Message::Dio(dio) => self.nodes[i].handle_dio(&cfg.rpl, &dio, now, &mut self.rng.trickle),
            Message::Dis => self.nodes[i].handle_dis(now, &mut self.rng.trickle),
            Message::Dao { parent } => {
                self.nodes[i].handle_dao(from, parent);
                Vec::new()
            }
            Message::Probe => self.nodes[i].handle_probe(from),
            Message::ProbeAck => self.nodes[i].handle_probe_ack(&cfg.rpl, from, now, &mut self.rng.trickle),
            Message::Data(mut pkt) => {
                let decision = self.nodes[i].route_data(&mut pkt);
                self.route(to, pkt, decision);
                Vec::new()
            }
        };
        self.apply(to, actions);
    }

    fn route(&mut self, node: NodeId, pkt: DataPacket, decision: ForwardDecision) {
        match decision {
            ForwardDecision::Deliver => {
                self.record(node, TraceEvent::DataRx { origin: pkt.origin, seq: pkt.seq, created: pkt.created });
            }
            ForwardDecision::Forward(next) => self.enqueue(node, Destination::Unicast(next), Message::Data(pkt)),
            ForwardDecision::Drop(reason) => {
                self.record(node, TraceEvent::DataDrop { origin: pkt.origin, seq: pkt.seq, reason });
            }
        }
    }

    fn apply(&mut self, node: NodeId, actions: Vec<Action>) {
        for a in actions {
            match a {
                Action::Send { dst, msg } => self.enqueue(node, dst, msg),
                Action::TrickleRestarted => {
                    let n = &self.nodes[node.index()];
                    if let Some(d) = n.trickle.next_deadline() {
                        let generation = n.trickle.generation;
                        self.schedule(d.max(self.now), EventKind::TrickleFire { node, generation });
                    }
                }
                Action::Event(e) => {
                    let ev = match e {
                        RplEvent::ParentSwitch { from, to, rank } => TraceEvent::Parent { from, to, rank },
                        RplEvent::TrickleReset => TraceEvent::TrickleReset,
                        RplEvent::NewVersion { version } => TraceEvent::Version { version },
                        RplEvent::StaleDio { from } => TraceEvent::StaleDio { from },
                        RplEvent::DioDiscarded { from } => TraceEvent::Discard { from },
                        RplEvent::Suspected { node: subject, detection_count } => {
                            TraceEvent::Suspect { subject, count: detection_count }
                        }
                        RplEvent::Blocked { node: subject } => TraceEvent::Block { subject },
                        RplEvent::IdsOverflow { node: subject } => TraceEvent::IdsOverflow { subject },
                    };
                    self.record(node, ev);
                }
            }
        }
    }

    fn enqueue(&mut self, node: NodeId, dst: Destination, msg: Message) {
        let i = node.index();
        if self.tx_queues[i].len() >= self.cfg.radio.queue_limit {
            if let Message::Data(pkt) = &msg {
                let ev = TraceEvent::DataDrop { origin: pkt.origin, seq: pkt.seq, reason: DropReason::QueueFull };
                self.record(node, ev);
            }
            return;
        }
        self.tx_queues[i].push_back(Frame { dst, msg, attempt: 0, backoffs: 0 });
        if !self.tx_scheduled[i] {
            self.tx_scheduled[i] = true;
            let jitter = self.rng.mac.gen_range(0..=self.cfg.radio.backoff_max_ms.max(1));
            self.schedule(self.now + jitter, EventKind::TxAttempt { node });
        }
    }

    fn tx_attempt(&mut self, node: NodeId) {
        let r = self.cfg.radio;
        let now = self.now;
        let i = node.index();
        let Some(mut frame) = self.tx_queues[i].pop_front() else {
            self.tx_scheduled[i] = false;
            return;
        };
        let pos = self.positions[i];
        if frame.backoffs < r.max_backoffs && self.channel.congested(&r, &pos, now) {
            frame.backoffs += 1;
            self.tx_queues[i].push_front(frame);
            let wait = self.rng.mac.gen_range(1..=r.backoff_max_ms.max(1));
            self.schedule(now + wait, EventKind::TxAttempt { node });
            return;
        }

        self.channel.record(&r, node, pos, now);
        let kind = frame.msg.kind();
        let dst = match frame.dst {
            Destination::Broadcast => None,
            Destination::Unicast(d) => Some(d),
        };
        self.record(node, TraceEvent::Tx { msg: kind, dst, attempt: frame.attempt });

        let receivers: Vec<Receiver> = (0..self.positions.len())
            .filter(|&j| j != i && dst.is_none_or(|d| d.index() == j))
            .map(|j| Receiver { id: NodeId(j as u16), pos: self.positions[j] })
            .collect();
        let results = radio::deliver(&r, &self.channel, node, &pos, &receivers, now, &mut self.rng.radio);
        let arrive = now + r.airtime_per_msg_ms;
        let mut acked = false;
        for (to, rx) in results {
            match rx {
                Reception::Delivered => {
                    self.record(to, TraceEvent::Rx { msg: kind, from: node });
                    self.schedule(arrive, EventKind::Deliver { to, from: node, msg: frame.msg.clone() });
                    // attackers never acknowledge
                    acked = self.role(to) != Role::Attacker;
                }
                Reception::Lost(radio::LossCause::OutOfRange) => {}
                Reception::Lost(cause) => self.record(to, TraceEvent::Lost { msg: kind, from: node, cause }),
            }
        }

        let mut next = arrive;
        if let Some(to) = dst {
            if !acked && frame.attempt < r.mac_retries {
                frame.attempt += 1;
                frame.backoffs = 0;
                self.tx_queues[i].push_front(frame);
                next += self.rng.mac.gen_range(1..=r.backoff_max_ms.max(1));
            } else {
                let attempts = frame.attempt + 1;
                let actions =
                    self.nodes[i].on_unicast_result(&self.cfg.rpl, to, acked, attempts, now, &mut self.rng.trickle);
                if !acked {
                    if let Message::Data(pkt) = &frame.msg {
                        let ev = TraceEvent::DataDrop { origin: pkt.origin, seq: pkt.seq, reason: DropReason::MacFailure };
                        self.record(node, ev);
                    }
                }
                self.apply(node, actions);
            }
        }
        if self.tx_queues[i].is_empty() {
            self.tx_scheduled[i] = false;
        } else {
            self.schedule(next, EventKind::TxAttempt { node });
        }
    }
}

/// Run one scenario with one seed.
pub fn run(cfg: &ScenarioConfig, seed: u64, keep_trace: bool) -> Result<RunOutput, ConfigError> {
    Ok(Engine::new(cfg, seed, keep_trace)?.run())
}
