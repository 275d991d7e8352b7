//! PDR, end-to-end delay, detection accuracy and first response time,
//! computed from trace records.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::rpl::{DropReason, MsgKind, Role};
use crate::trace::{TraceEvent, TraceRecord};
use crate::types::{NodeId, SimTime, MS_PER_S};
use crate::radio::LossCause;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub pdr: Option<f64>,
    /// Seconds.
    pub ae2ed: Option<f64>,
    /// Suspicion events naming an attacker over all suspicion events.
    pub ada: Option<f64>,
    /// Same ratio over permanent blocks.
    pub ada_block: Option<f64>,
    /// Seconds from launch to the first suspicion by any node.
    pub frt_per_attacker: BTreeMap<NodeId, Option<f64>>,
    /// Seconds from launch to the first permanent block by any node.
    pub block_time_per_attacker: BTreeMap<NodeId, Option<f64>>,
    pub data_generated: u64,
    pub data_retransmissions: u64,
    pub data_delivered: u64,
    pub dio_sent: u64,
    pub dis_sent: u64,
    pub dao_sent: u64,
    pub probe_sent: u64,
    pub replays_sent: u64,
    pub true_suspicions: u64,
    pub false_suspicions: u64,
    pub true_blocks: u64,
    pub permanent_blocks_legit: u64,
    pub congestion_losses: u64,
    pub frames_lost: u64,
    pub frames_received: u64,
    pub drops_no_parent: u64,
    pub drops_mac: u64,
    pub drops_loop: u64,
    pub drops_queue: u64,
}

impl RunMetrics {
    pub fn frt_mean(&self) -> Option<f64> {
        mean(self.frt_per_attacker.values().flatten().copied())
    }

    pub fn attackers_launched(&self) -> usize {
        self.frt_per_attacker.len()
    }

    pub fn attackers_detected(&self) -> usize {
        self.frt_per_attacker.values().filter(|v| v.is_some()).count()
    }

    /// Fraction of in-range frames that were lost.
    pub fn frame_loss_rate(&self) -> Option<f64> {
        ratio(self.frames_lost, self.frames_lost + self.frames_received)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Eq-style helpers on plain counts, usable without a trace.
pub fn compute_pdr(received: u64, sent_including_retx: u64) -> Option<f64> {
    ratio(received, sent_including_retx)
}

pub fn compute_ae2ed(delays_s: &[f64]) -> Option<f64> {
    mean(delays_s.iter().copied())
}

pub fn compute_ada(true_detections: u64, false_detections: u64) -> Option<f64> {
    ratio(true_detections, true_detections + false_detections)
}

pub fn compute_frt(launch: SimTime, first_detection: Option<SimTime>) -> Option<f64> {
    first_detection.map(|d| d.saturating_sub(launch) as f64 / MS_PER_S as f64)
}

/// Folds trace records into [`RunMetrics`]. Feeding the same records, live
/// or parsed back from a file, gives the same result.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    roles: BTreeMap<NodeId, Role>,
    generated: u64,
    retx: u64,
    delivered: BTreeSet<(NodeId, u32)>,
    delay_sum_ms: u128,
    dio: u64,
    dis: u64,
    dao: u64,
    probe: u64,
    replays: u64,
    suspicions: Vec<(SimTime, NodeId)>,
    blocks: Vec<(SimTime, NodeId)>,
    launches: BTreeMap<NodeId, SimTime>,
    congestion_losses: u64,
    frames_lost: u64,
    frames_received: u64,
    drops: [u64; 4],
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    fn is_attacker(&self, n: NodeId) -> bool {
        self.roles.get(&n) == Some(&Role::Attacker)
    }

    pub fn observe(&mut self, r: &TraceRecord) {
        match &r.event {
            TraceEvent::Node { role, .. } => {
                self.roles.insert(r.node, *role);
            }
            TraceEvent::Tx { msg, attempt, .. } => {
                if self.is_attacker(r.node) {
                    if *msg == MsgKind::Dio {
                        self.replays += 1;
                    }
                    return;
                }
                match msg {
                    MsgKind::Dio => self.dio += 1,
                    MsgKind::Dis => self.dis += 1,
                    MsgKind::Dao => self.dao += 1,
                    MsgKind::Probe => self.probe += 1,
                    MsgKind::Data if *attempt > 0 => self.retx += 1,
                    _ => {}
                }
            }
            TraceEvent::Rx { .. } => self.frames_received += 1,
            TraceEvent::Lost { cause, .. } => {
                self.frames_lost += 1;
                if *cause == LossCause::Congestion {
                    self.congestion_losses += 1;
                }
            }
            TraceEvent::DataGen { .. } => self.generated += 1,
            TraceEvent::DataRx { origin, seq, created } => {
                if self.delivered.insert((*origin, *seq)) {
                    self.delay_sum_ms += (r.t - created) as u128;
                }
            }
            TraceEvent::DataDrop { reason, .. } => {
                let k = match reason {
                    DropReason::NoParent => 0,
                    DropReason::MacFailure => 1,
                    DropReason::Loop => 2,
                    DropReason::QueueFull => 3,
                };
                self.drops[k] += 1;
            }
            TraceEvent::Suspect { subject, .. } => self.suspicions.push((r.t, *subject)),
            TraceEvent::Block { subject } => self.blocks.push((r.t, *subject)),
            TraceEvent::AttackLaunch { .. } => {
                self.launches.entry(r.node).or_insert(r.t);
            }
            _ => {}
        }
    }

    pub fn finish(&self) -> RunMetrics {
        let delivered = self.delivered.len() as u64;
        let true_susp = self.suspicions.iter().filter(|(_, s)| self.is_attacker(*s)).count() as u64;
        let false_susp = self.suspicions.len() as u64 - true_susp;
        let true_blocks = self.blocks.iter().filter(|(_, s)| self.is_attacker(*s)).count() as u64;
        let false_blocks = self.blocks.len() as u64 - true_blocks;
        let first = |events: &[(SimTime, NodeId)], who: NodeId, after: SimTime| {
            events.iter().filter(|(t, s)| *s == who && *t >= after).map(|(t, _)| *t).min()
        };
        let frt = self
            .launches
            .iter()
            .map(|(&a, &l)| (a, compute_frt(l, first(&self.suspicions, a, l))))
            .collect();
        let block_time = self
            .launches
            .iter()
            .map(|(&a, &l)| (a, compute_frt(l, first(&self.blocks, a, l))))
            .collect();
        RunMetrics {
            pdr: compute_pdr(delivered, self.generated + self.retx),
            ae2ed: (delivered > 0).then(|| self.delay_sum_ms as f64 / delivered as f64 / MS_PER_S as f64),
            ada: compute_ada(true_susp, false_susp),
            ada_block: compute_ada(true_blocks, false_blocks),
            frt_per_attacker: frt,
            block_time_per_attacker: block_time,
            data_generated: self.generated,
            data_retransmissions: self.retx,
            data_delivered: delivered,
            dio_sent: self.dio,
            dis_sent: self.dis,
            dao_sent: self.dao,
            probe_sent: self.probe,
            replays_sent: self.replays,
            true_suspicions: true_susp,
            false_suspicions: false_susp,
            true_blocks,
            permanent_blocks_legit: false_blocks,
            congestion_losses: self.congestion_losses,
            frames_lost: self.frames_lost,
            frames_received: self.frames_received,
            drops_no_parent: self.drops[0],
            drops_mac: self.drops[1],
            drops_loop: self.drops[2],
            drops_queue: self.drops[3],
        }
    }
}

pub fn metrics_from_trace(records: &[TraceRecord]) -> RunMetrics {
    let mut acc = MetricsAccumulator::new();
    for r in records {
        acc.observe(r);
    }
    acc.finish()
}

/// Mean with a two-sided 95% Student-t confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

/// `None` when there are no values; a single value has zero half-width.
pub fn mean_ci95(values: &[f64]) -> Option<MeanCi> {
    let n = values.len();
    let m = mean(values.iter().copied())?;
    if n == 1 {
        return Some(MeanCi { mean: m, half_width: 0.0, n });
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("n >= 2").inverse_cdf(0.975);
    Some(MeanCi { mean: m, half_width: t * (var / n as f64).sqrt(), n })
}
