//! Unit-disk radio with independent loss and an airtime congestion model.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::mobility::Position;
use crate::types::{NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CongestionModel {
    None,
    #[default]
    Airtime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub tx_range_m: f64,
    pub base_loss: f64,
    pub congestion_model: CongestionModel,
    /// Time a frame occupies the channel; also the sender's deaf period.
    pub airtime_per_msg_ms: u64,
    pub congestion_window_ms: u64,
    pub capacity_per_window: u32,
    /// Extra link-layer attempts for an unacknowledged unicast.
    pub mac_retries: u32,
    pub queue_limit: usize,
    /// Upper bound of the random defer applied while the channel is busy.
    pub backoff_max_ms: u64,
    pub max_backoffs: u32,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_range_m: 100.0,
            base_loss: 0.01,
            congestion_model: CongestionModel::Airtime,
            airtime_per_msg_ms: 4,
            congestion_window_ms: 100,
            capacity_per_window: 8,
            mac_retries: 1,
            queue_limit: 16,
            backoff_max_ms: 20,
            max_backoffs: 4,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tx_range_m.is_nan() || self.tx_range_m <= 0.0 {
            return Err(ConfigError::new("radio.tx_range_m", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.base_loss) {
            return Err(ConfigError::new("radio.base_loss", "must be in [0, 1)"));
        }
        if self.congestion_model == CongestionModel::Airtime
            && (self.capacity_per_window == 0 || self.congestion_window_ms == 0)
        {
            return Err(ConfigError::new("radio.capacity_per_window", "window and capacity must be > 0"));
        }
        if self.queue_limit == 0 {
            return Err(ConfigError::new("radio.queue_limit", "must be > 0"));
        }
        Ok(())
    }

    pub fn in_range(&self, a: &Position, b: &Position) -> bool {
        a.distance(b) <= self.tx_range_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossCause {
    OutOfRange,
    Random,
    Congestion,
    /// Receiver was transmitting itself.
    Busy,
}

impl LossCause {
    pub fn as_str(self) -> &'static str {
        match self {
            LossCause::OutOfRange => "range",
            LossCause::Random => "random",
            LossCause::Congestion => "congestion",
            LossCause::Busy => "busy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    Delivered,
    Lost(LossCause),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Receiver {
    pub id: NodeId,
    pub pos: Position,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Transmission {
    t: SimTime,
    sender: NodeId,
    pos: Position,
}

/// Recent transmissions, used for the congestion and half-duplex checks.
#[derive(Debug, Clone, Default)]
pub struct ChannelLog {
    recent: VecDeque<Transmission>,
}

impl ChannelLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, cfg: &RadioConfig, sender: NodeId, pos: Position, now: SimTime) {
        let keep = cfg.congestion_window_ms.max(cfg.airtime_per_msg_ms);
        while self.recent.front().is_some_and(|tx| tx.t + keep <= now) {
            self.recent.pop_front();
        }
        self.recent.push_back(Transmission { t: now, sender, pos });
    }

    /// Transmissions audible at `at` within `(now - window, now]`.
    pub fn load_at(&self, cfg: &RadioConfig, at: &Position, now: SimTime) -> u32 {
        self.recent
            .iter()
            .filter(|tx| tx.t + cfg.congestion_window_ms > now && tx.t <= now && cfg.in_range(&tx.pos, at))
            .count() as u32
    }

    /// Whether `node` started a frame that is still on the air at `now`,
    /// ignoring the frame sent at exactly `now` by `except`.
    pub fn is_transmitting(&self, cfg: &RadioConfig, node: NodeId, now: SimTime) -> bool {
        self.recent
            .iter()
            .any(|tx| tx.sender == node && tx.t <= now && tx.t + cfg.airtime_per_msg_ms > now)
    }

    /// Channel is above capacity around `at`.
    pub fn congested(&self, cfg: &RadioConfig, at: &Position, now: SimTime) -> bool {
        cfg.congestion_model == CongestionModel::Airtime && self.load_at(cfg, at, now) >= cfg.capacity_per_window
    }
}

/// Loss probability caused by `load` frames in one window.
pub fn congestion_loss(cfg: &RadioConfig, load: u32) -> f64 {
    match cfg.congestion_model {
        CongestionModel::None => 0.0,
        CongestionModel::Airtime => {
            let cap = cfg.capacity_per_window as f64;
            ((load as f64 - cap) / cap).clamp(0.0, 1.0)
        }
    }
}

/// Resolve one frame sent by `sender` at `now` for each receiver. The frame
/// must already be recorded in `log`.
pub fn deliver<R: Rng>(
    cfg: &RadioConfig,
    log: &ChannelLog,
    sender: NodeId,
    sender_pos: &Position,
    receivers: &[Receiver],
    now: SimTime,
    rng: &mut R,
) -> Vec<(NodeId, Reception)> {
    receivers
        .iter()
        .filter(|r| r.id != sender)
        .map(|r| {
            if !cfg.in_range(sender_pos, &r.pos) {
                return (r.id, Reception::Lost(LossCause::OutOfRange));
            }
            if log.is_transmitting(cfg, r.id, now) {
                return (r.id, Reception::Lost(LossCause::Busy));
            }
            if cfg.base_loss > 0.0 && rng.gen_bool(cfg.base_loss) {
                return (r.id, Reception::Lost(LossCause::Random));
            }
            let p = congestion_loss(cfg, log.load_at(cfg, &r.pos, now));
            if p > 0.0 && rng.gen_bool(p) {
                return (r.id, Reception::Lost(LossCause::Congestion));
            }
            (r.id, Reception::Delivered)
        })
        .collect()
}
