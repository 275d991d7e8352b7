//! Non-spoofed copycat attacker: overhears one DIO and multicasts it under
//! its own address at a fixed interval.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::rpl::DioMessage;
use crate::types::{NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CapturePolicy {
    /// Keep the first legitimate DIO overheard.
    #[default]
    FirstHeard,
    /// Keep the DIO from the closest sender heard before the attack starts.
    Strongest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackerConfig {
    pub replay_interval_ms: u64,
    pub attack_start_ms: u64,
    pub capture_policy: CapturePolicy,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        Self { replay_interval_ms: 1_000, attack_start_ms: 90_000, capture_policy: CapturePolicy::FirstHeard }
    }
}

impl AttackerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replay_interval_ms == 0 {
            return Err(ConfigError::new("attacker.replay_interval_ms", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackerState {
    pub id: NodeId,
    pub config: AttackerConfig,
    captured: Option<DioMessage>,
    captured_distance: f64,
    frozen: bool,
    pub launched_at: Option<SimTime>,
    pub replays: u64,
}

impl AttackerState {
    pub fn new(id: NodeId, config: AttackerConfig) -> Self {
        Self { id, config, captured: None, captured_distance: f64::INFINITY, frozen: false, launched_at: None, replays: 0 }
    }

    pub fn captured(&self) -> Option<&DioMessage> {
        self.captured.as_ref()
    }

    /// Feed an overheard DIO sent from `distance` meters away.
    pub fn overhear(&mut self, dio: &DioMessage, distance: f64) {
        if self.frozen || dio.src == self.id || dio.rank == crate::rpl::INFINITE_RANK {
            return;
        }
        match self.config.capture_policy {
            CapturePolicy::FirstHeard => {
                if self.captured.is_none() {
                    self.captured = Some(*dio);
                }
            }
            CapturePolicy::Strongest => {
                if distance < self.captured_distance {
                    self.captured = Some(*dio);
                    self.captured_distance = distance;
                }
            }
        }
    }

    /// The DIO to multicast at `now`, if any. Once the first replay goes out
    /// the payload never changes.
    pub fn attacker_step(&mut self, now: SimTime) -> Option<DioMessage> {
        if now < self.config.attack_start_ms {
            return None;
        }
        let captured = self.captured?;
        self.frozen = true;
        self.launched_at.get_or_insert(now);
        self.replays += 1;
        Some(DioMessage { src: self.id, ..captured })
    }

    /// Time of the replay tick following one at `now`.
    pub fn next_tick(&self, now: SimTime) -> SimTime {
        now + self.config.replay_interval_ms
    }
}
