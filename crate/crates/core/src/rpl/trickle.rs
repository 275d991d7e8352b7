//! Trickle timer driving DIO emission.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::types::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrickleConfig {
    pub i_min_ms: u64,
    pub max_doublings: u32,
    pub redundancy_k: u32,
}

impl Default for TrickleConfig {
    fn default() -> Self {
        // 2^12 ms and 8 doublings: 4.096 s up to ~17.5 min
        Self { i_min_ms: 4_096, max_doublings: 8, redundancy_k: 10 }
    }
}

impl TrickleConfig {
    pub fn i_max_ms(&self) -> u64 {
        self.i_min_ms << self.max_doublings
    }
}

/// What happened when the timer was polled at its deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TricklePoll {
    /// Fire point reached and the counter is below `k`.
    Transmit,
    /// Fire point reached but enough consistent messages were heard.
    Suppressed,
    /// Interval ended; a new, doubled interval began.
    NewInterval,
    Idle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrickleState {
    pub config: TrickleConfig,
    pub current_interval: u64,
    pub interval_start: SimTime,
    pub t_fire: SimTime,
    pub redundancy_counter: u32,
    fired: bool,
    running: bool,
    /// Bumped on every (re)start so stale timer events can be discarded.
    pub generation: u64,
}

impl TrickleState {
    pub fn new(config: TrickleConfig) -> Self {
        Self {
            config,
            current_interval: config.i_min_ms,
            interval_start: 0,
            t_fire: 0,
            redundancy_counter: 0,
            fired: false,
            running: false,
            generation: 0,
        }
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn start<R: Rng>(&mut self, now: SimTime, rng: &mut R) {
        self.running = true;
        self.current_interval = self.config.i_min_ms;
        self.generation += 1;
        self.begin_interval(now, rng);
    }

    pub fn stop(&mut self) {
        self.running = false;
        self.generation += 1;
    }

    fn begin_interval<R: Rng>(&mut self, start: SimTime, rng: &mut R) {
        let i = self.current_interval;
        self.interval_start = start;
        self.t_fire = start + rng.gen_range(i / 2..i);
        self.redundancy_counter = 0;
        self.fired = false;
    }

    pub fn hear_consistent(&mut self) {
        self.redundancy_counter = self.redundancy_counter.saturating_add(1);
    }

    /// Reset to `i_min`. Returns true when the timer was actually restarted;
    /// a running timer already at `i_min` is left alone.
    pub fn reset<R: Rng>(&mut self, now: SimTime, rng: &mut R) -> bool {
        if !self.running {
            self.start(now, rng);
            return true;
        }
        if self.current_interval == self.config.i_min_ms {
            return false;
        }
        self.current_interval = self.config.i_min_ms;
        self.generation += 1;
        self.begin_interval(now, rng);
        true
    }

    pub fn next_deadline(&self) -> Option<SimTime> {
        if !self.running {
            None
        } else if !self.fired {
            Some(self.t_fire)
        } else {
            Some(self.interval_start + self.current_interval)
        }
    }

    pub fn poll<R: Rng>(&mut self, now: SimTime, rng: &mut R) -> TricklePoll {
        if !self.running {
            return TricklePoll::Idle;
        }
        if !self.fired {
            if now < self.t_fire {
                return TricklePoll::Idle;
            }
            self.fired = true;
            return if self.redundancy_counter < self.config.redundancy_k {
                TricklePoll::Transmit
            } else {
                TricklePoll::Suppressed
            };
        }
        let end = self.interval_start + self.current_interval;
        if now < end {
            return TricklePoll::Idle;
        }
        self.current_interval = (self.current_interval * 2).min(self.config.i_max_ms());
        self.begin_interval(end, rng);
        TricklePoll::NewInterval
    }
}
