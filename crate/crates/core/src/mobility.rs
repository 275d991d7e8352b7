//! Node positions and the Random Waypoint model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::types::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MobilityModel {
    #[default]
    Static,
    RandomWaypoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub model: MobilityModel,
    /// m/s
    pub speed_min: f64,
    pub speed_max: f64,
    /// Area width and height in meters.
    pub area: (f64, f64),
    pub pause_ms: u64,
    pub step_ms: u64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            model: MobilityModel::Static,
            speed_min: 1.0,
            speed_max: 2.0,
            area: (150.0, 150.0),
            pause_ms: 0,
            step_ms: 1_000,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.speed_min > 0.0 && self.speed_min <= self.speed_max) {
            return Err(ConfigError::new("mobility.speed_min", "need 0 < speed_min <= speed_max"));
        }
        if !(self.area.0 > 0.0 && self.area.1 > 0.0) {
            return Err(ConfigError::new("mobility.area", "width and height must be positive"));
        }
        if self.step_ms == 0 {
            return Err(ConfigError::new("mobility.step_ms", "must be > 0"));
        }
        Ok(())
    }

    pub fn random_point<R: Rng>(&self, rng: &mut R) -> Position {
        Position::new(rng.gen_range(0.0..=self.area.0), rng.gen_range(0.0..=self.area.1))
    }
}

/// Random Waypoint state of one mobile node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Walker {
    pub pos: Position,
    pub waypoint: Position,
    pub speed: f64,
    pub pause_until: SimTime,
}

impl Walker {
    pub fn new<R: Rng>(pos: Position, cfg: &MobilityConfig, rng: &mut R) -> Self {
        let waypoint = cfg.random_point(rng);
        let speed = rng.gen_range(cfg.speed_min..=cfg.speed_max);
        Self { pos, waypoint, speed, pause_until: 0 }
    }

    /// Advance by `dt_ms` ending at `now`.
    pub fn step<R: Rng>(&mut self, cfg: &MobilityConfig, dt_ms: u64, now: SimTime, rng: &mut R) {
        if now < self.pause_until {
            return;
        }
        let mut budget = self.speed * dt_ms as f64 / 1_000.0;
        let dist = self.pos.distance(&self.waypoint);
        if dist > budget {
            let f = budget / dist;
            self.pos.x += (self.waypoint.x - self.pos.x) * f;
            self.pos.y += (self.waypoint.y - self.pos.y) * f;
            return;
        }
        budget -= dist;
        self.pos = self.waypoint;
        self.waypoint = cfg.random_point(rng);
        self.speed = rng.gen_range(cfg.speed_min..=cfg.speed_max);
        if cfg.pause_ms > 0 {
            self.pause_until = now + cfg.pause_ms;
        } else if budget > 0.0 {
            // leftover distance of this step is spent towards the next waypoint
            let d = self.pos.distance(&self.waypoint);
            if d > 0.0 {
                let f = (budget / d).min(1.0);
                self.pos.x += (self.waypoint.x - self.pos.x) * f;
                self.pos.y += (self.waypoint.y - self.pos.y) * f;
            }
        }
    }
}

/// Move every walker one step.
pub fn move_nodes<R: Rng>(walkers: &mut [Walker], cfg: &MobilityConfig, dt_ms: u64, now: SimTime, rng: &mut R) {
    if cfg.model == MobilityModel::Static {
        return;
    }
    for w in walkers {
        w.step(cfg, dt_ms, now, rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rwp() -> MobilityConfig {
        MobilityConfig { model: MobilityModel::RandomWaypoint, ..MobilityConfig::default() }
    }

    #[test]
    fn static_model_never_moves() {
        let cfg = MobilityConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = vec![Walker::new(Position::new(10.0, 10.0), &cfg, &mut rng)];
        for t in 1..2000 {
            move_nodes(&mut w, &cfg, 1_000, t * 1_000, &mut rng);
        }
        assert_eq!(w[0].pos, Position::new(10.0, 10.0));
    }

    #[test]
    fn pause_holds_position() {
        let cfg = MobilityConfig { pause_ms: 5_000, ..rwp() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w = Walker::new(Position::new(0.0, 0.0), &cfg, &mut rng);
        w.waypoint = Position::new(1.0, 0.0);
        w.step(&cfg, 1_000, 1_000, &mut rng);
        assert_eq!(w.pos, Position::new(1.0, 0.0));
        assert_eq!(w.pause_until, 6_000);
        w.step(&cfg, 1_000, 2_000, &mut rng);
        assert_eq!(w.pos, Position::new(1.0, 0.0));
    }

    #[test]
    fn bad_speeds_rejected() {
        let cfg = MobilityConfig { speed_min: 3.0, ..MobilityConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(MobilityConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn displacement_and_area_bounds(seed in any::<u64>(), steps in 1usize..500) {
            let cfg = rwp();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = cfg.random_point(&mut rng);
            let mut w = Walker::new(start, &cfg, &mut rng);
            for i in 0..steps {
                let before = w.pos;
                w.step(&cfg, cfg.step_ms, (i as u64 + 1) * cfg.step_ms, &mut rng);
                prop_assert!(before.distance(&w.pos) <= cfg.speed_max * cfg.step_ms as f64 / 1_000.0 + 1e-9);
                prop_assert!((0.0..=cfg.area.0).contains(&w.pos.x));
                prop_assert!((0.0..=cfg.area.1).contains(&w.pos.y));
            }
        }
    }
}
