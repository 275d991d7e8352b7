//! Scenario and batch configuration.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attacker::AttackerConfig;
use crate::error::{BatchError, ConfigError};
use crate::ids::IdsConfig;
use crate::mobility::{MobilityConfig, MobilityModel};
use crate::radio::RadioConfig;
use crate::rpl::RplConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// Root in the centre, sensors and attackers uniformly at random.
    #[default]
    RandomGrid,
    /// `positions` lists root, sensors, then attackers.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub duration_s: u64,
    pub n_sensors: usize,
    pub n_attackers: usize,
    pub topology: TopologyKind,
    /// Grid width and height for `random_grid`; also the mobility area.
    pub width: f64,
    pub height: f64,
    pub positions: Vec<[f64; 2]>,
    /// Random layouts are redrawn until root and sensors form one
    /// connected graph.
    pub max_layout_attempts: u32,
    pub data_interval_s: u64,
    pub data_size: u16,
    pub data_start_s: u64,
    /// No data is generated during the last `data_drain_s` seconds.
    pub data_drain_s: u64,
    pub global_repair_at_s: Vec<u64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            duration_s: 1_800,
            n_sensors: 16,
            n_attackers: 4,
            topology: TopologyKind::RandomGrid,
            width: 150.0,
            height: 150.0,
            positions: Vec::new(),
            max_layout_attempts: 10_000,
            data_interval_s: 60,
            data_size: 30,
            data_start_s: 60,
            data_drain_s: 10,
            global_repair_at_s: Vec::new(),
        }
    }
}

/// Everything needed for one run apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network: NetworkConfig,
    pub attack_enabled: bool,
    pub ids_enabled: bool,
    pub radio: RadioConfig,
    pub mobility: MobilityConfig,
    pub attacker: AttackerConfig,
    pub ids: IdsConfig,
    pub rpl: RplConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            attack_enabled: true,
            ids_enabled: false,
            radio: RadioConfig::default(),
            mobility: MobilityConfig::default(),
            attacker: AttackerConfig::default(),
            ids: IdsConfig::default(),
            rpl: RplConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn duration_ms(&self) -> u64 {
        self.network.duration_s * 1_000
    }

    /// Attackers actually present in the run.
    pub fn active_attackers(&self) -> usize {
        if self.attack_enabled {
            self.network.n_attackers
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = &self.network;
        if n.duration_s == 0 {
            return Err(ConfigError::new("network.duration_s", "must be > 0"));
        }
        if n.n_attackers > n.n_sensors {
            return Err(ConfigError::new("network.n_attackers", "must not exceed network.n_sensors"));
        }
        if 1 + n.n_sensors + n.n_attackers > u16::MAX as usize {
            return Err(ConfigError::new("network.n_sensors", "too many nodes"));
        }
        if n.data_interval_s == 0 {
            return Err(ConfigError::new("network.data_interval_s", "must be > 0"));
        }
        match n.topology {
            TopologyKind::RandomGrid => {
                if !(n.width > 0.0 && n.height > 0.0) {
                    return Err(ConfigError::new("network.width", "grid dimensions must be positive"));
                }
                if n.max_layout_attempts == 0 {
                    return Err(ConfigError::new("network.max_layout_attempts", "must be >= 1"));
                }
            }
            TopologyKind::Explicit => {
                let need = 1 + n.n_sensors + self.active_attackers();
                if n.positions.len() < need {
                    return Err(ConfigError::new(
                        "network.positions",
                        format!("need {need} positions (root, sensors, attackers), got {}", n.positions.len()),
                    ));
                }
            }
        }
        self.radio.validate()?;
        self.mobility.validate()?;
        self.attacker.validate()?;
        self.ids.validate()?;
        self.rpl.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Attack,
    Cosec,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Attack => "attack",
            Mode::Cosec => "cosec",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "baseline" => Some(Mode::Baseline),
            "attack" => Some(Mode::Attack),
            "cosec" => Some(Mode::Cosec),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Static,
    Mobile,
}

impl Motion {
    pub fn as_str(self) -> &'static str {
        match self {
            Motion::Static => "static",
            Motion::Mobile => "mobile",
        }
    }
}

/// One scenario variant of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Variant {
    pub mode: Mode,
    pub motion: Motion,
    /// `None` for the attack-free baseline.
    pub replay_interval_ms: Option<u64>,
}

impl Variant {
    pub fn label(&self) -> String {
        match self.replay_interval_ms {
            Some(r) => format!("{}/{}/{}ms", self.mode, self.motion.as_str(), r),
            None => format!("{}/{}", self.mode, self.motion.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub replications: u32,
    /// Seeds are `base_seed .. base_seed + replications` unless `seeds` is
    /// given.
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
    pub mobility: Vec<Motion>,
    pub replay_intervals_s: Vec<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            replications: 10,
            base_seed: 1,
            seeds: Vec::new(),
            modes: vec![Mode::Baseline, Mode::Attack, Mode::Cosec],
            mobility: vec![Motion::Static, Motion::Mobile],
            replay_intervals_s: vec![1],
        }
    }
}

/// Batch file: a `[run]` section plus the scenario sections shared by all
/// variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub run: RunSection,
    pub network: NetworkConfig,
    pub radio: RadioConfig,
    pub mobility: MobilityConfig,
    pub attacker: AttackerConfig,
    pub ids: IdsConfig,
    pub rpl: RplConfig,
}

impl BatchConfig {
    pub fn from_toml(text: &str) -> Result<Self, BatchError> {
        let cfg: BatchConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.run.seeds.is_empty() {
            (0..self.run.replications as u64).map(|i| self.run.base_seed + i).collect()
        } else {
            self.run.seeds.clone()
        }
    }

    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for &motion in &self.run.mobility {
            for &mode in &self.run.modes {
                if mode == Mode::Baseline {
                    out.push(Variant { mode, motion, replay_interval_ms: None });
                } else {
                    for &r in &self.run.replay_intervals_s {
                        out.push(Variant { mode, motion, replay_interval_ms: Some(r * 1_000) });
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn scenario(&self, v: &Variant) -> ScenarioConfig {
        let mut mobility = self.mobility;
        mobility.model = match v.motion {
            Motion::Static => MobilityModel::Static,
            Motion::Mobile => MobilityModel::RandomWaypoint,
        };
        if self.network.topology == TopologyKind::RandomGrid {
            mobility.area = (self.network.width, self.network.height);
        }
        let mut attacker = self.attacker;
        if let Some(r) = v.replay_interval_ms {
            attacker.replay_interval_ms = r;
        }
        ScenarioConfig {
            network: self.network.clone(),
            attack_enabled: v.mode != Mode::Baseline,
            ids_enabled: v.mode == Mode::Cosec,
            radio: self.radio,
            mobility,
            attacker,
            ids: self.ids.clone(),
            rpl: self.rpl.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.run.replications == 0 && self.run.seeds.is_empty() {
            return Err(ConfigError::new("run.replications", "must be >= 1"));
        }
        if self.run.modes.is_empty() {
            return Err(ConfigError::new("run.modes", "must not be empty"));
        }
        if self.run.mobility.is_empty() {
            return Err(ConfigError::new("run.mobility", "must not be empty"));
        }
        if self.run.modes.iter().any(|m| *m != Mode::Baseline) && self.run.replay_intervals_s.is_empty() {
            return Err(ConfigError::new("run.replay_intervals_s", "must not be empty"));
        }
        if self.run.replay_intervals_s.contains(&0) {
            return Err(ConfigError::new("run.replay_intervals_s", "intervals must be > 0"));
        }
        for v in self.variants() {
            self.scenario(&v).validate()?;
        }
        Ok(())
    }
}
