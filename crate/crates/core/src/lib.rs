pub mod attacker;
pub mod batch;
pub mod config;
pub mod engine;
pub mod error;
pub mod ids;
pub mod metrics;
pub mod mobility;
pub mod outlier;
pub mod radio;
pub mod rpl;
pub mod trace;
pub mod types;
