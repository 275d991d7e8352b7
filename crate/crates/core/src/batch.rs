//! Batch execution: every (variant, seed) pair, keyed merge, CSV and plot-data output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{BatchConfig, Mode, Variant};
use crate::engine;
use crate::error::{BatchError, ConfigError};
use crate::metrics::{mean_ci95, RunMetrics};
use crate::trace::write_trace;

/// Bumped whenever a column is added, removed or renamed.
pub const SCHEMA_VERSION: u32 = 1;

pub const RUNS_FILE: &str = "runs.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const PDR_PLOT_FILE: &str = "pdr_vs_replay.dat";
pub const AE2ED_PLOT_FILE: &str = "ae2ed_vs_replay.dat";
pub const ADA_PLOT_FILE: &str = "ada.dat";
pub const FRT_PLOT_FILE: &str = "frt_per_attacker.dat";

pub const RUN_COLUMNS: &[&str] = &[
    "schema_version",
    "variant",
    "mode",
    "motion",
    "replay_interval_s",
    "seed",
    "pdr",
    "ae2ed_s",
    "ada",
    "ada_block",
    "frt_mean_s",
    "attackers_launched",
    "attackers_detected",
    "data_generated",
    "data_retransmissions",
    "data_delivered",
    "dio_sent",
    "dis_sent",
    "dao_sent",
    "probe_sent",
    "replays_sent",
    "true_suspicions",
    "false_suspicions",
    "true_blocks",
    "permanent_blocks_legit",
    "congestion_losses",
    "frames_lost",
    "frames_received",
    "drops_no_parent",
    "drops_mac",
    "drops_loop",
    "drops_queue",
];

type Extract = fn(&RunMetrics) -> Option<f64>;

/// Metrics summarised per variant in the aggregate file.
const AGG_METRICS: &[(&str, Extract)] = &[
    ("pdr", |m| m.pdr),
    ("ae2ed_s", |m| m.ae2ed),
    ("ada", |m| m.ada),
    ("ada_block", |m| m.ada_block),
    ("frt_mean_s", |m| m.frt_mean()),
    ("false_suspicions", |m| Some(m.false_suspicions as f64)),
    ("permanent_blocks_legit", |m| Some(m.permanent_blocks_legit as f64)),
    ("dio_sent", |m| Some(m.dio_sent as f64)),
    ("probe_sent", |m| Some(m.probe_sent as f64)),
];

pub fn aggregate_columns() -> Vec<String> {
    let mut cols: Vec<String> =
        ["schema_version", "variant", "mode", "motion", "replay_interval_s", "runs"].iter().map(|s| s.to_string()).collect();
    for (name, _) in AGG_METRICS {
        cols.push(format!("{name}_mean"));
        cols.push(format!("{name}_ci95"));
        cols.push(format!("{name}_n"));
    }
    cols
}

/// Command-line overrides applied on top of the `[run]` section.
#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    pub seeds: Option<Vec<u64>>,
    pub modes: Option<Vec<Mode>>,
    pub trace: bool,
}

impl BatchOptions {
    pub fn apply(&self, cfg: &BatchConfig) -> Result<BatchConfig, ConfigError> {
        let mut cfg = cfg.clone();
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return Err(ConfigError::new("seeds", "must not be empty"));
            }
            cfg.run.seeds = seeds.clone();
        }
        if let Some(modes) = &self.modes {
            cfg.run.modes = modes.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub runs: BTreeMap<(Variant, u64), RunMetrics>,
}

impl BatchResult {
    pub fn variants(&self) -> Vec<Variant> {
        let mut v: Vec<Variant> = self.runs.keys().map(|(v, _)| *v).collect();
        v.dedup();
        v
    }

    pub fn metrics_for(&self, v: &Variant) -> Vec<&RunMetrics> {
        self.runs.range((*v, 0)..=(*v, u64::MAX)).map(|(_, m)| m).collect()
    }
}

fn trace_name(v: &Variant, seed: u64) -> String {
    match v.replay_interval_ms {
        Some(r) => format!("{}_{}_{}ms_seed{}.trace", v.mode, v.motion.as_str(), r, seed),
        None => format!("{}_{}_seed{}.trace", v.mode, v.motion.as_str(), seed),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> BatchError {
    BatchError::Io { path: path.display().to_string(), source }
}

/// Run every job. Traces, when requested, are written into `trace_dir`.
pub fn run_batch(cfg: &BatchConfig, trace_dir: Option<&Path>) -> Result<BatchResult, BatchError> {
    cfg.validate()?;
    let jobs: Vec<(Variant, u64)> =
        cfg.variants().into_iter().flat_map(|v| cfg.seeds().into_iter().map(move |s| (v, s))).collect();
    let results: Vec<Result<_, BatchError>> = jobs
        .par_iter()
        .map(|&(v, seed)| {
            let scenario = cfg.scenario(&v);
            let out = engine::run(&scenario, seed, trace_dir.is_some())?;
            if let (Some(dir), Some(trace)) = (trace_dir, out.trace.as_ref()) {
                let path = dir.join(trace_name(&v, seed));
                fs::write(&path, write_trace(trace)).map_err(|e| io_err(&path, e))?;
            }
            log::debug!("finished {} seed {}", v.label(), seed);
            Ok(((v, seed), out.metrics))
        })
        .collect();
    let mut runs = BTreeMap::new();
    for r in results {
        let (k, m) = r?;
        runs.insert(k, m);
    }
    Ok(BatchResult { runs })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn replay_s(v: &Variant) -> String {
    v.replay_interval_ms.map(|r| format!("{}", r as f64 / 1000.0)).unwrap_or_default()
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, BatchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| BatchError::Io { path: "<csv buffer>".into(), source: e.into_error() })
}

pub fn runs_csv(result: &BatchResult) -> Result<Vec<u8>, BatchError> {
    let header: Vec<String> = RUN_COLUMNS.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = result
        .runs
        .iter()
        .map(|((v, seed), m)| {
            let mut row = vec![
                SCHEMA_VERSION.to_string(),
                v.label(),
                v.mode.to_string(),
                v.motion.as_str().to_string(),
                replay_s(v),
                seed.to_string(),
                opt(m.pdr),
                opt(m.ae2ed),
                opt(m.ada),
                opt(m.ada_block),
                opt(m.frt_mean()),
                m.attackers_launched().to_string(),
                m.attackers_detected().to_string(),
            ];
            row.extend(
                [
                    m.data_generated,
                    m.data_retransmissions,
                    m.data_delivered,
                    m.dio_sent,
                    m.dis_sent,
                    m.dao_sent,
                    m.probe_sent,
                    m.replays_sent,
                    m.true_suspicions,
                    m.false_suspicions,
                    m.true_blocks,
                    m.permanent_blocks_legit,
                    m.congestion_losses,
                    m.frames_lost,
                    m.frames_received,
                    m.drops_no_parent,
                    m.drops_mac,
                    m.drops_loop,
                    m.drops_queue,
                ]
                .iter()
                .map(|c| c.to_string()),
            );
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

pub fn aggregate_csv(result: &BatchResult) -> Result<Vec<u8>, BatchError> {
    let rows: Vec<Vec<String>> = result
        .variants()
        .iter()
        .map(|v| {
            let ms = result.metrics_for(v);
            let mut row = vec![
                SCHEMA_VERSION.to_string(),
                v.label(),
                v.mode.to_string(),
                v.motion.as_str().to_string(),
                replay_s(v),
                ms.len().to_string(),
            ];
            for (_, f) in AGG_METRICS {
                let vals: Vec<f64> = ms.iter().filter_map(|m| f(m)).collect();
                let ci = mean_ci95(&vals);
                row.push(opt(ci.map(|c| c.mean)));
                row.push(opt(ci.map(|c| c.half_width)));
                row.push(vals.len().to_string());
            }
            row
        })
        .collect();
    csv_bytes(&aggregate_columns(), &rows)
}

fn dash(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
}

fn series_plot(result: &BatchResult, title: &str, f: Extract) -> String {
    let mut s = format!("# {title}\n# motion mode replay_interval_s mean ci95 n\n");
    for v in result.variants() {
        let vals: Vec<f64> = result.metrics_for(&v).iter().filter_map(|m| f(m)).collect();
        let ci = mean_ci95(&vals);
        let r = v.replay_interval_ms.map(|r| format!("{}", r as f64 / 1000.0)).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            v.motion.as_str(),
            v.mode,
            r,
            dash(ci.map(|c| c.mean)),
            dash(ci.map(|c| c.half_width)),
            vals.len()
        );
    }
    s
}

pub fn ada_plot(result: &BatchResult) -> String {
    let mut s = String::from("# detection accuracy\n# motion replay_interval_s ada_mean ada_ci95 ada_block_mean ada_block_ci95\n");
    for v in result.variants().into_iter().filter(|v| v.mode == Mode::Cosec) {
        let ms = result.metrics_for(&v);
        let a = mean_ci95(&ms.iter().filter_map(|m| m.ada).collect::<Vec<_>>());
        let b = mean_ci95(&ms.iter().filter_map(|m| m.ada_block).collect::<Vec<_>>());
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            v.motion.as_str(),
            replay_s(&v),
            dash(a.map(|c| c.mean)),
            dash(a.map(|c| c.half_width)),
            dash(b.map(|c| c.mean)),
            dash(b.map(|c| c.half_width))
        );
    }
    s
}

pub fn frt_plot(result: &BatchResult) -> String {
    let mut s = String::from("# first response time per attacker\n# motion replay_interval_s seed attacker frt_s block_s\n");
    for ((v, seed), m) in result.runs.iter().filter(|((v, _), _)| v.mode == Mode::Cosec) {
        for (a, frt) in &m.frt_per_attacker {
            let block = m.block_time_per_attacker.get(a).copied().flatten();
            let _ = writeln!(s, "{} {} {} {} {} {}", v.motion.as_str(), replay_s(v), seed, a.0, dash(*frt), dash(block));
        }
    }
    s
}

/// Every output file with its contents.
pub fn render(result: &BatchResult) -> Result<Vec<(&'static str, Vec<u8>)>, BatchError> {
    Ok(vec![
        (RUNS_FILE, runs_csv(result)?),
        (AGGREGATE_FILE, aggregate_csv(result)?),
        (PDR_PLOT_FILE, series_plot(result, "packet delivery ratio vs replay interval", |m| m.pdr).into_bytes()),
        (AE2ED_PLOT_FILE, series_plot(result, "average end-to-end delay (s) vs replay interval", |m| m.ae2ed).into_bytes()),
        (ADA_PLOT_FILE, ada_plot(result).into_bytes()),
        (FRT_PLOT_FILE, frt_plot(result).into_bytes()),
    ])
}

/// Run a batch and write all outputs into `out`. Results are staged in a
/// scratch directory and only moved into place once everything succeeded.
pub fn run_to_dir(cfg: &BatchConfig, out: &Path, trace: bool) -> Result<Vec<PathBuf>, BatchError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let staging = out.join(format!(".staging-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
    }
    let traces = staging.join("traces");
    fs::create_dir_all(&traces).map_err(|e| io_err(&traces, e))?;
    let res = stage(cfg, &staging, trace.then_some(traces.as_path())).and_then(|names| publish(&staging, out, &names, trace));
    let _ = fs::remove_dir_all(&staging);
    res
}

fn stage(cfg: &BatchConfig, staging: &Path, traces: Option<&Path>) -> Result<Vec<&'static str>, BatchError> {
    let result = run_batch(cfg, traces)?;
    let files = render(&result)?;
    let mut names = Vec::new();
    for (name, bytes) in files {
        let p = staging.join(name);
        fs::write(&p, bytes).map_err(|e| io_err(&p, e))?;
        names.push(name);
    }
    Ok(names)
}

fn publish(staging: &Path, out: &Path, names: &[&str], trace: bool) -> Result<Vec<PathBuf>, BatchError> {
    let mut written = Vec::new();
    for name in names {
        let dst = out.join(name);
        fs::rename(staging.join(name), &dst).map_err(|e| io_err(&dst, e))?;
        written.push(dst);
    }
    if trace {
        let dst = out.join("traces");
        if dst.exists() {
            fs::remove_dir_all(&dst).map_err(|e| io_err(&dst, e))?;
        }
        fs::rename(staging.join("traces"), &dst).map_err(|e| io_err(&dst, e))?;
        written.push(dst);
    }
    Ok(written)
}
