//! Line-oriented run trace.
//!
//! Each record is one line: `t<TAB>node<TAB>kind[<TAB>key=value]...`. Every
//! record written by [`TraceRecord::to_line`] parses back to an equal value,
//! so metrics can be recomputed from a stored trace.

use std::fmt::Write as _;

use crate::error::TraceParseError;
use crate::radio::LossCause;
use crate::rpl::{DropReason, MsgKind, Rank, Role};
use crate::types::{NodeId, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    Run { seed: u64, duration_ms: SimTime },
    Node { role: Role, x: f64, y: f64 },
    Tx { msg: MsgKind, dst: Option<NodeId>, attempt: u32 },
    Rx { msg: MsgKind, from: NodeId },
    Lost { msg: MsgKind, from: NodeId, cause: LossCause },
    DataGen { seq: u32 },
    DataRx { origin: NodeId, seq: u32, created: SimTime },
    DataDrop { origin: NodeId, seq: u32, reason: DropReason },
    Parent { from: Option<NodeId>, to: Option<NodeId>, rank: Rank },
    TrickleReset,
    Version { version: u32 },
    StaleDio { from: NodeId },
    Discard { from: NodeId },
    Suspect { subject: NodeId, count: u32 },
    Block { subject: NodeId },
    IdsOverflow { subject: NodeId },
    AttackLaunch { interval_ms: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: SimTime,
    pub node: NodeId,
    pub event: TraceEvent,
}

fn role_str(r: Role) -> &'static str {
    match r {
        Role::Root => "root",
        Role::Sensor => "sensor",
        Role::Attacker => "attacker",
    }
}

fn opt_node(n: Option<NodeId>) -> String {
    n.map_or_else(|| "-".to_string(), |n| n.to_string())
}

impl TraceRecord {
    pub fn kind(&self) -> &'static str {
        match self.event {
            TraceEvent::Run { .. } => "run",
            TraceEvent::Node { .. } => "node",
            TraceEvent::Tx { .. } => "tx",
            TraceEvent::Rx { .. } => "rx",
            TraceEvent::Lost { .. } => "lost",
            TraceEvent::DataGen { .. } => "data_gen",
            TraceEvent::DataRx { .. } => "data_rx",
            TraceEvent::DataDrop { .. } => "data_drop",
            TraceEvent::Parent { .. } => "parent",
            TraceEvent::TrickleReset => "trickle_reset",
            TraceEvent::Version { .. } => "version",
            TraceEvent::StaleDio { .. } => "stale_dio",
            TraceEvent::Discard { .. } => "discard",
            TraceEvent::Suspect { .. } => "suspect",
            TraceEvent::Block { .. } => "block",
            TraceEvent::IdsOverflow { .. } => "ids_overflow",
            TraceEvent::AttackLaunch { .. } => "attack_launch",
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = format!("{}\t{}\t{}", self.t, self.node, self.kind());
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = write!(s, "\t{k}={v}");
        };
        match &self.event {
            TraceEvent::Run { seed, duration_ms } => {
                kv("seed", seed);
                kv("duration_ms", duration_ms);
            }
            TraceEvent::Node { role, x, y } => {
                kv("role", &role_str(*role));
                kv("x", x);
                kv("y", y);
            }
            TraceEvent::Tx { msg, dst, attempt } => {
                kv("msg", &msg.as_str());
                kv("dst", &opt_node(*dst));
                kv("attempt", attempt);
            }
            TraceEvent::Rx { msg, from } => {
                kv("msg", &msg.as_str());
                kv("from", from);
            }
            TraceEvent::Lost { msg, from, cause } => {
                kv("msg", &msg.as_str());
                kv("from", from);
                kv("cause", &cause.as_str());
            }
            TraceEvent::DataGen { seq } => kv("seq", seq),
            TraceEvent::DataRx { origin, seq, created } => {
                kv("origin", origin);
                kv("seq", seq);
                kv("created", created);
            }
            TraceEvent::DataDrop { origin, seq, reason } => {
                kv("origin", origin);
                kv("seq", seq);
                kv("reason", &reason.as_str());
            }
            TraceEvent::Parent { from, to, rank } => {
                kv("from", &opt_node(*from));
                kv("to", &opt_node(*to));
                kv("rank", rank);
            }
            TraceEvent::TrickleReset => {}
            TraceEvent::Version { version } => kv("version", version),
            TraceEvent::StaleDio { from } | TraceEvent::Discard { from } => kv("from", from),
            TraceEvent::Suspect { subject, count } => {
                kv("subject", subject);
                kv("count", count);
            }
            TraceEvent::Block { subject } | TraceEvent::IdsOverflow { subject } => kv("subject", subject),
            TraceEvent::AttackLaunch { interval_ms } => kv("interval_ms", interval_ms),
        }
        s
    }

    /// Parse one line; `line_no` is only used in error messages.
    pub fn parse(line: &str, line_no: usize) -> Result<Self, TraceParseError> {
        let err = |reason: String| TraceParseError { line: line_no, reason };
        let mut parts = line.split('\t');
        let t: SimTime = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("bad time".into()))?;
        let node: NodeId = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("bad node".into()))?;
        let kind = parts.next().ok_or_else(|| err("missing kind".into()))?;
        let mut fields = std::collections::BTreeMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| err(format!("bad field `{p}`")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| err(format!("missing `{k}`")));
        fn num<T: std::str::FromStr>(v: &str, k: &str, line: usize) -> Result<T, TraceParseError> {
            v.parse().map_err(|_| TraceParseError { line, reason: format!("bad value for `{k}`: {v}") })
        }
        let n = |k: &str| -> Result<NodeId, TraceParseError> { num(get(k)?, k, line_no) };
        let on = |k: &str| -> Result<Option<NodeId>, TraceParseError> {
            let v = get(k)?;
            if v == "-" {
                Ok(None)
            } else {
                num(v, k, line_no).map(Some)
            }
        };
        let msg = || -> Result<MsgKind, TraceParseError> {
            let v = get("msg")?;
            MsgKind::parse(v).ok_or_else(|| err(format!("unknown msg `{v}`")))
        };

        let event = match kind {
            "run" => TraceEvent::Run {
                seed: num(get("seed")?, "seed", line_no)?,
                duration_ms: num(get("duration_ms")?, "duration_ms", line_no)?,
            },
            "node" => TraceEvent::Node {
                role: match get("role")? {
                    "root" => Role::Root,
                    "sensor" => Role::Sensor,
                    "attacker" => Role::Attacker,
                    r => return Err(err(format!("unknown role `{r}`"))),
                },
                x: num(get("x")?, "x", line_no)?,
                y: num(get("y")?, "y", line_no)?,
            },
            "tx" => TraceEvent::Tx { msg: msg()?, dst: on("dst")?, attempt: num(get("attempt")?, "attempt", line_no)? },
            "rx" => TraceEvent::Rx { msg: msg()?, from: n("from")? },
            "lost" => TraceEvent::Lost {
                msg: msg()?,
                from: n("from")?,
                cause: match get("cause")? {
                    "range" => LossCause::OutOfRange,
                    "random" => LossCause::Random,
                    "congestion" => LossCause::Congestion,
                    "busy" => LossCause::Busy,
                    c => return Err(err(format!("unknown cause `{c}`"))),
                },
            },
            "data_gen" => TraceEvent::DataGen { seq: num(get("seq")?, "seq", line_no)? },
            "data_rx" => TraceEvent::DataRx {
                origin: n("origin")?,
                seq: num(get("seq")?, "seq", line_no)?,
                created: num(get("created")?, "created", line_no)?,
            },
            "data_drop" => {
                let r = get("reason")?;
                TraceEvent::DataDrop {
                    origin: n("origin")?,
                    seq: num(get("seq")?, "seq", line_no)?,
                    reason: DropReason::parse(r).ok_or_else(|| err(format!("unknown reason `{r}`")))?,
                }
            }
            "parent" => TraceEvent::Parent { from: on("from")?, to: on("to")?, rank: num(get("rank")?, "rank", line_no)? },
            "trickle_reset" => TraceEvent::TrickleReset,
            "version" => TraceEvent::Version { version: num(get("version")?, "version", line_no)? },
            "stale_dio" => TraceEvent::StaleDio { from: n("from")? },
            "discard" => TraceEvent::Discard { from: n("from")? },
            "suspect" => TraceEvent::Suspect { subject: n("subject")?, count: num(get("count")?, "count", line_no)? },
            "block" => TraceEvent::Block { subject: n("subject")? },
            "ids_overflow" => TraceEvent::IdsOverflow { subject: n("subject")? },
            "attack_launch" => TraceEvent::AttackLaunch { interval_ms: num(get("interval_ms")?, "interval_ms", line_no)? },
            k => return Err(err(format!("unknown kind `{k}`"))),
        };
        Ok(TraceRecord { t, node, event })
    }
}

/// Render a whole trace, one record per line.
pub fn write_trace(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Parse a whole trace. Blank lines and lines starting with `#` are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| TraceRecord::parse(l, i + 1))
        .collect()
}
