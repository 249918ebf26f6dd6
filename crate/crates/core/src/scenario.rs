//! Scenario files.
//!
//! A scenario is flat `key = value` text. Keys are dotted (`terrain.width`,
//! `flow.0.src`), `#` starts a comment, and every key is optional except the
//! `src`/`dst` of each declared flow. Unknown or repeated keys are errors.
//! Times are in seconds, energies in joules, distances in meters.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::adversary::AdversaryConfig;
use crate::aodv::{AodvParams, SequenceNumber};
use crate::detection::{DetectionConfig, DetectionMode};
use crate::error::ScenarioError;
use crate::ids::{FlowId, NodeId};
use crate::mobility::{MobilityParams, Position, Terrain};
use crate::time::{SimDuration, SimTime};
use crate::traffic::{CbrFlow, EnergyCosts};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub node_count: usize,
    pub terrain: Terrain,
    pub range: f64,
    pub propagation_delay: SimDuration,
    pub sim_time: SimTime,
    pub seed: u64,
    pub mobility: MobilityParams,
    pub fixed_positions: BTreeMap<NodeId, Position>,
    pub flows: Vec<CbrFlow>,
    pub adversary: AdversaryConfig,
    pub detection: DetectionConfig,
    pub energy: EnergyCosts,
    pub aodv: AodvParams,
    pub bucket: SimDuration,
}

impl Default for Scenario {
    /// Network parameters of the reference setup with no traffic and no
    /// adversary.
    fn default() -> Self {
        Scenario {
            node_count: 25,
            terrain: Terrain {
                width: 1286.0,
                height: 850.0,
            },
            range: 250.0,
            propagation_delay: SimDuration::from_millis(1),
            sim_time: SimTime::from_secs(20),
            seed: 42,
            mobility: MobilityParams::default(),
            fixed_positions: BTreeMap::new(),
            flows: Vec::new(),
            adversary: AdversaryConfig::default(),
            detection: DetectionConfig::default(),
            energy: EnergyCosts::default(),
            aodv: AodvParams::default(),
            bucket: SimDuration::from_millis(500),
        }
    }
}

pub const REFERENCE_SOURCES: [u32; 4] = [21, 20, 11, 17];
pub const REFERENCE_DESTINATION: u32 = 18;
pub const REFERENCE_BLACK_HOLES: [u32; 3] = [0, 1, 2];

impl Scenario {
    /// The reference experiment: 25 mobile nodes, four staggered CBR sources
    /// toward node 18, three black holes.
    pub fn reference() -> Self {
        let flows = REFERENCE_SOURCES
            .iter()
            .enumerate()
            .map(|(i, &src)| CbrFlow {
                flow: FlowId(i as u32),
                src: NodeId(src),
                dst: NodeId(REFERENCE_DESTINATION),
                rate: 4.0,
                size_bytes: 512,
                start_at: SimTime::from_secs(1 + 2 * i as u64),
                stop_at: SimTime::from_secs(19),
            })
            .collect();
        Scenario {
            flows,
            adversary: AdversaryConfig {
                nodes: REFERENCE_BLACK_HOLES.iter().map(|&n| NodeId(n)).collect(),
                ..AdversaryConfig::default()
            },
            ..Scenario::default()
        }
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_owned(),
            source,
        })?;
        Scenario::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let entries = parse_entries(text)?;
        let mut sc = Scenario::default();
        let mut flows: BTreeMap<u32, FlowDraft> = BTreeMap::new();
        let mut threshold_by_nodes = false;

        for entry in &entries {
            let key = entry.key.as_str();
            let parts: Vec<&str> = key.split('.').collect();
            match parts.as_slice() {
                ["nodes"] => sc.node_count = entry.value()?,
                ["seed"] => sc.seed = entry.value()?,
                ["sim_time"] => sc.sim_time = SimTime::ZERO + entry.seconds()?,
                ["terrain", "width"] => sc.terrain.width = entry.value()?,
                ["terrain", "height"] => sc.terrain.height = entry.value()?,
                ["radio", "range"] => sc.range = entry.value()?,
                ["radio", "delay"] => sc.propagation_delay = entry.seconds()?,
                ["mobility", "enabled"] => sc.mobility.enabled = entry.value()?,
                ["mobility", "v_min"] => sc.mobility.v_min = entry.value()?,
                ["mobility", "v_max"] => sc.mobility.v_max = entry.value()?,
                ["mobility", "pause"] => sc.mobility.pause = entry.seconds()?,
                ["mobility", "fixed", id] => {
                    let id: u32 = parse_index(entry, id)?;
                    let (x, y) = entry
                        .raw
                        .split_once(',')
                        .ok_or_else(|| entry.error("expected `x,y`"))?;
                    let x = x.trim().parse().map_err(|_| entry.error("bad x coordinate"))?;
                    let y = y.trim().parse().map_err(|_| entry.error("bad y coordinate"))?;
                    sc.fixed_positions.insert(NodeId(id), Position::new(x, y));
                }
                ["flow", idx, field] => {
                    let idx: u32 = parse_index(entry, idx)?;
                    let draft = flows.entry(idx).or_default();
                    match *field {
                        "src" => draft.src = Some(entry.value()?),
                        "dst" => draft.dst = Some(entry.value()?),
                        "rate" => draft.rate = Some(entry.value()?),
                        "size" => draft.size = Some(entry.value()?),
                        "start" => draft.start = Some(entry.seconds()?),
                        "stop" => draft.stop = Some(entry.seconds()?),
                        _ => return Err(entry.unknown()),
                    }
                }
                ["adversary", "nodes"] => {
                    sc.adversary.nodes = entry
                        .raw
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            s.parse()
                                .map(NodeId)
                                .map_err(|_| entry.error("expected node ids"))
                        })
                        .collect::<Result<BTreeSet<_>, _>>()?;
                }
                ["adversary", "forged_seq"] => sc.adversary.forged_seq = SequenceNumber(entry.value()?),
                ["adversary", "reply_delay"] => sc.adversary.reply_delay = entry.seconds()?,
                ["detection", "threshold"] => {
                    if entry.raw == "node-count" {
                        threshold_by_nodes = true;
                    } else {
                        sc.detection.threshold = SequenceNumber(entry.value()?);
                    }
                }
                ["detection", "mode"] => {
                    sc.detection.mode = match entry.raw.as_str() {
                        "raw" => DetectionMode::Raw,
                        "adaptive-rate" => DetectionMode::AdaptiveRate,
                        _ => return Err(entry.error("expected `raw` or `adaptive-rate`")),
                    }
                }
                ["detection", "rate_threshold"] => sc.detection.rate_threshold = entry.value()?,
                ["energy", "initial"] => sc.energy.initial_uj = entry.microjoules()?,
                ["energy", "tx"] => sc.energy.tx_uj = entry.microjoules()?,
                ["energy", "rx"] => sc.energy.rx_uj = entry.microjoules()?,
                ["energy", "screen"] => sc.energy.screen_uj = entry.microjoules()?,
                ["aodv", "rrep_wait"] => sc.aodv.rrep_wait = entry.seconds()?,
                ["aodv", "route_lifetime"] => sc.aodv.route_lifetime = entry.seconds()?,
                ["aodv", "dedup_ttl"] => sc.aodv.dedup_ttl = entry.seconds()?,
                ["aodv", "buffer_cap"] => sc.aodv.buffer_cap = entry.value()?,
                ["metrics", "bucket"] => sc.bucket = entry.seconds()?,
                _ => return Err(entry.unknown()),
            }
        }

        if threshold_by_nodes {
            sc.detection.threshold = SequenceNumber(sc.node_count as u32);
        }
        sc.aodv.net_ttl = sc.node_count as u32;
        let default_stop = sc.sim_time.saturating_since(SimTime::from_secs(1));
        sc.flows = flows
            .into_iter()
            .map(|(idx, d)| d.build(idx, SimTime::ZERO + default_stop))
            .collect::<Result<_, _>>()?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.node_count;
        let node_ok = |id: NodeId| id.index() < n;
        check(n >= 2, "nodes", "need at least two nodes")?;
        check(
            self.terrain.width > 0.0 && self.terrain.height > 0.0,
            "terrain",
            "dimensions must be positive",
        )?;
        check(self.range > 0.0, "radio.range", "must be positive")?;
        check(self.sim_time > SimTime::ZERO, "sim_time", "must be positive")?;
        check(
            self.bucket > SimDuration::ZERO,
            "metrics.bucket",
            "must be positive",
        )?;
        check(
            self.aodv.rrep_wait > SimDuration::ZERO,
            "aodv.rrep_wait",
            "must be positive",
        )?;
        check(self.aodv.buffer_cap > 0, "aodv.buffer_cap", "must be positive")?;
        check(
            self.mobility.v_min > 0.0 && self.mobility.v_max >= self.mobility.v_min,
            "mobility.v_min",
            "need 0 < v_min <= v_max",
        )?;
        for (&id, &pos) in &self.fixed_positions {
            let field = format!("mobility.fixed.{}", id.0);
            check(node_ok(id), &field, "node id out of range")?;
            check(self.terrain.contains(pos), &field, "position outside terrain")?;
        }
        let mut endpoints = BTreeSet::new();
        for f in &self.flows {
            let field = |name: &str| format!("flow.{}.{name}", f.flow.0);
            check(
                node_ok(f.src),
                &field("src"),
                &format!("node {} >= node count {n}", f.src),
            )?;
            check(
                node_ok(f.dst),
                &field("dst"),
                &format!("node {} >= node count {n}", f.dst),
            )?;
            check(f.src != f.dst, &field("dst"), "must differ from src")?;
            check(
                f.rate > 0.0 && f.rate.is_finite(),
                &field("rate"),
                "must be positive",
            )?;
            check(f.size_bytes > 0, &field("size"), "must be positive")?;
            check(f.start_at < f.stop_at, &field("stop"), "must be after start")?;
            check(
                f.stop_at <= self.sim_time,
                &field("stop"),
                "must not exceed sim_time",
            )?;
            endpoints.insert(f.src);
            endpoints.insert(f.dst);
        }
        for &m in &self.adversary.nodes {
            check(
                node_ok(m),
                "adversary.nodes",
                &format!("node {m} >= node count {n}"),
            )?;
            check(
                !endpoints.contains(&m),
                "adversary.nodes",
                &format!("node {m} is a flow endpoint"),
            )?;
        }
        check(
            self.detection.threshold.0 > 0,
            "detection.threshold",
            "must be positive",
        )?;
        check(
            self.detection.rate_threshold > 0.0,
            "detection.rate_threshold",
            "must be positive",
        )?;
        Ok(())
    }
}

fn check(ok: bool, field: &str, message: &str) -> Result<(), ScenarioError> {
    if ok {
        Ok(())
    } else {
        Err(ScenarioError::Validation {
            field: field.to_owned(),
            message: message.to_owned(),
        })
    }
}

#[derive(Debug, Default)]
struct FlowDraft {
    src: Option<u32>,
    dst: Option<u32>,
    rate: Option<f64>,
    size: Option<u32>,
    start: Option<SimDuration>,
    stop: Option<SimDuration>,
}

impl FlowDraft {
    fn build(self, idx: u32, default_stop: SimTime) -> Result<CbrFlow, ScenarioError> {
        let missing = |name: &str| ScenarioError::Validation {
            field: format!("flow.{idx}.{name}"),
            message: "required".to_owned(),
        };
        Ok(CbrFlow {
            flow: FlowId(idx),
            src: NodeId(self.src.ok_or_else(|| missing("src"))?),
            dst: NodeId(self.dst.ok_or_else(|| missing("dst"))?),
            rate: self.rate.unwrap_or(4.0),
            size_bytes: self.size.unwrap_or(512),
            start_at: SimTime::ZERO
                + self
                    .start
                    .unwrap_or(SimDuration::from_secs(1 + 2 * u64::from(idx))),
            stop_at: self.stop.map_or(default_stop, |s| SimTime::ZERO + s),
        })
    }
}

#[derive(Debug)]
struct Entry {
    key: String,
    raw: String,
    line: usize,
    value_col: usize,
}

impl Entry {
    fn error(&self, message: &str) -> ScenarioError {
        ScenarioError::Parse {
            line: self.line,
            column: self.value_col,
            message: format!("`{}`: {message}", self.key),
        }
    }

    fn unknown(&self) -> ScenarioError {
        ScenarioError::Parse {
            line: self.line,
            column: 1,
            message: format!("unknown key `{}`", self.key),
        }
    }

    fn value<T: FromStr>(&self) -> Result<T, ScenarioError> {
        self.raw
            .parse()
            .map_err(|_| self.error(&format!("cannot parse `{}`", self.raw)))
    }

    fn seconds(&self) -> Result<SimDuration, ScenarioError> {
        let s: f64 = self.value()?;
        SimDuration::from_secs_f64(s).ok_or_else(|| self.error("expected non-negative seconds"))
    }

    fn microjoules(&self) -> Result<u64, ScenarioError> {
        let j: f64 = self.value()?;
        if !j.is_finite() || j < 0.0 {
            return Err(self.error("expected non-negative joules"));
        }
        Ok((j * 1e6).round() as u64)
    }
}

fn parse_index(entry: &Entry, s: &str) -> Result<u32, ScenarioError> {
    s.parse()
        .map_err(|_| entry.error("index must be a non-negative integer"))
}

fn parse_entries(text: &str) -> Result<Vec<Entry>, ScenarioError> {
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            let column = raw_line.len() - raw_line.trim_start().len() + 1;
            return Err(ScenarioError::Parse {
                line,
                column,
                message: "expected `key = value`".to_owned(),
            });
        };
        let key = k.trim();
        let column = k.len() - k.trim_start().len() + 1;
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ScenarioError::Parse {
                line,
                column,
                message: "malformed key".to_owned(),
            });
        }
        if !seen.insert(key.to_owned()) {
            return Err(ScenarioError::Parse {
                line,
                column,
                message: format!("duplicate key `{key}`"),
            });
        }
        let value_col = k.len() + 2 + (v.len() - v.trim_start().len());
        entries.push(Entry {
            key: key.to_owned(),
            raw: v.trim().to_owned(),
            line,
            value_col,
        });
    }
    if entries.is_empty() {
        return Err(ScenarioError::Parse {
            line: 1,
            column: 1,
            message: "scenario is empty".to_owned(),
        });
    }
    Ok(entries)
}
