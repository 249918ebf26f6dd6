//! Offline analysis of a finished trace. Everything here is a pure function
//! of the trace, so metrics can be recomputed from the file alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::Error;
use crate::ids::NodeId;
use crate::time::{SimDuration, SimTime};
use crate::trace::{Ev, Trace, TraceLine};
use crate::traffic::uj_to_joules;

pub const CSV_HEADER: &str = "bucket_end_us,received_pkts,received_bps,cum_received,energy_spent_j,detects";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Baseline,
    Attack,
    Defend,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Baseline, Phase::Attack, Phase::Defend];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Baseline => "baseline",
            Phase::Attack => "attack",
            Phase::Defend => "defend",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "baseline" => Ok(Phase::Baseline),
            "attack" => Ok(Phase::Attack),
            "defend" => Ok(Phase::Defend),
            other => Err(format!(
                "unknown phase `{other}` (expected baseline, attack or defend)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bucket {
    pub end: SimTime,
    pub received_pkts: u64,
    pub received_bps: f64,
    pub cum_received: u64,
    pub energy_spent_uj: u64,
    pub detects: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub phase: Phase,
    pub sent: u64,
    pub received: u64,
    pub absorbed: u64,
    pub no_route_drops: u64,
    pub other_drops: u64,
    pub in_flight: u64,
    pub throughput_series: Vec<(SimTime, f64)>,
    pub energy_total_uj: u64,
    pub detects: u64,
}

impl PhaseReport {
    pub fn energy_total_j(&self) -> f64 {
        uj_to_joules(self.energy_total_uj)
    }

    pub fn delivery_ratio(&self) -> f64 {
        if self.sent == 0 {
            0.0
        } else {
            self.received as f64 / self.sent as f64
        }
    }
}

fn bucket_index(t: SimTime, bucket: SimDuration) -> usize {
    // buckets are (0, b], (b, 2b], ...; t = 0 lands in the first one
    (t.as_micros().max(1) - 1).div_euclid(bucket.as_micros()) as usize
}

fn bucket_count(end: SimTime, bucket: SimDuration) -> usize {
    end.as_micros().div_ceil(bucket.as_micros()).max(1) as usize
}

fn field<T: FromStr>(line: &TraceLine, key: &str) -> Result<T, Error> {
    line.parse_field(key).ok_or_else(|| {
        Error::Invariant(format!(
            "t={} ev={} node={} lacks a valid `{key}`",
            line.t,
            line.ev.as_str(),
            line.node
        ))
    })
}

/// Per-bucket delivery, energy and detection series over `(0, end]`.
pub fn bucketed_throughput(trace: &Trace, bucket: SimDuration) -> Result<Vec<Bucket>, Error> {
    assert!(bucket > SimDuration::ZERO, "bucket must be positive");
    let n = bucket_count(trace.end, bucket);
    let secs = bucket.as_secs_f64();
    let mut buckets: Vec<Bucket> = (0..n)
        .map(|i| Bucket {
            end: SimTime::from_micros(bucket.as_micros() * (i as u64 + 1)),
            received_pkts: 0,
            received_bps: 0.0,
            cum_received: 0,
            energy_spent_uj: 0,
            detects: 0,
        })
        .collect();
    let mut bits = vec![0u64; n];
    // latest spent_uj per node, applied to every bucket from its own onwards
    let mut energy_steps: Vec<BTreeMap<NodeId, u64>> = vec![BTreeMap::new(); n];
    for line in &trace.lines {
        let idx = bucket_index(line.t, bucket).min(n - 1);
        match line.ev {
            Ev::Recv => {
                buckets[idx].received_pkts += 1;
                bits[idx] += 8 * field::<u64>(line, "size")?;
            }
            Ev::Detect => buckets[idx].detects += 1,
            Ev::Energy => {
                energy_steps[idx].insert(line.node, field(line, "spent_uj")?);
            }
            _ => {}
        }
    }
    let mut cum = 0;
    let mut spent: BTreeMap<NodeId, u64> = BTreeMap::new();
    for (i, b) in buckets.iter_mut().enumerate() {
        cum += b.received_pkts;
        b.cum_received = cum;
        b.received_bps = bits[i] as f64 / secs;
        spent.extend(&energy_steps[i]);
        b.energy_spent_uj = spent.values().sum();
    }
    Ok(buckets)
}

pub fn write_csv(buckets: &[Bucket], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for b in buckets {
        writeln!(
            out,
            "{},{},{},{},{:.6},{}",
            b.end.as_micros(),
            b.received_pkts,
            b.received_bps,
            b.cum_received,
            uj_to_joules(b.energy_spent_uj),
            b.detects
        )?;
    }
    Ok(())
}

/// Aggregates a complete trace and checks packet conservation: every sent
/// data packet ends at most once, and never without having been sent.
pub fn phase_report(trace: &Trace, phase: Phase, bucket: SimDuration) -> Result<PhaseReport, Error> {
    let mut sent: BTreeSet<(u32, u64)> = BTreeSet::new();
    let mut ended: BTreeSet<(u32, u64)> = BTreeSet::new();
    let mut report = PhaseReport {
        phase,
        sent: 0,
        received: 0,
        absorbed: 0,
        no_route_drops: 0,
        other_drops: 0,
        in_flight: 0,
        throughput_series: Vec::new(),
        energy_total_uj: 0,
        detects: 0,
    };
    let mut spent: BTreeMap<NodeId, u64> = BTreeMap::new();
    for line in &trace.lines {
        let is_data = line.get("msg") == Some("DATA");
        match line.ev {
            Ev::Send if is_data => {
                let id = (field(line, "flow")?, field(line, "pkt")?);
                if !sent.insert(id) {
                    return Err(Error::ConservationViolation(format!("packet {id:?} sent twice")));
                }
                report.sent += 1;
            }
            Ev::Recv | Ev::Drop if line.ev == Ev::Recv || is_data => {
                let id = (field(line, "flow")?, field(line, "pkt")?);
                if !sent.contains(&id) {
                    return Err(Error::ConservationViolation(format!(
                        "packet {id:?} terminated at t={} without being sent",
                        line.t
                    )));
                }
                if !ended.insert(id) {
                    return Err(Error::ConservationViolation(format!(
                        "packet {id:?} terminated twice (again at t={})",
                        line.t
                    )));
                }
                match (line.ev, line.get("reason")) {
                    (Ev::Recv, _) => report.received += 1,
                    (_, Some("blackhole_absorb")) => report.absorbed += 1,
                    (_, Some("no_route")) => report.no_route_drops += 1,
                    _ => report.other_drops += 1,
                }
            }
            Ev::Detect => report.detects += 1,
            Ev::Energy => {
                spent.insert(line.node, field(line, "spent_uj")?);
            }
            _ => {}
        }
    }
    report.in_flight = report.sent - ended.len() as u64;
    report.energy_total_uj = spent.values().sum();
    report.throughput_series = bucketed_throughput(trace, bucket)?
        .into_iter()
        .map(|b| (b.end, b.received_bps))
        .collect();
    debug_assert_eq!(
        report.received + report.absorbed + report.no_route_drops + report.other_drops + report.in_flight,
        report.sent
    );
    Ok(report)
}
