//! Shared harness for the property suite and the acceptance runner.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use manet_core::aodv::{AodvNode, AodvParams, Role, Rrep, SequenceNumber, SEQ_GUARD};
use manet_core::detection::DetectionMode;
use manet_core::metrics::{phase_report, Phase};
use manet_core::mobility::Position;
use manet_core::network::{Simulation, Toggles};
use manet_core::rng::rng_stream;
use manet_core::trace::{Ev, Trace};
use manet_core::traffic::CbrFlow;
use manet_core::{FlowId, NodeId, Scenario, SimDuration, SimTime};
use rand::RngExt;

/// A small random network: 3 to 10 nodes, a few flows, maybe adversaries,
/// maybe mobility, sometimes scarce energy or a tiny buffer.
pub fn random_case(seed: u64) -> (Scenario, Toggles) {
    let mut rng = rng_stream("property-case", seed);
    let n: usize = rng.random_range(3..=10);
    let sim_secs: u64 = rng.random_range(3..=7);
    let mut sc = Scenario {
        node_count: n,
        seed,
        sim_time: SimTime::from_secs(sim_secs),
        ..Scenario::default()
    };
    sc.terrain.width = rng.random_range(300.0..800.0);
    sc.terrain.height = rng.random_range(300.0..800.0);
    sc.aodv.net_ttl = n as u32;
    sc.mobility.enabled = rng.random_bool(0.6);
    sc.mobility.v_min = rng.random_range(1.0..5.0);
    sc.mobility.v_max = rng.random_range(sc.mobility.v_min..30.0);
    sc.mobility.pause = SimDuration::from_millis(rng.random_range(0..2000));
    if rng.random_bool(0.3) {
        sc.fixed_positions.insert(NodeId(0), Position::new(0.0, 0.0));
    }
    if rng.random_bool(0.2) {
        sc.aodv.buffer_cap = rng.random_range(1..4);
    }
    if rng.random_bool(0.2) {
        sc.energy.initial_uj = rng.random_range(100_000..2_000_000);
    }
    if rng.random_bool(0.2) {
        sc.aodv.route_lifetime = SimDuration::from_millis(rng.random_range(300..3000));
    }

    let mut endpoints = BTreeSet::new();
    let flows: u32 = rng.random_range(1..=3);
    for i in 0..flows {
        let src = NodeId(rng.random_range(0..n as u32));
        let mut dst = NodeId(rng.random_range(0..n as u32));
        if dst == src {
            dst = NodeId((src.0 + 1) % n as u32);
        }
        endpoints.extend([src, dst]);
        let start = SimTime::from_millis(rng.random_range(0..1500));
        sc.flows.push(CbrFlow {
            flow: FlowId(i),
            src,
            dst,
            rate: rng.random_range(1.0..12.0),
            size_bytes: rng.random_range(64..1500),
            start_at: start,
            stop_at: sc.sim_time,
        });
    }
    let spare: Vec<NodeId> = (0..n as u32)
        .map(NodeId)
        .filter(|id| !endpoints.contains(id))
        .collect();
    let bad: usize = rng.random_range(0..=spare.len().min(2));
    sc.adversary.nodes = spare.into_iter().take(bad).collect();
    sc.adversary.forged_seq = SequenceNumber(if rng.random_bool(0.7) { 1_000_000 } else { 500 });
    sc.adversary.reply_delay = SimDuration::from_millis(rng.random_range(0..3));
    if rng.random_bool(0.2) {
        sc.detection.mode = DetectionMode::AdaptiveRate;
    }
    sc.validate().expect("generated scenario is valid");
    let toggles = Toggles {
        adversary: rng.random_bool(0.7),
        detection: rng.random_bool(0.6),
    };
    (sc, toggles)
}

/// What a checked run exercised, for coverage assertions.
#[derive(Debug, Default, Clone, Copy)]
pub struct Coverage {
    pub cases: u64,
    pub received: u64,
    pub absorbed: u64,
    pub link_breaks: u64,
    pub overflows: u64,
    pub exhausted: u64,
    pub detects: u64,
    pub seq_replacements: u64,
}

impl Coverage {
    pub fn add(&mut self, o: Coverage) {
        self.cases += o.cases;
        self.received += o.received;
        self.absorbed += o.absorbed;
        self.link_breaks += o.link_breaks;
        self.overflows += o.overflows;
        self.exhausted += o.exhausted;
        self.detects += o.detects;
        self.seq_replacements += o.seq_replacements;
    }
}

type Snapshot = Vec<BTreeMap<NodeId, (SequenceNumber, bool, SimTime)>>;

fn snapshot(nodes: &[AodvNode], at: SimTime) -> Snapshot {
    nodes
        .iter()
        .map(|n| {
            n.table()
                .entries()
                .map(|e| (e.dest, (e.dest_seq, e.is_usable(at), e.expires_at)))
                .collect()
        })
        .collect()
}

/// Steps a run event by event, checking protocol invariants after each
/// event and conservation, dedup, energy and adversary rules on the trace.
pub fn check_invariants(sc: &Scenario, toggles: Toggles) -> Result<Coverage, String> {
    let mut cov = Coverage {
        cases: 1,
        ..Coverage::default()
    };
    let mut sim = Simulation::new(sc, toggles, Vec::new());
    let mut seqs: Vec<SequenceNumber> = sim.nodes().iter().map(AodvNode::own_seq).collect();
    let mut tables = snapshot(sim.nodes(), sim.now());
    while sim.step() {
        let now = sim.now();
        for (i, node) in sim.nodes().iter().enumerate() {
            let seq = node.own_seq();
            if seq < seqs[i] {
                return Err(format!("node {i} own seq went {} -> {} at {now}", seqs[i], seq));
            }
            if seq.0 >= SEQ_GUARD {
                return Err(format!("node {i} own seq {seq} reached the guard"));
            }
            seqs[i] = seq;
            for e in node.table().entries() {
                if let Some(&(old_seq, _, old_expiry)) = tables[i].get(&e.dest) {
                    let was_usable_now = tables[i][&e.dest].1 && old_expiry > now;
                    if e.dest_seq < old_seq && was_usable_now {
                        return Err(format!(
                            "node {i}: usable route to {} replaced by older seq {} < {} at {now}",
                            e.dest, e.dest_seq, old_seq
                        ));
                    }
                    if e.dest_seq != old_seq {
                        cov.seq_replacements += 1;
                    }
                }
            }
        }
        tables = snapshot(sim.nodes(), now);
    }
    let stats = sim.stats().clone();
    cov.detects = stats.detects;
    let outcome = sim.finish().map_err(|e| e.to_string())?;
    let trace = Trace::parse(outcome.sink.as_slice()).map_err(|e| e.to_string())?;
    let report = phase_report(&trace, Phase::Defend, sc.bucket).map_err(|e| e.to_string())?;
    if report.in_flight != outcome.in_flight {
        return Err(format!(
            "trace says {} in flight, simulator holds {}",
            report.in_flight, outcome.in_flight
        ));
    }
    let total =
        report.received + report.absorbed + report.no_route_drops + report.other_drops + report.in_flight;
    if total != report.sent {
        return Err(format!("conservation: {total} accounted, {} sent", report.sent));
    }
    cov.received = report.received;
    cov.absorbed = report.absorbed;

    let adversaries = &outcome.adversaries;
    let raw = sc.detection.mode == DetectionMode::Raw;
    let mut rreq_sends: BTreeSet<(NodeId, String, String)> = BTreeSet::new();
    let mut exhausted: BTreeSet<NodeId> = BTreeSet::new();
    for line in &trace.lines {
        let msg = line.get("msg");
        let transmits = matches!(line.ev, Ev::Fwd | Ev::Send);
        if exhausted.contains(&line.node) && transmits {
            return Err(format!(
                "node {} transmitted after exhausting its energy: {line}",
                line.node
            ));
        }
        match (line.ev, msg) {
            (Ev::Send, Some("RREQ")) => {
                let key = (
                    line.node,
                    line.get("origin").unwrap_or_default().to_owned(),
                    line.get("rreq_id").unwrap_or_default().to_owned(),
                );
                if !rreq_sends.insert(key) {
                    return Err(format!("RREQ rebroadcast twice: {line}"));
                }
                if adversaries.contains(&line.node) {
                    return Err(format!("black hole sent an RREQ: {line}"));
                }
            }
            (Ev::Send, Some("RREP")) if adversaries.contains(&line.node) => {
                if line.get("replier") == Some(&line.node.to_string()) {
                    let seq: u32 = line.parse_field("dest_seq").unwrap_or_default();
                    if seq != sc.adversary.forged_seq.0 {
                        return Err(format!("forged RREP with seq {seq}: {line}"));
                    }
                }
            }
            (Ev::Send, Some("RERR")) | (Ev::Rerr, _) if adversaries.contains(&line.node) => {
                return Err(format!("black hole emitted a RERR: {line}"));
            }
            (Ev::Fwd, _) if adversaries.contains(&line.node) => {
                return Err(format!("black hole forwarded data: {line}"));
            }
            (Ev::Drop, _) => match line.get("reason") {
                Some("link_break") => cov.link_breaks += 1,
                Some("buffer_overflow") => cov.overflows += 1,
                _ => {}
            },
            // The rate reading can flag a quick honest reply; the precision
            // guarantees are for the raw gate.
            (Ev::Detect, _) if raw => {
                let seq: u32 = line.parse_field("seq").unwrap_or_default();
                if seq <= sc.detection.threshold.0 {
                    return Err(format!("detection fired at or below threshold: {line}"));
                }
                let suspect = NodeId(line.parse_field("suspect").unwrap_or(u32::MAX));
                if !adversaries.contains(&suspect) {
                    return Err(format!("honest node flagged: {line}"));
                }
            }
            (Ev::Energy, _) if line.get("reason") == Some("exhausted") => {
                exhausted.insert(line.node);
                cov.exhausted += 1;
            }
            _ => {}
        }
    }
    for l in &outcome.energy {
        if l.spent_uj() > l.initial_uj {
            return Err(format!(
                "node {} overspent: {} > {}",
                l.node,
                l.spent_uj(),
                l.initial_uj
            ));
        }
    }
    let flagged: BTreeSet<NodeId> = outcome.blacklisted_union();
    if raw && !flagged.is_subset(adversaries) {
        return Err(format!(
            "blacklist {flagged:?} not within adversaries {adversaries:?}"
        ));
    }
    Ok(cov)
}

/// One reply offered to the route-selection oracle: sequence number, hop
/// count as carried in the RREP, and the neighbour it arrived from.
pub type Offer = (u32, u32, u32);

/// Feeds `offers` to a fresh source in arrival order and checks that the
/// installed route is the brute-force argmax of (seq, -hops, -arrival).
pub fn route_selection_case(offers: &[Offer]) -> Result<(), String> {
    let src = NodeId(0);
    let dest = NodeId(99);
    let mut node = AodvNode::new(src, Role::Honest, AodvParams::default());
    let t0 = SimTime::from_secs(1);
    node.originate_discovery(dest, t0).map_err(|e| e.to_string())?;
    for (i, &(seq, hops, from)) in offers.iter().enumerate() {
        let rrep = Rrep {
            dest,
            dest_seq: SequenceNumber(seq),
            origin: src,
            hop_count: hops,
            lifetime: SimDuration::from_secs(10),
            replier: dest,
        };
        node.handle_rrep(rrep, NodeId(from), t0 + SimDuration::from_millis(i as u64 + 1));
    }
    let installed = node
        .table()
        .get(dest)
        .map(|e| (e.dest_seq.0, e.hop_count, e.next_hop.0));
    let mut best: Option<(usize, Offer)> = None;
    for (i, &o) in offers.iter().enumerate() {
        let better = match best {
            None => true,
            Some((_, b)) => o.0 > b.0 || (o.0 == b.0 && o.1 < b.1),
        };
        if better {
            best = Some((i, o));
        }
    }
    let expected = best.map(|(_, (seq, hops, from))| (seq, hops + 1, from));
    if installed == expected {
        Ok(())
    } else {
        Err(format!(
            "offers {offers:?}: installed {installed:?}, expected {expected:?}"
        ))
    }
}

pub fn random_offers(seed: u64) -> Vec<Offer> {
    let mut rng = rng_stream("route-selection", seed);
    let k = rng.random_range(1..=20);
    (0..k)
        .map(|_| {
            (
                rng.random_range(1..=6),
                rng.random_range(0..=6),
                rng.random_range(1..=9),
            )
        })
        .collect()
}
