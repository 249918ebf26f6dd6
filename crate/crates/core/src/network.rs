//! The simulated network: nodes, the broadcast medium, energy ledgers and
//! trace emission, driven by a single event loop.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::adversary::BlackHole;
use crate::aodv::{Action, AodvNode, DataPacket, Frame, Message, RerrTarget, Role, Timer};
use crate::detection::Verdict;
use crate::engine::{Event, Scheduler};
use crate::error::{Error, SimError, TraceError};
use crate::ids::NodeId;
use crate::mobility::{initial_placement, Mobility};
use crate::scenario::Scenario;
use crate::time::{SimDuration, SimTime};
use crate::trace::{Ev, TraceLine, TraceWriter};
use crate::traffic::{CbrFlow, EnergyAction, EnergyCosts, EnergyLedger};

/// Which parts of the experiment are switched on for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Toggles {
    pub adversary: bool,
    pub detection: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetEvent {
    FrameDelivery { to: NodeId, frame: Frame },
    TimerExpiry { node: NodeId, timer: Timer },
    TrafficEmit { flow: usize, packet_seq: u64 },
    WaypointArrival { node: NodeId, leg: usize },
    PhaseMarker(Marker),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    EnergySample,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub events: u64,
    pub data_sent: u64,
    pub transmissions: u64,
    /// RREPs evaluated by a detection guard.
    pub screened: u64,
    /// Screened RREPs whose replier is a black hole.
    pub forged_screened: u64,
    pub detects: u64,
    pub forged_replies: u64,
}

#[derive(Debug)]
pub struct RunOutcome<W> {
    pub sink: W,
    pub checksum: u64,
    pub stats: RunStats,
    /// Data packets still buffered or on the air when the run stopped.
    pub in_flight: u64,
    pub energy: Vec<EnergyLedger>,
    /// Owner → nodes it blacklisted, for owners with a non-empty list.
    pub blacklists: BTreeMap<NodeId, Vec<NodeId>>,
    pub adversaries: BTreeSet<NodeId>,
    /// Largest own sequence number reached by any honest node.
    pub max_honest_seq: u32,
}

impl<W> RunOutcome<W> {
    pub fn blacklisted_union(&self) -> BTreeSet<NodeId> {
        self.blacklists.values().flatten().copied().collect()
    }

    pub fn energy_spent_uj(&self) -> u64 {
        self.energy.iter().map(EnergyLedger::spent_uj).sum()
    }

    pub fn screen_spent_uj(&self) -> u64 {
        self.energy.iter().map(|l| l.spent_screen_uj).sum()
    }
}

pub struct Simulation<W: Write> {
    sched: Scheduler<NetEvent>,
    nodes: Vec<AodvNode>,
    mobility: Mobility,
    energy: Vec<EnergyLedger>,
    costs: EnergyCosts,
    delay: SimDuration,
    flows: Vec<CbrFlow>,
    adversaries: BTreeSet<NodeId>,
    threshold_label: String,
    sim_time: SimTime,
    trace: TraceWriter<W>,
    sink_error: Option<TraceError>,
    stats: RunStats,
}

impl<W: Write> Simulation<W> {
    pub fn new(sc: &Scenario, toggles: Toggles, sink: W) -> Self {
        let initial = initial_placement(sc.terrain, sc.node_count, &sc.fixed_positions, sc.seed);
        let mobility = Mobility::generate(sc.terrain, sc.range, &sc.mobility, initial, sc.seed, sc.sim_time);
        let mut params = sc.aodv;
        params.net_ttl = sc.node_count as u32;

        let adversaries: BTreeSet<NodeId> = if toggles.adversary {
            sc.adversary.nodes.clone()
        } else {
            BTreeSet::new()
        };
        let sources: BTreeSet<NodeId> = sc.flows.iter().map(|f| f.src).collect();
        let nodes = (0..sc.node_count)
            .map(|i| {
                let id = NodeId(i as u32);
                let role = if adversaries.contains(&id) {
                    Role::BlackHole(BlackHole {
                        forged_seq: sc.adversary.forged_seq,
                        reply_delay: sc.adversary.reply_delay,
                    })
                } else {
                    Role::Honest
                };
                let node = AodvNode::new(id, role, params);
                if toggles.detection && sources.contains(&id) && role == Role::Honest {
                    node.with_guard(sc.detection)
                } else {
                    node
                }
            })
            .collect();
        let energy = (0..sc.node_count)
            .map(|i| EnergyLedger::new(NodeId(i as u32), sc.energy.initial_uj))
            .collect();
        let threshold_label = match sc.detection.mode {
            crate::detection::DetectionMode::Raw => sc.detection.threshold.to_string(),
            crate::detection::DetectionMode::AdaptiveRate => format!("{}", sc.detection.rate_threshold),
        };

        let mut sim = Simulation {
            sched: Scheduler::new(),
            nodes,
            mobility,
            energy,
            costs: sc.energy,
            delay: sc.propagation_delay,
            flows: sc.flows.clone(),
            adversaries,
            threshold_label,
            sim_time: sc.sim_time,
            trace: TraceWriter::new(sink),
            sink_error: None,
            stats: RunStats::default(),
        };
        sim.schedule_initial(sc.bucket);
        sim
    }

    fn schedule_initial(&mut self, bucket: SimDuration) {
        for (idx, flow) in self.flows.clone().iter().enumerate() {
            self.schedule_cbr(idx, flow);
        }
        for i in 0..self.nodes.len() {
            let node = NodeId(i as u32);
            let arrivals: Vec<(usize, SimTime)> = self
                .mobility
                .legs(node)
                .expect("node exists")
                .iter()
                .enumerate()
                .map(|(leg, l)| (leg, l.arrive_at))
                .filter(|&(_, t)| t <= self.sim_time)
                .collect();
            for (leg, t) in arrivals {
                self.schedule(t, NetEvent::WaypointArrival { node, leg });
            }
        }
        let mut t = SimTime::ZERO + bucket;
        while t < self.sim_time {
            self.schedule(t, NetEvent::PhaseMarker(Marker::EnergySample));
            t += bucket;
        }
    }

    /// Schedules every emission of `flow`. Returns how many were scheduled.
    pub fn schedule_cbr(&mut self, idx: usize, flow: &CbrFlow) -> u64 {
        let times = flow.emission_times();
        for (seq, &t) in times.iter().enumerate() {
            self.schedule(
                t,
                NetEvent::TrafficEmit {
                    flow: idx,
                    packet_seq: seq as u64,
                },
            );
        }
        times.len() as u64
    }

    fn schedule(&mut self, at: SimTime, ev: NetEvent) {
        self.sched
            .schedule(at, ev)
            .expect("events are never scheduled before now");
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn nodes(&self) -> &[AodvNode] {
        &self.nodes
    }

    pub fn mobility(&self) -> &Mobility {
        &self.mobility
    }

    pub fn energy(&self) -> &[EnergyLedger] {
        &self.energy
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    /// Processes the next event due before the end of the run. Returns false
    /// once nothing is left or the trace sink has failed.
    pub fn step(&mut self) -> bool {
        if self.sink_error.is_some() {
            return false;
        }
        match self.sched.pop_due(self.sim_time) {
            Some(ev) => {
                self.stats.events += 1;
                self.handle(ev);
                true
            }
            None => false,
        }
    }

    pub fn run(mut self) -> Result<RunOutcome<W>, Error> {
        while self.step() {}
        self.finish()
    }

    /// Parks the clock at the end of the run, writes final energy samples
    /// and the END line.
    pub fn finish(mut self) -> Result<RunOutcome<W>, Error> {
        if let Some(e) = self.sink_error.take() {
            return Err(e.into());
        }
        self.sched.run_until(self.sim_time, |_, _| {});
        self.sample_energy();
        if let Some(e) = self.sink_error.take() {
            return Err(e.into());
        }
        let buffered = self
            .nodes
            .iter()
            .map(|n| n.buffered().count() as u64)
            .sum::<u64>();
        let on_air = self
            .sched
            .live()
            .filter(|e| {
                matches!(
                    &e.payload,
                    NetEvent::FrameDelivery {
                        frame: Frame {
                            body: Message::Data(_),
                            ..
                        },
                        ..
                    }
                )
            })
            .count() as u64;
        let blacklists = self
            .nodes
            .iter()
            .filter_map(|n| {
                let g = n.guard()?;
                (!g.blacklist().is_empty()).then(|| (n.id(), g.blacklist().iter().map(|(b, _)| b).collect()))
            })
            .collect();
        let max_honest_seq = self
            .nodes
            .iter()
            .filter(|n| !n.is_black_hole())
            .map(|n| n.own_seq().0)
            .max()
            .unwrap_or(0);
        let (sink, checksum) = self.trace.finish(self.sim_time)?;
        Ok(RunOutcome {
            sink,
            checksum,
            stats: self.stats,
            in_flight: buffered + on_air,
            energy: self.energy,
            blacklists,
            adversaries: self.adversaries,
            max_honest_seq,
        })
    }

    fn line(&mut self, line: TraceLine) {
        if self.sink_error.is_none() {
            if let Err(e) = self.trace.record(&line) {
                self.sink_error = Some(e);
            }
        }
    }

    fn handle(&mut self, ev: Event<NetEvent>) {
        let now = ev.fire_at;
        match ev.payload {
            NetEvent::TrafficEmit { flow, packet_seq } => self.emit(flow, packet_seq, now),
            NetEvent::FrameDelivery { to, frame } => self.deliver(to, frame, now),
            NetEvent::TimerExpiry { node, timer } => {
                let actions = self.nodes[node.index()].on_timer(timer, now);
                self.apply(node, actions, now);
            }
            NetEvent::WaypointArrival { node, leg } => {
                let to = self.mobility.legs(node).expect("node exists")[leg].to;
                self.line(
                    TraceLine::new(now, Ev::Move, node)
                        .kv("x", format!("{:.3}", to.x))
                        .kv("y", format!("{:.3}", to.y)),
                );
            }
            NetEvent::PhaseMarker(Marker::EnergySample) => self.sample_energy(),
        }
    }

    fn sample_energy(&mut self) {
        let now = self.sched.now();
        for i in 0..self.energy.len() {
            let l = self.energy[i];
            self.line(
                TraceLine::new(now, Ev::Energy, l.node)
                    .kv("remaining_uj", l.remaining_uj())
                    .kv("spent_uj", l.spent_uj()),
            );
        }
    }

    fn alive(&self, node: NodeId) -> bool {
        !self.energy[node.index()].is_exhausted()
    }

    fn debit(&mut self, node: NodeId, action: EnergyAction, now: SimTime) {
        let ledger = &mut self.energy[node.index()];
        if ledger.is_exhausted() {
            return;
        }
        if ledger.account(action, &self.costs) == 0 {
            let spent = ledger.spent_uj();
            self.line(
                TraceLine::new(now, Ev::Energy, node)
                    .kv("reason", "exhausted")
                    .kv("remaining_uj", 0)
                    .kv("spent_uj", spent),
            );
        }
    }

    fn emit(&mut self, flow_idx: usize, packet_seq: u64, now: SimTime) {
        let flow = &self.flows[flow_idx];
        let pkt = DataPacket {
            flow: flow.flow,
            src: flow.src,
            dst: flow.dst,
            packet_seq,
            size_bytes: flow.size_bytes,
            created_at: now,
        };
        if !self.alive(pkt.src) {
            return;
        }
        self.stats.data_sent += 1;
        self.line(
            TraceLine::new(now, Ev::Send, pkt.src)
                .kv("dst", pkt.dst)
                .kv("flow", pkt.flow)
                .kv("msg", "DATA")
                .kv("pkt", pkt.packet_seq)
                .kv("size", pkt.size_bytes),
        );
        let src = pkt.src;
        let actions = self.nodes[src.index()].send_data(pkt, now);
        self.apply(src, actions, now);
    }

    fn deliver(&mut self, to: NodeId, frame: Frame, now: SimTime) {
        if !self.alive(to) {
            if let Message::Data(pkt) = frame.body {
                self.drop_data(to, &pkt, "energy", now);
            }
            return;
        }
        self.debit(to, EnergyAction::Rx, now);
        let from = frame.sender;
        let node = &mut self.nodes[to.index()];
        if node.is_blacklisted(from) {
            match frame.body {
                Message::Data(pkt) => self.drop_data(to, &pkt, "blacklisted", now),
                other => self.line(
                    TraceLine::new(now, Ev::Drop, to)
                        .kv("from", from)
                        .kv("msg", other.name())
                        .kv("reason", "blacklisted"),
                ),
            }
            return;
        }
        let actions = match frame.body {
            Message::Rreq(rreq) => {
                let actions = node.handle_rreq(rreq, from, now);
                if node.is_black_hole() && !actions.is_empty() {
                    self.stats.forged_replies += 1;
                }
                actions
            }
            Message::Rrep(rrep) => node.handle_rrep(rrep, from, now),
            Message::Rerr(rerr) => node.handle_rerr(rerr, from, now),
            Message::Data(pkt) => node.forward_data(pkt, Some(from), now),
        };
        self.apply(to, actions, now);
    }

    fn drop_data(&mut self, node: NodeId, pkt: &DataPacket, reason: &str, now: SimTime) {
        self.line(
            TraceLine::new(now, Ev::Drop, node)
                .kv("flow", pkt.flow)
                .kv("msg", "DATA")
                .kv("pkt", pkt.packet_seq)
                .kv("reason", reason),
        );
    }

    fn apply(&mut self, node: NodeId, actions: Vec<Action>, now: SimTime) {
        for action in actions {
            match action {
                Action::Broadcast(msg) => {
                    if let Err(SimError::DeadNode(_)) = self.broadcast(node, msg.clone(), now) {
                        self.drop_for_energy(node, &msg, now);
                    }
                }
                Action::Unicast { to, msg, delay } => self.unicast(node, to, msg, delay, now),
                Action::Deliver(pkt) => {
                    let latency = now.saturating_since(pkt.created_at).as_micros();
                    self.line(
                        TraceLine::new(now, Ev::Recv, node)
                            .kv("flow", pkt.flow)
                            .kv("latency_us", latency)
                            .kv("pkt", pkt.packet_seq)
                            .kv("size", pkt.size_bytes)
                            .kv("src", pkt.src),
                    );
                }
                Action::DropData { pkt, reason } => self.drop_data(node, &pkt, reason.as_str(), now),
                Action::DropControl { msg, reason } => self.line(
                    TraceLine::new(now, Ev::Drop, node)
                        .kv("msg", msg)
                        .kv("reason", reason.as_str()),
                ),
                Action::ArmTimer { at, timer } => self.schedule(at, NetEvent::TimerExpiry { node, timer }),
                Action::Screened { rrep, verdict } => {
                    self.stats.screened += 1;
                    if self.adversaries.contains(&rrep.replier) {
                        self.stats.forged_screened += 1;
                    }
                    self.debit(node, EnergyAction::Screen, now);
                    if verdict == Verdict::Malicious {
                        self.stats.detects += 1;
                        let threshold = self.threshold_label.clone();
                        self.line(
                            TraceLine::new(now, Ev::Detect, node)
                                .kv("seq", rrep.dest_seq)
                                .kv("suspect", rrep.replier)
                                .kv("threshold", threshold),
                        );
                    }
                }
                Action::Rerr { rerr, target } => {
                    let dests = rerr
                        .unreachable
                        .iter()
                        .map(|(d, s)| format!("{d}:{s}"))
                        .collect::<Vec<_>>()
                        .join(",");
                    let to = match target {
                        RerrTarget::Nobody => "none".to_owned(),
                        RerrTarget::Unicast(n) => n.to_string(),
                        RerrTarget::Broadcast => "all".to_owned(),
                    };
                    self.line(
                        TraceLine::new(now, Ev::Rerr, node)
                            .kv("count", rerr.unreachable.len())
                            .kv("dests", dests)
                            .kv("to", to),
                    );
                    match target {
                        RerrTarget::Nobody => {}
                        RerrTarget::Unicast(n) => {
                            self.unicast(node, n, Message::Rerr(rerr), SimDuration::ZERO, now)
                        }
                        RerrTarget::Broadcast => {
                            let msg = Message::Rerr(rerr);
                            if self.broadcast(node, msg.clone(), now).is_err() {
                                self.drop_for_energy(node, &msg, now);
                            }
                        }
                    }
                }
            }
        }
    }

    fn drop_for_energy(&mut self, node: NodeId, msg: &Message, now: SimTime) {
        match msg {
            Message::Data(pkt) => self.drop_data(node, pkt, "energy", now),
            other => self.line(
                TraceLine::new(now, Ev::Drop, node)
                    .kv("msg", other.name())
                    .kv("reason", "energy"),
            ),
        }
    }

    fn send_line(&mut self, sender: NodeId, msg: &Message, to: Option<NodeId>, now: SimTime) {
        let line = match msg {
            Message::Data(pkt) => {
                let next = to.expect("data is always unicast");
                self.line(
                    TraceLine::new(now, Ev::Fwd, sender)
                        .kv("flow", pkt.flow)
                        .kv("next", next)
                        .kv("pkt", pkt.packet_seq),
                );
                return;
            }
            Message::Rreq(r) => TraceLine::new(now, Ev::Send, sender)
                .kv("dst", r.dest)
                .kv("hops", r.hop_count)
                .kv("origin", r.origin)
                .kv("rreq_id", r.rreq_id)
                .kv("seq", r.origin_seq),
            Message::Rrep(r) => TraceLine::new(now, Ev::Send, sender)
                .kv("dest", r.dest)
                .kv("dest_seq", r.dest_seq)
                .kv("hops", r.hop_count)
                .kv("origin", r.origin)
                .kv("replier", r.replier),
            Message::Rerr(r) => TraceLine::new(now, Ev::Send, sender).kv("count", r.unreachable.len()),
        };
        let line = line.kv("msg", msg.name());
        let line = match to {
            Some(n) => line.kv("to", n),
            None => line.kv("to", "all"),
        };
        self.line(line);
    }

    /// Transmits to every node in range at `now`. The sender pays one
    /// transmission even when nobody hears it.
    pub fn broadcast(&mut self, sender: NodeId, msg: Message, now: SimTime) -> Result<Vec<NodeId>, SimError> {
        if !self.alive(sender) {
            return Err(SimError::DeadNode(sender));
        }
        let receivers = self.mobility.neighbours(sender, now)?;
        self.stats.transmissions += 1;
        self.send_line(sender, &msg, None, now);
        self.debit(sender, EnergyAction::Tx, now);
        let frame = Frame::new(sender, msg);
        for &to in &receivers {
            self.schedule(
                now + self.delay,
                NetEvent::FrameDelivery {
                    to,
                    frame: frame.clone(),
                },
            );
        }
        Ok(receivers)
    }

    fn unicast(&mut self, sender: NodeId, to: NodeId, msg: Message, extra: SimDuration, now: SimTime) {
        if !self.alive(sender) {
            self.drop_for_energy(sender, &msg, now);
            return;
        }
        let reachable = self.mobility.in_range(sender, to, now).expect("node exists");
        if !reachable {
            let actions = self.nodes[sender.index()].on_link_break(to, msg, now);
            self.apply(sender, actions, now);
            return;
        }
        self.stats.transmissions += 1;
        self.send_line(sender, &msg, Some(to), now);
        self.debit(sender, EnergyAction::Tx, now);
        self.schedule(
            now + extra + self.delay,
            NetEvent::FrameDelivery {
                to,
                frame: Frame::new(sender, msg),
            },
        );
    }
}
