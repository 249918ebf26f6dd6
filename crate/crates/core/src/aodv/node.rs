//! Per-node AODV state machine.
//!
//! Handlers never touch the medium directly. Each returns a list of
//! [`Action`]s that the network executes: transmissions, deliveries, drops,
//! timers and screening results. This keeps every node testable in isolation.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::messages::{DataPacket, Message, Rerr, Rrep, Rreq, SequenceNumber};
use super::table::{RouteEntry, RoutingTable};
use crate::adversary::BlackHole;
use crate::detection::{DetectionConfig, DetectionGuard, Verdict};
use crate::error::{DetectionError, SimError};
use crate::ids::NodeId;
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AodvParams {
    pub route_lifetime: SimDuration,
    pub dedup_ttl: SimDuration,
    /// How long a source collects replies before committing to a route.
    pub rrep_wait: SimDuration,
    /// RREQs are not rebroadcast once their hop count reaches this.
    pub net_ttl: u32,
    /// Buffered packets per flow while a route is being discovered.
    pub buffer_cap: usize,
}

impl Default for AodvParams {
    fn default() -> Self {
        AodvParams {
            route_lifetime: SimDuration::from_secs(10),
            dedup_ttl: SimDuration::from_secs(3),
            rrep_wait: SimDuration::from_secs(1),
            net_ttl: 25,
            buffer_cap: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Honest,
    BlackHole(BlackHole),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    ReplyWindow { dest: NodeId, rreq_id: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropReason {
    NoRoute,
    BufferOverflow,
    LinkBreak,
    BlackholeAbsorb,
    Energy,
    Blacklisted,
    NoReversePath,
    Stale,
    NoRecord,
    Ttl,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoRoute => "no_route",
            DropReason::BufferOverflow => "buffer_overflow",
            DropReason::LinkBreak => "link_break",
            DropReason::BlackholeAbsorb => "blackhole_absorb",
            DropReason::Energy => "energy",
            DropReason::Blacklisted => "blacklisted",
            DropReason::NoReversePath => "no_reverse_path",
            DropReason::Stale => "stale",
            DropReason::NoRecord => "no_record",
            DropReason::Ttl => "ttl",
        }
    }
}

/// Where a generated RERR goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RerrTarget {
    /// Nobody upstream depends on the lost routes.
    Nobody,
    Unicast(NodeId),
    Broadcast,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Broadcast(Message),
    Unicast {
        to: NodeId,
        msg: Message,
        delay: SimDuration,
    },
    Deliver(DataPacket),
    DropData {
        pkt: DataPacket,
        reason: DropReason,
    },
    DropControl {
        msg: &'static str,
        reason: DropReason,
    },
    ArmTimer {
        at: SimTime,
        timer: Timer,
    },
    Screened {
        rrep: Rrep,
        verdict: Verdict,
    },
    Rerr {
        rerr: Rerr,
        target: RerrTarget,
    },
}

#[derive(Debug, Clone, Default)]
struct Discovery {
    rreq_id: u32,
    buffer: VecDeque<DataPacket>,
}

#[derive(Debug, Clone)]
pub struct AodvNode {
    id: NodeId,
    role: Role,
    params: AodvParams,
    own_seq: SequenceNumber,
    last_rreq_id: u32,
    table: RoutingTable,
    seen: HashMap<(NodeId, u32), SimTime>,
    pending: BTreeMap<NodeId, Discovery>,
    /// Last time this node originated data toward each destination.
    last_sent: BTreeMap<NodeId, SimTime>,
    guard: Option<DetectionGuard>,
}

impl AodvNode {
    pub fn new(id: NodeId, role: Role, params: AodvParams) -> Self {
        AodvNode {
            id,
            role,
            params,
            own_seq: SequenceNumber::ZERO,
            last_rreq_id: 0,
            table: RoutingTable::new(),
            seen: HashMap::new(),
            pending: BTreeMap::new(),
            last_sent: BTreeMap::new(),
            guard: None,
        }
    }

    pub fn with_guard(mut self, config: DetectionConfig) -> Self {
        self.guard = Some(DetectionGuard::new(self.id, config));
        self
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn is_black_hole(&self) -> bool {
        matches!(self.role, Role::BlackHole(_))
    }

    pub fn own_seq(&self) -> SequenceNumber {
        self.own_seq
    }

    pub fn table(&self) -> &RoutingTable {
        &self.table
    }

    pub fn guard(&self) -> Option<&DetectionGuard> {
        self.guard.as_ref()
    }

    pub fn is_blacklisted(&self, node: NodeId) -> bool {
        self.guard.as_ref().is_some_and(|g| g.is_blacklisted(node))
    }

    /// Data packets waiting for a route, across all destinations.
    pub fn buffered(&self) -> impl Iterator<Item = &DataPacket> {
        self.pending.values().flat_map(|d| d.buffer.iter())
    }

    pub fn discovery_pending(&self, dest: NodeId) -> bool {
        self.pending.contains_key(&dest)
    }

    /// Floods an RREQ for `dest` and opens a reply window. No-op when a
    /// usable route already exists.
    pub fn originate_discovery(&mut self, dest: NodeId, now: SimTime) -> Result<Vec<Action>, SimError> {
        if dest == self.id {
            return Err(SimError::SelfDiscovery(dest));
        }
        if self.table.usable(dest, now).is_some() {
            return Ok(Vec::new());
        }
        self.own_seq = self.own_seq.incremented();
        self.last_rreq_id += 1;
        let last_known = self.table.get(dest).map(|e| e.dest_seq);
        let rreq = Rreq {
            origin: self.id,
            origin_seq: self.own_seq,
            rreq_id: self.last_rreq_id,
            dest,
            last_known_dest_seq: last_known,
            hop_count: 0,
        };
        self.seen.insert((self.id, rreq.rreq_id), now);
        self.pending.entry(dest).or_default().rreq_id = rreq.rreq_id;
        if let Some(guard) = self.guard.as_mut() {
            guard
                .record_rreq(
                    dest,
                    rreq.rreq_id,
                    now,
                    self.params.rrep_wait,
                    last_known.unwrap_or(SequenceNumber::ZERO),
                )
                .expect("rreq ids are fresh per discovery");
        }
        Ok(vec![
            Action::ArmTimer {
                at: now + self.params.rrep_wait,
                timer: Timer::ReplyWindow {
                    dest,
                    rreq_id: rreq.rreq_id,
                },
            },
            Action::Broadcast(Message::Rreq(rreq)),
        ])
    }

    /// Entry point for data generated by this node's own traffic source.
    pub fn send_data(&mut self, pkt: DataPacket, now: SimTime) -> Vec<Action> {
        self.last_sent.insert(pkt.dst, now);
        self.forward_data(pkt, None, now)
    }

    /// Routes a data packet. `from` is the previous hop, `None` at the source.
    pub fn forward_data(&mut self, pkt: DataPacket, from: Option<NodeId>, now: SimTime) -> Vec<Action> {
        if pkt.dst == self.id {
            return vec![Action::Deliver(pkt)];
        }
        if self.is_black_hole() {
            return vec![Action::DropData {
                pkt,
                reason: DropReason::BlackholeAbsorb,
            }];
        }
        if self.pending.contains_key(&pkt.dst) {
            return self.buffer_packet(pkt);
        }
        if let Some(route) = self.table.usable(pkt.dst, now) {
            let next_hop = route.next_hop;
            self.table.refresh(pkt.dst, now, self.params.route_lifetime);
            if let Some(prev) = from {
                self.table.add_precursor(pkt.dst, prev);
            }
            return vec![Action::Unicast {
                to: next_hop,
                msg: Message::Data(pkt),
                delay: SimDuration::ZERO,
            }];
        }
        match from {
            None => {
                let dest = pkt.dst;
                let mut actions = self.buffer_packet(pkt);
                actions.extend(
                    self.originate_discovery(dest, now)
                        .expect("dest differs from self"),
                );
                actions
            }
            Some(prev) => {
                let seq = self
                    .table
                    .get(pkt.dst)
                    .map_or(SequenceNumber::ZERO, |e| e.dest_seq);
                let dest = pkt.dst;
                vec![
                    Action::DropData {
                        pkt,
                        reason: DropReason::NoRoute,
                    },
                    Action::Rerr {
                        rerr: Rerr {
                            unreachable: vec![(dest, seq)],
                        },
                        target: RerrTarget::Unicast(prev),
                    },
                ]
            }
        }
    }

    /// Queues a packet behind a pending discovery, evicting the flow's oldest
    /// packet once the per-flow cap is reached.
    fn buffer_packet(&mut self, pkt: DataPacket) -> Vec<Action> {
        let cap = self.params.buffer_cap;
        let buffer = &mut self.pending.entry(pkt.dst).or_default().buffer;
        let mut actions = Vec::new();
        let queued = buffer.iter().filter(|p| p.flow == pkt.flow).count();
        if queued >= cap {
            let oldest = buffer
                .iter()
                .position(|p| p.flow == pkt.flow)
                .expect("flow has queued packets");
            let evicted = buffer.remove(oldest).expect("index in bounds");
            actions.push(Action::DropData {
                pkt: evicted,
                reason: DropReason::BufferOverflow,
            });
        }
        buffer.push_back(pkt);
        actions
    }

    pub fn handle_rreq(&mut self, rreq: Rreq, from: NodeId, now: SimTime) -> Vec<Action> {
        if rreq.origin == self.id {
            return Vec::new();
        }
        let ttl = self.params.dedup_ttl;
        self.seen
            .retain(|_, seen_at| now.saturating_since(*seen_at) < ttl);
        if self.seen.contains_key(&(rreq.origin, rreq.rreq_id)) {
            return Vec::new();
        }
        self.seen.insert((rreq.origin, rreq.rreq_id), now);

        if let Role::BlackHole(bh) = self.role {
            let rrep = bh.forge_rrep(self.id, &rreq, self.params.route_lifetime);
            return vec![Action::Unicast {
                to: from,
                msg: Message::Rrep(rrep),
                delay: bh.reply_delay,
            }];
        }

        let lifetime = self.params.route_lifetime;
        self.table.update_route(
            RouteEntry::new(
                rreq.origin,
                from,
                rreq.hop_count + 1,
                rreq.origin_seq,
                now + lifetime,
                rreq.origin,
            ),
            now,
        );

        if rreq.dest == self.id {
            self.own_seq = self.own_seq.incremented();
            let rrep = Rrep {
                dest: self.id,
                dest_seq: self.own_seq,
                origin: rreq.origin,
                hop_count: 0,
                lifetime,
                replier: self.id,
            };
            return vec![Action::Unicast {
                to: from,
                msg: Message::Rrep(rrep),
                delay: SimDuration::ZERO,
            }];
        }

        // Only vouch for sequence numbers the destination issued itself.
        let cached = self.table.usable(rreq.dest, now).filter(|e| {
            e.advertiser == rreq.dest
                && e.next_hop != from
                && rreq.last_known_dest_seq.is_none_or(|known| e.dest_seq >= known)
        });
        if let Some(entry) = cached {
            let rrep = Rrep {
                dest: rreq.dest,
                dest_seq: entry.dest_seq,
                origin: rreq.origin,
                hop_count: entry.hop_count,
                lifetime: entry.expires_at.saturating_since(now),
                replier: self.id,
            };
            self.table.add_precursor(rreq.dest, from);
            return vec![Action::Unicast {
                to: from,
                msg: Message::Rrep(rrep),
                delay: SimDuration::ZERO,
            }];
        }

        if rreq.hop_count + 1 >= self.params.net_ttl {
            return vec![Action::DropControl {
                msg: "RREQ",
                reason: DropReason::Ttl,
            }];
        }
        vec![Action::Broadcast(Message::Rreq(Rreq {
            hop_count: rreq.hop_count + 1,
            ..rreq
        }))]
    }

    pub fn handle_rrep(&mut self, rrep: Rrep, from: NodeId, now: SimTime) -> Vec<Action> {
        let mut actions = Vec::new();
        if self.is_blacklisted(rrep.replier) {
            return vec![Action::DropControl {
                msg: "RREP",
                reason: DropReason::Blacklisted,
            }];
        }
        if rrep.origin == self.id {
            if let Some(guard) = self.guard.as_mut() {
                match guard.screen_rrep(&rrep, now) {
                    Err(
                        DetectionError::NoRecord
                        | DetectionError::WindowExpired
                        | DetectionError::DuplicateRecord { .. },
                    ) => {
                        return vec![Action::DropControl {
                            msg: "RREP",
                            reason: DropReason::NoRecord,
                        }];
                    }
                    Ok(screening) => {
                        actions.push(Action::Screened {
                            rrep: rrep.clone(),
                            verdict: screening.verdict,
                        });
                        match screening.verdict {
                            Verdict::Accept => {}
                            Verdict::Stale => {
                                actions.push(Action::DropControl {
                                    msg: "RREP",
                                    reason: DropReason::Stale,
                                });
                                return actions;
                            }
                            Verdict::Malicious => {
                                actions.extend(self.reroute(rrep.replier, now));
                                return actions;
                            }
                        }
                    }
                }
            }
            self.table
                .update_route(self.forward_candidate(&rrep, from, now), now);
            return actions;
        }

        self.table
            .update_route(self.forward_candidate(&rrep, from, now), now);
        let Some(reverse) = self.table.usable(rrep.origin, now) else {
            actions.push(Action::DropControl {
                msg: "RREP",
                reason: DropReason::NoReversePath,
            });
            return actions;
        };
        let next_hop = reverse.next_hop;
        self.table.add_precursor(rrep.dest, next_hop);
        self.table.refresh(rrep.origin, now, self.params.route_lifetime);
        actions.push(Action::Unicast {
            to: next_hop,
            msg: Message::Rrep(Rrep {
                hop_count: rrep.hop_count + 1,
                ..rrep
            }),
            delay: SimDuration::ZERO,
        });
        actions
    }

    fn forward_candidate(&self, rrep: &Rrep, from: NodeId, now: SimTime) -> RouteEntry {
        RouteEntry::new(
            rrep.dest,
            from,
            rrep.hop_count + 1,
            rrep.dest_seq,
            now + rrep.lifetime,
            rrep.replier,
        )
    }

    /// Drops any route through a freshly blacklisted node. The reply window
    /// stays open; if it closes without an accepted reply, discovery restarts.
    fn reroute(&mut self, suspect: NodeId, now: SimTime) -> Vec<Action> {
        let (lost, _) = self.table.invalidate_via(suspect, now);
        if lost.is_empty() {
            Vec::new()
        } else {
            vec![Action::Rerr {
                rerr: Rerr { unreachable: lost },
                target: RerrTarget::Nobody,
            }]
        }
    }

    pub fn handle_rerr(&mut self, rerr: Rerr, from: NodeId, now: SimTime) -> Vec<Action> {
        if self.is_black_hole() {
            return Vec::new();
        }
        let mut lost = Vec::new();
        let mut precursors = BTreeSet::new();
        for &(dest, seq) in &rerr.unreachable {
            if let Some((local_seq, pre)) = self.table.invalidate_reported(dest, seq, from, now) {
                lost.push((dest, local_seq));
                precursors.extend(pre);
            }
        }
        let mut actions = Vec::new();
        if lost.is_empty() {
            return actions;
        }
        precursors.remove(&from);
        if !precursors.is_empty() {
            actions.push(Action::Rerr {
                rerr: Rerr {
                    unreachable: lost.clone(),
                },
                target: target_for(&precursors),
            });
        }
        for (dest, _) in lost {
            let active = self
                .last_sent
                .get(&dest)
                .is_some_and(|&t| now.saturating_since(t) < self.params.route_lifetime);
            if active && !self.pending.contains_key(&dest) {
                actions.extend(
                    self.originate_discovery(dest, now)
                        .expect("dest differs from self"),
                );
            }
        }
        actions
    }

    /// Called by the network when a unicast to `next_hop` finds it out of
    /// range. Invalidates every route through it and reports them upstream.
    pub fn on_link_break(&mut self, next_hop: NodeId, failed: Message, now: SimTime) -> Vec<Action> {
        let mut actions = Vec::new();
        match failed {
            Message::Data(pkt) => actions.push(Action::DropData {
                pkt,
                reason: DropReason::LinkBreak,
            }),
            other => actions.push(Action::DropControl {
                msg: other.name(),
                reason: DropReason::LinkBreak,
            }),
        }
        let (lost, precursors) = self.table.invalidate_via(next_hop, now);
        if !lost.is_empty() {
            actions.push(Action::Rerr {
                rerr: Rerr { unreachable: lost },
                target: target_for(&precursors),
            });
        }
        actions
    }

    pub fn on_timer(&mut self, timer: Timer, now: SimTime) -> Vec<Action> {
        let Timer::ReplyWindow { dest, rreq_id } = timer;
        if self.pending.get(&dest).is_none_or(|d| d.rreq_id != rreq_id) {
            return Vec::new();
        }
        if self.table.usable(dest, now).is_some() {
            let discovery = self.pending.remove(&dest).expect("checked above");
            let mut actions = Vec::new();
            for pkt in discovery.buffer {
                actions.extend(self.forward_data(pkt, None, now));
            }
            return actions;
        }
        if self.pending[&dest].buffer.is_empty() {
            self.pending.remove(&dest);
            return Vec::new();
        }
        self.originate_discovery(dest, now)
            .expect("dest differs from self")
    }
}

fn target_for(precursors: &BTreeSet<NodeId>) -> RerrTarget {
    match precursors.len() {
        0 => RerrTarget::Nobody,
        1 => RerrTarget::Unicast(*precursors.iter().next().expect("one element")),
        _ => RerrTarget::Broadcast,
    }
}
