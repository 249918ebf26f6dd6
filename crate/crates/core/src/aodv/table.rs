//! Routing table with the AODV freshness rule.

use std::collections::{BTreeMap, BTreeSet};

use super::messages::SequenceNumber;
use crate::ids::NodeId;
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteState {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteEntry {
    pub dest: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub dest_seq: SequenceNumber,
    pub expires_at: SimTime,
    pub state: RouteState,
    /// Node whose reply (or request) produced this entry's sequence number.
    pub advertiser: NodeId,
    /// Upstream neighbours that route through us toward `dest`.
    pub precursors: BTreeSet<NodeId>,
}

impl RouteEntry {
    pub fn new(
        dest: NodeId,
        next_hop: NodeId,
        hop_count: u32,
        dest_seq: SequenceNumber,
        expires_at: SimTime,
        advertiser: NodeId,
    ) -> Self {
        RouteEntry {
            dest,
            next_hop,
            hop_count,
            dest_seq,
            expires_at,
            state: RouteState::Valid,
            advertiser,
            precursors: BTreeSet::new(),
        }
    }

    /// Valid and not yet expired.
    pub fn is_usable(&self, now: SimTime) -> bool {
        self.state == RouteState::Valid && self.expires_at > now
    }

    /// Strictly preferable under (dest_seq, -hop_count). Equal candidates are
    /// not preferred, so the earliest arrival wins ties.
    pub fn beats(&self, current: &RouteEntry) -> bool {
        self.dest_seq > current.dest_seq
            || (self.dest_seq == current.dest_seq && self.hop_count < current.hop_count)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RoutingTable {
    entries: BTreeMap<NodeId, RouteEntry>,
}

impl RoutingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.entries.get(&dest)
    }

    pub fn usable(&self, dest: NodeId, now: SimTime) -> Option<&RouteEntry> {
        self.entries.get(&dest).filter(|e| e.is_usable(now))
    }

    pub fn entries(&self) -> impl Iterator<Item = &RouteEntry> {
        self.entries.values()
    }

    /// Installs `candidate` if there is no usable entry for its destination,
    /// or if it beats the usable one. Precursors carry over to the new entry.
    pub fn update_route(&mut self, mut candidate: RouteEntry, now: SimTime) -> bool {
        match self.entries.get_mut(&candidate.dest) {
            Some(current) if current.is_usable(now) && !candidate.beats(current) => false,
            Some(current) => {
                candidate.precursors.append(&mut current.precursors);
                *current = candidate;
                true
            }
            None => {
                self.entries.insert(candidate.dest, candidate);
                true
            }
        }
    }

    /// Extends a usable route's lifetime to at least `now + lifetime`.
    pub fn refresh(&mut self, dest: NodeId, now: SimTime, lifetime: SimDuration) {
        if let Some(e) = self.entries.get_mut(&dest) {
            if e.is_usable(now) {
                e.expires_at = e.expires_at.max(now + lifetime);
            }
        }
    }

    pub fn add_precursor(&mut self, dest: NodeId, precursor: NodeId) {
        if let Some(e) = self.entries.get_mut(&dest) {
            e.precursors.insert(precursor);
        }
    }

    /// Marks every usable entry whose next hop is `next_hop` invalid. Returns
    /// the invalidated `(dest, dest_seq)` pairs and the union of their
    /// precursors.
    pub fn invalidate_via(
        &mut self,
        next_hop: NodeId,
        now: SimTime,
    ) -> (Vec<(NodeId, SequenceNumber)>, BTreeSet<NodeId>) {
        let mut lost = Vec::new();
        let mut precursors = BTreeSet::new();
        for e in self.entries.values_mut() {
            if e.next_hop == next_hop && e.is_usable(now) {
                e.state = RouteState::Invalid;
                lost.push((e.dest, e.dest_seq));
                precursors.extend(e.precursors.iter().copied());
            }
        }
        (lost, precursors)
    }

    /// Invalidates `dest` if it is usable, routed via `from`, and no fresher
    /// than `reported`. Returns the entry's precursors when invalidated.
    pub fn invalidate_reported(
        &mut self,
        dest: NodeId,
        reported: SequenceNumber,
        from: NodeId,
        now: SimTime,
    ) -> Option<(SequenceNumber, BTreeSet<NodeId>)> {
        let e = self.entries.get_mut(&dest)?;
        if e.next_hop != from || !e.is_usable(now) || e.dest_seq > reported {
            return None;
        }
        e.state = RouteState::Invalid;
        Some((e.dest_seq, e.precursors.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(dest: u32, via: u32, seq: u32, hops: u32) -> RouteEntry {
        RouteEntry::new(
            NodeId(dest),
            NodeId(via),
            hops,
            SequenceNumber(seq),
            SimTime::from_secs(10),
            NodeId(dest),
        )
    }

    #[test]
    fn empty_table_accepts_any_candidate() {
        let mut t = RoutingTable::new();
        assert!(t.update_route(entry(5, 1, 0, 9), SimTime::ZERO));
        assert_eq!(t.get(NodeId(5)).unwrap().next_hop, NodeId(1));
    }

    #[test]
    fn equal_seq_worse_hops_is_rejected() {
        let mut t = RoutingTable::new();
        t.update_route(entry(5, 1, 4, 2), SimTime::ZERO);
        assert!(!t.update_route(entry(5, 2, 4, 3), SimTime::ZERO));
        assert_eq!(t.get(NodeId(5)).unwrap().next_hop, NodeId(1));
    }

    #[test]
    fn equal_seq_fewer_hops_wins() {
        let mut t = RoutingTable::new();
        t.update_route(entry(5, 1, 2, 3), SimTime::ZERO);
        assert!(t.update_route(entry(5, 2, 2, 2), SimTime::ZERO));
        assert_eq!(t.get(NodeId(5)).unwrap().next_hop, NodeId(2));
    }

    #[test]
    fn freshness_dominates_hop_count() {
        let mut t = RoutingTable::new();
        t.update_route(entry(5, 1, 3, 1), SimTime::ZERO);
        assert!(t.update_route(entry(5, 2, 5, 4), SimTime::ZERO));
        assert!(!t.update_route(entry(5, 3, 3, 1), SimTime::ZERO));
        assert_eq!(t.get(NodeId(5)).unwrap().dest_seq, SequenceNumber(5));
    }

    #[test]
    fn invalid_or_expired_entry_is_replaced() {
        let mut t = RoutingTable::new();
        t.update_route(entry(5, 1, 9, 1), SimTime::ZERO);
        t.invalidate_via(NodeId(1), SimTime::ZERO);
        assert!(t.update_route(entry(5, 2, 1, 4), SimTime::ZERO));

        let mut t = RoutingTable::new();
        t.update_route(entry(5, 1, 9, 1), SimTime::ZERO);
        assert!(t.update_route(entry(5, 2, 1, 4), SimTime::from_secs(11)));
    }

    #[test]
    fn invalidate_via_batches_routes_sharing_a_hop() {
        let mut t = RoutingTable::new();
        for d in [4, 5, 6] {
            t.update_route(entry(d, 1, 1, 2), SimTime::ZERO);
        }
        t.update_route(entry(7, 2, 1, 2), SimTime::ZERO);
        t.add_precursor(NodeId(5), NodeId(9));
        let (lost, pre) = t.invalidate_via(NodeId(1), SimTime::ZERO);
        assert_eq!(lost.len(), 3);
        assert_eq!(pre.into_iter().collect::<Vec<_>>(), vec![NodeId(9)]);
        assert!(t.usable(NodeId(7), SimTime::ZERO).is_some());
    }

    #[test]
    fn newer_local_entry_survives_stale_error_report() {
        let mut t = RoutingTable::new();
        t.update_route(entry(5, 1, 7, 2), SimTime::ZERO);
        assert!(t
            .invalidate_reported(NodeId(5), SequenceNumber(5), NodeId(1), SimTime::ZERO)
            .is_none());
        assert!(t
            .invalidate_reported(NodeId(5), SequenceNumber(7), NodeId(1), SimTime::ZERO)
            .is_some());
    }

    #[test]
    fn refresh_extends_usable_routes_only() {
        let mut t = RoutingTable::new();
        t.update_route(entry(5, 1, 1, 1), SimTime::ZERO);
        t.refresh(NodeId(5), SimTime::from_secs(8), SimDuration::from_secs(10));
        assert_eq!(t.get(NodeId(5)).unwrap().expires_at, SimTime::from_secs(18));
    }
}
