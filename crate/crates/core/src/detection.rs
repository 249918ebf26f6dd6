//! Sequence-number screening at route-discovery sources.
//!
//! When a source floods an RREQ it opens a time-keeper record for that
//! discovery. Every RREP that comes back inside the record's window is
//! reduced to a screen value and compared against a threshold; a reply above
//! the threshold marks its replier as a black hole, which is blacklisted for
//! the rest of the run and ignored from then on.

use std::collections::BTreeMap;

use crate::aodv::messages::{Rrep, SequenceNumber};
use crate::error::DetectionError;
use crate::ids::NodeId;
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionMode {
    /// Screen value is the advertised sequence number itself.
    Raw,
    /// Screen value is sequence growth over the last known value per second
    /// elapsed since the RREQ left.
    AdaptiveRate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub threshold: SequenceNumber,
    pub mode: DetectionMode,
    /// seq units per second, used in `AdaptiveRate` mode only
    pub rate_threshold: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            threshold: SequenceNumber(1000),
            mode: DetectionMode::Raw,
            rate_threshold: 1000.0,
        }
    }
}

impl DetectionConfig {
    fn limit(&self) -> f64 {
        match self.mode {
            DetectionMode::Raw => f64::from(self.threshold.0),
            DetectionMode::AdaptiveRate => self.rate_threshold,
        }
    }
}

/// Per-discovery timestamp register bounding the reply window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeKeeperRecord {
    pub origin: NodeId,
    pub dest: NodeId,
    pub rreq_id: u32,
    pub sent_at: SimTime,
    pub window: SimDuration,
    pub last_known_dest_seq: SequenceNumber,
}

impl TimeKeeperRecord {
    pub fn closes_at(&self) -> SimTime {
        self.sent_at + self.window
    }

    pub fn is_live(&self, now: SimTime) -> bool {
        now <= self.closes_at()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Malicious,
    Stale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Screening {
    pub verdict: Verdict,
    /// `None` for stale replies, which are never evaluated.
    pub value: Option<f64>,
}

/// Reduces a reply to the value compared against the threshold.
pub fn adaptive_seq(
    rrep: &Rrep,
    record: &TimeKeeperRecord,
    now: SimTime,
    mode: DetectionMode,
) -> Result<f64, DetectionError> {
    if !record.is_live(now) {
        return Err(DetectionError::WindowExpired);
    }
    Ok(match mode {
        DetectionMode::Raw => f64::from(rrep.dest_seq.0),
        DetectionMode::AdaptiveRate => {
            let elapsed = now.saturating_since(record.sent_at).max(SimDuration::TICK);
            let growth = i64::from(rrep.dest_seq.0) - i64::from(record.last_known_dest_seq.0);
            growth as f64 / elapsed.as_secs_f64()
        }
    })
}

/// Permanent per-owner exclusion set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blacklist {
    entries: BTreeMap<NodeId, SimTime>,
}

impl Blacklist {
    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.contains_key(&node)
    }

    /// Adds `node`, keeping the first detection time if already present.
    pub fn insert(&mut self, node: NodeId, at: SimTime) -> bool {
        if self.entries.contains_key(&node) {
            return false;
        }
        self.entries.insert(node, at);
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, SimTime)> + '_ {
        self.entries.iter().map(|(&n, &t)| (n, t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct DetectionGuard {
    owner: NodeId,
    config: DetectionConfig,
    records: BTreeMap<(NodeId, u32), TimeKeeperRecord>,
    blacklist: Blacklist,
}

impl DetectionGuard {
    pub fn new(owner: NodeId, config: DetectionConfig) -> Self {
        DetectionGuard {
            owner,
            config,
            records: BTreeMap::new(),
            blacklist: Blacklist::default(),
        }
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.config
    }

    pub fn blacklist(&self) -> &Blacklist {
        &self.blacklist
    }

    pub fn is_blacklisted(&self, node: NodeId) -> bool {
        self.blacklist.contains(node)
    }

    pub fn record_rreq(
        &mut self,
        dest: NodeId,
        rreq_id: u32,
        sent_at: SimTime,
        window: SimDuration,
        last_known_dest_seq: SequenceNumber,
    ) -> Result<&TimeKeeperRecord, DetectionError> {
        let key = (dest, rreq_id);
        if self.records.contains_key(&key) {
            return Err(DetectionError::DuplicateRecord {
                origin: self.owner,
                dest,
                rreq_id,
            });
        }
        Ok(self.records.entry(key).or_insert(TimeKeeperRecord {
            origin: self.owner,
            dest,
            rreq_id,
            sent_at,
            window,
            last_known_dest_seq,
        }))
    }

    /// Most recent discovery toward `dest`. Replies carry no request id, so
    /// they are matched against this one.
    pub fn latest_record(&self, dest: NodeId) -> Option<&TimeKeeperRecord> {
        self.records
            .range((dest, 0)..=(dest, u32::MAX))
            .next_back()
            .map(|(_, r)| r)
    }

    /// Screens a reply addressed to the owner. A `Malicious` verdict
    /// blacklists the replier.
    pub fn screen_rrep(&mut self, rrep: &Rrep, now: SimTime) -> Result<Screening, DetectionError> {
        let record = self.latest_record(rrep.dest).ok_or(DetectionError::NoRecord)?;
        let value = match adaptive_seq(rrep, record, now, self.config.mode) {
            Ok(v) => v,
            Err(DetectionError::WindowExpired) => {
                return Ok(Screening {
                    verdict: Verdict::Stale,
                    value: None,
                })
            }
            Err(e) => return Err(e),
        };
        let verdict = if value > self.config.limit() {
            self.blacklist.insert(rrep.replier, now);
            Verdict::Malicious
        } else {
            Verdict::Accept
        };
        Ok(Screening {
            verdict,
            value: Some(value),
        })
    }
}
