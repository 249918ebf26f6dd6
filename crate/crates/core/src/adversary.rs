//! Black hole behaviour: forge a maximally attractive reply to every route
//! request without looking at any routing state, then swallow the data that
//! the lure attracts.

use std::collections::BTreeSet;

use crate::aodv::messages::{Rrep, Rreq, SequenceNumber};
use crate::ids::NodeId;
use crate::time::SimDuration;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryConfig {
    pub nodes: BTreeSet<NodeId>,
    pub forged_seq: SequenceNumber,
    pub reply_delay: SimDuration,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig {
            nodes: BTreeSet::new(),
            forged_seq: SequenceNumber(1_000_000),
            reply_delay: SimDuration::ZERO,
        }
    }
}

/// Parameters a malicious node carries at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlackHole {
    pub forged_seq: SequenceNumber,
    pub reply_delay: SimDuration,
}

impl BlackHole {
    /// The forged reply claims adjacency to the destination with
    /// `forged_seq`, whatever the network actually looks like.
    pub fn forge_rrep(&self, mal: NodeId, rreq: &Rreq, lifetime: SimDuration) -> Rrep {
        Rrep {
            dest: rreq.dest,
            dest_seq: self.forged_seq,
            origin: rreq.origin,
            hop_count: 1,
            lifetime,
            replier: mal,
        }
    }
}
