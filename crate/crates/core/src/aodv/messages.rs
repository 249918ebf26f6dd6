use std::fmt;

use crate::ids::{FlowId, NodeId};
use crate::time::{SimDuration, SimTime};

/// Sequence numbers above this are treated as a wraparound hazard. Honest
/// nodes in a bounded run never get near it.
pub const SEQ_GUARD: u32 = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SequenceNumber(pub u32);

impl SequenceNumber {
    pub const ZERO: SequenceNumber = SequenceNumber(0);

    pub fn incremented(self) -> SequenceNumber {
        assert!(self.0 + 1 < SEQ_GUARD, "sequence number wraparound");
        SequenceNumber(self.0 + 1)
    }
}

impl fmt::Display for SequenceNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rreq {
    pub origin: NodeId,
    pub origin_seq: SequenceNumber,
    pub rreq_id: u32,
    pub dest: NodeId,
    /// `None` when the origin has never learned a sequence number for `dest`.
    pub last_known_dest_seq: Option<SequenceNumber>,
    pub hop_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rrep {
    pub dest: NodeId,
    pub dest_seq: SequenceNumber,
    pub origin: NodeId,
    pub hop_count: u32,
    pub lifetime: SimDuration,
    /// Node that generated the reply; relays leave it untouched.
    pub replier: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rerr {
    pub unreachable: Vec<(NodeId, SequenceNumber)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPacket {
    pub flow: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    pub packet_seq: u64,
    pub size_bytes: u32,
    pub created_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
    Data(DataPacket),
}

impl Message {
    /// On-air size. Control sizes follow the RFC 3561 message layouts.
    pub fn size_bytes(&self) -> u32 {
        match self {
            Message::Rreq(_) => 24,
            Message::Rrep(_) => 20,
            Message::Rerr(rerr) => 4 + 8 * rerr.unreachable.len() as u32,
            Message::Data(pkt) => pkt.size_bytes,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Rreq(_) => "RREQ",
            Message::Rrep(_) => "RREP",
            Message::Rerr(_) => "RERR",
            Message::Data(_) => "DATA",
        }
    }
}

/// A message on the air, tagged with its transmitter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub sender: NodeId,
    pub body: Message,
    pub size_bytes: u32,
}

impl Frame {
    pub fn new(sender: NodeId, body: Message) -> Self {
        let size_bytes = body.size_bytes();
        debug_assert!(size_bytes > 0);
        Frame {
            sender,
            body,
            size_bytes,
        }
    }
}
