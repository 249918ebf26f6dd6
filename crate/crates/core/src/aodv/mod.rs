//! AODV route discovery and maintenance (RFC 3561 subset).
//!
//! Not implemented: HELLO beacons, gratuitous RREPs, expanding-ring search,
//! local repair and sequence-number wraparound. Link breaks are detected
//! when a unicast finds its next hop out of range.

pub mod messages;
pub mod node;
pub mod table;

pub use messages::{DataPacket, Frame, Message, Rerr, Rrep, Rreq, SequenceNumber, SEQ_GUARD};
pub use node::{Action, AodvNode, AodvParams, DropReason, RerrTarget, Role, Timer};
pub use table::{RouteEntry, RouteState, RoutingTable};
