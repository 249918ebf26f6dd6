use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::ids::NodeId;
use crate::time::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled at {fire_at} but clock is already at {now}")]
    SchedulingInPast { fire_at: SimTime, now: SimTime },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} has exhausted its energy")]
    DeadNode(NodeId),
    #[error("node {0} cannot discover a route to itself")]
    SelfDiscovery(NodeId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DetectionError {
    #[error("time-keeper record already exists for origin {origin} dest {dest} rreq {rreq_id}")]
    DuplicateRecord {
        origin: NodeId,
        dest: NodeId,
        rreq_id: u32,
    },
    #[error("reply window expired")]
    WindowExpired,
    #[error("no discovery record matches the reply")]
    NoRecord,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace sink failed: {0}")]
    Sink(#[from] io::Error),
    #[error("malformed trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace checksum mismatch: recorded {recorded}, computed {computed}")]
    Checksum { recorded: String, computed: String },
    #[error("trace has no END line")]
    Truncated,
}

/// Top-level failure of a run, mapped onto process exit codes by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("packet conservation violated: {0}")]
    ConservationViolation(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    /// 1 validation/parse, 2 runtime invariant, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Scenario(ScenarioError::Io { .. }) => 3,
            Error::Scenario(_) => 1,
            Error::Trace(TraceError::Sink(_)) | Error::Io { .. } => 3,
            Error::Trace(_) => 1,
            Error::ConservationViolation(_) | Error::Invariant(_) => 2,
        }
    }
}
