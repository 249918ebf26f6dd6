//! Line-based event trace.
//!
//! ```text
//! t=<us> ev=<KIND> node=<id> [key=value ...]
//! ...
//! t=<us> ev=END checksum=<16 hex digits>
//! ```
//!
//! Keys after the fixed prefix are sorted. The checksum is FNV-1a 64 over
//! every byte preceding the END line.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::hash::Hasher;
use std::io::{BufRead, Write};
use std::str::FromStr;

use fnv::FnvHasher;

use crate::error::TraceError;
use crate::ids::NodeId;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ev {
    Send,
    Recv,
    Fwd,
    Drop,
    Rerr,
    Detect,
    Move,
    Energy,
}

impl Ev {
    pub fn as_str(self) -> &'static str {
        match self {
            Ev::Send => "SEND",
            Ev::Recv => "RECV",
            Ev::Fwd => "FWD",
            Ev::Drop => "DROP",
            Ev::Rerr => "RERR",
            Ev::Detect => "DETECT",
            Ev::Move => "MOVE",
            Ev::Energy => "ENERGY",
        }
    }
}

impl FromStr for Ev {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "SEND" => Ev::Send,
            "RECV" => Ev::Recv,
            "FWD" => Ev::Fwd,
            "DROP" => Ev::Drop,
            "RERR" => Ev::Rerr,
            "DETECT" => Ev::Detect,
            "MOVE" => Ev::Move,
            "ENERGY" => Ev::Energy,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLine {
    pub t: SimTime,
    pub ev: Ev,
    pub node: NodeId,
    pub fields: BTreeMap<String, String>,
}

impl TraceLine {
    pub fn new(t: SimTime, ev: Ev, node: NodeId) -> Self {
        TraceLine {
            t,
            ev,
            node,
            fields: BTreeMap::new(),
        }
    }

    pub fn kv(mut self, key: &str, value: impl fmt::Display) -> Self {
        let value = value.to_string();
        debug_assert!(!value.contains([' ', '\n']), "trace values are single tokens");
        self.fields.insert(key.to_owned(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    pub fn parse_field<T: FromStr>(&self, key: &str) -> Option<T> {
        self.get(key)?.parse().ok()
    }
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} ev={} node={}", self.t, self.ev.as_str(), self.node)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Streams lines to a sink while maintaining the running checksum.
pub struct TraceWriter<W: Write> {
    sink: W,
    hasher: FnvHasher,
    lines: u64,
    buf: String,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(sink: W) -> Self {
        TraceWriter {
            sink,
            hasher: FnvHasher::default(),
            lines: 0,
            buf: String::new(),
        }
    }

    pub fn record(&mut self, line: &TraceLine) -> Result<(), TraceError> {
        self.buf.clear();
        writeln!(self.buf, "{line}").expect("writing to a String");
        self.hasher.write(self.buf.as_bytes());
        self.sink.write_all(self.buf.as_bytes())?;
        self.lines += 1;
        Ok(())
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    /// Appends the END line and returns the sink with the checksum.
    pub fn finish(mut self, t: SimTime) -> Result<(W, u64), TraceError> {
        let checksum = self.hasher.finish();
        writeln!(self.sink, "t={t} ev=END checksum={checksum:016x}")?;
        self.sink.flush()?;
        Ok((self.sink, checksum))
    }
}

/// A fully parsed trace whose checksum has been verified.
#[derive(Debug, Clone)]
pub struct Trace {
    pub lines: Vec<TraceLine>,
    pub end: SimTime,
    pub checksum: u64,
}

impl Trace {
    pub fn parse(reader: impl BufRead) -> Result<Trace, TraceError> {
        let mut hasher = FnvHasher::default();
        let mut lines = Vec::new();
        for (idx, raw) in reader.lines().enumerate() {
            let raw = raw?;
            let lineno = idx + 1;
            if let Some((t, recorded)) = parse_end(&raw) {
                let computed = hasher.finish();
                if recorded != format!("{computed:016x}") {
                    return Err(TraceError::Checksum {
                        recorded: recorded.to_owned(),
                        computed: format!("{computed:016x}"),
                    });
                }
                return Ok(Trace {
                    lines,
                    end: t,
                    checksum: computed,
                });
            }
            hasher.write(raw.as_bytes());
            hasher.write(b"\n");
            lines.push(parse_line(&raw).map_err(|message| TraceError::Malformed {
                line: lineno,
                message,
            })?);
        }
        Err(TraceError::Truncated)
    }

    pub fn iter(&self, ev: Ev) -> impl Iterator<Item = &TraceLine> {
        self.lines.iter().filter(move |l| l.ev == ev)
    }
}

fn parse_end(raw: &str) -> Option<(SimTime, &str)> {
    let mut parts = raw.split(' ');
    let t = parts.next()?.strip_prefix("t=")?.parse().ok()?;
    if parts.next()? != "ev=END" {
        return None;
    }
    let checksum = parts.next()?.strip_prefix("checksum=")?;
    parts
        .next()
        .is_none()
        .then_some((SimTime::from_micros(t), checksum))
}

pub fn parse_line(raw: &str) -> Result<TraceLine, String> {
    let mut parts = raw.split(' ');
    let mut prefix = |key: &str| -> Result<&str, String> {
        parts
            .next()
            .and_then(|p| p.strip_prefix(key))
            .ok_or_else(|| format!("expected `{key}`"))
    };
    let t: u64 = prefix("t=")?.parse().map_err(|_| "bad time".to_owned())?;
    let ev: Ev = prefix("ev=")?
        .parse()
        .map_err(|_| "unknown event kind".to_owned())?;
    let node: u32 = prefix("node=")?.parse().map_err(|_| "bad node id".to_owned())?;
    let mut line = TraceLine::new(SimTime::from_micros(t), ev, NodeId(node));
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("field `{part}` lacks `=`"))?;
        line.fields.insert(k.to_owned(), v.to_owned());
    }
    Ok(line)
}
