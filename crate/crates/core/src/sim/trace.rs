//! Execution traces: a header line followed by one JSON event per line.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::protocol::{Phase, Protocol};
use crate::types::{Label, MsgKind, NodeId, OpKind, OperationId, ServerId, Tag, Value};
use crate::units::{self, Cost};

use super::config::Mode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpEntry {
    pub index: usize,
    pub id: OperationId,
    pub kind: OpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub scenario: String,
    pub protocol: Protocol,
    pub n: usize,
    pub f: usize,
    /// Code dimension; 1 for the replication protocols.
    pub k: usize,
    pub quorum: usize,
    pub value_length: usize,
    pub mode: Mode,
    pub seed: u64,
    pub step_budget: u64,
    pub ops: Vec<OpEntry>,
}

impl TraceHeader {
    pub fn initial_value(&self) -> Value {
        Value::zeroed(self.value_length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    Quiescent,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Invoke {
        seq: u64,
        op: usize,
    },
    Send {
        seq: u64,
        msg: u64,
        from: NodeId,
        to: NodeId,
        op: OperationId,
        op_kind: OpKind,
        kind: MsgKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<Tag>,
        #[serde(with = "units::cost_str")]
        cost: Cost,
        payload: String,
    },
    Deliver {
        seq: u64,
        msg: u64,
    },
    Drop {
        seq: u64,
        msg: u64,
    },
    Crash {
        seq: u64,
        node: NodeId,
    },
    /// A scripted hold was lifted.
    Release {
        seq: u64,
        hold: usize,
    },
    Phase {
        seq: u64,
        op: usize,
        phase: Phase,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<Tag>,
    },
    State {
        seq: u64,
        server: ServerId,
        tag: Tag,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<Label>,
        #[serde(with = "units::cost_str")]
        stored: Cost,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        removed: bool,
    },
    Respond {
        seq: u64,
        op: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<Value>,
        tag: Tag,
    },
    Halt {
        seq: u64,
        reason: HaltReason,
        steps: u64,
    },
}

impl Event {
    pub fn seq(&self) -> u64 {
        match self {
            Event::Invoke { seq, .. }
            | Event::Send { seq, .. }
            | Event::Deliver { seq, .. }
            | Event::Drop { seq, .. }
            | Event::Crash { seq, .. }
            | Event::Release { seq, .. }
            | Event::Phase { seq, .. }
            | Event::State { seq, .. }
            | Event::Respond { seq, .. }
            | Event::Halt { seq, .. } => *seq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Self> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty trace"))??;
        let header: TraceHeader = serde_json::from_str(&first)?;
        let mut events = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Event = serde_json::from_str(&line).map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 2))
            })?;
            events.push(e);
        }
        Ok(Self { header, events })
    }

    pub fn halt(&self) -> Option<(HaltReason, u64)> {
        self.events.iter().rev().find_map(|e| match e {
            Event::Halt { reason, steps, .. } => Some((*reason, *steps)),
            _ => None,
        })
    }

    /// Every message sent to a node that never crashed was delivered.
    pub fn is_fair(&self) -> bool {
        use std::collections::{BTreeMap, BTreeSet};
        let crashed: BTreeSet<&NodeId> = self
            .events
            .iter()
            .filter_map(|e| match e {
                Event::Crash { node, .. } => Some(node),
                _ => None,
            })
            .collect();
        let mut pending: BTreeMap<u64, &NodeId> = BTreeMap::new();
        for e in &self.events {
            match e {
                Event::Send { msg, to, .. } => {
                    pending.insert(*msg, to);
                }
                Event::Deliver { msg, .. } | Event::Drop { msg, .. } => {
                    pending.remove(msg);
                }
                _ => {}
            }
        }
        pending.values().all(|to| crashed.contains(to))
    }
}
