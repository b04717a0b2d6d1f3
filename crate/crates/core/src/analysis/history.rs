//! Operation records recovered from a trace.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::sim::trace::{Event, Trace};
use crate::types::{NodeId, OpKind, OperationId, Tag, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OperationRecord {
    pub index: usize,
    pub id: OperationId,
    pub kind: OpKind,
    /// Written value, or the value a read returned.
    pub value: Option<Value>,
    pub invoked: Option<u64>,
    pub responded: Option<u64>,
    /// Point at which the client crashed while this operation was pending.
    pub crashed: Option<u64>,
    /// The tag the operation acquired: the pre-write tag of a write, the
    /// highest query tag of a read.
    pub tag: Option<Tag>,
}

impl OperationRecord {
    pub fn terminated(&self) -> bool {
        self.responded.is_some()
    }

    pub fn failed(&self) -> bool {
        self.crashed.is_some()
    }

    /// Invoked, never responded, never crashed.
    pub fn stalled(&self) -> bool {
        self.invoked.is_some() && self.responded.is_none() && self.crashed.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    pub ops: Vec<OperationRecord>,
    pub initial: Value,
}

impl History {
    pub fn from_trace(trace: &Trace) -> Self {
        let mut ops: Vec<OperationRecord> = trace
            .header
            .ops
            .iter()
            .map(|o| OperationRecord {
                index: o.index,
                id: o.id.clone(),
                kind: o.kind,
                value: o.value.clone(),
                invoked: None,
                responded: None,
                crashed: None,
                tag: None,
            })
            .collect();
        // operation currently pending at each client
        let mut pending: BTreeMap<String, usize> = BTreeMap::new();
        for e in &trace.events {
            match e {
                Event::Invoke { seq, op } => {
                    ops[*op].invoked = Some(*seq);
                    pending.insert(ops[*op].id.client.as_str().to_owned(), *op);
                }
                Event::Phase { op, tag: Some(t), .. } if ops[*op].tag.is_none() => {
                    ops[*op].tag = Some(t.clone());
                }
                Event::Respond { seq, op, value, tag } => {
                    let r = &mut ops[*op];
                    r.responded = Some(*seq);
                    if r.kind == OpKind::Read {
                        r.value = value.clone();
                    }
                    if r.tag.is_none() {
                        r.tag = Some(tag.clone());
                    }
                    pending.remove(r.id.client.as_str());
                }
                Event::Crash {
                    seq,
                    node: NodeId::Client(c),
                } => {
                    if let Some(op) = pending.remove(c.as_str()) {
                        ops[op].crashed = Some(*seq);
                    }
                }
                _ => {}
            }
        }
        Self {
            ops,
            initial: trace.header.initial_value(),
        }
    }

    pub fn writes(&self) -> impl Iterator<Item = &OperationRecord> {
        self.ops.iter().filter(|o| o.kind == OpKind::Write)
    }

    pub fn reads(&self) -> impl Iterator<Item = &OperationRecord> {
        self.ops.iter().filter(|o| o.kind == OpKind::Read)
    }
}
