//! Atomicity through the tag order: `a` precedes `b` iff `T(a) < T(b)`, or the
//! tags are equal and `a` is a write while `b` is a read.
//!
//! Checked properties, over terminated operations plus failed writes that
//! acquired a tag (their effects can be observed, they never respond):
//!
//! 1. real-time precedence is never contradicted by the tag order;
//! 2. writes carry distinct tags, so they are ordered against everything;
//! 3. each read returns the value of the greatest write ordered before it,
//!    or the initial value when there is none.

use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use super::history::{History, OperationRecord};
use crate::types::{OpKind, Tag, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Atomicity {
    Atomic,
    Violation {
        property: u8,
        ops: Vec<usize>,
        detail: String,
    },
}

impl Atomicity {
    pub fn is_atomic(&self) -> bool {
        matches!(self, Atomicity::Atomic)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("operation {op} terminated without a tag")]
pub struct IntegrityError {
    pub op: usize,
}

/// The order key of an operation: tag first, then writes before reads.
fn key(o: &OperationRecord) -> (&Tag, u8) {
    let t = o.tag.as_ref().expect("filtered to tagged ops");
    (t, if o.kind == OpKind::Write { 0 } else { 1 })
}

fn precedes(a: &OperationRecord, b: &OperationRecord) -> bool {
    key(a).cmp(&key(b)) == Ordering::Less
}

fn real_time_before(a: &OperationRecord, b: &OperationRecord) -> bool {
    match (a.responded, b.invoked) {
        (Some(r), Some(i)) => r < i,
        _ => false,
    }
}

pub fn check_atomicity(h: &History) -> Result<Atomicity, IntegrityError> {
    for o in &h.ops {
        if o.terminated() && o.tag.is_none() {
            return Err(IntegrityError { op: o.index });
        }
    }
    let ops: Vec<&OperationRecord> = h
        .ops
        .iter()
        .filter(|o| o.terminated() || (o.kind == OpKind::Write && o.tag.is_some()))
        .collect();

    for a in &ops {
        for b in &ops {
            if real_time_before(a, b) && precedes(b, a) {
                return Ok(Atomicity::Violation {
                    property: 1,
                    ops: vec![a.index, b.index],
                    detail: format!(
                        "op {} returned before op {} began, yet is ordered after it",
                        a.index, b.index
                    ),
                });
            }
        }
    }

    let writes: Vec<&&OperationRecord> = ops.iter().filter(|o| o.kind == OpKind::Write).collect();
    for (i, a) in writes.iter().enumerate() {
        for b in &writes[i + 1..] {
            if a.tag == b.tag {
                return Ok(Atomicity::Violation {
                    property: 2,
                    ops: vec![a.index, b.index],
                    detail: format!("writes {} and {} share tag {}", a.index, b.index, a.tag.as_ref().unwrap()),
                });
            }
        }
    }

    for r in ops.iter().filter(|o| o.kind == OpKind::Read) {
        let t = r.tag.as_ref().expect("tagged");
        let last = writes
            .iter()
            .filter(|w| w.tag.as_ref().expect("tagged") <= t)
            .max_by(|a, b| a.tag.cmp(&b.tag));
        let expected: &Value = last.and_then(|w| w.value.as_ref()).unwrap_or(&h.initial);
        if r.value.as_ref() != Some(expected) {
            let mut witness = vec![r.index];
            witness.extend(last.map(|w| w.index));
            return Ok(Atomicity::Violation {
                property: 3,
                ops: witness,
                detail: match last {
                    Some(w) => format!("read {} should return the value of write {}", r.index, w.index),
                    None => format!("read {} should return the initial value", r.index),
                },
            });
        }
    }
    Ok(Atomicity::Atomic)
}
