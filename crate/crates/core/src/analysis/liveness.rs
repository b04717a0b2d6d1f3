//! Termination of non-failing operations, judged only where the protocol's
//! liveness hypotheses hold.

use std::collections::BTreeSet;

use serde::Serialize;

use super::history::History;
use super::profile::concurrency_profile;
use crate::protocol::Protocol;
use crate::sim::trace::{Event, Trace};
use crate::types::{NodeId, ServerId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Liveness {
    Live,
    Violated { stalled: Vec<usize> },
    /// The run falls outside the hypotheses; `stalled` is informational.
    NotApplicable { reason: String, stalled: Vec<usize> },
}

impl Liveness {
    pub fn is_violation(&self) -> bool {
        matches!(self, Liveness::Violated { .. })
    }

    pub fn stalled(&self) -> &[usize] {
        match self {
            Liveness::Live => &[],
            Liveness::Violated { stalled } | Liveness::NotApplicable { stalled, .. } => stalled,
        }
    }
}

fn crashed_servers(trace: &Trace) -> BTreeSet<ServerId> {
    trace
        .events
        .iter()
        .filter_map(|e| match e {
            Event::Crash {
                node: NodeId::Server(s),
                ..
            } => Some(*s),
            _ => None,
        })
        .collect()
}

/// Why the liveness hypotheses fail for this trace, if they do.
fn out_of_regime(trace: &Trace, history: &History) -> Option<String> {
    let h = &trace.header;
    if !trace.is_fair() {
        return Some("unfair execution: messages to live nodes were never delivered".into());
    }
    let crashed = crashed_servers(trace);
    match h.protocol {
        Protocol::Ldr {
            directories,
            replicas: _,
        } => {
            let dirs = crashed.iter().filter(|&&s| s < directories).count();
            let reps = crashed.len() - dirs;
            if 2 * dirs >= directories {
                return Some(format!("{dirs} of {directories} directories crashed"));
            }
            if reps > h.f {
                return Some(format!("{reps} replicas crashed, more than f = {}", h.f));
            }
        }
        _ if crashed.len() > h.f => {
            return Some(format!("{} servers crashed, more than f = {}", crashed.len(), h.f));
        }
        _ => {}
    }
    if let Some(delta) = h.protocol.delta() {
        let worst = concurrency_profile(trace, history)
            .into_iter()
            .max_by_key(|c| c.count());
        if let Some(c) = worst.filter(|c| c.count() > delta) {
            return Some(format!(
                "read {} has {} concurrent writes, more than delta = {delta}",
                c.read,
                c.count()
            ));
        }
    }
    None
}

pub fn check_liveness(trace: &Trace, history: &History) -> Liveness {
    let stalled: Vec<usize> = history.ops.iter().filter(|o| o.stalled()).map(|o| o.index).collect();
    match out_of_regime(trace, history) {
        Some(reason) => Liveness::NotApplicable { reason, stalled },
        None if stalled.is_empty() => Liveness::Live,
        None => Liveness::Violated { stalled },
    }
}
