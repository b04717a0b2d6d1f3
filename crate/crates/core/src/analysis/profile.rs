//! End-points, concurrency between reads and writes, and supersession of
//! writes, with the storage bound and gc-completeness checks they feed.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::Serialize;

use super::history::History;
use crate::sim::trace::{Event, Trace};
use crate::types::{NodeId, OpKind, OperationId, ServerId, Tag};
use crate::units::{self, Cost};

/// Servers that never crash anywhere in the trace.
fn survivors(trace: &Trace) -> BTreeSet<ServerId> {
    let crashed: BTreeSet<ServerId> = trace
        .events
        .iter()
        .filter_map(|e| match e {
            Event::Crash {
                node: NodeId::Server(s),
                ..
            } => Some(*s),
            _ => None,
        })
        .collect();
    (0..trace.header.n).filter(|s| !crashed.contains(s)).collect()
}

/// End-point of every operation, indexed like `history.ops`.
///
/// A write ends at the first point where a quorum of never-crashing servers
/// hold its tag with a finalized label; failing that, at its crash point. A
/// read ends when it returns or crashes. Otherwise there is no end-point.
pub fn end_points(trace: &Trace, history: &History) -> Vec<Option<u64>> {
    let live = survivors(trace);
    let quorum = trace.header.quorum;
    let watched: BTreeMap<&Tag, Vec<usize>> =
        history
            .writes()
            .filter_map(|w| w.tag.as_ref().map(|t| (t, w.index)))
            .fold(BTreeMap::new(), |mut m, (t, i)| {
                m.entry(t).or_insert_with(Vec::new).push(i);
                m
            });

    let mut holders: BTreeMap<&Tag, BTreeSet<ServerId>> = BTreeMap::new();
    let mut reached: BTreeMap<usize, u64> = BTreeMap::new();
    for e in &trace.events {
        let Event::State {
            seq,
            server,
            tag,
            label,
            removed,
            ..
        } = e
        else {
            continue;
        };
        let Some((key, ops)) = watched.get_key_value(tag) else { continue };
        if !live.contains(server) {
            continue;
        }
        let fin = !removed && label.is_none_or(|l| l.is_finalized());
        let set = holders.entry(key).or_default();
        if fin {
            set.insert(*server);
        } else {
            set.remove(server);
        }
        if set.len() >= quorum {
            for &i in ops {
                reached.entry(i).or_insert(*seq);
            }
        }
    }

    history
        .ops
        .iter()
        .map(|o| match o.kind {
            OpKind::Write => reached.get(&o.index).copied().or(o.crashed),
            OpKind::Read => o.responded.or(o.crashed),
        })
        .collect()
}

/// End-point of a single operation. See [`end_points`].
pub fn end_point_of(op: usize, trace: &Trace) -> Option<u64> {
    let h = History::from_trace(trace);
    end_points(trace, &h)[op]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReadConcurrency {
    pub read: usize,
    pub writes: Vec<usize>,
}

impl ReadConcurrency {
    pub fn count(&self) -> usize {
        self.writes.len()
    }
}

/// For every invoked read, the invoked writes concurrent with it: neither
/// one's end-point precedes the other's invocation.
pub fn concurrency_profile(trace: &Trace, history: &History) -> Vec<ReadConcurrency> {
    let ends = end_points(trace, history);
    let before = |end: Option<u64>, inv: Option<u64>| matches!((end, inv), (Some(e), Some(i)) if e < i);
    history
        .reads()
        .filter(|r| r.invoked.is_some())
        .map(|r| ReadConcurrency {
            read: r.index,
            writes: history
                .writes()
                .filter(|w| w.invoked.is_some())
                .filter(|w| !before(ends[w.index], r.invoked) && !before(ends[r.index], w.invoked))
                .map(|w| w.index)
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoundViolation {
    pub seq: u64,
    pub w: usize,
    #[serde(with = "units::cost_str")]
    pub storage: Cost,
    #[serde(with = "units::cost_str")]
    pub bound: Cost,
    pub quiescent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GcViolation {
    pub seq: u64,
    pub op: usize,
    pub server: ServerId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupersessionProfile {
    pub omega: usize,
    /// Largest number of writes, at any point, that completed their query
    /// phase and are not `omega`-superseded. The initial value counts as a
    /// write that completed before the first point.
    pub w_max: usize,
    pub points: usize,
    pub quiescent_points: usize,
    pub bound_violations: Vec<BoundViolation>,
    pub gc_violations: Vec<GcViolation>,
    /// Writes `omega`-superseded at the last point.
    pub superseded_at_halt: Vec<usize>,
}

impl SupersessionProfile {
    pub fn quiescent_bound_violations(&self) -> usize {
        self.bound_violations.iter().filter(|v| v.quiescent).count()
    }
}

const MAX_REPORTED: usize = 16;

/// Walks every point of the trace. At each one, computes which writes are
/// `omega`-superseded (at least `omega` terminated writes with larger tags
/// have no message on their behalf still in flight), then checks that
/// storage stays within `w * n / k` and that no live server still stores a
/// coded element for a superseded write.
pub fn supersession_profile(trace: &Trace, history: &History, omega: usize) -> SupersessionProfile {
    let h = &trace.header;
    let unit: Cost = Ratio::new(h.n as u64, h.k as u64);

    struct W {
        op: Option<usize>,
        tag: Tag,
        tagged_at: Option<u64>,
        responded: Option<u64>,
        id: Option<OperationId>,
    }
    let mut writes = vec![W {
        op: None,
        tag: Tag::initial(),
        tagged_at: None,
        responded: None,
        id: None,
    }];
    for w in history.writes() {
        if let Some(t) = &w.tag {
            let tagged_at = trace.events.iter().find_map(|e| match e {
                Event::Phase { seq, op, tag: Some(_), .. } if *op == w.index => Some(*seq),
                _ => None,
            });
            writes.push(W {
                op: Some(w.index),
                tag: t.clone(),
                tagged_at,
                responded: w.responded,
                id: Some(w.id.clone()),
            });
        }
    }

    let mut outstanding: BTreeMap<OperationId, usize> = BTreeMap::new();
    let mut msg_op: BTreeMap<u64, OperationId> = BTreeMap::new();
    let mut in_flight = 0usize;
    let mut stored: BTreeMap<(ServerId, Tag), Cost> = BTreeMap::new();
    let mut down: BTreeSet<ServerId> = BTreeSet::new();

    let mut out = SupersessionProfile {
        omega,
        w_max: 0,
        points: 0,
        quiescent_points: 0,
        bound_violations: Vec::new(),
        gc_violations: Vec::new(),
        superseded_at_halt: Vec::new(),
    };

    for e in &trace.events {
        let seq = e.seq();
        match e {
            Event::Send { msg, op, .. } => {
                *outstanding.entry(op.clone()).or_default() += 1;
                msg_op.insert(*msg, op.clone());
                in_flight += 1;
            }
            Event::Deliver { msg, .. } | Event::Drop { msg, .. } => {
                if let Some(op) = msg_op.remove(msg) {
                    *outstanding.get_mut(&op).expect("counted at send") -= 1;
                    in_flight -= 1;
                }
            }
            Event::Crash {
                node: NodeId::Server(s),
                ..
            } => {
                down.insert(*s);
            }
            Event::State {
                server,
                tag,
                stored: c,
                removed,
                ..
            } => {
                let key = (*server, tag.clone());
                if *removed {
                    stored.remove(&key);
                } else {
                    stored.insert(key, *c);
                }
            }
            _ => {}
        }

        let settled = |w: &W| {
            w.responded.is_some_and(|r| r <= seq)
                && w.id.as_ref().is_some_and(|id| outstanding.get(id).copied().unwrap_or(0) == 0)
        };
        let superseders: Vec<&Tag> = writes.iter().filter(|w| settled(w)).map(|w| &w.tag).collect();
        let superseded = |w: &W| superseders.iter().filter(|t| **t > &w.tag).count() >= omega;

        let live_count = writes
            .iter()
            .filter(|w| w.op.is_none() || w.tagged_at.is_some_and(|t| t <= seq))
            .filter(|w| !superseded(w))
            .count();
        out.w_max = out.w_max.max(live_count);

        let storage: Cost = stored
            .iter()
            .filter(|((s, _), _)| !down.contains(s))
            .map(|(_, c)| *c)
            .sum();
        let bound = unit * Cost::from_integer(live_count as u64);
        let quiescent = in_flight == 0;
        out.points += 1;
        if quiescent {
            out.quiescent_points += 1;
        }
        if storage > bound && out.bound_violations.len() < MAX_REPORTED {
            out.bound_violations.push(BoundViolation {
                seq,
                w: live_count,
                storage,
                bound,
                quiescent,
            });
        }

        for w in writes.iter().filter(|w| superseded(w)) {
            for ((s, t), c) in &stored {
                if *t == w.tag && !down.contains(s) && *c > units::zero() && out.gc_violations.len() < MAX_REPORTED {
                    out.gc_violations.push(GcViolation {
                        seq,
                        op: w.op.unwrap_or(usize::MAX),
                        server: *s,
                    });
                }
            }
        }

        if matches!(e, Event::Halt { .. }) {
            out.superseded_at_halt = writes
                .iter()
                .filter(|w| superseded(w))
                .filter_map(|w| w.op)
                .collect();
        }
    }
    out
}
