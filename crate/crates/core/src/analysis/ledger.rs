//! Communication and storage accounting in exact value-units.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Ratio;
use serde::Serialize;

use crate::protocol::Protocol;
use crate::sim::trace::{Event, Trace};
use crate::types::{NodeId, OpKind, OperationId, ServerId, Tag};
use crate::units::{self, Cost};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OpCost {
    pub op: usize,
    pub kind: OpKind,
    pub messages: usize,
    #[serde(with = "units::cost_str")]
    pub cost: Cost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoragePoint {
    pub seq: u64,
    #[serde(with = "units::cost_str")]
    pub storage: Cost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostLedger {
    pub ops: Vec<OpCost>,
    #[serde(with = "units::cost_str")]
    pub write_sup: Cost,
    #[serde(with = "units::cost_str")]
    pub read_sup: Cost,
    #[serde(with = "units::cost_str")]
    pub storage_sup: Cost,
    #[serde(with = "units::cost_str")]
    pub storage_final: Cost,
    /// Storage after every point where it changed.
    pub storage: Vec<StoragePoint>,
}

/// Costs of every invoked operation and storage over non-failed servers.
/// Messages with no matching operation (there are none in simulator
/// output) are ignored.
pub fn ledger(trace: &Trace) -> CostLedger {
    let index: BTreeMap<&OperationId, usize> = trace.header.ops.iter().map(|o| (&o.id, o.index)).collect();
    let mut ops: Vec<OpCost> = trace
        .header
        .ops
        .iter()
        .map(|o| OpCost {
            op: o.index,
            kind: o.kind,
            messages: 0,
            cost: units::zero(),
        })
        .collect();
    let mut invoked = vec![false; ops.len()];

    let mut stored: BTreeMap<(ServerId, Tag), Cost> = BTreeMap::new();
    let mut down: BTreeSet<ServerId> = BTreeSet::new();
    let mut series: Vec<StoragePoint> = Vec::new();
    let mut current = units::zero();

    for e in &trace.events {
        match e {
            Event::Invoke { op, .. } => invoked[*op] = true,
            Event::Send { op, cost, .. } => {
                if let Some(&i) = index.get(op) {
                    ops[i].messages += 1;
                    ops[i].cost += cost;
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
            _ => continue,
        }
        let now: Cost = stored.iter().filter(|((s, _), _)| !down.contains(s)).map(|(_, c)| *c).sum();
        if series.is_empty() || now != current {
            current = now;
            series.push(StoragePoint {
                seq: e.seq(),
                storage: now,
            });
        }
    }

    let ops: Vec<OpCost> = ops.into_iter().filter(|o| invoked[o.op]).collect();
    let sup = |kind: OpKind| ops.iter().filter(|o| o.kind == kind).map(|o| o.cost).max().unwrap_or_else(units::zero);
    CostLedger {
        write_sup: sup(OpKind::Write),
        read_sup: sup(OpKind::Read),
        storage_sup: series.iter().map(|p| p.storage).max().unwrap_or_else(units::zero),
        storage_final: current,
        storage: series,
        ops,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageBound {
    Fixed(Cost),
    /// This much per write that finished its query phase and is not yet
    /// superseded; bounded only when that count is.
    PerLiveWrite(Cost),
    Unbounded,
}

impl StorageBound {
    pub fn fixed(&self) -> Option<Cost> {
        match self {
            StorageBound::Fixed(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Display for StorageBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StorageBound::Fixed(c) => write!(f, "{}", units::format_cost(c)),
            StorageBound::PerLiveWrite(c) => write!(f, "w*{}", units::format_cost(c)),
            StorageBound::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for StorageBound {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Worst-case costs the protocol guarantees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Theory {
    #[serde(with = "units::cost_str")]
    pub write: Cost,
    #[serde(with = "units::cost_str")]
    pub read: Cost,
    pub storage: StorageBound,
}

pub fn theory(protocol: &Protocol, n: usize, f: usize) -> Theory {
    let r = |a: usize, b: usize| Ratio::new(a as u64, b as u64);
    match *protocol {
        Protocol::Cas { k } => Theory {
            write: r(n, k),
            read: r(n, k),
            storage: StorageBound::Unbounded,
        },
        Protocol::Casgc { k, .. } => Theory {
            write: r(n, k),
            read: r(n, k),
            storage: StorageBound::PerLiveWrite(r(n, k)),
        },
        Protocol::Ccoas => Theory {
            write: r(n, n - f),
            read: r(n, n - f),
            storage: StorageBound::Unbounded,
        },
        Protocol::Abd => Theory {
            write: r(n, 1),
            read: r(2 * n, 1),
            storage: StorageBound::Fixed(r(n, 1)),
        },
        Protocol::Ldr { .. } => Theory {
            write: r(2 * f + 1, 1),
            read: r(f + 1, 1),
            storage: StorageBound::Unbounded,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::Mode;
    use crate::sim::trace::{HaltReason, TraceHeader};

    #[test]
    fn empty_trace_costs_nothing() {
        let t = Trace {
            header: TraceHeader {
                scenario: "empty".into(),
                protocol: Protocol::Abd,
                n: 3,
                f: 1,
                k: 1,
                quorum: 2,
                value_length: 4,
                mode: Mode::Scripted,
                seed: 0,
                step_budget: 10,
                ops: vec![],
            },
            events: vec![Event::Halt {
                seq: 0,
                reason: HaltReason::Quiescent,
                steps: 0,
            }],
        };
        let l = ledger(&t);
        assert_eq!(l.write_sup, units::zero());
        assert_eq!(l.read_sup, units::zero());
        assert_eq!(l.storage_sup, units::zero());
        assert!(l.ops.is_empty());
    }

    #[test]
    fn theory_table() {
        assert_eq!(theory(&Protocol::Cas { k: 3 }, 5, 1).write, Ratio::new(5, 3));
        assert_eq!(theory(&Protocol::Ccoas, 5, 1).read, Ratio::new(5, 4));
        let ldr = theory(
            &Protocol::Ldr {
                directories: 3,
                replicas: 5,
            },
            8,
            2,
        );
        assert_eq!((ldr.write, ldr.read), (units::units(5), units::units(3)));
        assert_eq!(theory(&Protocol::Abd, 5, 1).read, units::units(10));
    }
}
