//! Brute-force linearizability of a read/write register history: search for a
//! total order that respects real time and register semantics. Protocol
//! agnostic; used to cross-check the tag-order checker on small histories.

use std::collections::HashSet;

use super::history::{History, OperationRecord};
use crate::types::{OpKind, Value};

/// Larger histories are refused; the search is exponential.
pub const ORACLE_MAX_OPS: usize = 12;

/// `None` when the history has an invoked operation that never returned or
/// more than [`ORACLE_MAX_OPS`] operations.
pub fn is_linearizable(h: &History) -> Option<bool> {
    let ops: Vec<&OperationRecord> = h.ops.iter().filter(|o| o.invoked.is_some()).collect();
    if ops.len() > ORACLE_MAX_OPS || ops.iter().any(|o| !o.terminated()) {
        return None;
    }
    let mut search = Search {
        ops: &ops,
        initial: &h.initial,
        dead: HashSet::new(),
    };
    Some(search.extend(0, None))
}

struct Search<'a> {
    ops: &'a [&'a OperationRecord],
    initial: &'a Value,
    // (placed set, last write placed) states known not to complete
    dead: HashSet<(u32, Option<usize>)>,
}

impl Search<'_> {
    fn current(&self, last_write: Option<usize>) -> Option<&Value> {
        match last_write {
            Some(w) => self.ops[w].value.as_ref(),
            None => Some(self.initial),
        }
    }

    fn extend(&mut self, placed: u32, last_write: Option<usize>) -> bool {
        let n = self.ops.len();
        if placed.count_ones() as usize == n {
            return true;
        }
        if self.dead.contains(&(placed, last_write)) {
            return false;
        }
        for i in 0..n {
            if placed & (1 << i) != 0 {
                continue;
            }
            let cand = self.ops[i];
            let inv = cand.invoked.expect("filtered");
            // every op that returned before `cand` began must already be placed
            let minimal = (0..n).all(|j| {
                placed & (1 << j) != 0 || j == i || self.ops[j].responded.expect("complete") > inv
            });
            if !minimal {
                continue;
            }
            let next_write = match cand.kind {
                OpKind::Write => Some(i),
                OpKind::Read => {
                    if cand.value.as_ref() != self.current(last_write) {
                        continue;
                    }
                    last_write
                }
            };
            if self.extend(placed | (1 << i), next_write) {
                return true;
            }
        }
        self.dead.insert((placed, last_write));
        false
    }
}
