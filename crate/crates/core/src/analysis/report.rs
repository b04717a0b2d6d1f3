//! Every verdict for one trace, gathered into a single JSON document.

use std::collections::BTreeMap;

use serde::Serialize;

use super::atomicity::{check_atomicity, Atomicity};
use super::history::History;
use super::ledger::{ledger, theory, CostLedger, Theory};
use super::linearizability::is_linearizable;
use super::liveness::{check_liveness, Liveness};
use super::profile::{concurrency_profile, supersession_profile, ReadConcurrency, SupersessionProfile};
use crate::sim::config::{value_to_string, Expect, Mode};
use crate::sim::trace::{Event, HaltReason, Trace};
use crate::types::{ServerId, Tag};
use crate::units::{format_cost, Cost};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExpectCheck {
    pub check: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub protocol: String,
    pub n: usize,
    pub f: usize,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<usize>,
    pub mode: Mode,
    pub seed: u64,
    /// Trace file name, relative to the report.
    pub trace: String,
    pub halt: HaltReason,
    pub steps: u64,
    pub atomicity: Atomicity,
    /// Permutation-search verdict; absent when the history is incomplete or
    /// too large for the search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linearizable: Option<bool>,
    pub liveness: Liveness,
    pub ledger: CostLedger,
    pub theory: Theory,
    pub concurrency: Vec<ReadConcurrency>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supersession: Option<SupersessionProfile>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub expectations: Vec<ExpectCheck>,
    pub passed: bool,
}

impl Report {
    /// Reasons this report counts as a failure; empty when it passed.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Atomicity::Violation { detail, .. } = &self.atomicity {
            out.push(format!("atomicity: {detail}"));
        }
        if self.linearizable == Some(false) {
            out.push("history is not linearizable".into());
        }
        if let Liveness::Violated { stalled } = &self.liveness {
            out.push(format!("liveness: ops {stalled:?} never returned"));
        }
        if let Some(s) = &self.supersession {
            if let Some(v) = s.bound_violations.first() {
                out.push(format!(
                    "storage {} exceeds {} at point {}",
                    format_cost(&v.storage),
                    format_cost(&v.bound),
                    v.seq
                ));
            }
            if let Some(g) = s.gc_violations.first() {
                out.push(format!(
                    "server {} still stores superseded write {} at point {}",
                    g.server, g.op, g.seq
                ));
            }
        }
        for e in self.expectations.iter().filter(|e| !e.ok) {
            out.push(format!("expect {}: {}", e.check, e.detail));
        }
        out
    }
}

/// Coded payload left at each server at the end of the trace.
fn final_storage(trace: &Trace) -> BTreeMap<(ServerId, Tag), Cost> {
    let mut stored = BTreeMap::new();
    for e in &trace.events {
        if let Event::State {
            server,
            tag,
            stored: c,
            removed,
            ..
        } = e
        {
            if *removed {
                stored.remove(&(*server, tag.clone()));
            } else {
                stored.insert((*server, tag.clone()), *c);
            }
        }
    }
    stored
}

fn check_expect(e: &Expect, trace: &Trace, h: &History, l: &CostLedger) -> Vec<ExpectCheck> {
    let mut out = Vec::new();
    let mut push = |check: String, ok: bool, detail: String| out.push(ExpectCheck { check, ok, detail });

    for &i in &e.terminated {
        let o = &h.ops[i];
        push(
            format!("terminated[{i}]"),
            o.terminated(),
            if o.terminated() { "returned".into() } else { "did not return".into() },
        );
    }
    for &i in &e.stalled {
        let o = &h.ops[i];
        push(
            format!("stalled[{i}]"),
            o.stalled(),
            if o.stalled() { "invoked and never returned".into() } else { "did not stall".into() },
        );
    }
    for (&i, want) in &e.reads {
        let got = h.ops[i].value.as_ref().filter(|_| h.ops[i].terminated()).map(value_to_string);
        push(
            format!("reads[{i}]"),
            got.as_deref() == Some(want.as_str()),
            format!("want `{want}`, got {}", got.map_or("nothing".into(), |g| format!("`{g}`"))),
        );
    }
    let mut cost = |name: &str, want: &Option<Cost>, got: Cost| {
        if let Some(w) = want {
            push(
                name.into(),
                *w == got,
                format!("want {}, got {}", format_cost(w), format_cost(&got)),
            );
        }
    };
    cost("write_cost", &e.write_cost, l.write_sup);
    cost("read_cost", &e.read_cost, l.read_sup);
    cost("storage_sup", &e.storage_sup, l.storage_sup);

    if !e.collected.is_empty() {
        let left = final_storage(trace);
        for &i in &e.collected {
            let holders: Vec<ServerId> = match &h.ops[i].tag {
                Some(t) => left
                    .iter()
                    .filter(|((_, tag), c)| tag == t && **c > crate::units::zero())
                    .map(|((s, _), _)| *s)
                    .collect(),
                None => Vec::new(),
            };
            push(
                format!("collected[{i}]"),
                holders.is_empty(),
                if holders.is_empty() {
                    "no server holds an element".into()
                } else {
                    format!("still held by servers {holders:?}")
                },
            );
        }
    }
    out
}

/// Runs every checker over `trace`. `trace_name` is recorded verbatim.
pub fn analyze(trace: &Trace, trace_name: &str, expect: Option<&Expect>) -> Report {
    let h = &trace.header;
    let history = History::from_trace(trace);
    let atomicity = check_atomicity(&history).unwrap_or_else(|e| Atomicity::Violation {
        property: 0,
        ops: vec![e.op],
        detail: e.to_string(),
    });
    let ledger = ledger(trace);
    let supersession = h.protocol.delta().map(|d| supersession_profile(trace, &history, d + 1));
    let expectations = expect.map(|e| check_expect(e, trace, &history, &ledger)).unwrap_or_default();
    let (halt, steps) = trace.halt().unwrap_or((HaltReason::BudgetExhausted, 0));

    let mut report = Report {
        scenario: h.scenario.clone(),
        protocol: h.protocol.name().into(),
        n: h.n,
        f: h.f,
        k: h.k,
        delta: h.protocol.delta(),
        mode: h.mode,
        seed: h.seed,
        trace: trace_name.into(),
        halt,
        steps,
        atomicity,
        linearizable: is_linearizable(&history),
        liveness: check_liveness(trace, &history),
        theory: theory(&h.protocol, h.n, h.f),
        concurrency: concurrency_profile(trace, &history),
        ledger,
        supersession,
        expectations,
        passed: false,
    };
    report.passed = report.failures().is_empty();
    report
}
