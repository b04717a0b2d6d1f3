//! Deterministic discrete-event simulation of an asynchronous, reliable
//! point-to-point network with crash failures.
//!
//! One step is one scheduler action: invoking an operation or delivering one
//! in-flight message. Asynchrony is pure reordering; nothing is ever lost
//! except messages addressed to crashed nodes.

pub mod config;
pub mod scheduler;
pub mod trace;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::protocol::{ClientEffects, ClientLogic, EntryView, Phase, ServerLogic};
use crate::types::{ClientId, Message, NodeId, OperationId, ServerId, Tag};

use config::{Hold, Scenario, Trigger};
use scheduler::{Action, Scheduler};
use trace::{Event, HaltReason, OpEntry, Trace, TraceHeader};

pub use config::{ConfigError, ScenarioConfig};

#[derive(Debug, Default, Clone)]
struct OpStatus {
    invoked: bool,
    responded: bool,
    phases: BTreeSet<Phase>,
}

struct ClientSlot {
    logic: Box<dyn ClientLogic>,
    crashed: bool,
    busy: Option<usize>,
    queue: VecDeque<usize>,
}

struct Sim<'a> {
    sc: &'a Scenario,
    servers: Vec<Box<dyn ServerLogic>>,
    views: Vec<BTreeMap<Tag, EntryView>>,
    server_down: Vec<bool>,
    clients: BTreeMap<ClientId, ClientSlot>,
    ops: Vec<OpStatus>,
    op_index: BTreeMap<OperationId, usize>,
    in_flight: BTreeMap<u64, Message>,
    next_msg: u64,
    events: Vec<Event>,
    seq: u64,
    steps: u64,
    released: Vec<bool>,
    server_crashes: Vec<(ServerId, Trigger, bool)>,
    client_crashes: Vec<(ClientId, Trigger, bool)>,
}

/// Runs a validated scenario to quiescence or budget exhaustion.
pub fn run(sc: &Scenario) -> Trace {
    let cfg = &sc.config;
    let (n, f) = (cfg.n, cfg.f);
    let initial = sc.initial_value();
    let servers = sc.protocol.build_servers(n, f, &initial);

    let mut clients = BTreeMap::new();
    for c in &sc.clients {
        clients.insert(
            c.clone(),
            ClientSlot {
                logic: sc.protocol.build_client(c.clone(), n, f, cfg.value_length),
                crashed: false,
                busy: None,
                queue: sc.ops.iter().filter(|o| &o.id.client == c).map(|o| o.index).collect(),
            },
        );
    }

    let mut sim = Sim {
        sc,
        views: vec![BTreeMap::new(); servers.len()],
        server_down: vec![false; servers.len()],
        servers,
        clients,
        ops: vec![OpStatus::default(); sc.ops.len()],
        op_index: sc.ops.iter().map(|o| (o.id.clone(), o.index)).collect(),
        in_flight: BTreeMap::new(),
        next_msg: 0,
        events: Vec::new(),
        seq: 0,
        steps: 0,
        released: vec![false; cfg.scheduler.script.len()],
        server_crashes: cfg
            .failures
            .servers
            .iter()
            .map(|c| (c.id, c.when.clone(), false))
            .collect(),
        client_crashes: cfg
            .failures
            .clients
            .iter()
            .map(|c| (ClientId::new(c.id.as_str()), c.when.clone(), false))
            .collect(),
    };
    for s in 0..sim.servers.len() {
        sim.record_state(s);
    }

    let mut sched = Scheduler::new(cfg.scheduler.mode, cfg.scheduler.seed);
    let reason = loop {
        sim.fire_crashes(false);
        sim.release_holds(false);
        let mut enabled = sim.enabled(false);
        if enabled.is_empty() {
            let changed = sim.fire_crashes(true) | sim.release_holds(true);
            enabled = sim.enabled(true);
            if enabled.is_empty() {
                if changed {
                    continue;
                }
                break HaltReason::Quiescent;
            }
        }
        if sim.steps >= cfg.step_budget {
            break HaltReason::BudgetExhausted;
        }
        let action = enabled.swap_remove(sched.pick(&enabled));
        sim.steps += 1;
        match action {
            Action::Invoke(i) => sim.invoke(i),
            Action::Deliver { msg, .. } => sim.deliver(msg),
        }
    };
    let seq = sim.next_seq();
    let steps = sim.steps;
    sim.events.push(Event::Halt { seq, reason, steps });

    Trace {
        header: TraceHeader {
            scenario: cfg.id.clone(),
            protocol: sc.protocol,
            n,
            f,
            k: sc.protocol.code_k(n, f),
            quorum: sc.protocol.quorum(n, f).threshold,
            value_length: cfg.value_length,
            mode: cfg.scheduler.mode,
            seed: cfg.scheduler.seed,
            step_budget: cfg.step_budget,
            ops: sc
                .ops
                .iter()
                .map(|o| OpEntry {
                    index: o.index,
                    id: o.id.clone(),
                    kind: o.kind,
                    value: o.value.clone(),
                })
                .collect(),
        },
        events: sim.events,
    }
}

impl Sim<'_> {
    fn next_seq(&mut self) -> u64 {
        let s = self.seq;
        self.seq += 1;
        s
    }

    fn fired(&self, t: &Trigger, quiescent: bool) -> bool {
        match t {
            Trigger::Quiescent => quiescent,
            Trigger::Never => false,
            Trigger::At(n) => self.steps >= *n,
            Trigger::Responded(i) => self.ops[*i].responded,
            Trigger::Invoked(i) => self.ops[*i].invoked,
            Trigger::Phase { op, phase } => self.ops[*op].phases.contains(phase),
        }
    }

    fn fire_crashes(&mut self, quiescent: bool) -> bool {
        let mut changed = false;
        for i in 0..self.server_crashes.len() {
            let (s, ref t, done) = self.server_crashes[i];
            if !done && self.fired(t, quiescent) {
                self.server_crashes[i].2 = true;
                self.crash(NodeId::Server(s));
                changed = true;
            }
        }
        for i in 0..self.client_crashes.len() {
            let (ref c, ref t, done) = self.client_crashes[i];
            if !done && self.fired(t, quiescent) {
                let c = c.clone();
                self.client_crashes[i].2 = true;
                self.crash(NodeId::Client(c));
                changed = true;
            }
        }
        changed
    }

    fn release_holds(&mut self, quiescent: bool) -> bool {
        let mut changed = false;
        for i in 0..self.released.len() {
            if !self.released[i] && self.fired(&self.sc.config.scheduler.script[i].until, quiescent) {
                self.released[i] = true;
                let seq = self.next_seq();
                self.events.push(Event::Release { seq, hold: i });
                changed = true;
            }
        }
        changed
    }

    fn crash(&mut self, node: NodeId) {
        match &node {
            NodeId::Server(s) => {
                if self.server_down[*s] {
                    return;
                }
                self.server_down[*s] = true;
            }
            NodeId::Client(c) => {
                let slot = self.clients.get_mut(c).expect("validated client");
                if slot.crashed {
                    return;
                }
                slot.crashed = true;
            }
        }
        let seq = self.next_seq();
        self.events.push(Event::Crash {
            seq,
            node: node.clone(),
        });
        let doomed: Vec<u64> = self
            .in_flight
            .iter()
            .filter(|(_, m)| m.to == node)
            .map(|(id, _)| *id)
            .collect();
        for msg in doomed {
            self.in_flight.remove(&msg);
            let seq = self.next_seq();
            self.events.push(Event::Drop { seq, msg });
        }
    }

    fn is_down(&self, node: &NodeId) -> bool {
        match node {
            NodeId::Server(s) => self.server_down.get(*s).copied().unwrap_or(true),
            NodeId::Client(c) => self.clients.get(c).is_none_or(|s| s.crashed),
        }
    }

    fn held(&self, m: &Message) -> bool {
        self.sc
            .config
            .scheduler
            .script
            .iter()
            .zip(&self.released)
            .any(|(h, &released)| !released && self.matches(h, m))
    }

    fn matches(&self, h: &Hold, m: &Message) -> bool {
        let f = &h.hold;
        f.kind.is_none_or(|k| k == m.kind)
            && f.op.is_none_or(|i| self.op_index.get(&m.op) == Some(&i))
            && f.from.as_ref().is_none_or(|n| n.to_node() == m.from)
            && f.to.as_ref().is_none_or(|n| n.to_node() == m.to)
    }

    fn enabled(&self, quiescent: bool) -> Vec<Action> {
        let mut out = Vec::new();
        let mut invocable: Vec<usize> = self
            .clients
            .values()
            .filter(|c| !c.crashed && c.busy.is_none())
            .filter_map(|c| c.queue.front().copied())
            .filter(|&i| {
                let op = &self.sc.ops[i];
                let due = self.steps >= op.at || quiescent;
                let after = op.after.as_ref().is_none_or(|t| self.fired(t, quiescent));
                due && after
            })
            .collect();
        invocable.sort_unstable();
        out.extend(invocable.into_iter().map(Action::Invoke));
        out.extend(
            self.in_flight
                .iter()
                .filter(|(_, m)| !self.held(m))
                .map(|(id, m)| Action::Deliver {
                    msg: *id,
                    to: m.to.clone(),
                }),
        );
        out
    }

    fn invoke(&mut self, i: usize) {
        let op = &self.sc.ops[i];
        let client = op.id.client.clone();
        let seq = self.next_seq();
        self.events.push(Event::Invoke { seq, op: i });
        self.ops[i].invoked = true;
        let mut fx = ClientEffects::default();
        let slot = self.clients.get_mut(&client).expect("validated client");
        slot.queue.pop_front();
        slot.busy = Some(i);
        slot.logic.invoke(op.id.clone(), op.kind, op.value.clone(), &mut fx);
        self.apply_client(&client, i, fx);
    }

    fn deliver(&mut self, msg_id: u64) {
        let msg = self.in_flight.remove(&msg_id).expect("enabled message");
        let seq = self.next_seq();
        self.events.push(Event::Deliver { seq, msg: msg_id });
        match &msg.to {
            NodeId::Server(s) => {
                let s = *s;
                let mut out = Vec::new();
                self.servers[s].handle(&msg, &mut out);
                self.record_state(s);
                let from = NodeId::Server(s);
                for o in out {
                    self.send(o.into_message(from.clone()));
                }
            }
            NodeId::Client(c) => {
                let c = c.clone();
                let slot = self.clients.get_mut(&c).expect("validated client");
                let Some(op) = slot.busy else {
                    // late response to an operation that already returned
                    return;
                };
                let mut fx = ClientEffects::default();
                slot.logic.handle(&msg, &mut fx);
                self.apply_client(&c, op, fx);
            }
        }
    }

    fn apply_client(&mut self, client: &ClientId, op: usize, fx: ClientEffects) {
        for (phase, tag) in fx.phases {
            self.ops[op].phases.insert(phase);
            let seq = self.next_seq();
            self.events.push(Event::Phase { seq, op, phase, tag });
        }
        // a crash tied to entering a phase happens before that phase's sends
        let due: Vec<usize> = (0..self.client_crashes.len())
            .filter(|&i| {
                let (c, t, done) = &self.client_crashes[i];
                !done && c == client && matches!(t, Trigger::Phase { .. }) && self.fired(t, false)
            })
            .collect();
        if !due.is_empty() {
            for i in due {
                self.client_crashes[i].2 = true;
            }
            self.crash(NodeId::Client(client.clone()));
            return;
        }
        let from = NodeId::Client(client.clone());
        for o in fx.sends {
            self.send(o.into_message(from.clone()));
        }
        if let Some(r) = fx.response {
            self.ops[op].responded = true;
            let seq = self.next_seq();
            self.events.push(Event::Respond {
                seq,
                op,
                value: r.value,
                tag: r.tag,
            });
            self.clients.get_mut(client).expect("validated client").busy = None;
        }
    }

    fn send(&mut self, m: Message) {
        let id = self.next_msg;
        self.next_msg += 1;
        let seq = self.next_seq();
        self.events.push(Event::Send {
            seq,
            msg: id,
            from: m.from.clone(),
            to: m.to.clone(),
            op: m.op.clone(),
            op_kind: m.op_kind,
            kind: m.kind,
            tag: m.tag.clone(),
            cost: m.cost(),
            payload: m.payload.name().to_string(),
        });
        if self.is_down(&m.to) {
            let seq = self.next_seq();
            self.events.push(Event::Drop { seq, msg: id });
        } else {
            self.in_flight.insert(id, m);
        }
    }

    /// Emits the view diff. Removals and shrinking entries go first so a
    /// storage total summed event by event never overshoots the true value.
    fn record_state(&mut self, s: ServerId) {
        let now = self.servers[s].view();
        let old = std::mem::take(&mut self.views[s]);
        for tag in old.keys().filter(|t| !now.contains_key(*t)) {
            let seq = self.next_seq();
            self.events.push(Event::State {
                seq,
                server: s,
                tag: tag.clone(),
                label: None,
                stored: crate::units::zero(),
                removed: true,
            });
        }
        let mut changed: Vec<(&Tag, &EntryView)> =
            now.iter().filter(|(tag, entry)| old.get(*tag) != Some(*entry)).collect();
        changed.sort_by_key(|(tag, entry)| old.get(*tag).is_none_or(|o| entry.stored > o.stored));
        for (tag, entry) in changed {
            let seq = self.next_seq();
            self.events.push(Event::State {
                seq,
                server: s,
                tag: tag.clone(),
                label: entry.label,
                stored: entry.stored,
                removed: false,
            });
        }
        self.views[s] = now;
    }
}
