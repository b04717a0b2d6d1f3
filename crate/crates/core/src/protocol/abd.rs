//! Multi-writer ABD over majority quorums.

use std::collections::{BTreeMap, BTreeSet};

use super::{broadcast, ClientEffects, ClientLogic, EntryView, Outgoing, Phase, Response, ServerLogic};
use crate::types::{ClientId, Message, MsgKind, OpKind, OperationId, Payload, ServerId, Tag, Value};
use crate::units;

#[derive(Debug)]
pub struct AbdServer {
    tag: Tag,
    value: Value,
}

impl AbdServer {
    pub fn new(initial: Value) -> Self {
        Self {
            tag: Tag::initial(),
            value: initial,
        }
    }
}

impl ServerLogic for AbdServer {
    fn handle(&mut self, msg: &Message, out: &mut Vec<Outgoing>) {
        match msg.kind {
            MsgKind::Get => {
                let payload = match msg.op_kind {
                    OpKind::Read => Payload::Value(self.value.clone()),
                    OpKind::Write => Payload::None,
                };
                out.push(Outgoing::reply(msg, MsgKind::GetResp, Some(self.tag.clone()), payload));
            }
            MsgKind::Put => {
                let (Some(t), Payload::Value(v)) = (&msg.tag, &msg.payload) else { return };
                if *t > self.tag {
                    self.tag = t.clone();
                    self.value = v.clone();
                }
                out.push(Outgoing::reply(msg, MsgKind::PutAck, Some(t.clone()), Payload::None));
            }
            _ => {}
        }
    }

    fn view(&self) -> BTreeMap<Tag, EntryView> {
        BTreeMap::from([(
            self.tag.clone(),
            EntryView {
                label: None,
                stored: units::units(1),
            },
        )])
    }
}

#[derive(Debug)]
struct Pending {
    id: OperationId,
    kind: OpKind,
    phase: Phase,
    tag: Tag,
    value: Option<Value>,
    responders: BTreeSet<ServerId>,
}

#[derive(Debug)]
pub struct AbdClient {
    id: ClientId,
    n: usize,
    pending: Option<Pending>,
}

impl AbdClient {
    pub fn new(id: ClientId, n: usize) -> Self {
        Self {
            id,
            n,
            pending: None,
        }
    }

    fn majority(&self) -> usize {
        self.n / 2 + 1
    }
}

impl ClientLogic for AbdClient {
    fn invoke(&mut self, op: OperationId, kind: OpKind, value: Option<Value>, out: &mut ClientEffects) {
        out.enter(Phase::Get, None);
        out.sends
            .extend(broadcast(0..self.n, &op, kind, MsgKind::Get, None, |_| Payload::None));
        self.pending = Some(Pending {
            id: op,
            kind,
            phase: Phase::Get,
            tag: Tag::initial(),
            value,
            responders: BTreeSet::new(),
        });
    }

    fn handle(&mut self, msg: &Message, out: &mut ClientEffects) {
        let majority = self.majority();
        let Some(p) = self.pending.as_mut() else { return };
        let Some(from) = msg.from.server() else { return };
        if msg.op != p.id {
            return;
        }
        match (p.phase, msg.kind) {
            (Phase::Get, MsgKind::GetResp) => {
                p.responders.insert(from);
                if let Some(t) = &msg.tag {
                    if p.kind == OpKind::Read && (*t > p.tag || p.value.is_none()) {
                        if let Payload::Value(v) = &msg.payload {
                            p.tag = t.clone();
                            p.value = Some(v.clone());
                        }
                    } else if p.kind == OpKind::Write && *t > p.tag {
                        p.tag = t.clone();
                    }
                }
                if p.responders.len() >= majority {
                    p.responders.clear();
                    if p.kind == OpKind::Write {
                        p.tag = p.tag.next(&self.id);
                    }
                    p.phase = Phase::Put;
                    out.enter(Phase::Put, Some(p.tag.clone()));
                    let v = p.value.clone().expect("value known before put");
                    out.sends.extend(broadcast(
                        0..self.n,
                        &p.id,
                        p.kind,
                        MsgKind::Put,
                        Some(p.tag.clone()),
                        |_| Payload::Value(v.clone()),
                    ));
                }
            }
            (Phase::Put, MsgKind::PutAck) if msg.tag.as_ref() == Some(&p.tag) => {
                p.responders.insert(from);
                if p.responders.len() >= majority {
                    let p = self.pending.take().expect("pending");
                    out.response = Some(Response {
                        value: (p.kind == OpKind::Read).then(|| p.value.expect("read value")),
                        tag: p.tag,
                    });
                }
            }
            _ => {}
        }
    }
}
