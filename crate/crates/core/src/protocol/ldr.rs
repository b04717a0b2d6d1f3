//! LDR: directory servers hold `(tag, locations)` metadata, replica servers
//! hold every `(tag, value)` version they are sent.
//!
//! Server ids `0..directories` are directories and the next `replicas` ids
//! are replicas.

use std::collections::{BTreeMap, BTreeSet};

use super::{broadcast, ClientEffects, ClientLogic, EntryView, Outgoing, Phase, Response, ServerLogic};
use crate::types::{ClientId, Message, MsgKind, OpKind, OperationId, Payload, ServerId, Tag, Value};
use crate::units;

pub fn build_servers(
    directories: usize,
    replicas: usize,
    f: usize,
    initial: &Value,
) -> Vec<Box<dyn ServerLogic>> {
    let all: BTreeSet<ServerId> = (directories..directories + replicas).collect();
    let mut out: Vec<Box<dyn ServerLogic>> = Vec::with_capacity(directories + replicas);
    for _ in 0..directories {
        out.push(Box::new(Directory::new(all.clone(), f)));
    }
    for _ in 0..replicas {
        out.push(Box::new(Replica::new(initial.clone())));
    }
    out
}

#[derive(Debug)]
pub struct Directory {
    tag: Tag,
    locations: BTreeSet<ServerId>,
    f: usize,
}

impl Directory {
    pub fn new(replicas: BTreeSet<ServerId>, f: usize) -> Self {
        Self {
            tag: Tag::initial(),
            locations: replicas,
            f,
        }
    }
}

impl ServerLogic for Directory {
    fn handle(&mut self, msg: &Message, out: &mut Vec<Outgoing>) {
        match msg.kind {
            MsgKind::GetMeta => out.push(Outgoing::reply(
                msg,
                MsgKind::GetMetaResp,
                Some(self.tag.clone()),
                Payload::Locations(self.locations.clone()),
            )),
            MsgKind::PutMeta => {
                let (Some(t), Payload::Locations(s)) = (&msg.tag, &msg.payload) else { return };
                if *t == self.tag {
                    self.locations.extend(s.iter().copied());
                } else if *t > self.tag && s.len() > self.f {
                    self.tag = t.clone();
                    self.locations = s.clone();
                }
                out.push(Outgoing::reply(msg, MsgKind::PutMetaAck, Some(t.clone()), Payload::None));
            }
            _ => {}
        }
    }

    fn view(&self) -> BTreeMap<Tag, EntryView> {
        BTreeMap::from([(
            self.tag.clone(),
            EntryView {
                label: None,
                stored: units::zero(),
            },
        )])
    }
}

#[derive(Debug)]
pub struct Replica {
    versions: BTreeMap<Tag, Value>,
}

impl Replica {
    pub fn new(initial: Value) -> Self {
        Self {
            versions: BTreeMap::from([(Tag::initial(), initial)]),
        }
    }
}

impl ServerLogic for Replica {
    fn handle(&mut self, msg: &Message, out: &mut Vec<Outgoing>) {
        let Some(t) = &msg.tag else { return };
        match msg.kind {
            MsgKind::Put => {
                let Payload::Value(v) = &msg.payload else { return };
                self.versions.entry(t.clone()).or_insert_with(|| v.clone());
                out.push(Outgoing::reply(msg, MsgKind::PutAck, Some(t.clone()), Payload::None));
            }
            MsgKind::Get => {
                if let Some(v) = self.versions.get(t) {
                    out.push(Outgoing::reply(
                        msg,
                        MsgKind::GetResp,
                        Some(t.clone()),
                        Payload::Value(v.clone()),
                    ));
                }
            }
            _ => {}
        }
    }

    fn view(&self) -> BTreeMap<Tag, EntryView> {
        self.versions
            .keys()
            .map(|t| {
                (
                    t.clone(),
                    EntryView {
                        label: None,
                        stored: units::units(1),
                    },
                )
            })
            .collect()
    }
}

#[derive(Debug)]
struct Pending {
    id: OperationId,
    kind: OpKind,
    phase: Phase,
    tag: Tag,
    locations: BTreeSet<ServerId>,
    value: Option<Value>,
    // first f+1 put ackers, in arrival order
    acked: Vec<ServerId>,
    responders: BTreeSet<ServerId>,
}

#[derive(Debug)]
pub struct LdrClient {
    id: ClientId,
    directories: usize,
    replicas: usize,
    f: usize,
    pending: Option<Pending>,
}

impl LdrClient {
    pub fn new(id: ClientId, directories: usize, replicas: usize, f: usize) -> Self {
        Self {
            id,
            directories,
            replicas,
            f,
            pending: None,
        }
    }

    fn majority(&self) -> usize {
        self.directories / 2 + 1
    }
}

impl ClientLogic for LdrClient {
    fn invoke(&mut self, op: OperationId, kind: OpKind, value: Option<Value>, out: &mut ClientEffects) {
        out.enter(Phase::GetMeta, None);
        out.sends.extend(broadcast(
            0..self.directories,
            &op,
            kind,
            MsgKind::GetMeta,
            None,
            |_| Payload::None,
        ));
        self.pending = Some(Pending {
            id: op,
            kind,
            phase: Phase::GetMeta,
            tag: Tag::initial(),
            locations: BTreeSet::new(),
            value,
            acked: Vec::new(),
            responders: BTreeSet::new(),
        });
    }

    fn handle(&mut self, msg: &Message, out: &mut ClientEffects) {
        let majority = self.majority();
        let (dirs, f) = (self.directories, self.f);
        let Some(p) = self.pending.as_mut() else { return };
        let Some(from) = msg.from.server() else { return };
        if msg.op != p.id {
            return;
        }
        let tag_matches = msg.tag.as_ref() == Some(&p.tag);
        match (p.phase, msg.kind) {
            (Phase::GetMeta, MsgKind::GetMetaResp) => {
                p.responders.insert(from);
                if let (Some(t), Payload::Locations(s)) = (&msg.tag, &msg.payload) {
                    if *t > p.tag || p.locations.is_empty() {
                        p.tag = t.clone();
                        p.locations = s.clone();
                    }
                }
                if p.responders.len() < majority {
                    return;
                }
                p.responders.clear();
                match p.kind {
                    OpKind::Write => {
                        p.tag = p.tag.next(&self.id);
                        p.phase = Phase::Put;
                        out.enter(Phase::Put, Some(p.tag.clone()));
                        let v = p.value.clone().expect("write carries a value");
                        out.sends.extend(broadcast(
                            dirs..dirs + (2 * f + 1).min(self.replicas),
                            &p.id,
                            p.kind,
                            MsgKind::Put,
                            Some(p.tag.clone()),
                            |_| Payload::Value(v.clone()),
                        ));
                    }
                    OpKind::Read => {
                        p.phase = Phase::PutMeta;
                        out.enter(Phase::PutMeta, Some(p.tag.clone()));
                        let s = p.locations.clone();
                        out.sends.extend(broadcast(
                            0..dirs,
                            &p.id,
                            p.kind,
                            MsgKind::PutMeta,
                            Some(p.tag.clone()),
                            |_| Payload::Locations(s.clone()),
                        ));
                    }
                }
            }
            (Phase::Put, MsgKind::PutAck) if tag_matches => {
                if !p.acked.contains(&from) {
                    p.acked.push(from);
                }
                if p.acked.len() == f + 1 {
                    p.locations = p.acked.iter().copied().collect();
                    p.phase = Phase::PutMeta;
                    out.enter(Phase::PutMeta, Some(p.tag.clone()));
                    let s = p.locations.clone();
                    out.sends.extend(broadcast(
                        0..dirs,
                        &p.id,
                        p.kind,
                        MsgKind::PutMeta,
                        Some(p.tag.clone()),
                        |_| Payload::Locations(s.clone()),
                    ));
                }
            }
            (Phase::PutMeta, MsgKind::PutMetaAck) if tag_matches => {
                p.responders.insert(from);
                if p.responders.len() < majority {
                    return;
                }
                p.responders.clear();
                match p.kind {
                    OpKind::Write => {
                        let p = self.pending.take().expect("pending");
                        out.response = Some(Response {
                            value: None,
                            tag: p.tag,
                        });
                    }
                    OpKind::Read => {
                        p.phase = Phase::Get;
                        out.enter(Phase::Get, Some(p.tag.clone()));
                        out.sends.extend(broadcast(
                            p.locations.iter().copied().take(f + 1),
                            &p.id,
                            p.kind,
                            MsgKind::Get,
                            Some(p.tag.clone()),
                            |_| Payload::None,
                        ));
                    }
                }
            }
            (Phase::Get, MsgKind::GetResp) if tag_matches => {
                if let Payload::Value(v) = &msg.payload {
                    let v = v.clone();
                    let p = self.pending.take().expect("pending");
                    out.response = Some(Response {
                        value: Some(v),
                        tag: p.tag,
                    });
                }
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::NodeId;

    fn put_meta(tag: Tag, s: &[ServerId]) -> Message {
        Message {
            from: NodeId::Client(ClientId::new("c")),
            to: NodeId::Server(0),
            op: OperationId {
                client: ClientId::new("c"),
                seq: 0,
            },
            op_kind: OpKind::Write,
            kind: MsgKind::PutMeta,
            tag: Some(tag),
            payload: Payload::Locations(s.iter().copied().collect()),
        }
    }

    #[test]
    fn directory_needs_f_plus_one_locations() {
        let mut d = Directory::new([3, 4, 5].into_iter().collect(), 1);
        let mut out = Vec::new();
        d.handle(&put_meta(Tag::new(1, "c"), &[3]), &mut out);
        assert_eq!(d.tag, Tag::initial());
        d.handle(&put_meta(Tag::new(1, "c"), &[3, 5]), &mut out);
        assert_eq!(d.tag, Tag::new(1, "c"));
        d.handle(&put_meta(Tag::new(1, "c"), &[4]), &mut out);
        assert_eq!(d.locations, [3, 4, 5].into_iter().collect());
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn replica_keeps_every_version_and_ignores_unknown_get() {
        let mut r = Replica::new(Value(vec![0]));
        let mut out = Vec::new();
        let mut m = put_meta(Tag::new(1, "c"), &[]);
        m.kind = MsgKind::Put;
        m.payload = Payload::Value(Value(vec![1]));
        r.handle(&m, &mut out);
        m.tag = Some(Tag::new(2, "c"));
        r.handle(&m, &mut out);
        assert_eq!(r.view().len(), 3);

        out.clear();
        m.kind = MsgKind::Get;
        m.tag = Some(Tag::new(9, "c"));
        r.handle(&m, &mut out);
        assert!(out.is_empty());
    }
}
