//! CCOAS servers: an `(n, n-f)` code, `n-f` quorums, no gossip, and readers
//! registered at servers until the coded element for their tag arrives.

use std::collections::BTreeMap;

use super::cas::{highest_finalized, view_of};
use super::{EntryView, Outgoing, ServerLogic};
use crate::codec::CodedElement;
use crate::types::{
    ClientId, Label, Message, MsgKind, NodeId, OpKind, OperationId, Payload, Tag,
    Triple,
};

#[derive(Debug)]
pub struct CcoasServer {
    triples: BTreeMap<Tag, Triple>,
    // operation each registered reader is waiting on, per tag
    waiting: BTreeMap<Tag, BTreeMap<ClientId, OperationId>>,
}

impl CcoasServer {
    pub fn new(initial: CodedElement) -> Self {
        let mut triples = BTreeMap::new();
        triples.insert(
            Tag::initial(),
            Triple::new(Tag::initial(), Some(initial), Label::Fin),
        );
        Self {
            triples,
            waiting: BTreeMap::new(),
        }
    }

    pub fn triples(&self) -> &BTreeMap<Tag, Triple> {
        &self.triples
    }
}

impl ServerLogic for CcoasServer {
    fn handle(&mut self, msg: &Message, out: &mut Vec<Outgoing>) {
        let Some(t) = msg.tag.clone().or_else(|| (msg.kind == MsgKind::Query).then(Tag::initial))
        else {
            return;
        };
        match msg.kind {
            MsgKind::Query => {
                let top = highest_finalized(&self.triples);
                out.push(Outgoing::reply(msg, MsgKind::QueryResp, Some(top), Payload::None));
            }
            MsgKind::PreWrite => {
                let Payload::Coded(e) = &msg.payload else { return };
                match self.triples.get_mut(&t) {
                    None => {
                        self.triples
                            .insert(t.clone(), Triple::new(t.clone(), Some(e.clone()), Label::Pre));
                    }
                    Some(tr) if tr.element.is_none() => {
                        for (client, op) in self.waiting.remove(&t).unwrap_or_default() {
                            out.push(Outgoing {
                                to: NodeId::Client(client),
                                op,
                                op_kind: OpKind::Read,
                                kind: MsgKind::FinalizeReadResp,
                                tag: Some(t.clone()),
                                payload: Payload::Coded(e.clone()),
                            });
                        }
                        tr.element = Some(e.clone());
                        tr.label = Label::Fin;
                        tr.registered.clear();
                    }
                    Some(_) => {}
                }
                out.push(Outgoing::reply(msg, MsgKind::PreWriteAck, Some(t), Payload::None));
            }
            MsgKind::FinalizeWrite => {
                self.triples
                    .entry(t.clone())
                    .and_modify(|tr| tr.label = Label::Fin)
                    .or_insert_with(|| Triple::new(t.clone(), None, Label::Fin));
                out.push(Outgoing::reply(msg, MsgKind::FinalizeWriteAck, Some(t), Payload::None));
            }
            MsgKind::FinalizeRead => {
                let NodeId::Client(reader) = &msg.from else { return };
                let tr = self
                    .triples
                    .entry(t.clone())
                    .or_insert_with(|| Triple::new(t.clone(), None, Label::Fin));
                tr.label = Label::Fin;
                match &tr.element {
                    Some(e) => out.push(Outgoing::reply(
                        msg,
                        MsgKind::FinalizeReadResp,
                        Some(t),
                        Payload::Coded(e.clone()),
                    )),
                    None => {
                        tr.registered.insert(reader.clone());
                        self.waiting
                            .entry(t)
                            .or_default()
                            .insert(reader.clone(), msg.op.clone());
                    }
                }
            }
            _ => {}
        }
    }

    fn view(&self) -> BTreeMap<Tag, EntryView> {
        view_of(&self.triples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el() -> CodedElement {
        CodedElement {
            index: 2,
            k: 4,
            data: vec![9],
        }
    }

    fn from_client(c: &str, kind: MsgKind, tag: Tag, payload: Payload) -> Message {
        Message {
            from: NodeId::Client(ClientId::new(c)),
            to: NodeId::Server(1),
            op: OperationId {
                client: ClientId::new(c),
                seq: 0,
            },
            op_kind: if c.starts_with('r') { OpKind::Read } else { OpKind::Write },
            kind,
            tag: Some(tag),
            payload,
        }
    }

    #[test]
    fn registered_readers_served_on_pre_write() {
        let mut s = CcoasServer::new(el());
        let t = Tag::new(1, "w");
        let mut out = Vec::new();
        s.handle(&from_client("r1", MsgKind::FinalizeRead, t.clone(), Payload::None), &mut out);
        s.handle(&from_client("r2", MsgKind::FinalizeRead, t.clone(), Payload::None), &mut out);
        assert!(out.is_empty());
        assert_eq!(s.triples[&t].registered.len(), 2);

        s.handle(&from_client("w", MsgKind::PreWrite, t.clone(), Payload::Coded(el())), &mut out);
        let kinds: Vec<_> = out.iter().map(|o| (o.to.clone(), o.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                (NodeId::Client(ClientId::new("r1")), MsgKind::FinalizeReadResp),
                (NodeId::Client(ClientId::new("r2")), MsgKind::FinalizeReadResp),
                (NodeId::Client(ClientId::new("w")), MsgKind::PreWriteAck),
            ]
        );
        let tr = &s.triples[&t];
        assert_eq!((tr.label, tr.registered.is_empty()), (Label::Fin, true));
        assert!(tr.element.is_some());

        // redelivery serves nobody twice
        out.clear();
        s.handle(&from_client("w", MsgKind::PreWrite, t, Payload::Coded(el())), &mut out);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn writer_finalize_for_unknown_tag_inserts_null_fin() {
        let mut s = CcoasServer::new(el());
        let t = Tag::new(2, "w");
        let mut out = Vec::new();
        s.handle(&from_client("w", MsgKind::FinalizeWrite, t.clone(), Payload::None), &mut out);
        assert_eq!(s.triples[&t], Triple::new(t, None, Label::Fin));
        assert_eq!(out[0].kind, MsgKind::FinalizeWriteAck);
    }
}
