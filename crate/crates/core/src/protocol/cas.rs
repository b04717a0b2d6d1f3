//! CAS servers with gossip, and the three-phase coded client shared by CAS,
//! CASGC and CCOAS.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{broadcast, ClientEffects, ClientLogic, EntryView, Outgoing, Phase, Response, ServerLogic};
use crate::codec::{Codec, CodedElement};
use crate::types::{
    ClientId, Label, Message, MsgKind, OpKind, OperationId, Payload, ServerId, Tag, Triple, Value,
};

/// When a reader's finalize phase may complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadRule {
    /// A quorum of responses of which at least `k` carry coded elements.
    QuorumWithK,
    /// A quorum of responses that all carry coded elements.
    CodedQuorum,
}

#[derive(Debug)]
struct Pending {
    id: OperationId,
    kind: OpKind,
    value: Option<Value>,
    phase: Phase,
    tag: Tag,
    responders: BTreeSet<ServerId>,
    elements: BTreeMap<usize, CodedElement>,
}

#[derive(Debug)]
pub struct CodedClient {
    id: ClientId,
    n: usize,
    quorum: usize,
    codec: Arc<Codec>,
    value_len: usize,
    rule: ReadRule,
    pending: Option<Pending>,
}

impl CodedClient {
    pub fn new(
        id: ClientId,
        n: usize,
        quorum: usize,
        codec: Arc<Codec>,
        value_len: usize,
        rule: ReadRule,
    ) -> Self {
        Self {
            id,
            n,
            quorum,
            codec,
            value_len,
            rule,
            pending: None,
        }
    }

    fn read_ready(&self, p: &Pending) -> bool {
        match self.rule {
            ReadRule::QuorumWithK => {
                p.responders.len() >= self.quorum && p.elements.len() >= self.codec.params().k
            }
            ReadRule::CodedQuorum => p.elements.len() >= self.quorum,
        }
    }
}

impl ClientLogic for CodedClient {
    fn invoke(&mut self, op: OperationId, kind: OpKind, value: Option<Value>, out: &mut ClientEffects) {
        out.enter(Phase::Query, None);
        out.sends
            .extend(broadcast(0..self.n, &op, kind, MsgKind::Query, None, |_| Payload::None));
        self.pending = Some(Pending {
            id: op,
            kind,
            value,
            phase: Phase::Query,
            tag: Tag::initial(),
            responders: BTreeSet::new(),
            elements: BTreeMap::new(),
        });
    }

    fn handle(&mut self, msg: &Message, out: &mut ClientEffects) {
        let Some(mut p) = self.pending.take() else {
            return;
        };
        if msg.op != p.id {
            self.pending = Some(p);
            return;
        }
        let Some(from) = msg.from.server() else {
            self.pending = Some(p);
            return;
        };
        let tag_matches = msg.tag.as_ref() == Some(&p.tag);

        match (p.phase, msg.kind) {
            (Phase::Query, MsgKind::QueryResp) => {
                p.responders.insert(from);
                if let Some(t) = &msg.tag {
                    if *t > p.tag {
                        p.tag = t.clone();
                    }
                }
                if p.responders.len() >= self.quorum {
                    p.responders.clear();
                    match p.kind {
                        OpKind::Write => {
                            p.tag = p.tag.next(&self.id);
                            p.phase = Phase::PreWrite;
                            out.enter(Phase::PreWrite, Some(p.tag.clone()));
                            let value = p.value.as_ref().expect("write carries a value");
                            let elements = self.codec.encode(value.as_bytes());
                            out.sends.extend(broadcast(
                                0..self.n,
                                &p.id,
                                p.kind,
                                MsgKind::PreWrite,
                                Some(p.tag.clone()),
                                |s| Payload::Coded(elements[s].clone()),
                            ));
                        }
                        OpKind::Read => {
                            p.phase = Phase::Finalize;
                            out.enter(Phase::Finalize, Some(p.tag.clone()));
                            out.sends.extend(broadcast(
                                0..self.n,
                                &p.id,
                                p.kind,
                                MsgKind::FinalizeRead,
                                Some(p.tag.clone()),
                                |_| Payload::None,
                            ));
                        }
                    }
                }
            }
            (Phase::PreWrite, MsgKind::PreWriteAck) if tag_matches => {
                p.responders.insert(from);
                if p.responders.len() >= self.quorum {
                    p.responders.clear();
                    p.phase = Phase::Finalize;
                    out.enter(Phase::Finalize, Some(p.tag.clone()));
                    out.sends.extend(broadcast(
                        0..self.n,
                        &p.id,
                        p.kind,
                        MsgKind::FinalizeWrite,
                        Some(p.tag.clone()),
                        |_| Payload::None,
                    ));
                }
            }
            (Phase::Finalize, MsgKind::FinalizeWriteAck) if tag_matches => {
                p.responders.insert(from);
                if p.responders.len() >= self.quorum {
                    out.response = Some(Response {
                        value: None,
                        tag: p.tag,
                    });
                    return;
                }
            }
            (Phase::Finalize, MsgKind::FinalizeReadResp) if tag_matches => {
                p.responders.insert(from);
                if let Payload::Coded(e) = &msg.payload {
                    p.elements.insert(e.index, e.clone());
                }
                if self.read_ready(&p) {
                    let elements: Vec<CodedElement> = p.elements.into_values().collect();
                    let bytes = self
                        .codec
                        .decode_value(&elements, self.value_len)
                        .expect("elements for one tag come from distinct coordinates");
                    out.response = Some(Response {
                        value: Some(Value(bytes)),
                        tag: p.tag,
                    });
                    return;
                }
            }
            _ => {}
        }
        self.pending = Some(p);
    }
}

/// Highest tag whose triple carries a finalized label.
pub(crate) fn highest_finalized(triples: &BTreeMap<Tag, Triple>) -> Tag {
    triples
        .iter()
        .rev()
        .find(|(_, tr)| tr.label.is_finalized())
        .map(|(t, _)| t.clone())
        .unwrap_or_else(Tag::initial)
}

pub(crate) fn view_of(triples: &BTreeMap<Tag, Triple>) -> BTreeMap<Tag, EntryView> {
    triples
        .iter()
        .map(|(t, tr)| {
            (
                t.clone(),
                EntryView {
                    label: Some(tr.label),
                    stored: tr.stored_cost(),
                },
            )
        })
        .collect()
}

/// One-shot forwarding of `(t, fin)` to every other server.
#[derive(Debug, Default, Clone)]
pub(crate) struct Gossiper {
    sent: BTreeSet<Tag>,
}

impl Gossiper {
    pub(crate) fn spread(
        &mut self,
        me: ServerId,
        n: usize,
        tag: &Tag,
        cause: &Message,
        out: &mut Vec<Outgoing>,
    ) {
        if !self.sent.insert(tag.clone()) {
            return;
        }
        out.extend(broadcast(
            (0..n).filter(|&s| s != me),
            &cause.op,
            cause.op_kind,
            MsgKind::Gossip,
            Some(tag.clone()),
            |_| Payload::None,
        ));
    }
}

#[derive(Debug)]
pub struct CasServer {
    id: ServerId,
    n: usize,
    triples: BTreeMap<Tag, Triple>,
    gossip: Gossiper,
}

impl CasServer {
    pub fn new(id: ServerId, n: usize, initial: CodedElement) -> Self {
        let mut triples = BTreeMap::new();
        triples.insert(
            Tag::initial(),
            Triple::new(Tag::initial(), Some(initial), Label::Fin),
        );
        Self {
            id,
            n,
            triples,
            gossip: Gossiper::default(),
        }
    }

    pub fn triples(&self) -> &BTreeMap<Tag, Triple> {
        &self.triples
    }

    fn finalize(&mut self, t: &Tag) {
        self.triples
            .entry(t.clone())
            .and_modify(|tr| tr.label = Label::Fin)
            .or_insert_with(|| Triple::new(t.clone(), None, Label::Fin));
    }
}

impl ServerLogic for CasServer {
    fn handle(&mut self, msg: &Message, out: &mut Vec<Outgoing>) {
        match msg.kind {
            MsgKind::Query => {
                let t = highest_finalized(&self.triples);
                out.push(Outgoing::reply(msg, MsgKind::QueryResp, Some(t), Payload::None));
            }
            MsgKind::PreWrite => {
                let Some(t) = msg.tag.clone() else { return };
                if let Payload::Coded(e) = &msg.payload {
                    self.triples
                        .entry(t.clone())
                        .or_insert_with(|| Triple::new(t.clone(), Some(e.clone()), Label::Pre));
                }
                out.push(Outgoing::reply(msg, MsgKind::PreWriteAck, Some(t), Payload::None));
            }
            MsgKind::FinalizeWrite => {
                let Some(t) = msg.tag.clone() else { return };
                self.finalize(&t);
                out.push(Outgoing::reply(msg, MsgKind::FinalizeWriteAck, Some(t.clone()), Payload::None));
                self.gossip.spread(self.id, self.n, &t, msg, out);
            }
            MsgKind::FinalizeRead => {
                let Some(t) = msg.tag.clone() else { return };
                self.finalize(&t);
                let payload = match &self.triples[&t].element {
                    Some(e) => Payload::Coded(e.clone()),
                    None => Payload::None,
                };
                out.push(Outgoing::reply(msg, MsgKind::FinalizeReadResp, Some(t.clone()), payload));
                self.gossip.spread(self.id, self.n, &t, msg, out);
            }
            MsgKind::Gossip => {
                let Some(t) = msg.tag.clone() else { return };
                self.finalize(&t);
                self.gossip.spread(self.id, self.n, &t, msg, out);
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
    use crate::types::NodeId;

    fn op(c: &str, seq: u32) -> OperationId {
        OperationId {
            client: ClientId::new(c),
            seq,
        }
    }

    fn msg(from: NodeId, to: NodeId, kind: MsgKind, tag: Option<Tag>, payload: Payload) -> Message {
        Message {
            from,
            to,
            op: op("r", 1),
            op_kind: OpKind::Read,
            kind,
            tag,
            payload,
        }
    }

    fn server() -> CasServer {
        let codec = Codec::from_nk(5, 3).unwrap();
        CasServer::new(0, 5, codec.encode(&[0; 6]).remove(0))
    }

    fn element() -> CodedElement {
        CodedElement {
            index: 1,
            k: 3,
            data: vec![7, 7],
        }
    }

    #[test]
    fn reader_finalize_upgrades_pre_and_returns_element() {
        let mut s = server();
        let t = Tag::new(1, "w");
        let c = NodeId::Client(ClientId::new("w"));
        let mut out = Vec::new();
        s.handle(
            &msg(c.clone(), NodeId::Server(0), MsgKind::PreWrite, Some(t.clone()), Payload::Coded(element())),
            &mut out,
        );
        assert_eq!(s.triples[&t].label, Label::Pre);

        out.clear();
        let r = NodeId::Client(ClientId::new("r"));
        s.handle(&msg(r, NodeId::Server(0), MsgKind::FinalizeRead, Some(t.clone()), Payload::None), &mut out);
        assert_eq!(s.triples[&t].label, Label::Fin);
        assert_eq!(out[0].payload, Payload::Coded(element()));
        // reply plus gossip to the four other servers
        assert_eq!(out.len(), 5);
    }

    #[test]
    fn reader_finalize_for_unknown_tag_stores_null_fin() {
        let mut s = server();
        let t = Tag::new(3, "x");
        let mut out = Vec::new();
        let r = NodeId::Client(ClientId::new("r"));
        s.handle(&msg(r, NodeId::Server(0), MsgKind::FinalizeRead, Some(t.clone()), Payload::None), &mut out);
        assert_eq!(s.triples[&t], Triple::new(t.clone(), None, Label::Fin));
        assert_eq!(out[0].payload, Payload::None);
    }

    #[test]
    fn gossip_inserts_without_reply_and_forwards_once() {
        let mut s = server();
        let t = Tag::new(2, "q");
        let mut out = Vec::new();
        let g = msg(NodeId::Server(3), NodeId::Server(0), MsgKind::Gossip, Some(t.clone()), Payload::None);
        s.handle(&g, &mut out);
        assert_eq!(s.triples[&t].label, Label::Fin);
        assert!(s.triples[&t].element.is_none());
        assert!(out.iter().all(|o| o.kind == MsgKind::Gossip));
        assert_eq!(out.len(), 4);
        out.clear();
        s.handle(&g, &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn query_reports_highest_fin_only() {
        let mut s = server();
        let mut out = Vec::new();
        let w = NodeId::Client(ClientId::new("w"));
        s.handle(
            &msg(w.clone(), NodeId::Server(0), MsgKind::PreWrite, Some(Tag::new(5, "w")), Payload::Coded(element())),
            &mut out,
        );
        out.clear();
        s.handle(&msg(w, NodeId::Server(0), MsgKind::Query, None, Payload::None), &mut out);
        assert_eq!(out[0].tag, Some(Tag::initial()));
    }

    #[test]
    fn writer_picks_tag_above_max_query_response() {
        let codec = Arc::new(Codec::from_nk(5, 3).unwrap());
        let mut c = CodedClient::new(ClientId::new("me"), 5, 4, codec, 6, ReadRule::QuorumWithK);
        let mut fx = ClientEffects::default();
        let id = OperationId {
            client: ClientId::new("me"),
            seq: 0,
        };
        c.invoke(id.clone(), OpKind::Write, Some(Value(vec![1; 6])), &mut fx);
        assert_eq!(fx.sends.len(), 5);
        let tags = [Tag::initial(), Tag::new(2, "b"), Tag::new(1, "a"), Tag::initial()];
        let mut fx = ClientEffects::default();
        for (s, t) in tags.into_iter().enumerate() {
            let m = Message {
                from: NodeId::Server(s),
                to: NodeId::Client(ClientId::new("me")),
                op: id.clone(),
                op_kind: OpKind::Write,
                kind: MsgKind::QueryResp,
                tag: Some(t),
                payload: Payload::None,
            };
            c.handle(&m, &mut fx);
        }
        assert_eq!(fx.phases, vec![(Phase::PreWrite, Some(Tag::new(3, "me")))]);
        let indices: Vec<usize> = fx
            .sends
            .iter()
            .map(|o| match &o.payload {
                Payload::Coded(e) => e.index,
                _ => 0,
            })
            .collect();
        assert_eq!(indices, vec![1, 2, 3, 4, 5]);
    }
}
