//! CAS servers with garbage collection of coded elements older than the
//! `delta + 1` highest finalized tags. Clients are the CAS clients.

use std::collections::BTreeMap;

use super::cas::{highest_finalized, view_of, Gossiper};
use super::{EntryView, Outgoing, ServerLogic};
use crate::codec::CodedElement;
use crate::types::{Label, Message, MsgKind, Payload, ServerId, Tag, Triple};

pub use crate::analysis::profile::end_point_of;

/// Nulls out and gc-marks every triple whose tag is below the `(delta+1)`-th
/// highest tag labeled `fin` or `(fin, gc)`.
pub fn garbage_collect(triples: &mut BTreeMap<Tag, Triple>, delta: usize) {
    let fins: Vec<&Tag> = triples
        .iter()
        .rev()
        .filter(|(_, tr)| tr.label.is_finalized())
        .map(|(t, _)| t)
        .take(delta + 2)
        .collect();
    if fins.len() <= delta + 1 {
        return;
    }
    let keep_from = fins[delta].clone();
    for (_, tr) in triples.range_mut(..keep_from) {
        tr.element = None;
        tr.label = tr.label.collected();
    }
}

#[derive(Debug)]
pub struct CasgcServer {
    id: ServerId,
    n: usize,
    delta: usize,
    triples: BTreeMap<Tag, Triple>,
    gossip: Gossiper,
}

impl CasgcServer {
    pub fn new(id: ServerId, n: usize, delta: usize, initial: CodedElement) -> Self {
        let mut triples = BTreeMap::new();
        triples.insert(
            Tag::initial(),
            Triple::new(Tag::initial(), Some(initial), Label::Fin),
        );
        Self {
            id,
            n,
            delta,
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
            .and_modify(|tr| tr.label = tr.label.finalized())
            .or_insert_with(|| Triple::new(t.clone(), None, Label::Fin));
    }

    fn gc(&mut self) {
        garbage_collect(&mut self.triples, self.delta);
    }
}

impl ServerLogic for CasgcServer {
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
                self.gc();
                out.push(Outgoing::reply(msg, MsgKind::PreWriteAck, Some(t), Payload::None));
            }
            MsgKind::FinalizeWrite => {
                let Some(t) = msg.tag.clone() else { return };
                self.finalize(&t);
                self.gc();
                // acked even when already finalized, or a writer whose tag
                // arrived first by gossip could wait forever
                out.push(Outgoing::reply(msg, MsgKind::FinalizeWriteAck, Some(t.clone()), Payload::None));
                self.gossip.spread(self.id, self.n, &t, msg, out);
            }
            MsgKind::FinalizeRead => {
                let Some(t) = msg.tag.clone() else { return };
                let reply = match self.triples.get_mut(&t) {
                    Some(tr) if tr.label.is_gc() => {
                        tr.label = Label::FinGc;
                        None
                    }
                    Some(tr) => {
                        tr.label = Label::Fin;
                        Some(tr.element.clone().map_or(Payload::None, Payload::Coded))
                    }
                    None => {
                        self.triples
                            .insert(t.clone(), Triple::new(t.clone(), None, Label::Fin));
                        Some(Payload::None)
                    }
                };
                self.gc();
                if let Some(payload) = reply {
                    out.push(Outgoing::reply(msg, MsgKind::FinalizeReadResp, Some(t.clone()), payload));
                }
                self.gossip.spread(self.id, self.n, &t, msg, out);
            }
            MsgKind::Gossip => {
                let Some(t) = msg.tag.clone() else { return };
                self.finalize(&t);
                self.gc();
                self.gossip.spread(self.id, self.n, &t, msg, out);
            }
            _ => {}
        }
    }

    fn view(&self) -> BTreeMap<Tag, EntryView> {
        view_of(&self.triples)
    }
}
