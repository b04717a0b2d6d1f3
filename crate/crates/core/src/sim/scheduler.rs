//! Picks the next action among the enabled ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::Mode;
use crate::types::NodeId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Invoke the operation with this index.
    Invoke(usize),
    /// Deliver the in-flight message with this id.
    Deliver { msg: u64, to: NodeId },
}

#[derive(Debug)]
pub struct Scheduler {
    mode: Mode,
    rng: ChaCha8Rng,
    last_recipient: Option<NodeId>,
}

impl Scheduler {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_recipient: None,
        }
    }

    /// `enabled` lists invocations in op order, then deliveries by message id.
    pub fn pick(&mut self, enabled: &[Action]) -> usize {
        debug_assert!(!enabled.is_empty());
        match self.mode {
            Mode::SeededRandom => self.rng.gen_range(0..enabled.len()),
            Mode::Scripted => 0,
            Mode::FairRoundRobin => {
                if matches!(enabled[0], Action::Invoke(_)) {
                    return 0;
                }
                // smallest recipient after the last one served, wrapping around;
                // for that recipient, its oldest message
                let after = |to: &NodeId| self.last_recipient.as_ref().is_none_or(|l| to > l);
                let best = |pred: &dyn Fn(&NodeId) -> bool| {
                    enabled
                        .iter()
                        .enumerate()
                        .filter_map(|(i, a)| match a {
                            Action::Deliver { to, .. } if pred(to) => Some((to, i)),
                            _ => None,
                        })
                        .min()
                        .map(|(_, i)| i)
                };
                let i = best(&after).or_else(|| best(&|_| true)).expect("non-empty");
                if let Action::Deliver { to, .. } = &enabled[i] {
                    self.last_recipient = Some(to.clone());
                }
                i
            }
        }
    }
}
