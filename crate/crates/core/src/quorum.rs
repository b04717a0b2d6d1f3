//! Size-based quorum systems and exhaustive checks of their two properties:
//! any two quorums share at least `k` servers, and at most `f` crashes
//! always leave a live quorum.

use std::collections::BTreeSet;

use crate::types::ServerId;

/// Exhaustive checks enumerate subsets as bitmasks.
pub const MAX_EXHAUSTIVE_N: usize = 20;

pub trait QuorumSet {
    fn universe(&self) -> usize;
    fn is_quorum(&self, members: &BTreeSet<ServerId>) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuorumSystem {
    pub n: usize,
    pub f: usize,
    pub k: usize,
    pub threshold: usize,
}

impl QuorumSystem {
    /// All subsets with at least `ceil((n + k) / 2)` servers.
    pub fn cas(n: usize, f: usize, k: usize) -> Self {
        Self {
            n,
            f,
            k,
            threshold: (n + k).div_ceil(2),
        }
    }

    /// All subsets with at least `n - f` servers; paired with an `(n, n - f)` code.
    pub fn ccoas(n: usize, f: usize) -> Self {
        Self {
            n,
            f,
            k: n - f,
            threshold: n - f,
        }
    }

    pub fn majority(n: usize, f: usize) -> Self {
        Self {
            n,
            f,
            k: 1,
            threshold: n / 2 + 1,
        }
    }

    pub fn with_threshold(n: usize, f: usize, k: usize, threshold: usize) -> Self {
        Self { n, f, k, threshold }
    }

    pub fn is_quorum_size(&self, count: usize) -> bool {
        count >= self.threshold
    }

    /// `1 <= k <= n - 2f`, the condition under which the CAS family's
    /// quorums intersect in `k` servers and survive `f` crashes.
    pub fn meets_coding_bound(&self) -> bool {
        self.k >= 1 && self.k + 2 * self.f <= self.n
    }

    fn minimal_quorums(&self) -> Vec<u32> {
        assert!(self.n <= MAX_EXHAUSTIVE_N, "exhaustive check limited to n <= {MAX_EXHAUSTIVE_N}");
        if self.threshold > self.n {
            return Vec::new();
        }
        (0u32..(1 << self.n))
            .filter(|m| m.count_ones() as usize == self.threshold)
            .collect()
    }

    /// A pair of quorums sharing fewer than `k` servers, if one exists.
    pub fn intersection_witness(&self) -> Option<(BTreeSet<ServerId>, BTreeSet<ServerId>)> {
        let qs = self.minimal_quorums();
        for (i, &a) in qs.iter().enumerate() {
            for &b in &qs[i..] {
                if ((a & b).count_ones() as usize) < self.k {
                    return Some((mask_to_set(a), mask_to_set(b)));
                }
            }
        }
        None
    }

    /// Every pair of quorums intersects in at least `k` servers. Supersets
    /// of minimal quorums only grow intersections, so minimal ones suffice.
    pub fn verify_intersection(&self) -> bool {
        self.intersection_witness().is_none()
    }

    /// For every failure set of at most `f` servers some quorum avoids it.
    pub fn verify_availability(&self) -> bool {
        let qs = self.minimal_quorums();
        (0u32..(1 << self.n))
            .filter(|b| b.count_ones() as usize <= self.f)
            .all(|b| qs.iter().any(|q| q & b == 0))
    }

    /// Closed form of [`Self::verify_availability`].
    pub fn availability_by_arithmetic(&self) -> bool {
        self.n >= self.f && self.n - self.f >= self.threshold
    }
}

impl QuorumSet for QuorumSystem {
    fn universe(&self) -> usize {
        self.n
    }

    fn is_quorum(&self, members: &BTreeSet<ServerId>) -> bool {
        members.iter().filter(|&&s| s < self.n).count() >= self.threshold
    }
}

fn mask_to_set(mask: u32) -> BTreeSet<ServerId> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}
