//! Prioritized Top-k subject/object pair proposal.

use std::collections::BTreeSet;

use super::assoc::Track;
use super::DynamicConfig;
use crate::static_graph::is_in_class_set;

/// Subject/object track pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackPair {
    pub subject: u32,
    pub object: u32,
}

impl TrackPair {
    pub fn reversed(self) -> TrackPair {
        TrackPair { subject: self.object, object: self.subject }
    }
}

/// Outcome of a proposal round, with pool bookkeeping for inspection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposal {
    pub pairs: Vec<TrackPair>,
    pub prioritized_available: usize,
    pub others_available: usize,
    /// Pairs taken from the prioritized pool, including backfill.
    pub prioritized_taken: usize,
}

/// Prioritized share of a Top-k budget: `ceil(priority_fraction * top_k)`.
pub fn priority_quota(top_k: usize, priority_fraction: f64) -> usize {
    // 0.7 * 10 must give 7, not 8.
    let q = (priority_fraction * top_k as f64 - 1e-9).ceil();
    (q.max(0.0) as usize).min(top_k)
}

/// How many pairs to take from (prioritized, others) given pool sizes.
pub fn split_budget(prioritized: usize, others: usize, top_k: usize, priority_fraction: f64) -> (usize, usize) {
    let q = priority_quota(top_k, priority_fraction);
    let mut take_p = q.min(prioritized);
    let take_o = (top_k - take_p).min(others);
    take_p += (top_k - take_p - take_o).min(prioritized - take_p);
    (take_p, take_o)
}

/// Number of timestamps at which both tracks have an entry.
pub fn co_visibility(a: &Track, b: &Track) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.entries.len() && j < b.entries.len() {
        let (ta, tb) = (a.entries[i].time, b.entries[j].time);
        if ta == tb {
            n += 1;
            i += 1;
            j += 1;
        } else if ta < tb {
            i += 1;
        } else {
            j += 1;
        }
    }
    n
}

pub fn is_priority(humans: &BTreeSet<String>, furniture: &BTreeSet<String>, subject: &str, object: &str) -> bool {
    is_in_class_set(humans, subject) || is_in_class_set(furniture, object)
}

pub fn propose_pairs(tracks: &[Track], cfg: &DynamicConfig) -> Vec<TrackPair> {
    propose_pairs_detailed(tracks, cfg).pairs
}

/// Proposes at most `top_k` track pairs for relation scoring.
///
/// Every unordered pair of tracks is considered once, oriented so that a
/// human lands in the subject slot or furniture in the object slot when
/// exactly one orientation allows it (otherwise the lower track id is the
/// subject). A pair is prioritized when its orientation is. Both pools are
/// ranked by co-visibility, ties by (subject, object) ascending; the
/// prioritized pool fills `ceil(priority_fraction * top_k)` slots, the other
/// pool the rest, and either pool backfills a shortfall in the other.
/// Prioritized picks come first in the output.
pub fn propose_pairs_detailed(tracks: &[Track], cfg: &DynamicConfig) -> Proposal {
    let (humans, furniture) = (&cfg.human_labels, &cfg.furniture_labels);
    let mut prioritized = Vec::new();
    let mut others = Vec::new();
    for (i, a) in tracks.iter().enumerate() {
        for b in &tracks[i + 1..] {
            let (lo, hi) = if a.track_id < b.track_id { (a, b) } else { (b, a) };
            let fwd = is_priority(humans, furniture, &lo.class_label, &hi.class_label);
            let rev = is_priority(humans, furniture, &hi.class_label, &lo.class_label);
            let pair = if rev && !fwd {
                TrackPair { subject: hi.track_id, object: lo.track_id }
            } else {
                TrackPair { subject: lo.track_id, object: hi.track_id }
            };
            let entry = (co_visibility(a, b), pair);
            if fwd || rev {
                prioritized.push(entry);
            } else {
                others.push(entry);
            }
        }
    }
    let rank = |v: &mut Vec<(usize, TrackPair)>| v.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    rank(&mut prioritized);
    rank(&mut others);

    let (take_p, take_o) = split_budget(prioritized.len(), others.len(), cfg.top_k, cfg.priority_fraction);
    let pairs = prioritized.iter().take(take_p).chain(others.iter().take(take_o)).map(|(_, p)| *p).collect();
    Proposal {
        pairs,
        prioritized_available: prioritized.len(),
        others_available: others.len(),
        prioritized_taken: take_p,
    }
}
