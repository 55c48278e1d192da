//! Relation assembly and temporal span consolidation.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;

use super::assoc::Track;
use super::pairs::TrackPair;
use super::DynamicConfig;
use crate::error::{Error, Result};
use crate::model::{RelationCandidate, RelationEdge, Span};

/// Sorts spans and merges neighbours whose gap is below `merge_gap_s`.
/// Overlapping spans always merge. Output is sorted, disjoint, and every
/// remaining gap is at least `merge_gap_s`.
pub fn consolidate_spans(spans: &[Span], merge_gap_s: f64) -> Result<Vec<Span>> {
    for s in spans {
        if !(s.start < s.end) {
            return Err(Error::MalformedSpan { start: s.start, end: s.end });
        }
    }
    let mut sorted = spans.to_vec();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let mut out: Vec<Span> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match out.last_mut() {
            Some(last) if s.start - last.end < merge_gap_s => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    Ok(out)
}

/// Result of relation assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub edges: Vec<RelationEdge>,
    /// Candidates whose detection indices did not resolve to a track.
    pub unknown_refs: usize,
}

/// Builds relation edges for proposed pairs from the candidate stream.
///
/// Candidate endpoints index detections in the frame at the candidate's time;
/// they are lifted to tracks through the association. A proposed pair admits
/// predicates in either direction. Hits at or above the
/// confidence gate that fall on consecutive frames (at most one frame period
/// apart) form raw spans; an isolated hit spans one frame period. Raw spans
/// are then consolidated.
pub fn assemble_relations(
    pairs: &[TrackPair],
    candidates: &[RelationCandidate],
    tracks: &[Track],
    window: (f64, f64),
    cfg: &DynamicConfig,
) -> Result<Assembled> {
    let mut lookup: BTreeMap<(u64, usize), u32> = BTreeMap::new();
    for t in tracks {
        for e in &t.entries {
            lookup.insert((e.time.to_bits(), e.detection), t.track_id);
        }
    }
    let wanted: BTreeSet<TrackPair> = pairs.iter().copied().collect();
    let period = 1.0 / cfg.frame_hz;
    let eps = 1e-6;

    // (pair, predicate) -> hit times and confidences
    let mut hits: BTreeMap<(TrackPair, String), Vec<(f64, f64)>> = BTreeMap::new();
    let mut unknown = 0;
    for c in candidates {
        if c.time < window.0 || c.time >= window.1 {
            continue;
        }
        if !(0.0..=1.0).contains(&c.confidence) {
            return Err(Error::invalid(format!("relation confidence {} outside [0,1]", c.confidence)));
        }
        let s = lookup.get(&(c.time.to_bits(), c.subject_track as usize));
        let o = lookup.get(&(c.time.to_bits(), c.object_track as usize));
        let (Some(&s), Some(&o)) = (s, o) else {
            unknown += 1;
            continue;
        };
        if c.confidence < cfg.relation_confidence_min {
            continue;
        }
        let pair = TrackPair { subject: s, object: o };
        if !wanted.contains(&pair) && !wanted.contains(&pair.reversed()) {
            continue;
        }
        hits.entry((pair, c.predicate.clone())).or_default().push((c.time, c.confidence));
    }
    if unknown > 0 {
        warn!("{unknown} relation candidate(s) reference unknown detections; skipped");
    }

    let class_of: BTreeMap<u32, &str> = tracks.iter().map(|t| (t.track_id, t.class_label.as_str())).collect();
    let mut edges = Vec::new();
    for ((pair, predicate), mut h) in hits {
        h.sort_by(|a, b| a.0.total_cmp(&b.0));
        h.dedup_by(|a, b| a.0 == b.0);
        let mut raw = Vec::new();
        let mut run_start = h[0].0;
        let mut run_end = h[0].0;
        for &(t, _) in &h[1..] {
            if t - run_end <= period + eps {
                run_end = t;
            } else {
                raw.push(run_span(run_start, run_end, period));
                run_start = t;
                run_end = t;
            }
        }
        raw.push(run_span(run_start, run_end, period));
        let spans = consolidate_spans(&raw, cfg.merge_gap_s)?;
        let score = h.iter().map(|(_, c)| c).sum::<f64>() / h.len() as f64;
        edges.push(RelationEdge {
            subject_id: pair.subject,
            subject_class: class_of[&pair.subject].to_string(),
            object_id: pair.object,
            object_class: class_of[&pair.object].to_string(),
            predicate,
            spans,
            score,
        });
    }
    Ok(Assembled { edges, unknown_refs: unknown })
}

fn run_span(start: f64, end: f64, period: f64) -> Span {
    if end > start {
        Span::new(start, end)
    } else {
        Span::new(start, start + period)
    }
}
