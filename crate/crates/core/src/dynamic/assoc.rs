//! Greedy frame-to-frame instance association.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DynamicConfig;
use crate::error::{Error, Result};
use crate::model::{Box3, Feature, FrameObservation, Pose, Rect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub time: f64,
    pub rect: Rect,
    pub feature: Feature,
    pub label: String,
    /// Index of the detection inside its frame.
    pub detection: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box3: Option<Box3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u32,
    pub entries: Vec<TrackEntry>,
    pub class_label: String,
}

impl Track {
    pub fn first_seen(&self) -> f64 {
        self.entries.first().map_or(0.0, |e| e.time)
    }

    pub fn last_seen(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.time)
    }

    pub fn last(&self) -> &TrackEntry {
        self.entries.last().expect("tracks are never empty")
    }

    /// Majority label; ties go to the label seen first.
    fn vote_label(entries: &[TrackEntry]) -> String {
        let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            let c = counts.entry(e.label.as_str()).or_insert((0, i));
            c.0 += 1;
        }
        counts
            .into_iter()
            .max_by(|(_, (na, fa)), (_, (nb, fb))| na.cmp(nb).then(fb.cmp(fa)))
            .map(|(l, _)| l.to_string())
            .unwrap_or_default()
    }
}

/// Links detections across time-sorted frames of one camera.
///
/// Each frame is matched against the last entry of every existing track.
/// A pair qualifies when rect IoU and feature cosine both clear their floors;
/// qualifying pairs are taken greedily by descending mean score (ties by
/// track id, then detection index). Leftover detections open new tracks, so
/// ids follow first-seen order.
pub fn associate_frames(frames: &[FrameObservation], cfg: &DynamicConfig) -> Result<Vec<Track>> {
    let mut tracks: Vec<Track> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut prev_time = f64::NEG_INFINITY;
    for frame in frames {
        if frame.time <= prev_time {
            return Err(Error::invalid(format!(
                "frames must be strictly time-sorted (t={} after t={prev_time})",
                frame.time
            )));
        }
        prev_time = frame.time;
        for d in &frame.detections {
            match dim {
                None => dim = Some(d.feature.dim()),
                Some(n) if n != d.feature.dim() => {
                    return Err(Error::FeatureDimension { expected: n, got: d.feature.dim() })
                }
                _ => {}
            }
        }

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in tracks.iter().enumerate() {
            let last = t.last();
            for (di, d) in frame.detections.iter().enumerate() {
                let iou = last.rect.iou(&d.rect);
                let cos = last.feature.cosine(&d.feature);
                if iou >= cfg.assoc_iou_min && cos >= cfg.assoc_feat_min {
                    pairs.push(((iou + cos) / 2.0, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut det_taken = vec![false; frame.detections.len()];
        let mut track_taken = vec![false; tracks.len()];
        let mut assigned: Vec<(usize, usize)> = Vec::new();
        for (_, ti, di) in pairs {
            if !track_taken[ti] && !det_taken[di] {
                track_taken[ti] = true;
                det_taken[di] = true;
                assigned.push((ti, di));
            }
        }
        let entry = |di: usize| {
            let d = &frame.detections[di];
            TrackEntry {
                time: frame.time,
                rect: d.rect,
                feature: d.feature.clone(),
                label: d.label.clone(),
                detection: di,
                box3: d.box3,
                depth_m: d.depth_m,
                pose: frame.pose,
            }
        };
        for (ti, di) in assigned {
            tracks[ti].entries.push(entry(di));
        }
        for di in (0..frame.detections.len()).filter(|&di| !det_taken[di]) {
            tracks.push(Track { track_id: tracks.len() as u32, entries: vec![entry(di)], class_label: String::new() });
        }
    }
    for t in &mut tracks {
        t.class_label = Track::vote_label(&t.entries);
    }
    Ok(tracks)
}
