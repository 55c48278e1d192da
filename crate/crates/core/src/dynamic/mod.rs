//! Windowed dynamic relation subgraphs from one camera's perception stream.
//!
//! A window of frames goes through instance association, prioritized pair
//! proposal and relation assembly; the result is one [`DynamicSubgraph`].

pub mod assoc;
pub mod pairs;
pub mod relations;

use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

pub use assoc::{associate_frames, Track, TrackEntry};
pub use pairs::{propose_pairs, propose_pairs_detailed, split_budget, Proposal, TrackPair};
pub use relations::{assemble_relations, consolidate_spans, Assembled};

use crate::error::{Error, Result};
use crate::model::{Box3, DynamicSubgraph, FrameObservation, InstanceVertex, RelationCandidate};

/// Pinhole intrinsics used to back-project detections that carry depth but
/// no 3D box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Intrinsics { fx: 525.0, fy: 525.0, cx: 319.5, cy: 239.5 }
    }
}

fn labels(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicConfig {
    pub window_s: f64,
    pub frame_hz: f64,
    pub top_k: usize,
    pub priority_fraction: f64,
    pub merge_gap_s: f64,
    pub assoc_iou_min: f64,
    pub assoc_feat_min: f64,
    /// Relation hits below this confidence are ignored.
    pub relation_confidence_min: f64,
    pub human_labels: BTreeSet<String>,
    pub furniture_labels: BTreeSet<String>,
    pub intrinsics: Intrinsics,
    /// Edge length of the cube placed around a back-projected point.
    pub default_extent_m: f64,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        DynamicConfig {
            window_s: 10.0,
            frame_hz: 5.0,
            top_k: 20,
            priority_fraction: 0.7,
            merge_gap_s: 2.0,
            assoc_iou_min: 0.3,
            assoc_feat_min: 0.5,
            relation_confidence_min: 0.5,
            human_labels: labels(&["person", "human", "adult", "man", "woman", "child"]),
            furniture_labels: labels(&[
                "couch", "sofa", "table", "counter", "desk", "chair", "bed", "shelf", "fridge", "tv",
            ]),
            intrinsics: Intrinsics::default(),
            default_extent_m: 0.3,
        }
    }
}

impl DynamicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0) {
            return Err(Error::invalid("window_s must be positive"));
        }
        if !(self.frame_hz > 0.0) {
            return Err(Error::invalid("frame_hz must be positive"));
        }
        if !(0.0..=1.0).contains(&self.priority_fraction) {
            return Err(Error::invalid("priority_fraction must lie in [0, 1]"));
        }
        if !(self.merge_gap_s >= 0.0) {
            return Err(Error::invalid("merge_gap_s must be non-negative"));
        }
        for (name, v) in [
            ("assoc_iou_min", self.assoc_iou_min),
            ("assoc_feat_min", self.assoc_feat_min),
            ("relation_confidence_min", self.relation_confidence_min),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// One line of a perception stream file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamRecord {
    Frame(FrameObservation),
    Relation(RelationCandidate),
}

/// A single camera's frames and relation candidates, both time-sorted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CameraStream {
    pub camera_id: String,
    pub frames: Vec<FrameObservation>,
    pub candidates: Vec<RelationCandidate>,
}

impl CameraStream {
    /// Ingests records in file order. Frame times must strictly increase;
    /// every frame must name the same camera.
    pub fn from_records(records: Vec<StreamRecord>) -> Result<Self> {
        let mut s = CameraStream::default();
        for r in records {
            match r {
                StreamRecord::Frame(f) => s.push_frame(f)?,
                StreamRecord::Relation(c) => s.candidates.push(c),
            }
        }
        s.candidates.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(s)
    }

    pub fn push_frame(&mut self, f: FrameObservation) -> Result<()> {
        f.validate()?;
        if self.frames.is_empty() && self.camera_id.is_empty() {
            self.camera_id = f.camera_id.clone();
        } else if f.camera_id != self.camera_id {
            return Err(Error::invalid(format!("stream mixes cameras `{}` and `{}`", self.camera_id, f.camera_id)));
        }
        if let Some(last) = self.frames.last() {
            if f.time <= last.time {
                return Err(Error::invalid(format!(
                    "camera `{}`: frame time {} does not increase past {}",
                    f.camera_id, f.time, last.time
                )));
            }
        }
        self.frames.push(f);
        Ok(())
    }

    pub fn read(reader: impl BufRead, source_name: &str) -> Result<Self> {
        let records = crate::static_graph::read_jsonl(reader, source_name)?;
        Self::from_records(records)
    }

    /// Records in canonical order: each frame followed by its candidates.
    pub fn to_records(&self) -> Vec<StreamRecord> {
        let mut out = Vec::with_capacity(self.frames.len() + self.candidates.len());
        let mut ci = 0;
        for f in &self.frames {
            while ci < self.candidates.len() && self.candidates[ci].time < f.time {
                out.push(StreamRecord::Relation(self.candidates[ci].clone()));
                ci += 1;
            }
            out.push(StreamRecord::Frame(f.clone()));
            while ci < self.candidates.len() && self.candidates[ci].time == f.time {
                out.push(StreamRecord::Relation(self.candidates[ci].clone()));
                ci += 1;
            }
        }
        out.extend(self.candidates[ci..].iter().cloned().map(StreamRecord::Relation));
        out
    }

    pub fn last_time(&self) -> f64 {
        let f = self.frames.last().map_or(0.0, |f| f.time);
        let c = self.candidates.last().map_or(0.0, |c| c.time);
        f.max(c)
    }

    /// Frames and candidates with `start <= t < end`.
    pub fn window(&self, start: f64, end: f64) -> (&[FrameObservation], &[RelationCandidate]) {
        let f0 = self.frames.partition_point(|f| f.time < start);
        let f1 = self.frames.partition_point(|f| f.time < end);
        let c0 = self.candidates.partition_point(|c| c.time < start);
        let c1 = self.candidates.partition_point(|c| c.time < end);
        (&self.frames[f0..f1], &self.candidates[c0..c1])
    }

    /// Subgraph for the window ending at `tick * window_s`.
    pub fn subgraph_at_tick(&self, tick: u64, cfg: &DynamicConfig) -> Result<DynamicSubgraph> {
        let end = tick as f64 * cfg.window_s;
        let start = end - cfg.window_s;
        let (frames, cands) = self.window(start, end);
        build_subgraph(frames, cands, &self.camera_id, (start, end), cfg)
    }
}

/// 3D box for a track: the latest explicit box if the detector supplied one,
/// else a cube of `default_extent_m` around the back-projected rect center of
/// the latest posed entry, at the median depth over the track.
pub fn instance_box(track: &Track, cfg: &DynamicConfig) -> Option<Box3> {
    if let Some(b) = track.entries.iter().rev().find_map(|e| e.box3) {
        return Some(b);
    }
    let mut depths: Vec<f64> = track.entries.iter().filter_map(|e| e.depth_m).collect();
    if depths.is_empty() {
        return None;
    }
    depths.sort_by(f64::total_cmp);
    let n = depths.len();
    let depth = if n % 2 == 1 { depths[n / 2] } else { 0.5 * (depths[n / 2 - 1] + depths[n / 2]) };
    let entry = track.entries.iter().rev().find(|e| e.pose.is_some())?;
    let pose = entry.pose?;
    let [u, v] = entry.rect.center();
    let k = &cfg.intrinsics;
    let ray = [(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0];
    let p = pose.transform_point([ray[0] * depth, ray[1] * depth, depth]);
    let e = cfg.default_extent_m;
    Some(Box3::centered(p, [e, e, e]))
}

/// Builds the dynamic subgraph of one camera window `[start, end)`.
/// Inputs outside the window are ignored.
pub fn build_subgraph(
    frames: &[FrameObservation],
    candidates: &[RelationCandidate],
    camera_id: &str,
    window: (f64, f64),
    cfg: &DynamicConfig,
) -> Result<DynamicSubgraph> {
    let (start, end) = window;
    let in_window: Vec<FrameObservation> = frames.iter().filter(|f| f.time >= start && f.time < end).cloned().collect();
    let tracks = associate_frames(&in_window, cfg)?;
    let pairs = propose_pairs(&tracks, cfg);
    let assembled = assemble_relations(&pairs, candidates, &tracks, window, cfg)?;
    let vertices = tracks
        .iter()
        .map(|t| {
            let last = t.last();
            InstanceVertex {
                track_id: t.track_id,
                class_label: t.class_label.clone(),
                feature: last.feature.clone(),
                last_footprint: last.rect,
                box3: instance_box(t, cfg),
                first_seen: t.first_seen(),
                last_seen: t.last_seen(),
            }
        })
        .collect();
    let sub = DynamicSubgraph {
        window_start: start,
        window_end: end,
        camera_id: camera_id.to_string(),
        vertices,
        edges: assembled.edges,
    };
    sub.validate()?;
    Ok(sub)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Detection, Feature, Pose, Rect, Span};
    use approx::assert_relative_eq;

    fn det(label: &str, x: f64, f: [f64; 3]) -> Detection {
        Detection {
            label: label.into(),
            score: 0.9,
            feature: Feature(f.to_vec()),
            rect: Rect { x_min: x, y_min: 0.0, x_max: x + 20.0, y_max: 40.0 },
            depth_m: None,
            box3: None,
        }
    }

    fn hit(t: f64, s: u32, o: u32, p: &str) -> RelationCandidate {
        RelationCandidate { time: t, subject_track: s, object_track: o, predicate: p.into(), confidence: 0.9 }
    }

    /// Person, cup, counter always visible at 5 Hz; the relation head reports
    /// person-placing-cup from 3.0 to 5.0 s. Trace: three stationary tracks
    /// 0 person, 1 cup, 2 counter; pairs (0,1),(0,2),(1,2) all proposed; the
    /// hits form one run 3.0..5.0.
    fn place_scenario() -> (Vec<FrameObservation>, Vec<RelationCandidate>) {
        let mut frames = Vec::new();
        let mut cands = Vec::new();
        for k in 0..50 {
            let t = k as f64 / 5.0;
            frames.push(FrameObservation {
                camera_id: "cam".into(),
                time: t,
                pose: None,
                detections: vec![
                    det("person", 0.0, [1.0, 0.0, 0.0]),
                    det("cup", 100.0, [0.0, 1.0, 0.0]),
                    det("counter", 200.0, [0.0, 0.0, 1.0]),
                ],
            });
            if (15..=25).contains(&k) {
                cands.push(hit(t, 0, 1, "placing"));
            }
        }
        (frames, cands)
    }

    #[test]
    fn place_cup_on_counter() {
        let (frames, cands) = place_scenario();
        let sub = build_subgraph(&frames, &cands, "cam", (0.0, 10.0), &DynamicConfig::default()).unwrap();
        let labels: Vec<&str> = sub.vertices.iter().map(|v| v.class_label.as_str()).collect();
        assert_eq!(labels, vec!["person", "cup", "counter"]);
        assert_eq!(sub.edges.len(), 1);
        let e = &sub.edges[0];
        assert_eq!(
            (e.subject_class.as_str(), e.predicate.as_str(), e.object_class.as_str()),
            ("person", "placing", "cup")
        );
        assert_eq!(e.spans.len(), 1);
        assert_relative_eq!(e.spans[0].start, 3.0);
        assert_relative_eq!(e.spans[0].end, 5.0);
        assert_eq!(sub.window_end - sub.window_start, 10.0);
    }

    #[test]
    fn empty_window_gives_empty_subgraph() {
        let sub = build_subgraph(&[], &[], "cam", (0.0, 10.0), &DynamicConfig::default()).unwrap();
        assert!(sub.vertices.is_empty() && sub.edges.is_empty());
    }

    #[test]
    fn replay_is_deterministic_and_ignores_later_data() {
        let (frames, cands) = place_scenario();
        let cfg = DynamicConfig::default();
        let a = build_subgraph(&frames[..40], &cands, "cam", (0.0, 8.0), &cfg).unwrap();
        let b = build_subgraph(&frames, &cands, "cam", (0.0, 8.0), &cfg).unwrap();
        assert_eq!(a, b);
        let c = build_subgraph(&frames, &cands, "cam", (0.0, 8.0), &cfg).unwrap();
        assert_eq!(serde_json::to_string(&b).unwrap(), serde_json::to_string(&c).unwrap());
    }

    fn frames_with_hits(hit_times: &[f64]) -> (Vec<FrameObservation>, Vec<RelationCandidate>) {
        let mut frames = Vec::new();
        for k in 0..=50 {
            frames.push(FrameObservation {
                camera_id: "cam".into(),
                time: k as f64 / 5.0,
                pose: None,
                detections: vec![det("person", 0.0, [1.0, 0.0, 0.0]), det("couch", 100.0, [0.0, 1.0, 0.0])],
            });
        }
        let cands = hit_times.iter().map(|&t| hit(t, 0, 1, "sitting on")).collect();
        (frames, cands)
    }

    fn spans_for(hit_times: &[f64]) -> Vec<Span> {
        let (frames, cands) = frames_with_hits(hit_times);
        let sub = build_subgraph(&frames, &cands, "cam", (0.0, 10.5), &DynamicConfig::default()).unwrap();
        sub.edges[0].spans.clone()
    }

    fn every_frame(a: f64, b: f64) -> Vec<f64> {
        let (ka, kb) = ((a * 5.0).round() as i64, (b * 5.0).round() as i64);
        (ka..=kb).map(|k| k as f64 / 5.0).collect()
    }

    #[test]
    fn assemble_examples() {
        assert_eq!(spans_for(&every_frame(0.0, 5.0)), vec![Span::new(0.0, 5.0)]);
        let mut h = every_frame(0.0, 5.0);
        h.extend(every_frame(6.0, 10.0));
        assert_eq!(spans_for(&h), vec![Span::new(0.0, 10.0)]);
        let mut h = every_frame(0.0, 2.0);
        h.extend(every_frame(7.0, 9.0));
        assert_eq!(spans_for(&h), vec![Span::new(0.0, 2.0), Span::new(7.0, 9.0)]);
    }

    #[test]
    fn low_confidence_and_unknown_refs_skipped() {
        let (frames, mut cands) = frames_with_hits(&every_frame(0.0, 1.0));
        cands.push(RelationCandidate { confidence: 0.2, ..hit(5.0, 0, 1, "sitting on") });
        cands.push(hit(6.0, 0, 9, "sitting on"));
        let cfg = DynamicConfig::default();
        let tracks = associate_frames(&frames, &cfg).unwrap();
        let pairs = propose_pairs(&tracks, &cfg);
        let out = assemble_relations(&pairs, &cands, &tracks, (0.0, 11.0), &cfg).unwrap();
        assert_eq!(out.unknown_refs, 1);
        assert_eq!(out.edges.len(), 1);
        assert_eq!(out.edges[0].spans, vec![Span::new(0.0, 1.0)]);
    }

    #[test]
    fn isolated_hit_spans_one_period() {
        assert_eq!(spans_for(&[4.0]), vec![Span::new(4.0, 4.2)]);
    }

    #[test]
    fn back_projection_through_pose_and_depth() {
        let mut d = det("cup", 0.0, [1.0, 0.0, 0.0]);
        // rect centered on the principal point
        d.rect = Rect { x_min: 309.5, y_min: 229.5, x_max: 329.5, y_max: 249.5 };
        let frames: Vec<_> = [2.0, 3.0, 4.0]
            .iter()
            .enumerate()
            .map(|(k, &depth)| FrameObservation {
                camera_id: "cam".into(),
                time: k as f64,
                pose: Some(Pose::identity_at([1.0, 2.0, 0.5])),
                detections: vec![Detection { depth_m: Some(depth), ..d.clone() }],
            })
            .collect();
        let cfg = DynamicConfig::default();
        let tracks = associate_frames(&frames, &cfg).unwrap();
        let b = instance_box(&tracks[0], &cfg).unwrap();
        // camera looks along +z; median depth 3
        let c = b.center();
        assert_relative_eq!(c[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(c[1], 2.0, epsilon = 1e-9);
        assert_relative_eq!(c[2], 3.5, epsilon = 1e-9);
        assert_relative_eq!(b.volume(), 0.3f64.powi(3), epsilon = 1e-12);
    }

    #[test]
    fn unposed_stream_has_no_boxes() {
        let (frames, _) = place_scenario();
        let sub = build_subgraph(&frames, &[], "cam", (0.0, 10.0), &DynamicConfig::default()).unwrap();
        assert!(sub.vertices.iter().all(|v| v.box3.is_none()));
    }

    #[test]
    fn stream_round_trip_and_monotonicity() {
        let (frames, cands) = place_scenario();
        let mut s = CameraStream::default();
        for f in frames.clone() {
            s.push_frame(f).unwrap();
        }
        s.candidates = cands;
        let text: String = s.to_records().iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
        assert!(text.lines().next().unwrap().contains("\"kind\":\"frame\""));
        let back = CameraStream::read(text.as_bytes(), "stream").unwrap();
        assert_eq!(back, s);

        let mut bad = CameraStream::default();
        bad.push_frame(frames[1].clone()).unwrap();
        assert!(bad.push_frame(frames[0].clone()).is_err());
        assert!(bad.push_frame(frames[1].clone()).is_err());
    }

    #[test]
    fn window_slicing_is_half_open() {
        let (frames, cands) = place_scenario();
        let s = CameraStream { camera_id: "cam".into(), frames, candidates: cands };
        let (f, c) = s.window(2.0, 4.0);
        assert_eq!(f.len(), 10);
        assert_eq!(f[0].time, 2.0);
        assert!(f.iter().all(|x| x.time < 4.0));
        assert!(c.iter().all(|x| x.time >= 3.0 && x.time < 4.0));
    }
}
