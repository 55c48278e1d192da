//! Global static graph construction.
//!
//! Object observations from a posed scan are reduced to the relatively
//! static subset (large by volume or of a designated class), duplicate
//! observations of one object are merged, each survivor is placed in a
//! region, and regions are linked wherever a declared doorway touches two
//! footprints.

use std::collections::BTreeSet;
use std::io::BufRead;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    box_overlap_ratio, distance2, Box3, FrameObservation, GlobalGraph, RegionVertex, Segment, StaticEdge,
    StaticObjectVertex,
};

pub const DEFAULT_STATIC_CLASSES: [&str; 6] = ["couch", "fridge", "tv", "table", "counter", "shelf"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StaticBuildConfig {
    /// Volume threshold in cubic meters.
    pub v_thr: f64,
    /// Classes kept regardless of volume. Matched case-insensitively.
    pub static_classes: BTreeSet<String>,
    pub merge_overlap: f64,
    pub connectivity_gap_m: f64,
}

impl Default for StaticBuildConfig {
    fn default() -> Self {
        StaticBuildConfig {
            v_thr: 2.0,
            static_classes: DEFAULT_STATIC_CLASSES.iter().map(|s| s.to_string()).collect(),
            merge_overlap: 0.6,
            connectivity_gap_m: 1.5,
        }
    }
}

impl StaticBuildConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_thr > 0.0) {
            return Err(Error::invalid("v_thr must be positive"));
        }
        if !(self.merge_overlap > 0.0 && self.merge_overlap <= 1.0) {
            return Err(Error::invalid("merge_overlap must lie in (0, 1]"));
        }
        if !(self.connectivity_gap_m >= 0.0) {
            return Err(Error::invalid("connectivity_gap_m must be non-negative"));
        }
        Ok(())
    }

    pub fn is_static_class(&self, label: &str) -> bool {
        is_in_class_set(&self.static_classes, label)
    }

    /// Parses a class list file: one label per line, `#` comments allowed.
    pub fn parse_class_list(text: &str) -> BTreeSet<String> {
        text.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect()
    }
}

pub(crate) fn is_in_class_set(set: &BTreeSet<String>, label: &str) -> bool {
    set.iter().any(|c| c.eq_ignore_ascii_case(label.trim()))
}

/// One object observation feeding the static layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticCandidate {
    pub label: String,
    pub box3: Box3,
    #[serde(default)]
    pub source: String,
}

/// A merged static object before it is given an id and region.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticCluster {
    pub label: String,
    pub bbox: Box3,
    pub sources: Vec<String>,
}

pub fn filter_static(candidates: &[StaticCandidate], cfg: &StaticBuildConfig) -> Vec<StaticCandidate> {
    candidates.iter().filter(|c| c.box3.volume() >= cfg.v_thr || cfg.is_static_class(&c.label)).cloned().collect()
}

/// Region containing the box centroid in plan view, else the region with the
/// nearest centroid. Ties resolve to the smallest region id.
pub fn assign_region<'a>(box3: &Box3, regions: &'a [RegionVertex]) -> Result<&'a RegionVertex> {
    let c = box3.center();
    let p = [c[0], c[1]];
    let mut containing: Vec<&RegionVertex> = regions.iter().filter(|r| r.polygon().contains(p)).collect();
    if !containing.is_empty() {
        containing.sort_by(|a, b| a.id.cmp(&b.id));
        return Ok(containing[0]);
    }
    regions
        .iter()
        .map(|r| (distance2(p, r.centroid), r))
        .min_by(|(da, ra), (db, rb)| da.total_cmp(db).then_with(|| ra.id.cmp(&rb.id)))
        .map(|(_, r)| r)
        .ok_or(Error::NoRegions)
}

/// Unions same-label candidates whose boxes overlap by at least
/// `merge_overlap`, repeating until no cluster pair qualifies. Clusters keep
/// first-seen order.
pub fn merge_duplicate_statics(kept: &[StaticCandidate], cfg: &StaticBuildConfig) -> Vec<StaticCluster> {
    let mut clusters: Vec<StaticCluster> = Vec::new();
    for c in kept {
        let hit = clusters.iter_mut().find(|k| {
            k.label.eq_ignore_ascii_case(&c.label) && box_overlap_ratio(&k.bbox, &c.box3) >= cfg.merge_overlap
        });
        match hit {
            Some(k) => {
                k.bbox = k.bbox.envelope(&c.box3);
                k.sources.push(c.source.clone());
            }
            None => {
                clusters.push(StaticCluster { label: c.label.clone(), bbox: c.box3, sources: vec![c.source.clone()] })
            }
        }
    }
    // Envelopes grow, so clusters that were apart may now qualify.
    loop {
        let mut pair = None;
        'scan: for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                if clusters[i].label.eq_ignore_ascii_case(&clusters[j].label)
                    && box_overlap_ratio(&clusters[i].bbox, &clusters[j].bbox) >= cfg.merge_overlap
                {
                    pair = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((i, j)) = pair else { break };
        let absorbed = clusters.remove(j);
        clusters[i].bbox = clusters[i].bbox.envelope(&absorbed.bbox);
        clusters[i].sources.extend(absorbed.sources);
    }
    clusters
}

/// Doorway annotation. `id` is informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Doorway {
    #[serde(default)]
    pub id: String,
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Doorway {
    pub fn segment(&self) -> Segment {
        Segment { a: self.a, b: self.b }
    }
}

/// Links every pair of regions touched by the same doorway (within `gap_m`).
/// Doorways touching fewer than two regions are skipped with a warning.
/// Returns sorted, deduplicated connectivity edges and the skipped count.
pub fn build_connectivity(regions: &[RegionVertex], doorways: &[Doorway], gap_m: f64) -> (Vec<StaticEdge>, usize) {
    let mut edges = BTreeSet::new();
    let mut skipped = 0;
    for d in doorways {
        let seg = d.segment();
        let mut touched: Vec<&str> =
            regions.iter().filter(|r| r.polygon().distance_to_segment(&seg) <= gap_m).map(|r| r.id.as_str()).collect();
        touched.sort_unstable();
        touched.dedup();
        if touched.len() < 2 {
            warn!("doorway `{}` touches {} region(s); skipped", d.id, touched.len());
            skipped += 1;
            continue;
        }
        for i in 0..touched.len() {
            for j in (i + 1)..touched.len() {
                edges.insert(StaticEdge::connectivity(touched[i], touched[j]));
            }
        }
    }
    (edges.into_iter().collect(), skipped)
}

/// Turns merged clusters into object vertices with ids of the form
/// `<label>-<n>`, numbered per label in cluster order.
fn name_clusters(clusters: Vec<StaticCluster>, regions: &[RegionVertex]) -> Result<Vec<StaticObjectVertex>> {
    let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
    clusters
        .into_iter()
        .map(|c| {
            let slug = c.label.trim().to_lowercase().replace(char::is_whitespace, "_");
            let n = counts.entry(slug.clone()).or_default();
            let id = format!("{slug}-{n}");
            *n += 1;
            let region = assign_region(&c.bbox, regions)?;
            Ok(StaticObjectVertex {
                id,
                class_label: c.label,
                bbox: c.bbox,
                region_id: region.id.clone(),
                merged_from: c.sources,
            })
        })
        .collect()
}

/// Source tag for one detection in a scan frame.
pub fn observation_source(frame: &FrameObservation, index: usize) -> String {
    format!("{}@{:.3}#{}", frame.camera_id, frame.time, index)
}

/// Extracts static candidates from posed scan frames. Every frame must be
/// posed and every detection must carry a 3D box.
pub fn candidates_from_frames(frames: &[FrameObservation]) -> Result<Vec<StaticCandidate>> {
    let mut out = Vec::new();
    for f in frames {
        if f.pose.is_none() {
            return Err(Error::invalid(format!("scan frame {} at t={} is not posed", f.camera_id, f.time)));
        }
        for (i, d) in f.detections.iter().enumerate() {
            let box3 = d.box3.ok_or_else(|| {
                Error::invalid(format!("detection {i} in frame {} at t={} has no 3D box", f.camera_id, f.time))
            })?;
            out.push(StaticCandidate { label: d.label.clone(), box3, source: observation_source(f, i) });
        }
    }
    Ok(out)
}

pub fn build_static_graph(
    frames: &[FrameObservation],
    regions: &[RegionVertex],
    doorways: &[Doorway],
    cfg: &StaticBuildConfig,
) -> Result<GlobalGraph> {
    cfg.validate()?;
    if regions.is_empty() {
        return Err(Error::NoRegions);
    }
    let mut regions = regions.to_vec();
    regions.sort_by(|a, b| a.id.cmp(&b.id));
    for r in &regions {
        r.validate()?;
    }
    for f in frames {
        f.validate()?;
    }
    let candidates = candidates_from_frames(frames)?;
    let kept = filter_static(&candidates, cfg);
    let clusters = merge_duplicate_statics(&kept, cfg);
    let objects = name_clusters(clusters, &regions)?;
    let mut static_edges: Vec<StaticEdge> =
        objects.iter().map(|o| StaticEdge::belonging(&o.id, &o.region_id)).collect();
    let (conn, _) = build_connectivity(&regions, doorways, cfg.connectivity_gap_m);
    static_edges.extend(conn);
    let graph = GlobalGraph { regions, static_objects: objects, static_edges, version: 0 };
    graph.validate()?;
    Ok(graph)
}

/// Reads JSON-lines records, reporting the 1-based line of any parse error.
/// Blank lines are skipped.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead, source_name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source_name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Parses a JSON document, reporting the error line.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Region annotation entry; `centroid` is derived from the footprint when
/// absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub footprint: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid: Option<[f64; 2]>,
}

impl RegionSpec {
    pub fn to_vertex(&self) -> RegionVertex {
        let mut v = RegionVertex::new(
            self.id.clone(),
            self.name.clone().unwrap_or_else(|| self.id.clone()),
            self.footprint.clone(),
        );
        if let Some(c) = self.centroid {
            v.centroid = c;
        }
        v
    }
}

pub fn parse_regions(text: &str, source_name: &str) -> Result<Vec<RegionVertex>> {
    let records: Vec<RegionSpec> = parse_json(text, source_name)?;
    Ok(records.iter().map(RegionSpec::to_vertex).collect())
}
