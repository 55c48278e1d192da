use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::geometry::{Box3, Polygon, Pose, Rect, Vec2, Vec3};
use crate::error::{Error, Result};

/// Fixed-length feature vector for one detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Feature(pub Vec<f64>);

impl Feature {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Cosine similarity; 0 when either vector has zero norm.
    pub fn cosine(&self, other: &Feature) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let na = self.0.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = other.0.iter().map(|b| b * b).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionVertex {
    pub id: String,
    pub name: String,
    pub footprint: Vec<Vec2>,
    pub centroid: Vec2,
}

impl RegionVertex {
    /// Builds a region with its area centroid computed from the footprint.
    pub fn new(id: impl Into<String>, name: impl Into<String>, footprint: Vec<Vec2>) -> Self {
        let centroid = Polygon(&footprint).centroid();
        RegionVertex { id: id.into(), name: name.into(), footprint, centroid }
    }

    pub fn polygon(&self) -> Polygon<'_> {
        Polygon(&self.footprint)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.polygon().is_simple() {
            return Err(Error::invalid(format!("region `{}` footprint is not a simple polygon", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticObjectVertex {
    pub id: String,
    pub class_label: String,
    #[serde(rename = "box")]
    pub bbox: Box3,
    pub region_id: String,
    #[serde(default)]
    pub merged_from: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticEdgeKind {
    Connectivity,
    Belonging,
}

/// Connectivity edges are stored once with `a < b`; belonging edges point
/// object → region.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StaticEdge {
    pub kind: StaticEdgeKind,
    pub a: String,
    pub b: String,
}

impl StaticEdge {
    pub fn connectivity(x: &str, y: &str) -> Self {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        StaticEdge { kind: StaticEdgeKind::Connectivity, a: a.to_string(), b: b.to_string() }
    }

    pub fn belonging(object: &str, region: &str) -> Self {
        StaticEdge { kind: StaticEdgeKind::Belonging, a: object.to_string(), b: region.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceVertex {
    pub track_id: u32,
    pub class_label: String,
    pub feature: Feature,
    pub last_footprint: Rect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box3: Option<Box3>,
    pub first_seen: f64,
    pub last_seen: f64,
}

/// A closed time interval `(start, end)` in seconds; serialized as a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn new(start: f64, end: f64) -> Self {
        Span { start, end }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }
}

impl From<(f64, f64)> for Span {
    fn from((start, end): (f64, f64)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (f64, f64) {
    fn from(s: Span) -> Self {
        (s.start, s.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub subject_id: u32,
    pub subject_class: String,
    pub object_id: u32,
    pub object_class: String,
    pub predicate: String,
    pub spans: Vec<Span>,
    /// Mean confidence of the candidate hits behind this edge.
    #[serde(default)]
    pub score: f64,
}

impl RelationEdge {
    pub fn active_at(&self, t: f64) -> bool {
        self.spans.iter().any(|s| s.contains(t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicSubgraph {
    pub window_start: f64,
    pub window_end: f64,
    pub camera_id: String,
    pub vertices: Vec<InstanceVertex>,
    pub edges: Vec<RelationEdge>,
}

impl DynamicSubgraph {
    pub fn empty(camera_id: impl Into<String>, window_start: f64, window_end: f64) -> Self {
        DynamicSubgraph {
            window_start,
            window_end,
            camera_id: camera_id.into(),
            vertices: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn vertex(&self, track_id: u32) -> Option<&InstanceVertex> {
        self.vertices.iter().find(|v| v.track_id == track_id)
    }

    pub fn validate(&self) -> Result<()> {
        let ids: BTreeSet<u32> = self.vertices.iter().map(|v| v.track_id).collect();
        if ids.len() != self.vertices.len() {
            return Err(Error::invalid("duplicate track id in subgraph"));
        }
        for e in &self.edges {
            if !ids.contains(&e.subject_id) || !ids.contains(&e.object_id) {
                return Err(Error::invalid(format!(
                    "relation {} -> {} references a missing vertex",
                    e.subject_id, e.object_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalGraph {
    pub regions: Vec<RegionVertex>,
    pub static_objects: Vec<StaticObjectVertex>,
    pub static_edges: Vec<StaticEdge>,
    pub version: u64,
}

impl GlobalGraph {
    pub fn region(&self, id: &str) -> Option<&RegionVertex> {
        self.regions.iter().find(|r| r.id == id)
    }

    /// Looks a region up by id or display name, case-insensitively.
    pub fn resolve_region(&self, name: &str) -> Option<&RegionVertex> {
        let name = name.trim();
        self.regions
            .iter()
            .find(|r| r.id.eq_ignore_ascii_case(name))
            .or_else(|| self.regions.iter().find(|r| r.name.eq_ignore_ascii_case(name)))
    }

    pub fn static_object(&self, id: &str) -> Option<&StaticObjectVertex> {
        self.static_objects.iter().find(|o| o.id == id)
    }

    /// Region adjacency over connectivity edges, both directions, sorted.
    pub fn adjacency(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut adj: BTreeMap<&str, Vec<&str>> = self.regions.iter().map(|r| (r.id.as_str(), Vec::new())).collect();
        for e in self.static_edges.iter().filter(|e| e.kind == StaticEdgeKind::Connectivity) {
            adj.entry(e.a.as_str()).or_default().push(e.b.as_str());
            adj.entry(e.b.as_str()).or_default().push(e.a.as_str());
        }
        for v in adj.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        adj
    }

    pub fn connected(&self, a: &str, b: &str) -> bool {
        let e = StaticEdge::connectivity(a, b);
        self.static_edges.contains(&e)
    }

    /// True when the region connectivity graph has a single component.
    pub fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let Some(start) = adj.keys().next().copied() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(r) = queue.pop_front() {
            for n in &adj[r] {
                if seen.insert(*n) {
                    queue.push_back(n);
                }
            }
        }
        seen.len() == adj.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut region_ids = BTreeSet::new();
        for r in &self.regions {
            r.validate()?;
            if !region_ids.insert(r.id.as_str()) {
                return Err(Error::invalid(format!("duplicate region id `{}`", r.id)));
            }
        }
        let mut object_ids = BTreeSet::new();
        for o in &self.static_objects {
            o.bbox.validate()?;
            if !object_ids.insert(o.id.as_str()) {
                return Err(Error::invalid(format!("duplicate object id `{}`", o.id)));
            }
            if !region_ids.contains(o.region_id.as_str()) {
                return Err(Error::UnknownRegion(o.region_id.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        let mut belonging: BTreeMap<&str, usize> = BTreeMap::new();
        for e in &self.static_edges {
            if !seen.insert(e) {
                return Err(Error::invalid(format!("duplicate edge {e:?}")));
            }
            match e.kind {
                StaticEdgeKind::Connectivity => {
                    if !region_ids.contains(e.a.as_str()) || !region_ids.contains(e.b.as_str()) {
                        return Err(Error::invalid(format!("connectivity edge {}-{} must link regions", e.a, e.b)));
                    }
                    if e.a >= e.b {
                        return Err(Error::invalid(format!(
                            "connectivity edge {}-{} must be stored once in id order",
                            e.a, e.b
                        )));
                    }
                }
                StaticEdgeKind::Belonging => {
                    if !object_ids.contains(e.a.as_str()) || !region_ids.contains(e.b.as_str()) {
                        return Err(Error::invalid(format!(
                            "belonging edge {}->{} must link object to region",
                            e.a, e.b
                        )));
                    }
                    *belonging.entry(e.a.as_str()).or_default() += 1;
                }
            }
        }
        for o in &self.static_objects {
            if belonging.get(o.id.as_str()).copied() != Some(1) {
                return Err(Error::invalid(format!("object `{}` must have exactly one belonging edge", o.id)));
            }
        }
        Ok(())
    }
}

/// Which fusion route produced an anchored subgraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    Spatial,
    Semantic,
}

/// Belonging edge from an instance vertex to a region.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnchorEdge {
    pub track_id: u32,
    pub region_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchoredSubgraph {
    pub mode: FusionMode,
    pub subgraph: DynamicSubgraph,
    pub anchors: Vec<AnchorEdge>,
}

/// Records that an instance is the same physical thing as a static vertex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MergeRecord {
    pub camera_id: String,
    pub track_id: u32,
    pub static_id: String,
}

/// How one instance vertex hangs off the global graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Attachment {
    Merged {
        static_id: String,
    },
    Anchored {
        region_id: String,
    },
    /// Not merged and no region reachable.
    Detached,
    /// Violates totality: merged and anchored, or reaching several regions.
    Ambiguous,
}

/// Fused graph at one tick. Immutable once built; fields are read through
/// accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedSnapshot {
    base: Arc<GlobalGraph>,
    anchored: Vec<AnchoredSubgraph>,
    merges: Vec<MergeRecord>,
    tick: u64,
    wall_time: f64,
}

/// Identifier used for dynamic vertices outside their subgraph.
pub fn instance_key(camera_id: &str, track_id: u32) -> String {
    format!("{camera_id}/{track_id}")
}

impl UnifiedSnapshot {
    pub fn new(
        base: Arc<GlobalGraph>,
        anchored: Vec<AnchoredSubgraph>,
        merges: Vec<MergeRecord>,
        tick: u64,
        wall_time: f64,
    ) -> Self {
        UnifiedSnapshot { base, anchored, merges, tick, wall_time }
    }

    pub fn bare(base: Arc<GlobalGraph>, tick: u64, wall_time: f64) -> Self {
        Self::new(base, Vec::new(), Vec::new(), tick, wall_time)
    }

    pub fn base(&self) -> &GlobalGraph {
        &self.base
    }

    pub fn base_arc(&self) -> &Arc<GlobalGraph> {
        &self.base
    }

    pub fn anchored(&self) -> &[AnchoredSubgraph] {
        &self.anchored
    }

    pub fn merges(&self) -> &[MergeRecord] {
        &self.merges
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn wall_time(&self) -> f64 {
        self.wall_time
    }

    /// Same content with a different tick stamp.
    pub fn retagged(&self, tick: u64, wall_time: f64) -> Self {
        UnifiedSnapshot { tick, wall_time, ..self.clone() }
    }

    pub fn merge_for(&self, camera_id: &str, track_id: u32) -> Option<&MergeRecord> {
        self.merges.iter().find(|m| m.camera_id == camera_id && m.track_id == track_id)
    }

    /// Resolves every instance vertex to its attachment.
    ///
    /// Spatial subgraphs attach instance by instance: a vertex is anchored
    /// only through its own anchor edge. Semantic subgraphs attach per
    /// connected component: an unmerged vertex reaches a region through any
    /// anchor edge in its component or through a merged vertex's static
    /// object.
    pub fn attachments(&self) -> Vec<(String, u32, Attachment)> {
        let mut out = Vec::new();
        for a in &self.anchored {
            let cam = a.subgraph.camera_id.as_str();
            let comps = components(&a.subgraph);
            for v in &a.subgraph.vertices {
                let merged = self.merge_for(cam, v.track_id);
                let own_anchors: Vec<&AnchorEdge> = a.anchors.iter().filter(|e| e.track_id == v.track_id).collect();
                let att = match (merged, a.mode) {
                    (Some(m), _) => {
                        if own_anchors.is_empty() {
                            Attachment::Merged { static_id: m.static_id.clone() }
                        } else {
                            Attachment::Ambiguous
                        }
                    }
                    (None, FusionMode::Spatial) => match own_anchors.as_slice() {
                        [] => Attachment::Detached,
                        [e] => Attachment::Anchored { region_id: e.region_id.clone() },
                        _ => Attachment::Ambiguous,
                    },
                    (None, FusionMode::Semantic) => {
                        let comp = comps[&v.track_id];
                        let mut regions = BTreeSet::new();
                        for u in a.subgraph.vertices.iter().filter(|u| comps[&u.track_id] == comp) {
                            for e in a.anchors.iter().filter(|e| e.track_id == u.track_id) {
                                regions.insert(e.region_id.clone());
                            }
                            if let Some(m) = self.merge_for(cam, u.track_id) {
                                if let Some(o) = self.base.static_object(&m.static_id) {
                                    regions.insert(o.region_id.clone());
                                }
                            }
                        }
                        match regions.len() {
                            0 => Attachment::Detached,
                            1 => Attachment::Anchored { region_id: regions.into_iter().next().unwrap() },
                            _ => Attachment::Ambiguous,
                        }
                    }
                };
                out.push((cam.to_string(), v.track_id, att));
            }
        }
        out
    }

    /// Region that an instance is attached to, following merges to the
    /// static object's region.
    pub fn instance_region(&self, camera_id: &str, track_id: u32) -> Option<String> {
        self.attachments().into_iter().find(|(c, t, _)| c == camera_id && *t == track_id).and_then(|(_, _, att)| {
            match att {
                Attachment::Anchored { region_id } => Some(region_id),
                Attachment::Merged { static_id } => self.base.static_object(&static_id).map(|o| o.region_id.clone()),
                _ => None,
            }
        })
    }

    /// Snapshot with the dynamic layer dropped.
    pub fn is_bare(&self) -> bool {
        self.anchored.is_empty() && self.merges.is_empty()
    }
}

/// Connected components of a subgraph over relation edges; maps track id to
/// the smallest track id in its component.
pub fn components(sub: &DynamicSubgraph) -> BTreeMap<u32, u32> {
    let ids: Vec<u32> = sub.vertices.iter().map(|v| v.track_id).collect();
    let index: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in &sub.edges {
        if let (Some(&a), Some(&b)) = (index.get(&e.subject_id), index.get(&e.object_id)) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut rep: BTreeMap<usize, u32> = BTreeMap::new();
    for (i, t) in ids.iter().enumerate() {
        let r = find(&mut parent, i);
        let e = rep.entry(r).or_insert(*t);
        *e = (*e).min(*t);
    }
    ids.iter().enumerate().map(|(i, t)| (*t, rep[&find(&mut parent, i)])).collect()
}

/// One detection inside a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub score: f64,
    pub feature: Feature,
    pub rect: Rect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box3: Option<Box3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObservation {
    pub camera_id: String,
    pub time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
    pub detections: Vec<Detection>,
}

impl FrameObservation {
    pub fn validate(&self) -> Result<()> {
        if !self.time.is_finite() {
            return Err(Error::invalid("frame time must be finite"));
        }
        if let Some(p) = &self.pose {
            p.validate()?;
        }
        for d in &self.detections {
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::invalid(format!("detection score {} outside [0,1]", d.score)));
            }
            if !d.feature.is_finite() {
                return Err(Error::invalid("detection feature must be finite"));
            }
            if let Some(b) = &d.box3 {
                b.validate()?;
            }
        }
        Ok(())
    }
}

/// Relation score for a pair of detections in the frame at `time`.
///
/// `subject_track` and `object_track` index into that frame's detection list;
/// the dynamic builder lifts them onto its own tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationCandidate {
    pub time: f64,
    pub subject_track: u32,
    pub object_track: u32,
    pub predicate: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Navigate,
    Pick,
    Place,
}

impl Verb {
    pub fn phrase(&self) -> &'static str {
        match self {
            Verb::Navigate => "navigate to",
            Verb::Pick => "pick",
            Verb::Place => "place",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillPrimitive {
    pub verb: Verb,
    pub object: String,
    pub region: String,
}

impl std::fmt::Display for SkillPrimitive {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {} in {}", self.verb.phrase(), self.object, self.region)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub steps: Vec<SkillPrimitive>,
    pub snapshot_tick: u64,
}

impl TaskPlan {
    /// Numbered instruction list, one step per line.
    pub fn render(&self) -> String {
        self.steps.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect::<Vec<_>>().join("\n")
    }
}

/// Position helper shared by query code.
pub fn box_center(b: &Option<Box3>) -> Option<Vec3> {
    b.as_ref().map(Box3::center)
}
