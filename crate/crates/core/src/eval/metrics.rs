//! Graph and relation metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{instance_key, Attachment, Box3, OverlapMetric, StaticEdgeKind, UnifiedSnapshot};
use crate::sim::TickTruth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewVertex {
    pub id: String,
    pub label: String,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Box3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Connectivity,
    Belonging,
    Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum Endpoint {
    Region(String),
    Vertex(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ViewEdge {
    pub kind: EdgeKind,
    pub a: Endpoint,
    pub b: Endpoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
}

impl ViewEdge {
    fn canonical(mut self) -> Self {
        // connectivity is undirected
        if self.kind == EdgeKind::Connectivity && self.b < self.a {
            std::mem::swap(&mut self.a, &mut self.b);
        }
        self
    }
}

/// Flat view of a scene graph for scoring: object vertices plus edges.
/// Regions are identified by id and are not scored as vertices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphView {
    pub vertices: Vec<ViewVertex>,
    pub edges: Vec<ViewEdge>,
}

impl GraphView {
    /// Static objects plus every unmerged instance. Instances merged into a
    /// static vertex are represented by it, also as relation endpoints.
    pub fn from_snapshot(snap: &UnifiedSnapshot) -> Self {
        let base = snap.base();
        let mut view = GraphView::default();
        for o in &base.static_objects {
            view.vertices.push(ViewVertex {
                id: o.id.clone(),
                label: o.class_label.clone(),
                bbox: Some(o.bbox),
                region: Some(o.region_id.clone()),
            });
        }
        for e in &base.static_edges {
            view.edges.push(match e.kind {
                StaticEdgeKind::Connectivity => ViewEdge {
                    kind: EdgeKind::Connectivity,
                    a: Endpoint::Region(e.a.clone()),
                    b: Endpoint::Region(e.b.clone()),
                    predicate: None,
                },
                StaticEdgeKind::Belonging => ViewEdge {
                    kind: EdgeKind::Belonging,
                    a: Endpoint::Vertex(e.a.clone()),
                    b: Endpoint::Region(e.b.clone()),
                    predicate: None,
                },
            });
        }
        let mut endpoint: BTreeMap<(String, u32), String> = BTreeMap::new();
        for (cam, track, att) in snap.attachments() {
            let key = instance_key(&cam, track);
            match att {
                Attachment::Merged { static_id } => {
                    endpoint.insert((cam, track), static_id);
                }
                other => {
                    let region = match other {
                        Attachment::Anchored { region_id } => Some(region_id),
                        _ => None,
                    };
                    let a = snap.anchored().iter().find(|a| a.subgraph.camera_id == cam).expect("attachment source");
                    let v = a.subgraph.vertex(track).expect("attachment vertex");
                    view.vertices.push(ViewVertex {
                        id: key.clone(),
                        label: v.class_label.clone(),
                        bbox: v.box3,
                        region: region.clone(),
                    });
                    if let Some(r) = region {
                        view.edges.push(ViewEdge {
                            kind: EdgeKind::Belonging,
                            a: Endpoint::Vertex(key.clone()),
                            b: Endpoint::Region(r),
                            predicate: None,
                        });
                    }
                    endpoint.insert((cam, track), key);
                }
            }
        }
        for a in snap.anchored() {
            let cam = &a.subgraph.camera_id;
            for r in &a.subgraph.edges {
                let end = |t: u32| endpoint[&(cam.clone(), t)].clone();
                view.edges.push(ViewEdge {
                    kind: EdgeKind::Relation,
                    a: Endpoint::Vertex(end(r.subject_id)),
                    b: Endpoint::Vertex(end(r.object_id)),
                    predicate: Some(r.predicate.clone()),
                });
            }
        }
        view
    }

    pub fn from_truth(t: &TickTruth) -> Self {
        let mut view = GraphView::default();
        for v in &t.vertices {
            view.vertices.push(ViewVertex {
                id: v.id.clone(),
                label: v.label.clone(),
                bbox: Some(v.bbox),
                region: Some(v.region_id.clone()),
            });
            view.edges.push(ViewEdge {
                kind: EdgeKind::Belonging,
                a: Endpoint::Vertex(v.id.clone()),
                b: Endpoint::Region(v.region_id.clone()),
                predicate: None,
            });
        }
        for (a, b) in &t.connectivity {
            view.edges.push(ViewEdge {
                kind: EdgeKind::Connectivity,
                a: Endpoint::Region(a.clone()),
                b: Endpoint::Region(b.clone()),
                predicate: None,
            });
        }
        for r in &t.relations {
            view.edges.push(ViewEdge {
                kind: EdgeKind::Relation,
                a: Endpoint::Vertex(r.subject.clone()),
                b: Endpoint::Vertex(r.object.clone()),
                predicate: Some(r.predicate.clone()),
            });
        }
        view
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VertexMatchConfig {
    /// A pair matches only when its overlap ratio is strictly above this.
    pub min_overlap: f64,
    pub metric: OverlapMetric,
}

impl Default for VertexMatchConfig {
    fn default() -> Self {
        VertexMatchConfig { min_overlap: 0.6, metric: OverlapMetric::MinVolume }
    }
}

/// One-to-one matching of predicted to GT vertex ids.
///
/// Candidates need equal labels and overlap above the floor; they are taken
/// greedily by descending overlap, ties by label, predicted id, GT id. A
/// predicted vertex without a box can only match a box-less GT vertex with
/// the same label and region, at overlap 0, after all boxed pairs.
pub fn match_vertices(pred: &GraphView, gt: &GraphView, cfg: &VertexMatchConfig) -> BTreeMap<String, String> {
    let mut cands: Vec<(f64, &str, &str, &str)> = Vec::new();
    for p in &pred.vertices {
        for g in gt.vertices.iter().filter(|g| g.label == p.label) {
            match (&p.bbox, &g.bbox) {
                (Some(pb), Some(gb)) => {
                    let r = pb.overlap(gb, cfg.metric).ratio;
                    if r > cfg.min_overlap {
                        cands.push((r, &p.label, &p.id, &g.id));
                    }
                }
                (None, None) if p.region.is_some() && p.region == g.region => {
                    cands.push((0.0, &p.label, &p.id, &g.id));
                }
                _ => {}
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| (a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));
    let mut used_p = BTreeSet::new();
    let mut used_g = BTreeSet::new();
    let mut out = BTreeMap::new();
    for (_, _, p, g) in cands {
        if !used_p.contains(p) && !used_g.contains(g) {
            used_p.insert(p);
            used_g.insert(g);
            out.insert(p.to_string(), g.to_string());
        }
    }
    out
}

/// Fraction of predicted vertices matched to GT. No predictions scores 1.0
/// against an empty GT and 0.0 otherwise.
pub fn vertex_accuracy(pred: &GraphView, gt: &GraphView, cfg: &VertexMatchConfig) -> f64 {
    if pred.vertices.is_empty() {
        return if gt.vertices.is_empty() { 1.0 } else { 0.0 };
    }
    match_vertices(pred, gt, cfg).len() as f64 / pred.vertices.len() as f64
}

/// Fraction of predicted edges found in GT after mapping vertex endpoints
/// through `matching`. Each GT edge absorbs at most one prediction. Both
/// sides empty scores 1.0; no predictions against a non-empty GT scores 0.0.
pub fn edge_accuracy(pred: &GraphView, gt: &GraphView, matching: &BTreeMap<String, String>) -> f64 {
    if pred.edges.is_empty() {
        return if gt.edges.is_empty() { 1.0 } else { 0.0 };
    }
    let mut pool: BTreeMap<ViewEdge, usize> = BTreeMap::new();
    for e in &gt.edges {
        *pool.entry(e.clone().canonical()).or_default() += 1;
    }
    let map = |e: &Endpoint| match e {
        Endpoint::Region(r) => Some(Endpoint::Region(r.clone())),
        Endpoint::Vertex(v) => matching.get(v).map(|g| Endpoint::Vertex(g.clone())),
    };
    let mut hits = 0usize;
    for e in &pred.edges {
        let (Some(a), Some(b)) = (map(&e.a), map(&e.b)) else { continue };
        let mapped = ViewEdge { kind: e.kind.clone(), a, b, predicate: e.predicate.clone() }.canonical();
        if let Some(n) = pool.get_mut(&mapped) {
            if *n > 0 {
                *n -= 1;
                hits += 1;
            }
        }
    }
    hits as f64 / pred.edges.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Triple {
    pub fn new(s: &str, p: &str, o: &str) -> Self {
        Triple { subject: s.into(), predicate: p.into(), object: o.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriple {
    #[serde(flatten)]
    pub triple: Triple,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallMode {
    #[default]
    Plain,
    MeanPerPredicate,
}

/// Groups of interchangeable terms. Each term canonicalizes to the first
/// entry of its group; matching is case-insensitive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynonymMap {
    pub groups: Vec<Vec<String>>,
}

impl SynonymMap {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: SynonymMap = crate::static_graph::parse_json(&text, &path.display().to_string())?;
        map.validate()?;
        Ok(map)
    }

    /// A term may belong to one group only.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (i, g) in self.groups.iter().enumerate() {
            for t in g {
                if let Some(j) = seen.insert(t.to_lowercase(), i) {
                    if j != i {
                        return Err(Error::invalid(format!("synonym `{t}` appears in two groups")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn canonical(&self, term: &str) -> String {
        let lower = term.trim().to_lowercase();
        self.groups.iter().find(|g| g.iter().any(|t| t.to_lowercase() == lower)).map_or(lower, |g| g[0].to_lowercase())
    }

    fn triple(&self, t: &Triple) -> Triple {
        Triple {
            subject: self.canonical(&t.subject),
            predicate: self.canonical(&t.predicate),
            object: self.canonical(&t.object),
        }
    }
}

/// Recall of GT triples among the top `k` predictions.
///
/// Predictions are ranked by score, ties broken by the triple itself; each
/// GT triple is hit at most once per matching prediction. In mean mode the
/// recall is computed per GT predicate and averaged.
pub fn recall_at_k(
    pred: &[ScoredTriple],
    gt: &[Triple],
    k: usize,
    mode: RecallMode,
    synonyms: Option<&SynonymMap>,
) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::UndefinedRecall);
    }
    let exact = SynonymMap::default();
    let syn = synonyms.unwrap_or(&exact);
    let mut ranked: Vec<&ScoredTriple> = pred.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.triple.cmp(&b.triple)));
    let mut pool: BTreeMap<Triple, usize> = BTreeMap::new();
    for g in gt {
        *pool.entry(syn.triple(g)).or_default() += 1;
    }
    let mut hit_per_pred: BTreeMap<String, usize> = BTreeMap::new();
    for p in ranked.into_iter().take(k) {
        let t = syn.triple(&p.triple);
        if let Some(n) = pool.get_mut(&t) {
            if *n > 0 {
                *n -= 1;
                *hit_per_pred.entry(t.predicate).or_default() += 1;
            }
        }
    }
    let mut total_per_pred: BTreeMap<String, usize> = BTreeMap::new();
    for g in gt {
        *total_per_pred.entry(syn.canonical(&g.predicate)).or_default() += 1;
    }
    Ok(match mode {
        RecallMode::Plain => hit_per_pred.values().sum::<usize>() as f64 / gt.len() as f64,
        RecallMode::MeanPerPredicate => {
            let sum: f64 =
                total_per_pred.iter().map(|(p, n)| *hit_per_pred.get(p).unwrap_or(&0) as f64 / *n as f64).sum();
            sum / total_per_pred.len() as f64
        }
    })
}

/// Scored label triples for every relation edge in a snapshot.
pub fn snapshot_triples(snap: &UnifiedSnapshot) -> Vec<ScoredTriple> {
    let mut out = Vec::new();
    for a in snap.anchored() {
        for e in &a.subgraph.edges {
            out.push(ScoredTriple {
                triple: Triple::new(&e.subject_class, &e.predicate, &e.object_class),
                score: e.score,
            });
        }
    }
    out
}

pub fn truth_triples(t: &TickTruth) -> Vec<Triple> {
    t.relations
        .iter()
        .map(|r| {
            let label = |id: &str| t.vertex(id).map_or(id.to_string(), |v| v.label.clone());
            Triple::new(&label(&r.subject), &r.predicate, &label(&r.object))
        })
        .collect()
}
