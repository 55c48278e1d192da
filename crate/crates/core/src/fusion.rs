//! Anchoring dynamic subgraphs onto the global static graph.
//!
//! Every tick starts from the bare base graph: prior dynamic content is
//! dropped and each camera's fresh subgraph is attached either by box
//! overlap (posed cameras) or by semantic class within the camera's region.
//! The base graph is shared, never rewritten; merges are recorded alongside.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    components, AnchorEdge, AnchoredSubgraph, DynamicSubgraph, FusionMode, GlobalGraph, MergeRecord, OverlapMetric,
    UnifiedSnapshot,
};
use crate::static_graph::{assign_region, is_in_class_set, DEFAULT_STATIC_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub b_thr: f64,
    pub overlap_metric: OverlapMetric,
    pub static_classes: BTreeSet<String>,
    pub camera_region: BTreeMap<String, String>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            mode: FusionMode::Spatial,
            b_thr: 0.6,
            overlap_metric: OverlapMetric::MinVolume,
            static_classes: DEFAULT_STATIC_CLASSES.iter().map(|s| s.to_string()).collect(),
            camera_region: BTreeMap::new(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.b_thr) {
            return Err(Error::invalid("b_thr must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// The dynamic contribution of one subgraph before snapshot assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub anchored: AnchoredSubgraph,
    pub merges: Vec<MergeRecord>,
}

/// Merges each instance into the static vertex it overlaps most when that
/// overlap reaches `b_thr` (and is non-zero); otherwise anchors it to the
/// region its box falls in. Overlap ties prefer the larger static box, then
/// the smaller id.
pub fn fuse_spatial_parts(base: &GlobalGraph, sub: &DynamicSubgraph, cfg: &FusionConfig) -> Result<Fused> {
    let mut anchors = Vec::new();
    let mut merges = Vec::new();
    for v in &sub.vertices {
        let b = v.box3.ok_or_else(|| Error::MissingBox { camera: sub.camera_id.clone(), track_id: v.track_id })?;
        let best = base.static_objects.iter().map(|o| (b.overlap(&o.bbox, cfg.overlap_metric).ratio, o)).max_by(
            |(ra, oa), (rb, ob)| {
                ra.total_cmp(rb).then(oa.bbox.volume().total_cmp(&ob.bbox.volume())).then(ob.id.cmp(&oa.id))
            },
        );
        match best {
            Some((r, o)) if r > 0.0 && r >= cfg.b_thr => merges.push(MergeRecord {
                camera_id: sub.camera_id.clone(),
                track_id: v.track_id,
                static_id: o.id.clone(),
            }),
            _ => anchors
                .push(AnchorEdge { track_id: v.track_id, region_id: assign_region(&b, &base.regions)?.id.clone() }),
        }
    }
    Ok(Fused { anchored: AnchoredSubgraph { mode: FusionMode::Spatial, subgraph: sub.clone(), anchors }, merges })
}

/// Attaches whole connected components using the camera's region.
///
/// A component holding designated-class vertices merges each of them with a
/// same-class static vertex in that region (smallest id when several exist);
/// the rest of the component hangs off the merged vertex. Components with no
/// designated-class vertex, or none that finds a static match, get a single
/// anchor edge from their lowest track id.
pub fn fuse_semantic_parts(base: &GlobalGraph, sub: &DynamicSubgraph, cfg: &FusionConfig) -> Result<Fused> {
    let region = cfg.camera_region.get(&sub.camera_id).ok_or_else(|| Error::UnknownCamera(sub.camera_id.clone()))?;
    if base.region(region).is_none() {
        return Err(Error::UnknownRegion(region.clone()));
    }
    let comp = components(sub);
    let mut by_comp: BTreeMap<u32, Vec<&crate::model::InstanceVertex>> = BTreeMap::new();
    for v in &sub.vertices {
        by_comp.entry(comp[&v.track_id]).or_default().push(v);
    }
    let mut anchors = Vec::new();
    let mut merges = Vec::new();
    for (rep, members) in by_comp {
        let mut merged_any = false;
        for v in members.iter().filter(|v| is_in_class_set(&cfg.static_classes, &v.class_label)) {
            let target = base
                .static_objects
                .iter()
                .filter(|o| &o.region_id == region && o.class_label.eq_ignore_ascii_case(&v.class_label))
                .min_by(|a, b| a.id.cmp(&b.id));
            if let Some(o) = target {
                merges.push(MergeRecord {
                    camera_id: sub.camera_id.clone(),
                    track_id: v.track_id,
                    static_id: o.id.clone(),
                });
                merged_any = true;
            }
        }
        if !merged_any {
            anchors.push(AnchorEdge { track_id: rep, region_id: region.clone() });
        }
    }
    Ok(Fused { anchored: AnchoredSubgraph { mode: FusionMode::Semantic, subgraph: sub.clone(), anchors }, merges })
}

fn fuse_parts(base: &GlobalGraph, sub: &DynamicSubgraph, cfg: &FusionConfig) -> Result<Fused> {
    match cfg.mode {
        FusionMode::Spatial => fuse_spatial_parts(base, sub, cfg),
        FusionMode::Semantic => fuse_semantic_parts(base, sub, cfg),
    }
}

fn assemble(base: Arc<GlobalGraph>, parts: Vec<Fused>, tick: u64, wall_time: f64) -> UnifiedSnapshot {
    let mut anchored = Vec::with_capacity(parts.len());
    let mut merges = Vec::new();
    for p in parts {
        anchored.push(p.anchored);
        merges.extend(p.merges);
    }
    UnifiedSnapshot::new(base, anchored, merges, tick, wall_time)
}

pub fn fuse_spatial(base: Arc<GlobalGraph>, sub: &DynamicSubgraph, cfg: &FusionConfig) -> Result<UnifiedSnapshot> {
    let part = fuse_spatial_parts(&base, sub, cfg)?;
    Ok(assemble(base, vec![part], 0, sub.window_end))
}

pub fn fuse_semantic(base: Arc<GlobalGraph>, sub: &DynamicSubgraph, cfg: &FusionConfig) -> Result<UnifiedSnapshot> {
    let part = fuse_semantic_parts(&base, sub, cfg)?;
    Ok(assemble(base, vec![part], 0, sub.window_end))
}

/// One fusion cycle: starts from the bare base graph and fuses every
/// subgraph in `cfg.mode`. Subgraphs are ordered by camera id, so the result
/// does not depend on input order. All subgraphs must end at the same time
/// and come from distinct cameras.
pub fn tick(
    base: Arc<GlobalGraph>,
    subgraphs: &[DynamicSubgraph],
    cfg: &FusionConfig,
    tick_id: u64,
    wall_time: f64,
) -> Result<UnifiedSnapshot> {
    cfg.validate()?;
    if let Some(first) = subgraphs.first() {
        for s in subgraphs {
            if (s.window_end - first.window_end).abs() > 1e-9 {
                return Err(Error::MixedWindowEnds { first: first.window_end, other: s.window_end });
            }
        }
    }
    let mut ordered: Vec<&DynamicSubgraph> = subgraphs.iter().collect();
    ordered.sort_by(|a, b| a.camera_id.cmp(&b.camera_id));
    if ordered.windows(2).any(|w| w[0].camera_id == w[1].camera_id) {
        return Err(Error::invalid("one subgraph per camera per tick"));
    }
    let parts = ordered.par_iter().map(|s| fuse_parts(&base, s, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(assemble(base, parts, tick_id, wall_time))
}
