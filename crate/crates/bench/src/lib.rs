//! Deterministic fixtures shared by the benchmarks.

use std::path::PathBuf;

use hdsg_core::dynamic::{Track, TrackEntry};
use hdsg_core::sim::Scenario;
use hdsg_core::{
    Box3, DynamicSubgraph, Feature, GlobalGraph, InstanceVertex, Rect, RegionVertex, RelationEdge, Span, StaticEdge,
    StaticObjectVertex,
};

/// `n` spans of mixed length with gaps around the 2 s merge threshold.
pub fn spans(n: usize) -> Vec<Span> {
    (0..n)
        .map(|i| {
            let s = (i * 37 % (n * 3)) as f64 * 0.5;
            Span::new(s, s + 0.5 + (i % 5) as f64)
        })
        .collect()
}

const LABELS: [&str; 6] = ["person", "couch", "cup", "table", "laptop", "bag"];

/// `n` tracks over a 10 s window at 5 Hz, each present in part of it.
pub fn tracks(n: usize) -> Vec<Track> {
    (0..n)
        .map(|id| {
            let label = LABELS[id % LABELS.len()];
            Track {
                track_id: id as u32,
                class_label: label.into(),
                entries: (0..50)
                    .filter(|t| (t + id) % (2 + id % 3) != 0)
                    .map(|t| TrackEntry {
                        time: t as f64 * 0.2,
                        rect: Rect { x_min: 0.0, y_min: 0.0, x_max: 1.0, y_max: 1.0 },
                        feature: Feature(vec![1.0, 0.0]),
                        label: label.into(),
                        detection: id,
                        box3: None,
                        depth_m: None,
                        pose: None,
                    })
                    .collect(),
            }
        })
        .collect()
}

/// A corridor of `regions` 10 m rooms, each holding `per_region` statics.
pub fn base_graph(regions: usize, per_region: usize) -> GlobalGraph {
    let id = |i: usize| format!("r{i:03}");
    let mut g = GlobalGraph {
        regions: (0..regions)
            .map(|i| {
                let (x0, x1) = (i as f64 * 10.0, (i + 1) as f64 * 10.0);
                RegionVertex::new(id(i), id(i), vec![[x0, 0.0], [x1, 0.0], [x1, 10.0], [x0, 10.0]])
            })
            .collect(),
        static_objects: Vec::new(),
        static_edges: (1..regions).map(|i| StaticEdge::connectivity(&id(i - 1), &id(i))).collect(),
        version: 1,
    };
    // a few shortcuts so routes have alternatives
    for i in (0..regions.saturating_sub(5)).step_by(7) {
        g.static_edges.push(StaticEdge::connectivity(&id(i), &id(i + 5)));
    }
    for r in 0..regions {
        for j in 0..per_region {
            let x = r as f64 * 10.0 + j as f64 * 2.0;
            let oid = format!("s{r}_{j}");
            g.static_edges.push(StaticEdge::belonging(&oid, &id(r)));
            g.static_objects.push(StaticObjectVertex {
                id: oid,
                class_label: ["table", "couch", "shelf", "tv"][j % 4].into(),
                bbox: Box3::new([x, 1.0, 0.0], [x + 1.5, 2.5, 1.0]).unwrap(),
                region_id: id(r),
                merged_from: vec![],
            });
        }
    }
    g
}

/// One subgraph per camera; half the instances sit on a static box.
pub fn subgraphs(base: &GlobalGraph, cameras: usize, per_camera: usize) -> Vec<DynamicSubgraph> {
    let width = base.regions.len() as f64 * 10.0;
    (0..cameras)
        .map(|c| {
            let mut sub = DynamicSubgraph::empty(format!("cam{c:02}"), 0.0, 10.0);
            for t in 0..per_camera {
                let x = ((c * per_camera + t) as f64 * 3.7) % (width - 2.0);
                let b = if t % 2 == 0 {
                    Box3::new([x, 1.2, 0.1], [x + 0.5, 1.8, 0.6]).unwrap()
                } else {
                    Box3::new([x, 6.0, 0.0], [x + 0.5, 6.5, 1.7]).unwrap()
                };
                sub.vertices.push(InstanceVertex {
                    track_id: t as u32,
                    class_label: LABELS[t % LABELS.len()].into(),
                    feature: Feature(vec![1.0, 0.0]),
                    last_footprint: Rect { x_min: 0.0, y_min: 0.0, x_max: 1.0, y_max: 1.0 },
                    box3: Some(b),
                    first_seen: 0.0,
                    last_seen: 10.0,
                });
            }
            for t in 1..per_camera as u32 {
                sub.edges.push(RelationEdge {
                    subject_id: t - 1,
                    subject_class: LABELS[(t as usize - 1) % LABELS.len()].into(),
                    object_id: t,
                    object_class: LABELS[t as usize % LABELS.len()].into(),
                    predicate: "near".into(),
                    spans: vec![Span::new(0.0, 10.0)],
                    score: 0.9,
                });
            }
            sub
        })
        .collect()
}

/// The bundled cafeteria scenario.
pub fn cafeteria() -> Scenario {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/cafeteria.json");
    Scenario::load(&p).expect("bundled scenario loads")
}
