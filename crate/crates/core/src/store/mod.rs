//! Snapshot registry and read-side queries.
//!
//! One writer commits snapshots; readers take `Arc` handles and keep reading
//! their tick no matter what is committed afterwards.

mod http;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{distance2, instance_key, Attachment, GlobalGraph, RelationEdge, UnifiedSnapshot, Vec3};

pub use http::{fetch_latest, serve, ServerHandle};

pub const DEFAULT_HISTORY: usize = 8;

struct Inner {
    latest: Arc<UnifiedSnapshot>,
    history: VecDeque<Arc<UnifiedSnapshot>>,
}

pub struct GraphStore {
    base: Arc<GlobalGraph>,
    capacity: usize,
    inner: RwLock<Inner>,
}

impl GraphStore {
    /// Store holding a bare tick-0 snapshot of `base`.
    pub fn new(base: Arc<GlobalGraph>, capacity: usize) -> Self {
        let first = Arc::new(UnifiedSnapshot::bare(base.clone(), 0, 0.0));
        GraphStore {
            base,
            capacity: capacity.max(1),
            inner: RwLock::new(Inner { latest: first.clone(), history: VecDeque::from([first]) }),
        }
    }

    /// Store whose first snapshot is `snapshot`, for readers that receive a
    /// finished snapshot from elsewhere.
    pub fn seeded(snapshot: UnifiedSnapshot, capacity: usize) -> Self {
        let first = Arc::new(snapshot);
        GraphStore {
            base: first.base_arc().clone(),
            capacity: capacity.max(1),
            inner: RwLock::new(Inner { latest: first.clone(), history: VecDeque::from([first]) }),
        }
    }

    pub fn base(&self) -> &Arc<GlobalGraph> {
        &self.base
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn commit(&self, snapshot: UnifiedSnapshot) -> Result<u64> {
        let mut inner = self.inner.write().expect("store lock poisoned");
        let latest = inner.latest.tick();
        if snapshot.tick() <= latest {
            return Err(Error::NonMonotoneTick { latest, got: snapshot.tick() });
        }
        let tick = snapshot.tick();
        let snap = Arc::new(snapshot);
        inner.latest = snap.clone();
        inner.history.push_back(snap);
        while inner.history.len() > self.capacity {
            inner.history.pop_front();
        }
        Ok(tick)
    }

    pub fn latest(&self) -> Arc<UnifiedSnapshot> {
        self.inner.read().expect("store lock poisoned").latest.clone()
    }

    pub fn get(&self, tick: u64) -> Result<Arc<UnifiedSnapshot>> {
        self.inner
            .read()
            .expect("store lock poisoned")
            .history
            .iter()
            .find(|s| s.tick() == tick)
            .cloned()
            .ok_or(Error::SnapshotEvicted(tick))
    }

    pub fn history_ticks(&self) -> Vec<u64> {
        self.inner.read().expect("store lock poisoned").history.iter().map(|s| s.tick()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectHit {
    pub vertex_id: String,
    pub kind: VertexKind,
    pub region_id: String,
    pub position: Option<Vec3>,
}

/// Case-insensitive exact label lookup over static vertices and anchored
/// dynamic vertices. Merged instances are reported through their static
/// vertex. Static hits come first, each group sorted by id.
pub fn find_object(name: &str, snapshot: &UnifiedSnapshot) -> Vec<ObjectHit> {
    let name = name.trim();
    let mut out: Vec<ObjectHit> = snapshot
        .base()
        .static_objects
        .iter()
        .filter(|o| o.class_label.eq_ignore_ascii_case(name))
        .map(|o| ObjectHit {
            vertex_id: o.id.clone(),
            kind: VertexKind::Static,
            region_id: o.region_id.clone(),
            position: Some(o.bbox.center()),
        })
        .collect();
    out.sort_by(|a, b| a.vertex_id.cmp(&b.vertex_id));

    let attachments: BTreeMap<(String, u32), Attachment> =
        snapshot.attachments().into_iter().map(|(c, t, a)| ((c, t), a)).collect();
    let mut dynamic = Vec::new();
    for a in snapshot.anchored() {
        let cam = &a.subgraph.camera_id;
        for v in a.subgraph.vertices.iter().filter(|v| v.class_label.eq_ignore_ascii_case(name)) {
            if let Some(Attachment::Anchored { region_id }) = attachments.get(&(cam.clone(), v.track_id)) {
                dynamic.push(ObjectHit {
                    vertex_id: instance_key(cam, v.track_id),
                    kind: VertexKind::Dynamic,
                    region_id: region_id.clone(),
                    position: v.box3.map(|b| b.center()),
                });
            }
        }
    }
    dynamic.sort_by(|a, b| a.vertex_id.cmp(&b.vertex_id));
    out.extend(dynamic);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteMetric {
    #[default]
    Hops,
    /// Edge weight is the distance between region centroids.
    Euclidean,
}

/// Region path over connectivity edges. Regions may be given by id or name.
///
/// With hop weights this is a BFS shortest path; among equally short paths
/// the lexicographically smallest id sequence wins.
pub fn plan_route(from: &str, to: &str, snapshot: &UnifiedSnapshot) -> Result<Vec<String>> {
    plan_route_with(from, to, snapshot.base(), RouteMetric::Hops)
}

pub fn plan_route_with(from: &str, to: &str, graph: &GlobalGraph, metric: RouteMetric) -> Result<Vec<String>> {
    let src = graph.resolve_region(from).ok_or_else(|| Error::UnknownRegion(from.to_string()))?.id.as_str();
    let dst = graph.resolve_region(to).ok_or_else(|| Error::UnknownRegion(to.to_string()))?.id.as_str();
    let adj = graph.adjacency();
    let path = match metric {
        RouteMetric::Hops => bfs_route(&adj, src, dst),
        RouteMetric::Euclidean => dijkstra_route(graph, &adj, src, dst),
    };
    path.ok_or_else(|| Error::NoRoute { from: src.to_string(), to: dst.to_string() })
}

fn bfs_route(adj: &BTreeMap<&str, Vec<&str>>, src: &str, dst: &str) -> Option<Vec<String>> {
    // distances to the target, then a greedy walk taking the smallest id
    // that stays on a shortest path
    let mut dist: BTreeMap<&str, usize> = BTreeMap::from([(dst, 0)]);
    let mut queue = VecDeque::from([dst]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u];
        for &w in adj.get(u).into_iter().flatten() {
            if !dist.contains_key(w) {
                dist.insert(w, d + 1);
                queue.push_back(w);
            }
        }
    }
    let mut d = *dist.get(src)?;
    let mut path = vec![src.to_string()];
    let mut cur = src;
    while d > 0 {
        cur = adj[cur]
            .iter()
            .copied()
            .filter(|w| dist.get(w) == Some(&(d - 1)))
            .min()
            .expect("a neighbour one hop closer exists");
        path.push(cur.to_string());
        d -= 1;
    }
    Some(path)
}

fn dijkstra_route(graph: &GlobalGraph, adj: &BTreeMap<&str, Vec<&str>>, src: &str, dst: &str) -> Option<Vec<String>> {
    let centroid = |id: &str| graph.region(id).map(|r| r.centroid).unwrap_or([0.0, 0.0]);
    // (cost, path); ties on cost resolve by path order
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((OrdF64(0.0), vec![src.to_string()])));
    let mut done = BTreeSet::new();
    while let Some(Reverse((OrdF64(cost), path))) = heap.pop() {
        let u = path.last().expect("paths are non-empty").clone();
        if !done.insert(u.clone()) {
            continue;
        }
        if u == dst {
            return Some(path);
        }
        for &w in adj.get(u.as_str()).into_iter().flatten() {
            if done.contains(w) {
                continue;
            }
            let step = distance2(centroid(&u), centroid(w)).sqrt();
            let mut next = path.clone();
            next.push(w.to_string());
            heap.push(Reverse((OrdF64(cost + step), next)));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Relation edges across all anchored subgraphs, optionally only those with
/// a span containing `at`.
pub fn active_relations(snapshot: &UnifiedSnapshot, at: Option<f64>) -> Vec<RelationEdge> {
    snapshot
        .anchored()
        .iter()
        .flat_map(|a| a.subgraph.edges.iter())
        .filter(|e| at.is_none_or(|t| e.active_at(t)))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        AnchorEdge, AnchoredSubgraph, Box3, DynamicSubgraph, Feature, FusionMode, InstanceVertex, Rect, RegionVertex,
        Span, StaticEdge, StaticObjectVertex,
    };

    fn square(id: &str, x: f64, y: f64) -> RegionVertex {
        RegionVertex::new(id, id, vec![[x, y], [x + 1.0, y], [x + 1.0, y + 1.0], [x, y + 1.0]])
    }

    fn graph() -> Arc<GlobalGraph> {
        let fridge = StaticObjectVertex {
            id: "fridge-0".into(),
            class_label: "fridge".into(),
            bbox: Box3::new([0.1, 0.1, 0.0], [0.9, 0.9, 1.8]).unwrap(),
            region_id: "cafeteria".into(),
            merged_from: vec![],
        };
        let g = GlobalGraph {
            regions: vec![
                square("cafeteria", 0.0, 0.0),
                square("corridor", 1.0, 0.0),
                square("lab", 2.0, 0.0),
                square("storage", 9.0, 9.0),
            ],
            static_edges: vec![
                StaticEdge::belonging("fridge-0", "cafeteria"),
                StaticEdge::connectivity("cafeteria", "corridor"),
                StaticEdge::connectivity("corridor", "lab"),
            ],
            static_objects: vec![fridge],
            version: 0,
        };
        g.validate().unwrap();
        Arc::new(g)
    }

    fn snap(base: Arc<GlobalGraph>, tick: u64) -> UnifiedSnapshot {
        UnifiedSnapshot::bare(base, tick, tick as f64 * 10.0)
    }

    #[test]
    fn commit_order() {
        let store = GraphStore::new(graph(), DEFAULT_HISTORY);
        assert_eq!(store.commit(snap(graph(), 1)).unwrap(), 1);
        assert_eq!(store.commit(snap(graph(), 2)).unwrap(), 2);
        assert_eq!(store.latest().tick(), 2);
        assert!(matches!(store.commit(snap(graph(), 2)), Err(Error::NonMonotoneTick { latest: 2, got: 2 })));
    }

    #[test]
    fn history_ring() {
        let store = GraphStore::new(graph(), 8);
        for t in 1..=10 {
            store.commit(snap(graph(), t)).unwrap();
        }
        assert_eq!(store.history_ticks(), (3..=10).collect::<Vec<_>>());
        assert!(matches!(store.get(2), Err(Error::SnapshotEvicted(2))));
        assert_eq!(store.get(5).unwrap().tick(), 5);
    }

    #[test]
    fn readers_keep_their_snapshot() {
        let store = Arc::new(GraphStore::new(graph(), 4));
        store.commit(snap(graph(), 1)).unwrap();
        let held = store.latest();
        let before = serde_json::to_string(&*held).unwrap();
        let writer = {
            let store = store.clone();
            std::thread::spawn(move || {
                for t in 2..50 {
                    store.commit(snap(graph(), t)).unwrap();
                }
            })
        };
        for _ in 0..100 {
            assert_eq!(serde_json::to_string(&*held).unwrap(), before);
        }
        writer.join().unwrap();
        assert_eq!(held.tick(), 1);
        assert_eq!(store.latest().tick(), 49);
    }

    fn with_coffee() -> UnifiedSnapshot {
        let coffee = InstanceVertex {
            track_id: 3,
            class_label: "coffee".into(),
            feature: Feature(vec![1.0]),
            last_footprint: Rect { x_min: 0.0, y_min: 0.0, x_max: 1.0, y_max: 1.0 },
            box3: Some(Box3::centered([0.5, 0.5, 1.0], [0.1, 0.1, 0.15])),
            first_seen: 1.0,
            last_seen: 9.0,
        };
        let sub = DynamicSubgraph { vertices: vec![coffee], ..DynamicSubgraph::empty("cam", 0.0, 10.0) };
        UnifiedSnapshot::new(
            graph(),
            vec![AnchoredSubgraph {
                mode: FusionMode::Spatial,
                subgraph: sub,
                anchors: vec![AnchorEdge { track_id: 3, region_id: "cafeteria".into() }],
            }],
            vec![],
            1,
            10.0,
        )
    }

    #[test]
    fn find_object_examples() {
        let s = with_coffee();
        let fridge = find_object("Fridge", &s);
        assert_eq!(fridge.len(), 1);
        assert_eq!((fridge[0].kind, fridge[0].region_id.as_str()), (VertexKind::Static, "cafeteria"));
        let coffee = find_object("coffee", &s);
        assert_eq!(coffee.len(), 1);
        assert_eq!(coffee[0].vertex_id, "cam/3");
        assert_eq!(coffee[0].kind, VertexKind::Dynamic);
        assert_eq!(coffee[0].region_id, "cafeteria");
        assert!(find_object("unicorn", &s).is_empty());
    }

    #[test]
    fn routes() {
        let s = snap(graph(), 0);
        assert_eq!(plan_route("lab", "lab", &s).unwrap(), vec!["lab"]);
        assert_eq!(plan_route("lab", "cafeteria", &s).unwrap(), vec!["lab", "corridor", "cafeteria"]);
        let err = plan_route("lab", "storage", &s).unwrap_err();
        assert!(err.to_string().starts_with("no route"));
        assert!(matches!(plan_route("lab", "attic", &s), Err(Error::UnknownRegion(_))));
    }

    #[test]
    fn route_ties_pick_smallest_sequence() {
        // diamond a-b-d, a-c-d
        let mut g = (*graph()).clone();
        g.static_objects.clear();
        g.regions = vec![square("a", 0.0, 0.0), square("b", 1.0, 0.0), square("c", 0.0, 1.0), square("d", 1.0, 1.0)];
        g.static_edges = vec![
            StaticEdge::connectivity("a", "c"),
            StaticEdge::connectivity("c", "d"),
            StaticEdge::connectivity("a", "b"),
            StaticEdge::connectivity("b", "d"),
        ];
        assert_eq!(plan_route_with("a", "d", &g, RouteMetric::Hops).unwrap(), vec!["a", "b", "d"]);
        assert_eq!(plan_route_with("d", "a", &g, RouteMetric::Hops).unwrap(), vec!["d", "b", "a"]);
        assert_eq!(plan_route_with("a", "d", &g, RouteMetric::Euclidean).unwrap(), vec!["a", "b", "d"]);
    }

    #[test]
    fn relations_by_time() {
        let mut s = with_coffee();
        let mut anchored = s.anchored().to_vec();
        let person =
            InstanceVertex { track_id: 4, class_label: "person".into(), ..anchored[0].subgraph.vertices[0].clone() };
        anchored[0].subgraph.vertices.push(person);
        anchored[0].subgraph.edges.push(RelationEdge {
            subject_id: 4,
            subject_class: "person".into(),
            object_id: 3,
            object_class: "coffee".into(),
            predicate: "holding".into(),
            spans: vec![Span::new(1.0, 3.0), Span::new(6.0, 8.0)],
            score: 0.9,
        });
        s = UnifiedSnapshot::new(s.base_arc().clone(), anchored, vec![], 1, 10.0);
        assert_eq!(active_relations(&s, Some(2.0)).len(), 1);
        assert!(active_relations(&s, Some(4.5)).is_empty());
        assert_eq!(active_relations(&s, None).len(), 1);
    }
}
