//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.
//!
//! Every randomized check draws from a fixed ChaCha seed and compares the
//! library against an independent oracle written here.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hdsg_core::agent::MockLlm;
use hdsg_core::demo::{run_demo, DemoConfig};
use hdsg_core::dynamic::{consolidate_spans, propose_pairs_detailed, DynamicConfig, Track, TrackEntry};
use hdsg_core::eval::{recall_at_k, run_eval, run_seeds, EvalConfig, RecallMode, ScoredTriple, SynonymMap, Triple};
use hdsg_core::fusion::{self, FusionConfig};
use hdsg_core::sim::{simulate, Scenario};
use hdsg_core::static_graph::{filter_static, StaticBuildConfig, StaticCandidate};
use hdsg_core::store::{plan_route_with, RouteMetric};
use hdsg_core::{
    Attachment, Box3, DynamicSubgraph, Error, Feature, FusionMode, GlobalGraph, InstanceVertex, Rect, RegionVertex,
    RelationEdge, Span, StaticEdge, StaticObjectVertex, UnifiedSnapshot,
};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, budget: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < budget, || format!("took {:.1}s, budget {}s", took.as_secs_f64(), budget.as_secs()))
}

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(name)
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).expect("bundled scenario loads")
}

// ---------- 1: span consolidation ----------

/// Merges any two spans whose gap is below `gap` until nothing changes.
fn fixpoint_merge(spans: &[(f64, f64)], gap: f64) -> Vec<(f64, f64)> {
    let mut v = spans.to_vec();
    'again: loop {
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let (a, b) = (v[i], v[j]);
                if a.0.max(b.0) - a.1.min(b.1) < gap {
                    v[i] = (a.0.min(b.0), a.1.max(b.1));
                    v.swap_remove(j);
                    continue 'again;
                }
            }
        }
        break;
    }
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

fn criterion_1() -> Result<String, String> {
    let start = Instant::now();
    let got = consolidate_spans(&[Span::new(0.0, 5.0), Span::new(6.0, 10.0)], 2.0).map_err(|e| e.to_string())?;
    ensure(got == vec![Span::new(0.0, 10.0)], || format!("example gave {got:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lists = 10_000;
    for case in 0..lists {
        let n = rng.gen_range(0..=50);
        // half-second grid so gaps of exactly 2 s occur
        let spans: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let s = rng.gen_range(0..200) as f64 * 0.5;
                (s, s + rng.gen_range(1..12) as f64 * 0.5)
            })
            .collect();
        let input: Vec<Span> = spans.iter().map(|&(s, e)| Span::new(s, e)).collect();
        let got: Vec<(f64, f64)> =
            consolidate_spans(&input, 2.0).map_err(|e| e.to_string())?.iter().map(|s| (s.start, s.end)).collect();
        let want = fixpoint_merge(&spans, 2.0);
        ensure(got == want, || format!("list {case}: got {got:?}, oracle {want:?}"))?;
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("{lists} lists match the fixpoint oracle, example merges to (0,10)"))
}

// ---------- 2: pair prioritization ----------

const LABELS: [&str; 10] = ["person", "adult", "couch", "table", "chair", "cup", "laptop", "book", "tv", "bag"];

fn track(id: u32, label: &str, times: &[u32]) -> Track {
    Track {
        track_id: id,
        class_label: label.to_string(),
        entries: times
            .iter()
            .map(|&t| TrackEntry {
                time: t as f64 * 0.2,
                rect: Rect { x_min: 0.0, y_min: 0.0, x_max: 1.0, y_max: 1.0 },
                feature: Feature(vec![1.0]),
                label: label.to_string(),
                detection: 0,
                box3: None,
                depth_m: None,
                pose: None,
            })
            .collect(),
    }
}

fn criterion_2() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let humans: BTreeSet<&str> = ["person", "human", "adult", "man", "woman", "child"].into();
    let furniture: BTreeSet<&str> =
        ["couch", "sofa", "table", "counter", "desk", "chair", "bed", "shelf", "fridge", "tv"].into();
    let prio = |s: &str, o: &str| humans.contains(s) || furniture.contains(o);
    let sets = 1000;
    for case in 0..sets {
        let n = rng.gen_range(0..=12u32);
        let tracks: Vec<Track> = (0..n)
            .map(|id| {
                let mut times: Vec<u32> = (0..50).filter(|_| rng.gen_bool(0.4)).collect();
                if times.is_empty() {
                    times.push(rng.gen_range(0..50));
                }
                track(id, LABELS[rng.gen_range(0..LABELS.len())], &times)
            })
            .collect();
        let cfg = DynamicConfig { top_k: rng.gen_range(1..=40), ..DynamicConfig::default() };
        let label: BTreeMap<u32, &str> = tracks.iter().map(|t| (t.track_id, t.class_label.as_str())).collect();
        let covis = |a: u32, b: u32| {
            let ta: BTreeSet<u64> = tracks[a as usize].entries.iter().map(|e| e.time.to_bits()).collect();
            tracks[b as usize].entries.iter().filter(|e| ta.contains(&e.time.to_bits())).count()
        };

        let mut p_pool = Vec::new();
        let mut o_pool = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if prio(label[&a], label[&b]) || prio(label[&b], label[&a]) {
                    p_pool.push((covis(a, b), a, b));
                } else {
                    o_pool.push((covis(a, b), a, b));
                }
            }
        }
        let (p, o, k) = (p_pool.len(), o_pool.len(), cfg.top_k);
        let quota = (7 * k).div_ceil(10);
        let want_p = p.min(quota.max(k.saturating_sub(o)));
        let want_total = k.min(p + o);

        let got = propose_pairs_detailed(&tracks, &cfg);
        ensure(got.pairs.len() == want_total, || format!("set {case}: {} pairs, want {want_total}", got.pairs.len()))?;
        let got_p: Vec<_> = got.pairs.iter().filter(|x| prio(label[&x.subject], label[&x.object])).collect();
        ensure(got_p.len() == want_p && got.prioritized_taken == want_p, || {
            format!("set {case}: k {k} P {p} O {o}: {} prioritized, want {want_p}", got_p.len())
        })?;
        // the prioritized picks are the best-covisible ones
        let mut ranked: Vec<usize> = p_pool.iter().map(|x| x.0).collect();
        ranked.sort_unstable_by(|a, b| b.cmp(a));
        let mut picked: Vec<usize> = got_p.iter().map(|x| covis(x.subject, x.object)).collect();
        picked.sort_unstable_by(|a, b| b.cmp(a));
        ensure(picked == ranked[..want_p], || format!("set {case}: prioritized picks are not the top pairs"))?;
        let unordered: BTreeSet<(u32, u32)> =
            got.pairs.iter().map(|x| (x.subject.min(x.object), x.subject.max(x.object))).collect();
        ensure(unordered.len() == got.pairs.len(), || format!("set {case}: duplicate pair"))?;
        // deterministic under input order
        let mut shuffled = tracks.clone();
        shuffled.shuffle(&mut rng);
        ensure(propose_pairs_detailed(&shuffled, &cfg) == got, || format!("set {case}: depends on track order"))?;
    }
    Ok(format!("{sets} track sets, prioritized = min(P, max(ceil(0.7k), k - O))"))
}

// ---------- 3: fusion invariants ----------

const STATIC_LABELS: [&str; 6] = ["couch", "table", "tv", "fridge", "shelf", "counter"];
const DYN_LABELS: [&str; 8] = ["couch", "table", "tv", "person", "cup", "laptop", "chair", "fridge"];

fn grid(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let steps = ((hi - lo) * 4.0) as i64;
    lo + rng.gen_range(0..=steps) as f64 * 0.25
}

fn rand_box(rng: &mut ChaCha8Rng, x0: f64, x1: f64) -> Box3 {
    let w = grid(rng, 0.25, 3.0);
    let d = grid(rng, 0.25, 3.0);
    let h = grid(rng, 0.25, 2.0);
    let x = grid(rng, x0, x1 - w);
    let y = grid(rng, 0.0, 10.0 - d);
    Box3::new([x, y, 0.0], [x + w, y + d, h]).unwrap()
}

fn rand_base(rng: &mut ChaCha8Rng) -> GlobalGraph {
    let n = rng.gen_range(1..=4);
    let regions: Vec<RegionVertex> = (0..n)
        .map(|i| {
            let (x0, x1) = (i as f64 * 10.0, (i + 1) as f64 * 10.0);
            RegionVertex::new(format!("r{i}"), format!("room{i}"), vec![[x0, 0.0], [x1, 0.0], [x1, 10.0], [x0, 10.0]])
        })
        .collect();
    let mut static_objects = Vec::new();
    let mut static_edges: Vec<StaticEdge> =
        (1..n).map(|i| StaticEdge::connectivity(&format!("r{}", i - 1), &format!("r{i}"))).collect();
    for j in 0..rng.gen_range(0..=6) {
        let r = rng.gen_range(0..n);
        let id = format!("s{j}");
        static_edges.push(StaticEdge::belonging(&id, &format!("r{r}")));
        static_objects.push(StaticObjectVertex {
            id,
            class_label: STATIC_LABELS[rng.gen_range(0..STATIC_LABELS.len())].into(),
            bbox: rand_box(rng, r as f64 * 10.0, r as f64 * 10.0 + 10.0),
            region_id: format!("r{r}"),
            merged_from: vec![],
        });
    }
    GlobalGraph { regions, static_objects, static_edges, version: 1 }
}

fn rand_sub(rng: &mut ChaCha8Rng, base: &GlobalGraph, camera: &str, end: f64) -> DynamicSubgraph {
    let width = base.regions.len() as f64 * 10.0;
    let mut sub = DynamicSubgraph::empty(camera, end - 10.0, end);
    for t in 0..rng.gen_range(0..=8u32) {
        let b = match base.static_objects.choose(rng) {
            // sometimes a copy or a shifted copy of a static box
            Some(o) if rng.gen_bool(0.5) => {
                let dx = if rng.gen_bool(0.5) { 0.0 } else { grid(rng, -1.0, 1.0) };
                let moved = o.bbox.translated([dx, 0.0, 0.0]);
                if moved.min_corner[0] >= 0.0 && moved.max_corner[0] <= width {
                    moved
                } else {
                    o.bbox
                }
            }
            _ => rand_box(rng, 0.0, width),
        };
        sub.vertices.push(InstanceVertex {
            track_id: t,
            class_label: DYN_LABELS[rng.gen_range(0..DYN_LABELS.len())].into(),
            feature: Feature(vec![1.0]),
            last_footprint: Rect { x_min: 0.0, y_min: 0.0, x_max: 1.0, y_max: 1.0 },
            box3: Some(b),
            first_seen: end - 10.0,
            last_seen: end,
        });
    }
    let n = sub.vertices.len() as u32;
    for _ in 0..if n > 1 { rng.gen_range(0..n) } else { 0 } {
        let s = rng.gen_range(0..n);
        let o = (s + rng.gen_range(1..n)) % n;
        sub.edges.push(RelationEdge {
            subject_id: s,
            subject_class: sub.vertices[s as usize].class_label.clone(),
            object_id: o,
            object_class: sub.vertices[o as usize].class_label.clone(),
            predicate: "near".into(),
            spans: vec![Span::new(end - 10.0, end)],
            score: 0.9,
        });
    }
    sub
}

fn min_volume_overlap(a: &Box3, b: &Box3) -> f64 {
    let mut inter = 1.0;
    for i in 0..3 {
        inter *= (a.max_corner[i].min(b.max_corner[i]) - a.min_corner[i].max(b.min_corner[i])).max(0.0);
    }
    let vol = |x: &Box3| (0..3).map(|i| x.max_corner[i] - x.min_corner[i]).product::<f64>();
    inter / vol(a).min(vol(b))
}

fn components_oracle(sub: &DynamicSubgraph) -> BTreeMap<u32, u32> {
    let mut comp: BTreeMap<u32, u32> = sub.vertices.iter().map(|v| (v.track_id, v.track_id)).collect();
    loop {
        let mut changed = false;
        for e in &sub.edges {
            let m = comp[&e.subject_id].min(comp[&e.object_id]);
            for id in [e.subject_id, e.object_id] {
                if comp[&id] != m {
                    comp.insert(id, m);
                    changed = true;
                }
            }
        }
        if !changed {
            return comp;
        }
    }
}

fn attachment_map(snap: &UnifiedSnapshot) -> BTreeMap<(String, u32), Attachment> {
    snap.attachments().into_iter().map(|(c, t, a)| ((c, t), a)).collect()
}

/// Expected spatial attachment of each vertex at threshold `b_thr`.
fn spatial_expected(base: &GlobalGraph, sub: &DynamicSubgraph, b_thr: f64) -> Result<usize, String> {
    let mut cfg = FusionConfig { b_thr, ..FusionConfig::default() };
    cfg.mode = FusionMode::Spatial;
    let snap = fusion::tick(Arc::new(base.clone()), std::slice::from_ref(sub), &cfg, 1, sub.window_end)
        .map_err(|e| e.to_string())?;
    let att = attachment_map(&snap);
    let mut merged = 0;
    for v in &sub.vertices {
        let b = v.box3.unwrap();
        let best = base.static_objects.iter().map(|o| min_volume_overlap(&b, &o.bbox)).fold(0.0, f64::max);
        let should_merge = best > 0.0 && best >= b_thr;
        match &att[&(sub.camera_id.clone(), v.track_id)] {
            Attachment::Merged { static_id } => {
                ensure(should_merge, || format!("track {} merged at overlap {best}, b_thr {b_thr}", v.track_id))?;
                let o = base.static_object(static_id).unwrap();
                ensure(min_volume_overlap(&b, &o.bbox) == best, || {
                    format!("track {} merged into a weaker match", v.track_id)
                })?;
                merged += 1;
            }
            Attachment::Anchored { region_id } => {
                ensure(!should_merge, || format!("track {} not merged at overlap {best}, b_thr {b_thr}", v.track_id))?;
                let cx = b.center()[0];
                let i: f64 = region_id[1..].parse().unwrap();
                ensure(cx >= i * 10.0 && cx <= i * 10.0 + 10.0, || {
                    format!("track {} anchored to {region_id}", v.track_id)
                })?;
            }
            other => return Err(format!("track {} attachment {other:?}", v.track_id)),
        }
    }
    Ok(merged)
}

fn semantic_expected(
    base: &GlobalGraph,
    sub: &DynamicSubgraph,
    snap: &UnifiedSnapshot,
    region: &str,
) -> Result<(), String> {
    let classes = FusionConfig::default().static_classes;
    let comp = components_oracle(sub);
    let target = |label: &str| {
        base.static_objects
            .iter()
            .filter(|o| o.region_id == region && o.class_label.eq_ignore_ascii_case(label))
            .map(|o| o.id.clone())
            .min()
    };
    let merged: BTreeMap<u32, String> = sub
        .vertices
        .iter()
        .filter(|v| classes.iter().any(|c| c.eq_ignore_ascii_case(&v.class_label)))
        .filter_map(|v| target(&v.class_label).map(|s| (v.track_id, s)))
        .collect();
    let att = attachment_map(snap);
    for v in &sub.vertices {
        let got = &att[&(sub.camera_id.clone(), v.track_id)];
        let want = match merged.get(&v.track_id) {
            Some(s) => Attachment::Merged { static_id: s.clone() },
            None => Attachment::Anchored { region_id: region.to_string() },
        };
        ensure(*got == want, || {
            format!("track {} (component {}): {got:?}, want {want:?}", v.track_id, comp[&v.track_id])
        })?;
    }
    // one anchor edge per component without a merge, none otherwise
    let anchored = snap.anchored().iter().find(|a| a.subgraph.camera_id == sub.camera_id).unwrap();
    let reps: BTreeSet<u32> = comp.values().copied().collect();
    let want_anchors: BTreeSet<u32> =
        reps.into_iter().filter(|r| !comp.iter().any(|(t, c)| c == r && merged.contains_key(t))).collect();
    let got_anchors: BTreeSet<u32> = anchored.anchors.iter().map(|a| a.track_id).collect();
    ensure(got_anchors == want_anchors && anchored.anchors.len() == want_anchors.len(), || {
        format!("anchors {got_anchors:?}, want {want_anchors:?}")
    })
}

fn criterion_3() -> Result<String, String> {
    ensure(FusionConfig::default().b_thr == 0.6, || "default b_thr is not 0.6".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = 500;
    // merges seen at b_thr 0.6, 0+ and 1.0
    let mut merges = [0usize; 3];
    for mode in [FusionMode::Spatial, FusionMode::Semantic] {
        for case in 0..cases {
            let base = rand_base(&mut rng);
            let frozen = base.clone();
            let base = Arc::new(base);
            let cams: Vec<String> = (0..rng.gen_range(1..=3)).map(|c| format!("cam{c}")).collect();
            let mut cfg = FusionConfig { mode, ..FusionConfig::default() };
            for c in &cams {
                cfg.camera_region.insert(c.clone(), base.regions.choose(&mut rng).unwrap().id.clone());
            }
            // a short history of ticks, each with fresh subgraphs
            let history: Vec<Vec<DynamicSubgraph>> =
                (1..=4).map(|t| cams.iter().map(|c| rand_sub(&mut rng, &base, c, t as f64 * 10.0)).collect()).collect();
            let run = |t: usize, subs: &[DynamicSubgraph]| {
                fusion::tick(Arc::clone(&base), subs, &cfg, t as u64 + 1, (t + 1) as f64 * 10.0)
            };
            let in_order: Vec<UnifiedSnapshot> = history
                .iter()
                .enumerate()
                .map(|(t, s)| run(t, s))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let mut order: Vec<usize> = (0..history.len()).collect();
            order.shuffle(&mut rng);
            for &t in &order {
                let mut subs = history[t].clone();
                subs.shuffle(&mut rng);
                let again = run(t, &subs).map_err(|e| e.to_string())?;
                ensure(again == in_order[t], || format!("{mode:?} case {case}: tick {t} depends on history or order"))?;
            }
            for (t, snap) in in_order.iter().enumerate() {
                ensure(*snap.base() == frozen && Arc::ptr_eq(snap.base_arc(), &base), || {
                    format!("{mode:?} case {case}: base graph changed")
                })?;
                let cams_in: Vec<(&str, f64)> =
                    snap.anchored().iter().map(|a| (a.subgraph.camera_id.as_str(), a.subgraph.window_end)).collect();
                let want: Vec<(&str, f64)> = cams.iter().map(|c| (c.as_str(), (t + 1) as f64 * 10.0)).collect();
                ensure(cams_in == want, || format!("{mode:?} case {case}: tick {t} carries {cams_in:?}"))?;
                for (_, _, a) in snap.attachments() {
                    ensure(matches!(a, Attachment::Merged { .. } | Attachment::Anchored { .. }), || {
                        format!("{mode:?} case {case}: attachment {a:?}")
                    })?;
                }
                for sub in &history[t] {
                    match mode {
                        FusionMode::Spatial => {
                            for (i, b_thr) in [0.6, 1e-12, 1.0].into_iter().enumerate() {
                                merges[i] += spatial_expected(&base, sub, b_thr)
                                    .map_err(|e| format!("spatial case {case}: {e}"))?;
                            }
                        }
                        FusionMode::Semantic => semantic_expected(&base, sub, snap, &cfg.camera_region[&sub.camera_id])
                            .map_err(|e| format!("semantic case {case}: {e}"))?,
                    }
                }
            }
        }
    }
    ensure(merges[1] > merges[0] && merges[0] > merges[2] && merges[2] > 0, || {
        format!("degenerate merge counts {merges:?}")
    })?;
    Ok(format!(
        "{cases} cases per mode; spatial merges at b_thr 0+/0.6/1.0: {}/{}/{}, all match the overlap oracle",
        merges[1], merges[0], merges[2]
    ))
}

// ---------- 4: static filter ----------

fn criterion_4() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let classes: BTreeSet<String> = ["couch", "fridge", "TV"].iter().map(|s| s.to_string()).collect();
    let cfg = StaticBuildConfig { v_thr: 2.0, static_classes: classes, ..StaticBuildConfig::default() };
    let labels = ["couch", "Couch", "fridge", "tv", "TV", "chair", "cup", "table", "lamp"];
    let sets = 1000;
    for case in 0..sets {
        let cands: Vec<StaticCandidate> = (0..rng.gen_range(0..30))
            .map(|i| {
                // dimensions on a quarter-meter grid hit exactly 2 m^3 now and then
                let dims: Vec<f64> = (0..3).map(|_| rng.gen_range(1..=8) as f64 * 0.25).collect();
                StaticCandidate {
                    label: labels[rng.gen_range(0..labels.len())].into(),
                    box3: Box3::new([0.0, 0.0, 0.0], [dims[0], dims[1], dims[2]]).unwrap(),
                    source: format!("c{i}"),
                }
            })
            .collect();
        let brute = |v_thr: f64| -> Vec<String> {
            cands
                .iter()
                .filter(|c| {
                    let e = c.box3.max_corner;
                    e[0] * e[1] * e[2] >= v_thr || ["couch", "fridge", "tv"].contains(&c.label.to_lowercase().as_str())
                })
                .map(|c| c.source.clone())
                .collect()
        };
        let got: Vec<String> = filter_static(&cands, &cfg).into_iter().map(|c| c.source).collect();
        ensure(got == brute(2.0), || format!("set {case}: {got:?} vs {:?}", brute(2.0)))?;
        // raising v_thr never adds a candidate
        let mut prev: Option<BTreeSet<String>> = None;
        for v_thr in [0.5, 1.0, 2.0, 4.0, 8.0, 64.0] {
            let kept: BTreeSet<String> = filter_static(&cands, &StaticBuildConfig { v_thr, ..cfg.clone() })
                .into_iter()
                .map(|c| c.source)
                .collect();
            if let Some(p) = &prev {
                ensure(kept.is_subset(p), || format!("set {case}: not monotone at v_thr {v_thr}"))?;
            }
            prev = Some(kept);
        }
    }
    Ok(format!("{sets} candidate sets match the brute-force predicate, monotone in v_thr"))
}

// ---------- 5: perfect perception ----------

fn criterion_5() -> Result<String, String> {
    let start = Instant::now();
    let cfg = EvalConfig::default();
    ensure(cfg.dynamic.window_s == 10.0 && cfg.dynamic.frame_hz == 5.0 && cfg.eval_interval_s == 60.0, || {
        "protocol defaults differ from 10 s / 5 Hz / 60 s".into()
    })?;
    let s = scenario("cafeteria.json");
    ensure(s.regions.len() == 3 && s.duration_s == 600.0, || "cafeteria is not a 3-region 10-minute run".into())?;
    let report = run_eval(&s, &cfg, None).map_err(|e| e.to_string())?;
    ensure(report.intervals.len() == 10, || format!("{} intervals", report.intervals.len()))?;
    for i in &report.intervals {
        ensure(i.v_acc == 1.0 && i.e_acc == 1.0, || format!("t={} V.Acc {:.3} E.Acc {:.3}", i.time, i.v_acc, i.e_acc))?;
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!("V.Acc = E.Acc = 1.000 at all {} intervals", report.intervals.len()))
}

// ---------- 6: noise monotonicity ----------

fn criterion_6() -> Result<String, String> {
    let start = Instant::now();
    let seeds: Vec<u64> = (1..=10).collect();
    let mut means = Vec::new();
    for dropout in [0.0, 0.3, 0.6] {
        let mut s = scenario("cafeteria.json");
        s.noise.detection_dropout = dropout;
        let reports = run_seeds(&s, &EvalConfig::default(), &seeds).map_err(|e| e.to_string())?;
        means.push(reports.iter().map(|r| r.mean_v_acc).sum::<f64>() / reports.len() as f64);
    }
    let detail = format!("mean V.Acc {:.3} / {:.3} / {:.3}", means[0], means[1], means[2]);
    ensure(means[0] - means[1] > 0.02 && means[1] - means[2] > 0.02, || detail.clone())?;
    within(start, Duration::from_secs(300))?;
    Ok(detail)
}

// ---------- 7: recall sanity ----------

fn criterion_7() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let nouns = ["person", "cup", "table", "couch", "laptop"];
    let preds = ["on", "holding", "near", "sitting on"];
    let triple = |rng: &mut ChaCha8Rng| {
        Triple::new(nouns[rng.gen_range(0..5)], preds[rng.gen_range(0..4)], nouns[rng.gen_range(0..5)])
    };
    let sets = 1000;
    for case in 0..sets {
        let gt: Vec<Triple> = (0..rng.gen_range(1..40)).map(|_| triple(&mut rng)).collect();
        let pred: Vec<ScoredTriple> = (0..rng.gen_range(0..150))
            .map(|_| ScoredTriple { triple: triple(&mut rng), score: rng.gen_range(0..10) as f64 / 10.0 })
            .collect();
        for mode in [RecallMode::Plain, RecallMode::MeanPerPredicate] {
            let r: Vec<f64> = [20, 50, 100]
                .iter()
                .map(|&k| recall_at_k(&pred, &gt, k, mode, None))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            ensure(r[0] <= r[1] && r[1] <= r[2] && r.iter().all(|x| (0.0..=1.0).contains(x)), || {
                format!("set {case} {mode:?}: {r:?}")
            })?;
        }
    }
    let syn = SynonymMap::load(&scenario_path("synonyms.json")).map_err(|e| e.to_string())?;
    let gt = [Triple::new("person", "sitting on", "sofa")];
    let pred = [ScoredTriple { triple: Triple::new("adult", "on", "couch"), score: 1.0 }];
    let with = recall_at_k(&pred, &gt, 20, RecallMode::Plain, Some(&syn)).map_err(|e| e.to_string())?;
    let without = recall_at_k(&pred, &gt, 20, RecallMode::Plain, None).map_err(|e| e.to_string())?;
    ensure(with == 1.0 && without == 0.0, || format!("synonym example: {with} with map, {without} without"))?;
    Ok(format!("R@20 <= R@50 <= R@100 on {sets} sets; \"adult on couch\" matches \"person sitting on sofa\""))
}

// ---------- 8: route planner ----------

fn region_graph(n: usize, edges: &[(usize, usize)]) -> GlobalGraph {
    let id = |i: usize| format!("r{i:02}");
    GlobalGraph {
        regions: (0..n)
            .map(|i| {
                let x = i as f64 * 2.0;
                RegionVertex::new(id(i), id(i), vec![[x, 0.0], [x + 1.0, 0.0], [x + 1.0, 1.0], [x, 1.0]])
            })
            .collect(),
        static_objects: vec![],
        static_edges: edges.iter().map(|&(a, b)| StaticEdge::connectivity(&id(a), &id(b))).collect(),
        version: 1,
    }
}

fn bfs_dist(adj: &[Vec<usize>], src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for &w in &adj[u] {
            if dist[w].is_none() {
                dist[w] = Some(dist[u].unwrap() + 1);
                q.push_back(w);
            }
        }
    }
    dist
}

/// Every shortest path from `u` to `dst`, by exhaustive extension.
fn all_shortest(
    adj: &[Vec<usize>],
    u: usize,
    dst: usize,
    left: usize,
    path: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if left == 0 {
        if u == dst {
            out.push(path.clone());
        }
        return;
    }
    for &w in &adj[u] {
        path.push(w);
        all_shortest(adj, w, dst, left - 1, path, out);
        path.pop();
    }
}

fn criterion_8() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let graphs = 200;
    let mut checked = 0;
    for case in 0..graphs {
        let n = rng.gen_range(1..=50usize);
        let p = rng.gen_range(0.5..3.0) / n as f64;
        let mut edges = Vec::new();
        let mut adj = vec![Vec::new(); n];
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(p.min(1.0)) {
                    edges.push((a, b));
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        let g = region_graph(n, &edges);
        let id = |i: usize| format!("r{i:02}");
        for _ in 0..10 {
            let (s, t) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let dist = bfs_dist(&adj, s)[t];
            let got = plan_route_with(&id(s), &id(t), &g, RouteMetric::Hops);
            match (dist, got) {
                (None, Err(Error::NoRoute { .. })) => {}
                (None, other) => return Err(format!("graph {case}: {s}->{t} unreachable but got {other:?}")),
                (Some(d), Ok(path)) => {
                    ensure(path.len() == d + 1, || format!("graph {case}: {s}->{t} length {} vs {d}", path.len() - 1))?;
                    ensure(path.first() == Some(&id(s)) && path.last() == Some(&id(t)), || {
                        format!("graph {case}: bad ends")
                    })?;
                    ensure(path.windows(2).all(|w| g.connected(&w[0], &w[1])), || {
                        format!("graph {case}: {path:?} skips an edge")
                    })?;
                    if n <= 12 {
                        let mut all = Vec::new();
                        all_shortest(&adj, s, t, d, &mut vec![s], &mut all);
                        let best = all.into_iter().map(|p| p.into_iter().map(id).collect::<Vec<_>>()).min().unwrap();
                        ensure(path == best, || format!("graph {case}: {path:?} is not the smallest of {best:?}"))?;
                    }
                }
                (Some(_), Err(e)) => return Err(format!("graph {case}: {s}->{t}: {e}")),
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} queries on {graphs} graphs match BFS distances with edge-consistent paths"))
}

// ---------- 9: end-to-end demo ----------

fn run_cli(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_hdsg")).args(args).output().map_err(|e| e.to_string())
}

fn demo_steps(log: &Path) -> Result<Vec<serde_json::Value>, String> {
    let text = std::fs::read_to_string(log).map_err(|e| e.to_string())?;
    text.lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).map_err(|e| e.to_string()))
        .filter(|v| v.as_ref().map_or(true, |v| v["event"] == "step"))
        .collect()
}

fn criterion_9() -> Result<String, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log = dir.path().join("demo.jsonl");
    let cafeteria = scenario_path("cafeteria.json");
    let out = run_cli(&["demo", "--scenario", cafeteria.to_str().unwrap(), "--log", log.to_str().unwrap()])?;
    ensure(out.status.success(), || format!("demo exited {}", out.status))?;
    let steps = demo_steps(&log)?;
    let verbs: Vec<&str> =
        steps.iter().map(|s| s["instruction"].as_str().unwrap_or("").split(' ').next().unwrap_or("")).collect();
    ensure(verbs == ["navigate", "pick", "navigate", "place"] && steps.iter().all(|s| s["status"] == "ok"), || {
        format!("steps {verbs:?}")
    })?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    ensure(stdout.contains("completed: robot in laboratory, holding nothing"), || format!("stdout: {stdout}"))?;

    let adv = scenario_path("cafeteria_adversarial.json");
    let out = run_cli(&["demo", "--scenario", adv.to_str().unwrap(), "--log", log.to_str().unwrap()])?;
    ensure(out.status.success(), || format!("adversarial demo exited {}", out.status))?;
    let steps = demo_steps(&log)?;
    let last = steps.last().ok_or("no steps logged")?;
    ensure(
        last["status"] == "failed" && last["detail"].as_str().unwrap_or("").starts_with("precondition failed"),
        || format!("last step {last}"),
    )?;
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "4-step delivery completes; adversarial run halts at step {} with `{}`",
        last["step"],
        last["detail"].as_str().unwrap_or("")
    ))
}

// ---------- 10: determinism ----------

fn read_dir_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let e = e.map_err(|e| e.to_string())?;
        out.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn criterion_10() -> Result<String, String> {
    let mut noisy = scenario("cafeteria_adversarial.json");
    noisy.noise.detection_dropout = 0.3;
    noisy.noise.box_jitter_m = 0.05;
    let cfg = EvalConfig { eval_interval_s: 20.0, ..EvalConfig::default() };
    let eval = || serde_json::to_vec(&run_eval(&noisy, &cfg, Some(7)).unwrap()).unwrap();
    ensure(eval() == eval(), || "library eval reports differ".into())?;

    let mock = MockLlm::load(&scenario_path("cafeteria.mock.json")).map_err(|e| e.to_string())?;
    let demo = || {
        let mut buf = Vec::new();
        run_demo(&noisy, Some(7), &mock, &DemoConfig::default()).unwrap().write_jsonl(&mut buf).unwrap();
        buf
    };
    ensure(demo() == demo(), || "demo logs differ".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sim = simulate(&noisy, Some(7)).map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    sim.write_to(&a, 10.0).map_err(|e| e.to_string())?;
    simulate(&noisy, Some(7)).map_err(|e| e.to_string())?.write_to(&b, 10.0).map_err(|e| e.to_string())?;
    ensure(read_dir_bytes(&a)? == read_dir_bytes(&b)?, || "simulation outputs differ".into())?;

    // the same through the binary, with a different seed producing a different report
    let adv = scenario_path("cafeteria_adversarial.json");
    let report = |name: &str, seed: &str| -> Result<Vec<u8>, String> {
        let p = dir.path().join(name);
        let out =
            run_cli(&["eval", "--scenario", adv.to_str().unwrap(), "--report", p.to_str().unwrap(), "--seed", seed])?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        std::fs::read(&p).map_err(|e| e.to_string())
    };
    ensure(report("r1.json", "11")? == report("r2.json", "11")?, || "CLI eval reports differ".into())?;
    Ok("eval reports, demo logs and simulation files are byte-identical across repeated runs".into())
}

fn main() {
    let checks: [(u32, &str, Check); 10] = [
        (1, "span consolidation oracle", criterion_1),
        (2, "pair prioritization quota", criterion_2),
        (3, "fusion invariants", criterion_3),
        (4, "static filter fidelity", criterion_4),
        (5, "perfect-perception ceiling", criterion_5),
        (6, "noise monotonicity", criterion_6),
        (7, "metric sanity", criterion_7),
        (8, "route planner oracle", criterion_8),
        (9, "end-to-end demo", criterion_9),
        (10, "determinism", criterion_10),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {id} {name}: PASS ({detail}; {secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("criterion {id} {name}: FAIL ({why}; {secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
