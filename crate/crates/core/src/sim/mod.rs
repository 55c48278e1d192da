//! Scripted scenario simulator: perception streams plus ground truth.
//!
//! Cameras watch whole regions and see every present object whose center
//! lies inside. Image rectangles are a top-down projection at
//! [`PIXELS_PER_M`]. Noise draws come from one seeded stream in a fixed
//! order, so a given scenario and seed always produce the same output.

mod scenario;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use scenario::{Action, Event, Noise, Scenario, ScenarioCamera, ScenarioObject};

use crate::dynamic::{CameraStream, StreamRecord};
use crate::error::{Error, Result};
use crate::model::{Box3, Detection, Feature, FrameObservation, Polygon, Pose, Rect, RegionVertex, RelationCandidate};
use crate::static_graph::{assign_region, build_connectivity, Doorway, StaticBuildConfig};

pub const PIXELS_PER_M: f64 = 50.0;
pub const DETECTION_SCORE: f64 = 0.9;
pub const RELATION_CONFIDENCE: f64 = 0.9;
const MIN_FEATURE_DIM: usize = 16;

#[derive(Debug, Clone)]
struct Motion {
    from: [f64; 3],
    to: [f64; 3],
    t0: f64,
    duration: f64,
}

impl Motion {
    fn at_rest(c: [f64; 3]) -> Self {
        Motion { from: c, to: c, t0: 0.0, duration: 0.0 }
    }

    fn center(&self, t: f64) -> [f64; 3] {
        if self.duration <= 0.0 || t >= self.t0 + self.duration {
            return self.to;
        }
        let a = ((t - self.t0) / self.duration).clamp(0.0, 1.0);
        std::array::from_fn(|i| self.from[i] + a * (self.to[i] - self.from[i]))
    }
}

#[derive(Debug, Clone)]
struct ObjState {
    label: String,
    extents: [f64; 3],
    motion: Motion,
    is_static: bool,
}

/// Scenario state replayed forward in time.
struct World<'a> {
    scenario: &'a Scenario,
    next_event: usize,
    objects: BTreeMap<String, ObjState>,
    relations: BTreeSet<(String, String, String)>,
}

impl<'a> World<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        let objects = scenario
            .objects
            .iter()
            .map(|o| {
                (
                    o.id.clone(),
                    ObjState {
                        label: o.label.clone(),
                        extents: o.bbox.extents(),
                        motion: Motion::at_rest(o.bbox.center()),
                        is_static: o.is_static,
                    },
                )
            })
            .collect();
        World { scenario, next_event: 0, objects, relations: BTreeSet::new() }
    }

    /// Applies every event with `time <= t`.
    fn advance(&mut self, t: f64) {
        while let Some(e) = self.scenario.timeline.get(self.next_event) {
            if e.time > t {
                break;
            }
            self.next_event += 1;
            match &e.action {
                Action::Appear { object, label, bbox } => {
                    self.objects.insert(
                        object.clone(),
                        ObjState {
                            label: label.clone(),
                            extents: bbox.extents(),
                            motion: Motion::at_rest(bbox.center()),
                            is_static: false,
                        },
                    );
                }
                Action::Move { object, to, duration } => {
                    if let Some(o) = self.objects.get_mut(object) {
                        let from = o.motion.center(e.time);
                        o.motion = Motion { from, to: *to, t0: e.time, duration: *duration };
                    }
                }
                Action::Remove { object } => {
                    self.objects.remove(object);
                }
                Action::RelationStart { subject, predicate, object } => {
                    self.relations.insert((subject.clone(), predicate.clone(), object.clone()));
                }
                Action::RelationStop { subject, predicate, object } => {
                    self.relations.remove(&(subject.clone(), predicate.clone(), object.clone()));
                }
            }
        }
    }

    fn true_box(&self, id: &str, t: f64) -> Option<Box3> {
        self.objects.get(id).map(|o| Box3::centered(o.motion.center(t), o.extents))
    }

    /// Present objects whose center lies in `region`, sorted by id.
    fn visible_in(&self, region: &RegionVertex, t: f64) -> Vec<(String, Box3)> {
        self.objects
            .keys()
            .filter_map(|id| {
                let b = self.true_box(id, t)?;
                let c = b.center();
                Polygon(&region.footprint).contains([c[0], c[1]]).then(|| (id.clone(), b))
            })
            .collect()
    }
}

/// What was really in view of one camera in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewTruth {
    pub camera_id: String,
    pub visible: Vec<(String, Box3)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub time: f64,
    pub views: Vec<ViewTruth>,
    pub relations: Vec<(String, String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtVertex {
    pub id: String,
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: Box3,
    pub region_id: String,
    pub is_static: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GtRelation {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

/// Ground truth for one window `[window_start, window_end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickTruth {
    pub tick: u64,
    pub window_start: f64,
    pub window_end: f64,
    pub vertices: Vec<GtVertex>,
    pub connectivity: Vec<(String, String)>,
    pub relations: Vec<GtRelation>,
}

impl TickTruth {
    pub fn vertex(&self, id: &str) -> Option<&GtVertex> {
        self.vertices.iter().find(|v| v.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub window_s: f64,
    pub ticks: Vec<TickTruth>,
}

/// Everything one simulation run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub scenario: Scenario,
    pub seed: u64,
    pub regions: Vec<RegionVertex>,
    pub doorways: Vec<Doorway>,
    /// Posed frames from a per-region scanner at the start of the run.
    pub scan: Vec<FrameObservation>,
    pub streams: BTreeMap<String, CameraStream>,
    pub frames: Vec<FrameTruth>,
    statics: Vec<(String, String, Box3)>,
}

/// Deterministic appearance feature per object: near one-hot, so distinct
/// objects are close to orthogonal.
fn object_features(ids: &[String]) -> BTreeMap<String, Feature> {
    let dim = ids.len().max(MIN_FEATURE_DIM);
    ids.iter()
        .enumerate()
        .map(|(i, id)| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f00d ^ i as u64);
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.05..0.05)).collect();
            v[i % dim] += 1.0;
            (id.clone(), Feature(v))
        })
        .collect()
}

fn top_down_rect(b: &Box3) -> Rect {
    Rect {
        x_min: b.min_corner[0] * PIXELS_PER_M,
        y_min: b.min_corner[1] * PIXELS_PER_M,
        x_max: b.max_corner[0] * PIXELS_PER_M,
        y_max: b.max_corner[1] * PIXELS_PER_M,
    }
}

struct Noiser<'a> {
    rng: ChaCha8Rng,
    noise: &'a Noise,
    vocab: Vec<String>,
}

impl Noiser<'_> {
    /// Noisy detection of a true object, or `None` when dropped. Always
    /// consumes the same number of draws.
    fn observe(&mut self, label: &str, truth: &Box3) -> Option<(String, Box3)> {
        let drop: f64 = self.rng.gen();
        let flip: f64 = self.rng.gen();
        let pick = self.rng.gen_range(0..self.vocab.len().max(1));
        let j: [f64; 3] = std::array::from_fn(|_| self.rng.gen_range(-1.0..=1.0));
        if drop < self.noise.detection_dropout {
            return None;
        }
        let mut label = label.to_string();
        if flip < self.noise.label_flip && self.vocab.len() > 1 {
            let mut other = &self.vocab[pick];
            if *other == label {
                other = &self.vocab[(pick + 1) % self.vocab.len()];
            }
            label = other.clone();
        }
        let s = self.noise.box_jitter_m;
        Some((label, truth.translated([j[0] * s, j[1] * s, j[2] * s])))
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Runs the scenario. `seed` overrides the scenario's noise seed.
pub fn simulate(scenario: &Scenario, seed: Option<u64>) -> Result<SimOutput> {
    scenario.validate()?;
    let seed = seed.unwrap_or(scenario.noise.rng_seed);
    let mut noiser =
        Noiser { rng: ChaCha8Rng::seed_from_u64(seed), noise: &scenario.noise, vocab: scenario.label_vocabulary() };
    let regions = scenario.region_vertices();
    let region_of: BTreeMap<&str, &RegionVertex> = regions.iter().map(|r| (r.id.as_str(), r)).collect();
    let features = object_features(&scenario.object_ids());
    let make_det = |id: &str, label: String, b: Box3, cam_pos: [f64; 3], posed: bool| Detection {
        label,
        score: DETECTION_SCORE,
        feature: features[id].clone(),
        rect: top_down_rect(&b),
        depth_m: Some(distance(cam_pos, b.center())),
        box3: posed.then_some(b),
    };

    let mut world = World::new(scenario);
    world.advance(0.0);

    // static scan: one posed scanner per region at its centroid
    let mut scan = Vec::new();
    let mut sorted_regions: Vec<&RegionVertex> = regions.iter().collect();
    sorted_regions.sort_by(|a, b| a.id.cmp(&b.id));
    for r in &sorted_regions {
        let pose = Pose::identity_at([r.centroid[0], r.centroid[1], 1.5]);
        for i in 0..scenario.scan_frames {
            let t = i as f64 / scenario.frame_hz;
            let mut detections = Vec::new();
            for (id, b) in world.visible_in(r, 0.0) {
                let label = world.objects[&id].label.clone();
                if let Some((l, nb)) = noiser.observe(&label, &b) {
                    detections.push(make_det(&id, l, nb, pose.position, true));
                }
            }
            scan.push(FrameObservation { camera_id: format!("scan/{}", r.id), time: t, pose: Some(pose), detections });
        }
    }
    let statics: Vec<(String, String, Box3)> = world
        .objects
        .iter()
        .filter(|(_, o)| o.is_static)
        .map(|(id, o)| (id.clone(), o.label.clone(), Box3::centered(o.motion.center(0.0), o.extents)))
        .collect();

    let mut cameras: Vec<&ScenarioCamera> = scenario.cameras.iter().collect();
    cameras.sort_by(|a, b| a.id.cmp(&b.id));
    let mut streams: BTreeMap<String, CameraStream> = cameras
        .iter()
        .map(|c| (c.id.clone(), CameraStream { camera_id: c.id.clone(), ..Default::default() }))
        .collect();
    let mut frames = Vec::with_capacity(scenario.frame_count());
    for j in 0..scenario.frame_count() {
        let t = j as f64 / scenario.frame_hz;
        world.advance(t);
        let relations: Vec<(String, String, String)> = world.relations.iter().cloned().collect();
        let mut views = Vec::new();
        for c in &cameras {
            let region = region_of[c.region.as_str()];
            let cam_pos = c.pose.map_or([region.centroid[0], region.centroid[1], 2.5], |p| p.position);
            let visible = world.visible_in(region, t);
            let mut detections = Vec::new();
            let mut index: BTreeMap<&str, u32> = BTreeMap::new();
            for (id, b) in &visible {
                if let Some((l, nb)) = noiser.observe(&world.objects[id].label, b) {
                    index.insert(id, detections.len() as u32);
                    detections.push(make_det(id, l, nb, cam_pos, c.pose.is_some()));
                }
            }
            let stream = streams.get_mut(&c.id).expect("stream per camera");
            for (s, p, o) in &relations {
                if let (Some(&si), Some(&oi)) = (index.get(s.as_str()), index.get(o.as_str())) {
                    stream.candidates.push(RelationCandidate {
                        time: t,
                        subject_track: si,
                        object_track: oi,
                        predicate: p.clone(),
                        confidence: RELATION_CONFIDENCE,
                    });
                }
            }
            stream.push_frame(FrameObservation { camera_id: c.id.clone(), time: t, pose: c.pose, detections })?;
            views.push(ViewTruth { camera_id: c.id.clone(), visible });
        }
        frames.push(FrameTruth { time: t, views, relations });
    }

    Ok(SimOutput {
        scenario: scenario.clone(),
        seed,
        regions,
        doorways: scenario.doorways.clone(),
        scan,
        streams,
        frames,
        statics,
    })
}

impl SimOutput {
    pub fn tick_count(&self, window_s: f64) -> u64 {
        (self.scenario.duration_s / window_s + 1e-9).floor() as u64
    }

    /// Ground truth for the window ending at `tick * window_s`.
    ///
    /// Static objects always count. A dynamic object counts when some camera
    /// saw it in the window; its box is the one at its last sighting. A
    /// relation counts when it was active in a frame where one camera saw
    /// both endpoints.
    pub fn truth_at(&self, tick: u64, window_s: f64) -> Result<TickTruth> {
        let end = tick as f64 * window_s;
        let start = end - window_s;
        let cfg = StaticBuildConfig::default();
        let (conn, _) = build_connectivity(&self.regions, &self.doorways, cfg.connectivity_gap_m);
        let connectivity = conn.into_iter().map(|e| (e.a, e.b)).collect();

        let mut vertices = Vec::new();
        for (id, label, b) in &self.statics {
            vertices.push(GtVertex {
                id: id.clone(),
                label: label.clone(),
                bbox: *b,
                region_id: assign_region(b, &self.regions)?.id.clone(),
                is_static: true,
            });
        }
        let static_ids: BTreeSet<&str> = self.statics.iter().map(|s| s.0.as_str()).collect();
        let mut last_seen: BTreeMap<&str, Box3> = BTreeMap::new();
        let mut relations = BTreeSet::new();
        let lo = self.frames.partition_point(|f| f.time < start);
        let hi = self.frames.partition_point(|f| f.time < end);
        for f in &self.frames[lo..hi] {
            for v in &f.views {
                for (id, b) in &v.visible {
                    last_seen.insert(id, *b);
                }
                let seen: BTreeSet<&str> = v.visible.iter().map(|(id, _)| id.as_str()).collect();
                for (s, p, o) in &f.relations {
                    if seen.contains(s.as_str()) && seen.contains(o.as_str()) {
                        relations.insert(GtRelation { subject: s.clone(), predicate: p.clone(), object: o.clone() });
                    }
                }
            }
        }
        let labels = self.labels();
        for (id, b) in last_seen {
            if static_ids.contains(id) {
                continue;
            }
            vertices.push(GtVertex {
                id: id.to_string(),
                label: labels[id].clone(),
                bbox: b,
                region_id: assign_region(&b, &self.regions)?.id.clone(),
                is_static: false,
            });
        }
        Ok(TickTruth {
            tick,
            window_start: start,
            window_end: end,
            vertices,
            connectivity,
            relations: relations.into_iter().collect(),
        })
    }

    pub fn ground_truth(&self, window_s: f64) -> Result<GroundTruth> {
        let ticks = (1..=self.tick_count(window_s)).map(|k| self.truth_at(k, window_s)).collect::<Result<_>>()?;
        Ok(GroundTruth { window_s, ticks })
    }

    fn labels(&self) -> BTreeMap<&str, String> {
        let mut out: BTreeMap<&str, String> =
            self.scenario.objects.iter().map(|o| (o.id.as_str(), o.label.clone())).collect();
        for e in &self.scenario.timeline {
            if let Action::Appear { object, label, .. } = &e.action {
                out.insert(object.as_str(), label.clone());
            }
        }
        out
    }

    /// Writes `scan.jsonl`, `stream.<camera>.jsonl`, `regions.json`,
    /// `doorways.json` and `truth.json` into `dir`.
    pub fn write_to(&self, dir: &Path, window_s: f64) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: Vec<u8>| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
        };
        let jsonl = |records: &mut dyn Iterator<Item = serde_json::Result<String>>| -> Result<Vec<u8>> {
            let mut buf = Vec::new();
            for r in records {
                writeln!(buf, "{}", r?).expect("writing to a Vec cannot fail");
            }
            Ok(buf)
        };
        write("scan.jsonl", jsonl(&mut self.scan.iter().map(serde_json::to_string))?)?;
        for (cam, s) in &self.streams {
            let records: Vec<StreamRecord> = s.to_records();
            write(
                &format!("stream.{}.jsonl", cam.replace('/', "_")),
                jsonl(&mut records.iter().map(serde_json::to_string))?,
            )?;
        }
        write("regions.json", serde_json::to_vec_pretty(&self.scenario.regions)?)?;
        write("doorways.json", serde_json::to_vec_pretty(&self.doorways)?)?;
        write("truth.json", serde_json::to_vec_pretty(&self.ground_truth(window_s)?)?)?;
        Ok(())
    }
}
