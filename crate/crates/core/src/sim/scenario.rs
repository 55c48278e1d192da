use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Box3, Pose, RegionVertex, Vec3};
use crate::static_graph::{parse_json, Doorway, RegionSpec};

fn default_duration() -> f64 {
    600.0
}

fn default_hz() -> f64 {
    5.0
}

fn default_scan_frames() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioObject {
    pub id: String,
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: Box3,
    /// Ground-truth flag: part of the static layer.
    #[serde(default, rename = "static")]
    pub is_static: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCamera {
    pub id: String,
    /// Region the camera watches; it sees objects whose center lies inside.
    pub region: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Appear {
        object: String,
        label: String,
        #[serde(rename = "box")]
        bbox: Box3,
    },
    /// Moves the object's center to `to`, linearly over `duration` seconds.
    Move {
        object: String,
        to: Vec3,
        #[serde(default)]
        duration: f64,
    },
    Remove {
        object: String,
    },
    RelationStart {
        subject: String,
        predicate: String,
        object: String,
    },
    RelationStop {
        subject: String,
        predicate: String,
        object: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Noise {
    pub detection_dropout: f64,
    pub label_flip: f64,
    pub box_jitter_m: f64,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_hz")]
    pub frame_hz: f64,
    pub regions: Vec<RegionSpec>,
    #[serde(default)]
    pub doorways: Vec<Doorway>,
    /// Objects present from t = 0.
    #[serde(default)]
    pub objects: Vec<ScenarioObject>,
    pub cameras: Vec<ScenarioCamera>,
    #[serde(default)]
    pub timeline: Vec<Event>,
    #[serde(default)]
    pub noise: Noise,
    /// Frames per region in the initial static scan.
    #[serde(default = "default_scan_frames")]
    pub scan_frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot_start: Option<String>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let s: Scenario = parse_json(text, source_name)?;
        s.validate()?;
        Ok(s)
    }

    pub fn region_vertices(&self) -> Vec<RegionVertex> {
        self.regions.iter().map(RegionSpec::to_vertex).collect()
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.frame_hz).round() as usize
    }

    pub fn robot_start(&self) -> String {
        self.robot_start.clone().unwrap_or_else(|| self.regions.iter().map(|r| r.id.clone()).min().unwrap_or_default())
    }

    /// Every label that occurs in the scenario, sorted.
    pub fn label_vocabulary(&self) -> Vec<String> {
        let mut v: BTreeSet<String> = self.objects.iter().map(|o| o.label.clone()).collect();
        for e in &self.timeline {
            if let Action::Appear { label, .. } = &e.action {
                v.insert(label.clone());
            }
        }
        v.into_iter().collect()
    }

    /// Object ids in first-definition order.
    pub fn object_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let appeared = self.timeline.iter().filter_map(|e| match &e.action {
            Action::Appear { object, .. } => Some(object),
            _ => None,
        });
        for id in self.objects.iter().map(|o| &o.id).chain(appeared) {
            if seen.insert(id.clone()) {
                out.push(id.clone());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(format!("scenario `{}`: {m}", self.name)));
        if !(self.duration_s > 0.0) || !(self.frame_hz > 0.0) {
            return bad("duration_s and frame_hz must be positive".into());
        }
        if self.regions.is_empty() {
            return Err(Error::NoRegions);
        }
        let regions = self.region_vertices();
        let mut region_ids = BTreeSet::new();
        for r in &regions {
            r.validate()?;
            if !region_ids.insert(r.id.as_str()) {
                return bad(format!("duplicate region `{}`", r.id));
            }
        }
        let n = &self.noise;
        for (name, p) in [("detection_dropout", n.detection_dropout), ("label_flip", n.label_flip)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("noise.{name} must lie in [0, 1]"));
            }
        }
        if !(n.box_jitter_m >= 0.0) {
            return bad("noise.box_jitter_m must be non-negative".into());
        }
        let mut cams = BTreeSet::new();
        for c in &self.cameras {
            if !region_ids.contains(c.region.as_str()) {
                return bad(format!("camera `{}` watches unknown region `{}`", c.id, c.region));
            }
            if let Some(p) = &c.pose {
                p.validate()?;
            }
            if !cams.insert(c.id.as_str()) {
                return bad(format!("duplicate camera `{}`", c.id));
            }
        }
        if let Some(r) = &self.robot_start {
            if !region_ids.contains(r.as_str()) {
                return Err(Error::UnknownRegion(r.clone()));
            }
        }

        // live: currently present; defined: ever defined
        let mut live: BTreeMap<&str, ()> = BTreeMap::new();
        let mut defined: BTreeSet<&str> = BTreeSet::new();
        for o in &self.objects {
            o.bbox.validate()?;
            if !defined.insert(&o.id) {
                return bad(format!("duplicate object `{}`", o.id));
            }
            live.insert(&o.id, ());
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, e) in self.timeline.iter().enumerate() {
            let at = format!("event {} (t={})", i + 1, e.time);
            if !(e.time >= 0.0) || e.time < prev {
                return bad(format!("{at}: events must be time-sorted and non-negative"));
            }
            prev = e.time;
            let need = |id: &str, live: &BTreeMap<&str, ()>| -> Result<()> {
                if live.contains_key(id) {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("scenario `{}`: {at}: unknown object `{id}`", self.name)))
                }
            };
            match &e.action {
                Action::Appear { object, bbox, .. } => {
                    bbox.validate()?;
                    if live.contains_key(object.as_str()) {
                        return bad(format!("{at}: object `{object}` is already present"));
                    }
                    defined.insert(object);
                    live.insert(object, ());
                }
                Action::Move { object, duration, .. } => {
                    need(object, &live)?;
                    if !(*duration >= 0.0) {
                        return bad(format!("{at}: move duration must be non-negative"));
                    }
                }
                Action::Remove { object } => {
                    need(object, &live)?;
                    live.remove(object.as_str());
                }
                Action::RelationStart { subject, object, .. } | Action::RelationStop { subject, object, .. } => {
                    for id in [subject, object] {
                        if !defined.contains(id.as_str()) {
                            return bad(format!("{at}: unknown object `{id}`"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
