use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{
    edge_accuracy, match_vertices, recall_at_k, snapshot_triples, truth_triples, vertex_accuracy, GraphView,
    RecallMode, SynonymMap, VertexMatchConfig,
};
use crate::dynamic::DynamicConfig;
use crate::error::{Error, Result};
use crate::fusion::{self, FusionConfig};
use crate::model::{FusionMode, GlobalGraph, UnifiedSnapshot};
use crate::sim::{simulate, Scenario, SimOutput};
use crate::static_graph::{build_static_graph, StaticBuildConfig};

fn default_interval() -> f64 {
    60.0
}

fn default_ks() -> Vec<usize> {
    vec![20, 50, 100]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default)]
    pub dynamic: DynamicConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub static_build: StaticBuildConfig,
    #[serde(default = "default_interval")]
    pub eval_interval_s: f64,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default)]
    pub vertex_match: VertexMatchConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synonyms: Option<SynonymMap>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            dynamic: DynamicConfig::default(),
            fusion: FusionConfig::default(),
            static_build: StaticBuildConfig::default(),
            eval_interval_s: default_interval(),
            ks: default_ks(),
            vertex_match: VertexMatchConfig::default(),
            synonyms: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.dynamic.validate()?;
        self.fusion.validate()?;
        self.static_build.validate()?;
        let ratio = self.eval_interval_s / self.dynamic.window_s;
        if !(ratio >= 1.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::invalid("eval_interval_s must be a positive multiple of window_s"));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::invalid("ks must be non-empty and positive"));
        }
        if let Some(s) = &self.synonyms {
            s.validate()?;
        }
        Ok(())
    }
}

/// Simulation plus the static graph built from its scan, ready to produce
/// fused snapshots tick by tick.
pub struct Pipeline {
    pub sim: SimOutput,
    pub base: Arc<GlobalGraph>,
    pub dynamic: DynamicConfig,
    pub fusion: FusionConfig,
}

impl Pipeline {
    pub fn new(scenario: &Scenario, seed: Option<u64>, cfg: &EvalConfig) -> Result<Self> {
        let sim = simulate(scenario, seed)?;
        let base = build_static_graph(&sim.scan, &sim.regions, &sim.doorways, &cfg.static_build)?;
        let mut dynamic = cfg.dynamic.clone();
        dynamic.frame_hz = scenario.frame_hz;
        let mut fusion = cfg.fusion.clone();
        if fusion.mode == FusionMode::Semantic {
            for c in &scenario.cameras {
                fusion.camera_region.entry(c.id.clone()).or_insert_with(|| c.region.clone());
            }
        }
        Ok(Pipeline { sim, base: Arc::new(base), dynamic, fusion })
    }

    pub fn tick_count(&self) -> u64 {
        self.sim.tick_count(self.dynamic.window_s)
    }

    pub fn snapshot_at(&self, tick: u64) -> Result<UnifiedSnapshot> {
        let subs =
            self.sim.streams.values().map(|s| s.subgraph_at_tick(tick, &self.dynamic)).collect::<Result<Vec<_>>>()?;
        fusion::tick(self.base.clone(), &subs, &self.fusion, tick, tick as f64 * self.dynamic.window_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics {
    pub tick: u64,
    pub time: f64,
    pub v_acc: f64,
    pub e_acc: f64,
    /// `R@K` and `mR@K`; absent when the window has no GT relations.
    pub recall: BTreeMap<String, Option<f64>>,
    pub pred_vertices: usize,
    pub gt_vertices: usize,
    pub pred_edges: usize,
    pub gt_edges: usize,
}

/// Graph size at one tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickCounts {
    pub tick: u64,
    pub static_vertices: usize,
    pub dynamic_vertices: usize,
    pub relation_edges: usize,
    pub merges: usize,
}

impl TickCounts {
    pub fn of(snap: &UnifiedSnapshot) -> Self {
        TickCounts {
            tick: snap.tick(),
            static_vertices: snap.base().static_objects.len(),
            dynamic_vertices: snap.anchored().iter().map(|a| a.subgraph.vertices.len()).sum(),
            relation_edges: snap.anchored().iter().map(|a| a.subgraph.edges.len()).sum(),
            merges: snap.merges().len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub seed: u64,
    pub mode: FusionMode,
    pub window_s: f64,
    pub frame_hz: f64,
    pub intervals: Vec<IntervalMetrics>,
    pub ticks: Vec<TickCounts>,
    pub mean_v_acc: f64,
    pub mean_e_acc: f64,
}

impl EvalReport {
    /// One row per interval: tick, time, V.Acc, E.Acc, then recall columns.
    pub fn to_csv(&self) -> String {
        let keys: Vec<&String> = self.intervals.first().map(|i| i.recall.keys().collect()).unwrap_or_default();
        let mut out = String::from("tick,time,v_acc,e_acc");
        for k in &keys {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for i in &self.intervals {
            out.push_str(&format!("{},{},{:.6},{:.6}", i.tick, i.time, i.v_acc, i.e_acc));
            for k in &keys {
                match i.recall.get(*k).copied().flatten() {
                    Some(r) => out.push_str(&format!(",{r:.6}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width table of graph sizes per tick.
    pub fn counts_table(&self) -> String {
        let mut out = format!("{:>5} {:>7} {:>8} {:>9} {:>7}\n", "tick", "static", "dynamic", "relations", "merges");
        for t in &self.ticks {
            out.push_str(&format!(
                "{:>5} {:>7} {:>8} {:>9} {:>7}\n",
                t.tick, t.static_vertices, t.dynamic_vertices, t.relation_edges, t.merges
            ));
        }
        out
    }
}

pub fn score_snapshot(
    snap: &UnifiedSnapshot,
    truth: &crate::sim::TickTruth,
    cfg: &EvalConfig,
) -> Result<IntervalMetrics> {
    let pred = GraphView::from_snapshot(snap);
    let gt = GraphView::from_truth(truth);
    let matching = match_vertices(&pred, &gt, &cfg.vertex_match);
    let triples = snapshot_triples(snap);
    let gt_triples = truth_triples(truth);
    let mut recall = BTreeMap::new();
    for &k in &cfg.ks {
        for (name, mode) in [("R", RecallMode::Plain), ("mR", RecallMode::MeanPerPredicate)] {
            let r = match recall_at_k(&triples, &gt_triples, k, mode, cfg.synonyms.as_ref()) {
                Ok(r) => Some(r),
                Err(Error::UndefinedRecall) => None,
                Err(e) => return Err(e),
            };
            recall.insert(format!("{name}@{k}"), r);
        }
    }
    Ok(IntervalMetrics {
        tick: snap.tick(),
        time: snap.wall_time(),
        v_acc: vertex_accuracy(&pred, &gt, &cfg.vertex_match),
        e_acc: edge_accuracy(&pred, &gt, &matching),
        recall,
        pred_vertices: pred.vertices.len(),
        gt_vertices: gt.vertices.len(),
        pred_edges: pred.edges.len(),
        gt_edges: gt.edges.len(),
    })
}

/// Simulates the scenario, runs every tick through the pipeline and scores
/// the snapshot at each evaluation interval against ground truth.
pub fn run_eval(scenario: &Scenario, cfg: &EvalConfig, seed: Option<u64>) -> Result<EvalReport> {
    cfg.validate()?;
    let p = Pipeline::new(scenario, seed, cfg)?;
    let every = (cfg.eval_interval_s / p.dynamic.window_s).round() as u64;
    let ticks: Vec<u64> = (1..=p.tick_count()).collect();
    let snaps = ticks.par_iter().map(|&k| p.snapshot_at(k)).collect::<Result<Vec<_>>>()?;
    let mut intervals = Vec::new();
    for s in snaps.iter().filter(|s| s.tick() % every == 0) {
        let truth = p.sim.truth_at(s.tick(), p.dynamic.window_s)?;
        intervals.push(score_snapshot(s, &truth, cfg)?);
    }
    let mean = |f: fn(&IntervalMetrics) -> f64| {
        if intervals.is_empty() {
            0.0
        } else {
            intervals.iter().map(f).sum::<f64>() / intervals.len() as f64
        }
    };
    Ok(EvalReport {
        scenario: scenario.name.clone(),
        seed: p.sim.seed,
        mode: p.fusion.mode,
        window_s: p.dynamic.window_s,
        frame_hz: p.dynamic.frame_hz,
        mean_v_acc: mean(|i| i.v_acc),
        mean_e_acc: mean(|i| i.e_acc),
        ticks: snaps.iter().map(TickCounts::of).collect(),
        intervals,
    })
}

/// Independent runs over several seeds, in parallel, in seed order.
pub fn run_seeds(scenario: &Scenario, cfg: &EvalConfig, seeds: &[u64]) -> Result<Vec<EvalReport>> {
    seeds.par_iter().map(|&s| run_eval(scenario, cfg, Some(s))).collect()
}
