//! End-to-end loop: simulated cameras feed the graph, the graph feeds the
//! agent, and the agent's plan runs one step per tick.

use std::io::Write;
use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};

use crate::agent::{parse_plan, render_prompt, Executor, LlmClient, Robot, StepLog, DEFAULT_SYSTEM_CONTEXT};
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, Pipeline, TickCounts};
use crate::model::{SkillPrimitive, TaskPlan};
use crate::sim::Scenario;
use crate::store::{GraphStore, DEFAULT_HISTORY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub pipeline: EvalConfig,
    pub skills: Vec<String>,
    pub system_context: String,
    pub history: usize,
    /// Stop after this many ticks; `None` runs the whole scenario.
    pub max_ticks: Option<u64>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            pipeline: EvalConfig::default(),
            skills: crate::agent::default_skills(),
            system_context: DEFAULT_SYSTEM_CONTEXT.to_string(),
            history: DEFAULT_HISTORY,
            max_ticks: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum DemoEvent {
    Tick {
        tick: u64,
        time: f64,
        #[serde(flatten)]
        counts: TickCounts,
    },
    Prompt {
        tick: u64,
        text: String,
    },
    Reply {
        tick: u64,
        text: String,
    },
    NoReply {
        tick: u64,
        reason: String,
    },
    PlanRejected {
        tick: u64,
        reasons: Vec<String>,
    },
    Plan {
        tick: u64,
        steps: Vec<SkillPrimitive>,
    },
    Step(StepLog),
    Finished {
        completed: bool,
        robot: Robot,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        failure: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoLog {
    pub events: Vec<DemoEvent>,
    pub plan: Option<TaskPlan>,
    pub completed: bool,
}

impl DemoLog {
    pub fn steps(&self) -> impl Iterator<Item = &StepLog> {
        self.events.iter().filter_map(|e| match e {
            DemoEvent::Step(s) => Some(s),
            _ => None,
        })
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Runs the scenario tick by tick. Until a plan is accepted, each tick's
/// snapshot is rendered into a prompt and sent to `llm`; missing replies,
/// replies without steps and rejected plans are logged and retried on the
/// next tick. Once accepted, the plan executes one step per tick, starting
/// on the tick it was accepted, and the loop stops when execution ends.
pub fn run_demo(scenario: &Scenario, seed: Option<u64>, llm: &dyn LlmClient, cfg: &DemoConfig) -> Result<DemoLog> {
    cfg.pipeline.validate()?;
    let pipeline = Pipeline::new(scenario, seed, &cfg.pipeline)?;
    let store = GraphStore::new(Arc::clone(&pipeline.base), cfg.history.max(1));
    let robot = Robot::at(scenario.robot_start());
    if pipeline.base.region(&robot.region).is_none() {
        return Err(Error::UnknownRegion(robot.region));
    }
    let last = cfg.max_ticks.map_or(pipeline.tick_count(), |m| m.min(pipeline.tick_count()));
    let mut events = Vec::new();
    let mut plan: Option<TaskPlan> = None;
    let mut exec: Option<Executor> = None;
    for k in 1..=last {
        store.commit(pipeline.snapshot_at(k)?)?;
        let snap = store.latest();
        events.push(DemoEvent::Tick { tick: k, time: snap.wall_time(), counts: TickCounts::of(&snap) });
        if exec.is_none() {
            let bundle = render_prompt(&snap, &cfg.skills, &cfg.system_context);
            events.push(DemoEvent::Prompt { tick: k, text: bundle.rendered.clone() });
            let reply = match llm.complete(&bundle) {
                Ok(r) => r,
                Err(e @ (Error::MockMissing(_) | Error::LlmExhausted { .. } | Error::LlmStatus { .. })) => {
                    events.push(DemoEvent::NoReply { tick: k, reason: e.to_string() });
                    continue;
                }
                Err(e) => return Err(e),
            };
            events.push(DemoEvent::Reply { tick: k, text: reply.clone() });
            match parse_plan(&reply, &snap) {
                Ok(p) => {
                    info!("tick {k}: accepted {}-step plan", p.steps.len());
                    events.push(DemoEvent::Plan { tick: k, steps: p.steps.clone() });
                    exec = Some(Executor::new(p.clone(), robot.clone()));
                    plan = Some(p);
                }
                Err(Error::NoActionablePlan) => {
                    events.push(DemoEvent::NoReply { tick: k, reason: Error::NoActionablePlan.to_string() });
                    continue;
                }
                Err(Error::PlanRejected(r)) => {
                    events
                        .push(DemoEvent::PlanRejected { tick: k, reasons: r.iter().map(|s| s.to_string()).collect() });
                    continue;
                }
                Err(e) => return Err(e),
            }
        }
        let ex = exec.as_mut().expect("executor set above");
        if let Some(s) = ex.step(&snap) {
            events.push(DemoEvent::Step(s.clone()));
        }
        if ex.is_done() {
            break;
        }
    }
    let (completed, robot, failure) = match exec {
        Some(ex) => {
            let log = ex.finish();
            let failure = log.failure().map(|f| f.detail.clone());
            (log.completed, log.robot, failure)
        }
        None => (false, robot, Some("no plan accepted".to_string())),
    };
    events.push(DemoEvent::Finished { completed, robot, failure });
    Ok(DemoLog { events, plan, completed })
}
