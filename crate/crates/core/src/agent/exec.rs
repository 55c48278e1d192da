use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SkillPrimitive, TaskPlan, UnifiedSnapshot, Verb};
use crate::store::{find_object, plan_route, GraphStore};

/// Simulated robot: a region pointer and a one-object gripper.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Robot {
    pub region: String,
    pub holding: Option<String>,
}

impl Robot {
    pub fn at(region: impl Into<String>) -> Self {
        Robot { region: region.into(), holding: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub tick: u64,
    pub step: usize,
    pub instruction: String,
    pub status: StepStatus,
    pub detail: String,
    pub robot_region: String,
    pub holding: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub steps: Vec<StepLog>,
    pub completed: bool,
    pub robot: Robot,
}

impl ExecutionLog {
    pub fn failure(&self) -> Option<&StepLog> {
        self.steps.iter().find(|s| s.status == StepStatus::Failed)
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Runs one primitive against the world as seen in `snapshot`. On failure
/// the robot is left unchanged and the reason is returned.
pub fn execute_step(robot: &mut Robot, step: &SkillPrimitive, snapshot: &UnifiedSnapshot) -> Result<String, String> {
    match step.verb {
        Verb::Navigate => {
            let route = plan_route(&robot.region, &step.region, snapshot).map_err(|e| e.to_string())?;
            robot.region = route.last().cloned().unwrap_or_else(|| robot.region.clone());
            Ok(format!("route {}", route.join(" -> ")))
        }
        Verb::Pick => {
            let hits = find_object(&step.object, snapshot);
            if hits.is_empty() {
                return Err(format!("precondition failed: object not found: {}", step.object));
            }
            let Some(hit) = hits.iter().find(|h| h.region_id == robot.region) else {
                return Err(format!(
                    "precondition failed: not co-located: {} is in {}, robot is in {}",
                    step.object, hits[0].region_id, robot.region
                ));
            };
            if let Some(held) = &robot.holding {
                return Err(format!("precondition failed: gripper full: holding {held}"));
            }
            robot.holding = Some(step.object.clone());
            Ok(format!("picked {}", hit.vertex_id))
        }
        Verb::Place => {
            match &robot.holding {
                None => return Err("precondition failed: gripper empty".to_string()),
                Some(h) if !h.eq_ignore_ascii_case(&step.object) => {
                    return Err(format!("precondition failed: holding {h}, not {}", step.object))
                }
                _ => {}
            }
            let target = snapshot.base().resolve_region(&step.region).map_or(step.region.as_str(), |r| r.id.as_str());
            if target != robot.region {
                return Err(format!("precondition failed: not co-located: robot is in {}, not {target}", robot.region));
            }
            robot.holding = None;
            Ok(format!("placed {} in {}", step.object, robot.region))
        }
    }
}

/// Stepwise executor. The caller feeds one step at a time along with the
/// snapshot current at that moment; execution halts at the first failure.
#[derive(Debug, Clone)]
pub struct Executor {
    plan: TaskPlan,
    next: usize,
    robot: Robot,
    log: Vec<StepLog>,
    halted: bool,
}

impl Executor {
    pub fn new(plan: TaskPlan, robot: Robot) -> Self {
        Executor { plan, next: 0, robot, log: Vec::new(), halted: false }
    }

    pub fn is_done(&self) -> bool {
        self.halted || self.next >= self.plan.steps.len()
    }

    pub fn robot(&self) -> &Robot {
        &self.robot
    }

    /// Executes the next step; returns its log entry, or `None` when done.
    pub fn step(&mut self, snapshot: &UnifiedSnapshot) -> Option<&StepLog> {
        if self.is_done() {
            return None;
        }
        let s = &self.plan.steps[self.next];
        let (status, detail) = match execute_step(&mut self.robot, s, snapshot) {
            Ok(d) => (StepStatus::Ok, d),
            Err(d) => {
                self.halted = true;
                (StepStatus::Failed, d)
            }
        };
        self.log.push(StepLog {
            tick: snapshot.tick(),
            step: self.next + 1,
            instruction: s.to_string(),
            status,
            detail,
            robot_region: self.robot.region.clone(),
            holding: self.robot.holding.clone(),
        });
        self.next += 1;
        self.log.last()
    }

    pub fn finish(self) -> ExecutionLog {
        ExecutionLog {
            completed: !self.halted && self.next >= self.plan.steps.len(),
            steps: self.log,
            robot: self.robot,
        }
    }
}

/// Runs a whole plan against the store's latest snapshot. The snapshot the
/// plan was validated against must still be in history.
pub fn execute_plan(plan: &TaskPlan, store: &GraphStore, robot: Robot) -> Result<ExecutionLog> {
    store.get(plan.snapshot_tick)?;
    let mut ex = Executor::new(plan.clone(), robot);
    while !ex.is_done() {
        let snap = store.latest();
        ex.step(&snap);
    }
    let log = ex.finish();
    if log.steps.is_empty() && !plan.steps.is_empty() {
        return Err(Error::invalid("executor produced no steps"));
    }
    Ok(log)
}
