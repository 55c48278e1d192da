use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SkillPrimitive, TaskPlan, UnifiedSnapshot, Verb};
use crate::store::find_object;

/// A plan step that failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRejection {
    /// 1-based step number.
    pub step: usize,
    pub instruction: String,
    pub reason: String,
}

impl fmt::Display for StepRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} `{}`: {}", self.step, self.instruction, self.reason)
    }
}

// Leading bullets or numbering, the verb, then object and region split at
// the last " in ". Trailing punctuation is ignored.
static STEP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?ix)
        ^\s*
        (?: (?:[-*\u{2022}>]|\d+\s*[.):]|step\s*\d+\s*[.):]?) \s* )*
        (?:\*\*)?
        (navigate\s+to|pick(?:\s+up)?|place)
        \s+ (.+) \s+ in \s+ (.+?)
        (?:\*\*)?
        [\s.;,!]*$",
    )
    .expect("step grammar compiles")
});

/// Raw grammar-conformant steps, in order, before validation.
pub fn extract_steps(raw: &str) -> Vec<SkillPrimitive> {
    raw.lines()
        .filter_map(|line| STEP.captures(line))
        .map(|c| {
            let verb = match c[1].to_ascii_lowercase().split_whitespace().next() {
                Some("navigate") => Verb::Navigate,
                Some("pick") => Verb::Pick,
                _ => Verb::Place,
            };
            SkillPrimitive {
                verb,
                object: trim_article(c[2].trim()).to_string(),
                region: trim_article(c[3].trim()).to_string(),
            }
        })
        .collect()
}

fn trim_article(s: &str) -> &str {
    for a in ["the ", "The ", "THE "] {
        if let Some(rest) = s.strip_prefix(a) {
            return rest.trim_start();
        }
    }
    s
}

/// Parses model output into a plan validated against `snapshot`.
///
/// Every step's region must exist; pick and place objects must be found in
/// the snapshot. Regions are normalized to their ids. The plan is accepted
/// only when every step validates.
pub fn parse_plan(raw: &str, snapshot: &UnifiedSnapshot) -> Result<TaskPlan> {
    let steps = extract_steps(raw);
    if steps.is_empty() {
        return Err(Error::NoActionablePlan);
    }
    let mut rejections = Vec::new();
    let mut valid = Vec::with_capacity(steps.len());
    for (i, mut s) in steps.into_iter().enumerate() {
        let reject = |reason: String| StepRejection { step: i + 1, instruction: s.to_string(), reason };
        let Some(region) = snapshot.base().resolve_region(&s.region) else {
            rejections.push(reject(format!("unknown region `{}`", s.region)));
            continue;
        };
        if s.verb != Verb::Navigate && find_object(&s.object, snapshot).is_empty() {
            rejections.push(reject(format!("unresolvable object `{}`", s.object)));
            continue;
        }
        s.region = region.id.clone();
        valid.push(s);
    }
    if !rejections.is_empty() {
        return Err(Error::PlanRejected(rejections));
    }
    Ok(TaskPlan { steps: valid, snapshot_tick: snapshot.tick() })
}
