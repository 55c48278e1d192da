//! Prompting, plan parsing and simulated execution for the task agent.

mod exec;
mod llm;
pub(crate) mod plan;
mod prompt;

pub use exec::{execute_plan, execute_step, ExecutionLog, Executor, Robot, StepLog, StepStatus};
pub use llm::{client_for, query_llm, HttpLlm, LlmClient, LlmEndpointConfig, MockLlm};
pub use plan::{extract_steps, parse_plan, StepRejection};
pub use prompt::{default_skills, render_prompt, PromptBundle, DEFAULT_SYSTEM_CONTEXT};
