use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::PromptBundle;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmEndpointConfig {
    pub url: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
    pub mock_script: Option<PathBuf>,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        LlmEndpointConfig {
            url: "http://127.0.0.1:8080/generate".into(),
            timeout_s: 30.0,
            max_retries: 2,
            backoff_ms: 250,
            mock_script: None,
        }
    }
}

pub trait LlmClient {
    fn complete(&self, bundle: &PromptBundle) -> Result<String>;
}

/// Scripted replies keyed by snapshot tick; `"*"` is the fallback.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockLlm {
    pub replies: BTreeMap<String, String>,
}

impl MockLlm {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        crate::static_graph::parse_json(&text, &path.display().to_string())
    }

    pub fn reply_for(&self, tick: u64) -> Option<&str> {
        self.replies.get(&tick.to_string()).or_else(|| self.replies.get("*")).map(String::as_str)
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, bundle: &PromptBundle) -> Result<String> {
        self.reply_for(bundle.snapshot_tick).map(str::to_string).ok_or(Error::MockMissing(bundle.snapshot_tick))
    }
}

pub struct HttpLlm {
    cfg: LlmEndpointConfig,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct Request<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct Reply {
    text: String,
}

enum Failure {
    Retry(String),
    Fatal(Error),
}

impl HttpLlm {
    pub fn new(cfg: LlmEndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s.max(0.001))))
            .build()
            .into();
        HttpLlm { cfg, agent }
    }

    fn attempt(&self, prompt: &str) -> std::result::Result<String, Failure> {
        match self.agent.post(&self.cfg.url).send_json(Request { prompt }) {
            Ok(mut resp) => resp
                .body_mut()
                .read_json::<Reply>()
                .map(|r| r.text)
                .map_err(|e| Failure::Fatal(Error::Service(format!("malformed llm reply: {e}")))),
            Err(ureq::Error::StatusCode(s)) if s >= 500 => Err(Failure::Retry(format!("HTTP {s}"))),
            Err(ureq::Error::StatusCode(s)) => Err(Failure::Fatal(Error::LlmStatus { status: s })),
            Err(e) => Err(Failure::Retry(e.to_string())),
        }
    }
}

impl LlmClient for HttpLlm {
    /// Posts the prompt, retrying transport failures and 5xx replies with
    /// exponential backoff. Other HTTP errors fail immediately.
    fn complete(&self, bundle: &PromptBundle) -> Result<String> {
        let attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for n in 0..attempts {
            if n > 0 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (n - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&bundle.rendered) {
                Ok(text) => {
                    info!("llm replied on attempt {}", n + 1);
                    return Ok(text);
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(msg)) => {
                    warn!("llm attempt {} failed: {msg}", n + 1);
                    last = msg;
                }
            }
        }
        Err(Error::LlmExhausted { attempts, message: last })
    }
}

/// Client selected by `cfg`: the mock when a script is set, else HTTP.
pub fn client_for(cfg: &LlmEndpointConfig) -> Result<Box<dyn LlmClient>> {
    Ok(match &cfg.mock_script {
        Some(p) => Box::new(MockLlm::load(p)?),
        None => Box::new(HttpLlm::new(cfg.clone())),
    })
}

pub fn query_llm(bundle: &PromptBundle, cfg: &LlmEndpointConfig) -> Result<String> {
    client_for(cfg)?.complete(bundle)
}
