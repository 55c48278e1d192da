//! Run configuration: defaults, then a config file, then `HDSG_*`
//! environment variables, then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hdsg_core::agent::LlmEndpointConfig;
use hdsg_core::dynamic::DynamicConfig;
use hdsg_core::eval::{EvalConfig, SynonymMap, VertexMatchConfig};
use hdsg_core::fusion::FusionConfig;
use hdsg_core::static_graph::StaticBuildConfig;
use hdsg_core::store::DEFAULT_HISTORY;
use hdsg_core::{Error, FusionMode, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub dynamic: DynamicConfig,
    pub fusion: FusionConfig,
    pub static_build: StaticBuildConfig,
    pub eval_interval_s: f64,
    pub ks: Vec<usize>,
    pub vertex_match: VertexMatchConfig,
    /// Synonym groups file for relation recall.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synonyms: Option<PathBuf>,
    pub llm: LlmEndpointConfig,
    pub history: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robot_start: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = EvalConfig::default();
        RunConfig {
            seed: None,
            dynamic: e.dynamic,
            fusion: e.fusion,
            static_build: e.static_build,
            eval_interval_s: e.eval_interval_s,
            ks: e.ks,
            vertex_match: e.vertex_match,
            synonyms: None,
            llm: LlmEndpointConfig::default(),
            history: DEFAULT_HISTORY,
            robot_start: None,
        }
    }
}

/// Environment variables read on top of the config file.
pub const ENV_VARS: [&str; 10] = [
    "HDSG_SEED",
    "HDSG_WINDOW_S",
    "HDSG_FRAME_HZ",
    "HDSG_TOP_K",
    "HDSG_V_THR",
    "HDSG_B_THR",
    "HDSG_FUSION_MODE",
    "HDSG_EVAL_INTERVAL_S",
    "HDSG_HISTORY",
    "HDSG_LLM_ENDPOINT",
];

fn parse_env<T: std::str::FromStr>(name: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::invalid(format!("environment variable {name}: cannot parse `{value}`")))
}

pub fn parse_mode(s: &str) -> Result<FusionMode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "spatial" => Ok(FusionMode::Spatial),
        "semantic" => Ok(FusionMode::Semantic),
        other => Err(Error::invalid(format!("unknown fusion mode `{other}` (spatial|semantic)"))),
    }
}

impl RunConfig {
    /// Reads a TOML or JSON file, chosen by extension (`.toml` is TOML,
    /// anything else JSON).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Parse {
                source_name: name,
                line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
                message: e.message().to_string(),
            })
        } else {
            hdsg_core::static_graph::parse_json(&text, &name)
        }
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        for name in ENV_VARS {
            let Some(v) = get(name) else { continue };
            match name {
                "HDSG_SEED" => self.seed = Some(parse_env(name, &v)?),
                "HDSG_WINDOW_S" => self.dynamic.window_s = parse_env(name, &v)?,
                "HDSG_FRAME_HZ" => self.dynamic.frame_hz = parse_env(name, &v)?,
                "HDSG_TOP_K" => self.dynamic.top_k = parse_env(name, &v)?,
                "HDSG_V_THR" => self.static_build.v_thr = parse_env(name, &v)?,
                "HDSG_B_THR" => self.fusion.b_thr = parse_env(name, &v)?,
                "HDSG_FUSION_MODE" => self.fusion.mode = parse_mode(&v)?,
                "HDSG_EVAL_INTERVAL_S" => self.eval_interval_s = parse_env(name, &v)?,
                "HDSG_HISTORY" => self.history = parse_env(name, &v)?,
                "HDSG_LLM_ENDPOINT" => self.llm.url = v,
                _ => unreachable!("listed above"),
            }
        }
        Ok(())
    }

    /// Defaults, file and environment; flags are applied by the caller.
    pub fn resolve(file: Option<&Path>, get_env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(get_env)?;
        Ok(cfg)
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        let synonyms = self.synonyms.as_deref().map(SynonymMap::load).transpose()?;
        let cfg = EvalConfig {
            dynamic: self.dynamic.clone(),
            fusion: self.fusion.clone(),
            static_build: self.static_build.clone(),
            eval_interval_s: self.eval_interval_s,
            ks: self.ks.clone(),
            vertex_match: self.vertex_match,
            synonyms,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.eval_config()?;
        if self.history == 0 {
            return Err(Error::invalid("history must be at least 1"));
        }
        Ok(())
    }
}
