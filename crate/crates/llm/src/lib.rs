//! Language-model backends for the interruption engine.
//!
//! [`ChatClient`] talks to any server implementing the OpenAI-style
//! `POST {endpoint}/chat/completions` route. [`LlmClassifier`] and
//! [`LlmPlanner`] adapt it to the engine's classifier and planner traits.
//! Calls are blocking; async drivers should run them on a blocking pool.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use bargein_core::classifier::{
    build_prompt, parse_label, ClassifierError, ClassifierRequest, ClassifierResult,
    ClassifierSource, IntentClassifier,
};
use bargein_core::planner::{PlannerError, PlannerKind, PlannerRequest, ResponsePlanner};

pub const ENV_ENDPOINT: &str = "BARGEIN_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "BARGEIN_LLM_MODEL";
pub const ENV_API_KEY: &str = "BARGEIN_LLM_API_KEY";
pub const ENV_TIMEOUT: &str = "BARGEIN_LLM_TIMEOUT_S";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_s: f64,
    pub max_tokens: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1".into(),
            model: "gpt-4o-mini".into(),
            api_key: None,
            timeout_s: 2.0,
            max_tokens: 200,
        }
    }
}

impl LlmConfig {
    /// Applies `BARGEIN_LLM_*` variables on top of `self`.
    pub fn with_env(self) -> Result<Self, LlmError> {
        self.with_vars(|k| std::env::var(k).ok())
    }

    fn with_vars(mut self, var: impl Fn(&str) -> Option<String>) -> Result<Self, LlmError> {
        if let Some(v) = var(ENV_ENDPOINT) {
            self.endpoint = v;
        }
        if let Some(v) = var(ENV_MODEL) {
            self.model = v;
        }
        if let Some(v) = var(ENV_API_KEY) {
            self.api_key = Some(v).filter(|k| !k.is_empty());
        }
        if let Some(v) = var(ENV_TIMEOUT) {
            self.timeout_s = v
                .parse()
                .map_err(|_| LlmError::Config(format!("{ENV_TIMEOUT}={v:?} is not a number")))?;
        }
        Ok(self)
    }

    fn timeout(&self) -> Result<Duration, LlmError> {
        Duration::try_from_secs_f64(self.timeout_s)
            .ok()
            .filter(|d| !d.is_zero())
            .ok_or_else(|| LlmError::Config(format!("timeout_s must be > 0, got {}", self.timeout_s)))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("model call timed out after {0:?}")]
    Timeout(Duration),
    #[error("model call failed: {0}")]
    Transport(String),
    #[error("model endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected model response: {0}")]
    Malformed(String),
}

impl From<LlmError> for ClassifierError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Timeout(d) => ClassifierError::Timeout(d),
            LlmError::Malformed(m) => ClassifierError::Malformed(m),
            other => ClassifierError::Transport(other.to_string()),
        }
    }
}

impl From<LlmError> for PlannerError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Timeout(_) => PlannerError::Timeout,
            LlmError::Malformed(m) => PlannerError::InvalidOutput(m),
            other => PlannerError::Transport(other.to_string()),
        }
    }
}

#[derive(Debug, Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ChatClient {
    http: reqwest::blocking::Client,
    cfg: LlmConfig,
    timeout: Duration,
}

impl ChatClient {
    pub fn new(cfg: LlmConfig) -> Result<Self, LlmError> {
        let timeout = cfg.timeout()?;
        if cfg.model.trim().is_empty() {
            return Err(LlmError::Config("model must not be empty".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { http, cfg, timeout })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.cfg.endpoint.trim_end_matches('/'))
    }

    /// One system + user exchange; returns the assistant text.
    pub fn complete(&self, system: &str, user: &str) -> Result<String, LlmError> {
        let body = json!({
            "model": self.cfg.model,
            "temperature": 0,
            "max_tokens": self.cfg.max_tokens,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut req = self.http.post(self.url()).json(&body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| self.transport(e))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| self.transport(e))?;
        if !status.is_success() {
            return Err(LlmError::Status {
                status: status.as_u16(),
                body: text.chars().take(200).collect(),
            });
        }
        let parsed: Completion =
            serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Malformed("no message content in response".into()))
    }

    fn transport(&self, e: reqwest::Error) -> LlmError {
        if e.is_timeout() {
            LlmError::Timeout(self.timeout)
        } else {
            LlmError::Transport(e.to_string())
        }
    }
}

const CLASSIFIER_SYSTEM: &str =
    "You label interruptions in spoken conversations. Reply with a single label word.";

#[derive(Debug, Clone)]
pub struct LlmClassifier {
    client: ChatClient,
}

impl LlmClassifier {
    pub fn new(client: ChatClient) -> Self {
        Self { client }
    }
}

impl IntentClassifier for LlmClassifier {
    fn classify(&self, req: &ClassifierRequest) -> Result<ClassifierResult, ClassifierError> {
        let started = Instant::now();
        let raw = self.client.complete(CLASSIFIER_SYSTEM, &build_prompt(req))?;
        let label = parse_label(&raw)?;
        Ok(ClassifierResult {
            label,
            source: ClassifierSource::External,
            latency: started.elapsed(),
            raw: Some(raw),
        })
    }
}

const PLANNER_SYSTEM: &str = "You are the voice of a social robot in a spoken conversation. \
     Reply with what the robot says next: plain sentences, no lists, no stage directions.";

/// User prompt for a planner request.
pub fn planner_prompt(req: &PlannerRequest) -> String {
    let history = if req.history_rendered.trim().is_empty() {
        "(no earlier conversation)"
    } else {
        req.history_rendered.trim_end()
    };
    let task = match req.kind {
        PlannerKind::ClarifyAnswer => format!(
            "The user interrupted with a question: \"{}\". Answer it in one or two short \
             sentences using what the robot has said or was about to say. Do not continue \
             the robot's planned speech; it resumes on its own afterwards.\n\
             Still planned: \"{}\"",
            req.trigger_text, req.remaining_text
        ),
        PlannerKind::WrapUp => format!(
            "The user cut in with \"{}\" very early in the robot's turn. Say that you would \
             like to finish your thought, then sum up the planned content below in one \
             sentence, then stop.\nStill planned: \"{}\"",
            req.trigger_text, req.remaining_text
        ),
        PlannerKind::NewResponse => format!(
            "The robot stopped talking to let the user speak. The user said: \"{}\". \
             Respond to it directly in at most three sentences.",
            req.trigger_text
        ),
    };
    format!("Conversation so far:\n{history}\n\n{task}")
}

#[derive(Debug, Clone)]
pub struct LlmPlanner {
    client: ChatClient,
}

impl LlmPlanner {
    pub fn new(client: ChatClient) -> Self {
        Self { client }
    }
}

impl ResponsePlanner for LlmPlanner {
    fn generate(&self, req: &PlannerRequest) -> Result<String, PlannerError> {
        let text = self.client.complete(PLANNER_SYSTEM, &planner_prompt(req))?;
        // collapse line breaks; output validation rejects control characters
        Ok(text.split_whitespace().collect::<Vec<_>>().join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides() {
        let vars = |k: &str| match k {
            ENV_MODEL => Some("local-model".to_string()),
            ENV_TIMEOUT => Some("0.5".to_string()),
            ENV_API_KEY => Some(String::new()),
            _ => None,
        };
        let cfg = LlmConfig::default().with_vars(vars).unwrap();
        assert_eq!(cfg.model, "local-model");
        assert_eq!(cfg.timeout_s, 0.5);
        assert_eq!(cfg.api_key, None);
        assert_eq!(cfg.endpoint, LlmConfig::default().endpoint);

        let bad = |k: &str| (k == ENV_TIMEOUT).then(|| "soon".to_string());
        assert!(LlmConfig::default().with_vars(bad).is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = LlmConfig {
            timeout_s: 0.0,
            ..Default::default()
        };
        assert!(matches!(ChatClient::new(cfg), Err(LlmError::Config(_))));
        let cfg = LlmConfig {
            model: " ".into(),
            ..Default::default()
        };
        assert!(ChatClient::new(cfg).is_err());
    }

    #[test]
    fn prompts_carry_the_trigger() {
        let req = PlannerRequest {
            kind: PlannerKind::WrapUp,
            history_rendered: String::new(),
            trigger_text: "no wait".into(),
            remaining_text: "Water comes next.".into(),
        };
        let p = planner_prompt(&req);
        assert!(p.contains("\"no wait\""));
        assert!(p.contains("Water comes next."));
        assert!(p.contains("(no earlier conversation)"));
    }
}
