//! Response generation behind clarify-and-continue, ack-and-wrap-up and
//! post-yield replies.

use serde::{Deserialize, Serialize};

use crate::history::TRUNCATION_MARKER;
use crate::lexicon::{content_words, sentences};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    ClarifyAnswer,
    WrapUp,
    NewResponse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerRequest {
    pub kind: PlannerKind,
    pub history_rendered: String,
    /// What the user said.
    pub trigger_text: String,
    /// Planned content the robot has not delivered yet.
    pub remaining_text: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlannerError {
    #[error("planner request is invalid: {0}")]
    InvalidRequest(String),
    #[error("planner output rejected: {0}")]
    InvalidOutput(String),
    #[error("planner timed out")]
    Timeout,
    #[error("planner transport failed: {0}")]
    Transport(String),
}

pub trait ResponsePlanner: Send + Sync {
    fn generate(&self, req: &PlannerRequest) -> Result<String, PlannerError>;
}

/// Output must be a single non-empty paragraph without control characters.
pub fn validate_output(text: &str) -> Result<String, PlannerError> {
    let t = text.trim();
    if t.is_empty() {
        return Err(PlannerError::InvalidOutput("empty output".into()));
    }
    if let Some(c) = t.chars().find(|c| c.is_control()) {
        return Err(PlannerError::InvalidOutput(format!(
            "control character {:?} in output",
            c
        )));
    }
    Ok(t.to_string())
}

fn expect_kind(req: &PlannerRequest, kind: PlannerKind) -> Result<(), PlannerError> {
    if req.kind != kind {
        return Err(PlannerError::InvalidRequest(format!(
            "expected {kind:?} request, got {:?}",
            req.kind
        )));
    }
    Ok(())
}

fn expect_trigger(req: &PlannerRequest) -> Result<(), PlannerError> {
    if req.trigger_text.trim().is_empty() {
        return Err(PlannerError::InvalidRequest("trigger text is empty".into()));
    }
    Ok(())
}

/// Answer to a clarification request. The caller speaks the resumed
/// content afterwards; the answer never includes it.
pub fn plan_clarify_answer(
    planner: &dyn ResponsePlanner,
    req: &PlannerRequest,
) -> Result<String, PlannerError> {
    expect_kind(req, PlannerKind::ClarifyAnswer)?;
    expect_trigger(req)?;
    validate_output(&planner.generate(req)?)
}

pub fn plan_wrapup(
    planner: &dyn ResponsePlanner,
    req: &PlannerRequest,
) -> Result<String, PlannerError> {
    expect_kind(req, PlannerKind::WrapUp)?;
    validate_output(&planner.generate(req)?)
}

pub fn plan_new_response(
    planner: &dyn ResponsePlanner,
    req: &PlannerRequest,
) -> Result<String, PlannerError> {
    expect_kind(req, PlannerKind::NewResponse)?;
    expect_trigger(req)?;
    validate_output(&planner.generate(req)?)
}

/// Dispatches on `req.kind`.
pub fn plan(planner: &dyn ResponsePlanner, req: &PlannerRequest) -> Result<String, PlannerError> {
    match req.kind {
        PlannerKind::ClarifyAnswer => plan_clarify_answer(planner, req),
        PlannerKind::WrapUp => plan_wrapup(planner, req),
        PlannerKind::NewResponse => plan_new_response(planner, req),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplatePlannerConfig {
    pub hold_phrase: String,
    pub summary_max_words: usize,
}

impl Default for TemplatePlannerConfig {
    fn default() -> Self {
        Self {
            hold_phrase: "Let me finish my thought.".into(),
            summary_max_words: 30,
        }
    }
}

/// Deterministic string templates; no model involved.
#[derive(Debug, Clone, Default)]
pub struct TemplatePlanner {
    cfg: TemplatePlannerConfig,
}

pub const CLARIFY_FALLBACK_PREFIX: &str = "Good question \u{2014} here is the context:";

impl TemplatePlanner {
    pub fn new(cfg: TemplatePlannerConfig) -> Self {
        Self { cfg }
    }

    fn clarify(&self, req: &PlannerRequest) -> String {
        let asked = content_words(&req.trigger_text);
        let robot_lines: Vec<String> = robot_lines(&req.history_rendered);

        // most recent speech first, then what is still planned
        let mut candidates: Vec<String> = Vec::new();
        for line in robot_lines.iter().rev() {
            candidates.extend(sentences(line).into_iter().rev());
        }
        candidates.extend(sentences(&req.remaining_text));

        if let Some(hit) = candidates
            .iter()
            .find(|s| content_words(s).iter().any(|w| asked.contains(w)))
        {
            return format!("To clarify: {hit}");
        }
        let context = robot_lines
            .last()
            .and_then(|l| sentences(l).pop())
            .or_else(|| sentences(&req.remaining_text).into_iter().next())
            .unwrap_or_else(|| "I was just getting started.".into());
        format!("{CLARIFY_FALLBACK_PREFIX} {context}")
    }

    fn wrap_up(&self, req: &PlannerRequest) -> String {
        let hold = self.cfg.hold_phrase.trim();
        let Some(first) = sentences(&req.remaining_text).into_iter().next() else {
            return hold.to_string();
        };
        let words: Vec<&str> = first.split(' ').collect();
        let summary = if words.len() > self.cfg.summary_max_words {
            format!("{}...", words[..self.cfg.summary_max_words].join(" "))
        } else {
            first
        };
        format!("{hold} {summary}")
    }

    fn new_response(&self, req: &PlannerRequest) -> String {
        let said = req
            .trigger_text
            .trim()
            .trim_end_matches(['.', '?', '!', ',', ';', ':']);
        format!("You said: {said}. Tell me more.")
    }
}

/// Robot lines of a rendered history with the speaker prefix and truncation
/// marker removed.
fn robot_lines(history: &str) -> Vec<String> {
    history
        .lines()
        .filter_map(|l| l.strip_prefix("Robot: "))
        .map(|l| l.trim_end_matches(TRUNCATION_MARKER).trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

impl ResponsePlanner for TemplatePlanner {
    fn generate(&self, req: &PlannerRequest) -> Result<String, PlannerError> {
        Ok(match req.kind {
            PlannerKind::ClarifyAnswer => self.clarify(req),
            PlannerKind::WrapUp => self.wrap_up(req),
            PlannerKind::NewResponse => self.new_response(req),
        })
    }
}
