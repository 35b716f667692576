//! Scenario documents: one JSON file per scenario, expectations inline.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use bargein_core::config::ClassifierChoice;
use bargein_core::trace::DecisionRoute;
use bargein_core::{GateKind, HandlingDecision, IntentLabel, SessionConfig};

/// Non-negative, finite seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Seconds(f64);

impl Seconds {
    pub fn new(s: f64) -> Result<Self, String> {
        if !s.is_finite() || s < 0.0 {
            return Err(format!("expected non-negative seconds, got {s}"));
        }
        Ok(Self(s))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn duration(self) -> Duration {
        Duration::from_secs_f64(self.0)
    }
}

impl TryFrom<f64> for Seconds {
    type Error = String;

    fn try_from(s: f64) -> Result<Self, String> {
        Self::new(s)
    }
}

impl From<Seconds> for f64 {
    fn from(s: Seconds) -> f64 {
        s.0
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "snake_case",
    try_from = "RawStep"
)]
pub enum Step {
    /// Robot starts speaking once everything before it has played out.
    RobotTurn { text: String },
    /// User speech at `at_s` seconds after the start of the current turn.
    UserEvent {
        at_s: Seconds,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        oracle_intent: Option<IntentLabel>,
        #[serde(rename = "final")]
        is_final: bool,
    },
    /// User speech after the robot has finished.
    UserTurn { text: String },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StepKind {
    RobotTurn,
    UserEvent,
    UserTurn,
}

/// Flat form of [`Step`], so field errors keep their path and position.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    kind: StepKind,
    text: String,
    at_s: Option<Seconds>,
    oracle_intent: Option<IntentLabel>,
    #[serde(rename = "final", default = "default_true")]
    is_final: bool,
}

impl TryFrom<RawStep> for Step {
    type Error = String;

    fn try_from(r: RawStep) -> Result<Self, String> {
        let only_user_event = |field: &str| format!("`{field}` is only allowed on user_event steps");
        match r.kind {
            StepKind::UserEvent => Ok(Step::UserEvent {
                at_s: r.at_s.ok_or("user_event requires `at_s`")?,
                text: r.text,
                oracle_intent: r.oracle_intent,
                is_final: r.is_final,
            }),
            _ if r.at_s.is_some() => Err(only_user_event("at_s")),
            _ if r.oracle_intent.is_some() => Err(only_user_event("oracle_intent")),
            _ if !r.is_final => Err(only_user_event("final")),
            StepKind::RobotTurn => Ok(Step::RobotTurn { text: r.text }),
            StepKind::UserTurn => Ok(Step::UserTurn { text: r.text }),
        }
    }
}

impl Step {
    pub fn is_user(&self) -> bool {
        !matches!(self, Step::RobotTurn { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// Index into `script`.
    pub step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<IntentLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<HandlingDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<DecisionRoute>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume_index: Option<usize>,
    /// Some action spoken in response starts with this text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_text_prefix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub config: SessionConfig,
    /// Virtual time between a classification request and its answer.
    #[serde(default)]
    pub classifier_latency_s: Seconds,
    pub script: Vec<Step>,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}:{line}:{column}: {field}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("{origin}: {field}: {message}")]
    Invalid {
        origin: String,
        field: String,
        message: String,
    },
}

impl ScenarioError {
    /// Dotted path of the offending field.
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Io { .. } => None,
            ScenarioError::Parse { field, .. } | ScenarioError::Invalid { field, .. } => Some(field),
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// Parses and validates a scenario. `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        ScenarioError::Parse {
            origin: origin.to_string(),
            line: inner.line(),
            column: inner.column(),
            field,
            message: strip_position(&inner),
        }
    })?;
    de.end().map_err(|e| ScenarioError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        field: ".".into(),
        message: strip_position(&e),
    })?;
    scenario.validate().map_err(|(field, message)| ScenarioError::Invalid {
        origin: origin.to_string(),
        field,
        message,
    })?;
    Ok(scenario)
}

/// serde_json appends " at line L column C"; the position is reported
/// separately.
fn strip_position(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg,
    }
}

impl Scenario {
    /// Checks the rules serde cannot express. Errors carry the field path.
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.id.trim().is_empty() {
            return Err(("id".into(), "must not be empty".into()));
        }
        self.config
            .validate()
            .map_err(|e| ("config".to_string(), e.to_string()))?;
        if self.script.is_empty() {
            return Err(("script".into(), "must contain at least one step".into()));
        }
        let oracle = self.config.classifier == ClassifierChoice::Oracle;
        let mut turn_started = false;
        let mut last_at = 0.0;
        for (i, step) in self.script.iter().enumerate() {
            let text = match step {
                Step::RobotTurn { text } | Step::UserTurn { text } => {
                    turn_started = true;
                    last_at = 0.0;
                    text
                }
                Step::UserEvent {
                    at_s,
                    text,
                    oracle_intent,
                    is_final,
                } => {
                    if !turn_started {
                        return Err((
                            format!("script[{i}]"),
                            "user_event needs an earlier robot_turn or user_turn to time against"
                                .into(),
                        ));
                    }
                    if at_s.get() < last_at {
                        return Err((
                            format!("script[{i}].at_s"),
                            format!("{} is earlier than the previous event ({last_at})", at_s.get()),
                        ));
                    }
                    last_at = at_s.get();
                    if oracle && *is_final && oracle_intent.is_none() {
                        return Err((
                            format!("script[{i}].oracle_intent"),
                            "required when config.classifier is \"oracle\"".into(),
                        ));
                    }
                    text
                }
            };
            if text.trim().is_empty() {
                return Err((format!("script[{i}].text"), "must not be empty".into()));
            }
        }
        for (i, exp) in self.expect.iter().enumerate() {
            match self.script.get(exp.step) {
                Some(step) if step.is_user() => {}
                Some(_) => {
                    return Err((
                        format!("expect[{i}].step"),
                        format!("step {} is a robot turn", exp.step),
                    ))
                }
                None => {
                    return Err((
                        format!("expect[{i}].step"),
                        format!("no step {} in a script of {}", exp.step, self.script.len()),
                    ))
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::RobotTurn { text } => write!(f, "robot: {text}"),
            Step::UserEvent { at_s, text, .. } => write!(f, "user @{:.3}s: {text}", at_s.get()),
            Step::UserTurn { text } => write!(f, "user: {text}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        parse_scenario(text, "test.json")
    }

    #[test]
    fn minimal_file() {
        let s = parse(r#"{"id": "m", "script": [{"kind": "robot_turn", "text": "Hello."}]}"#).unwrap();
        assert_eq!(s.script.len(), 1);
        assert_eq!(s.config, SessionConfig::default());
    }

    #[test]
    fn negative_time_is_rejected_with_position() {
        let text = "{\n  \"id\": \"n\",\n  \"script\": [\n    {\"kind\": \"robot_turn\", \"text\": \"Hi there.\"},\n    {\"kind\": \"user_event\", \"at_s\": -1, \"text\": \"no\"}\n  ]\n}";
        let err = parse(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("test.json:5:"), "{msg}");
        assert!(msg.contains("non-negative"), "{msg}");
    }

    #[test]
    fn unknown_label_names_the_field() {
        let text = r#"{"id": "u", "config": {"classifier": "oracle"}, "script": [
            {"kind": "robot_turn", "text": "Hi there."},
            {"kind": "user_event", "at_s": 1, "text": "sure", "oracle_intent": "sarcastic"}]}"#;
        let err = parse(text).unwrap_err();
        assert_eq!(err.field(), Some("script[1].oracle_intent"));
        assert!(err.to_string().contains("sarcastic"), "{err}");
    }

    #[test]
    fn oracle_intent_required_for_oracle_scenarios() {
        let text = r#"{"id": "o", "config": {"classifier": "oracle"}, "script": [
            {"kind": "robot_turn", "text": "Hi there."},
            {"kind": "user_event", "at_s": 1, "text": "sure"}]}"#;
        let err = parse(text).unwrap_err();
        assert_eq!(err.field(), Some("script[1].oracle_intent"));
    }

    #[test]
    fn structural_errors() {
        assert!(parse(r#"{"id": "x", "script": []}"#).is_err());
        assert!(parse(r#"{"script": [{"kind": "robot_turn", "text": "a"}]}"#)
            .unwrap_err()
            .to_string()
            .contains("missing field `id`"));
        assert!(parse(r#"{"id": "x", "script": [{"kind": "user_event", "at_s": 0, "text": "a"}]}"#).is_err());
        let bad_step = r#"{"id": "x", "script": [{"kind": "robot_turn", "text": "a"}],
            "expect": [{"step": 0, "decision": "continue"}]}"#;
        assert_eq!(parse(bad_step).unwrap_err().field(), Some("expect[0].step"));
        let typo = r#"{"id": "x", "scirpt": []}"#;
        assert!(parse(typo).unwrap_err().to_string().contains("scirpt"));
    }

    #[test]
    fn events_must_not_go_back_in_time() {
        let text = r#"{"id": "t", "script": [
            {"kind": "robot_turn", "text": "Hi there."},
            {"kind": "user_event", "at_s": 2, "text": "a"},
            {"kind": "user_event", "at_s": 1, "text": "b"}]}"#;
        assert_eq!(parse(text).unwrap_err().field(), Some("script[2].at_s"));
    }
}
