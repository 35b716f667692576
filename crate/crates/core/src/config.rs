use serde::{Deserialize, Serialize};

use crate::clock::{duration_from_secs, ClockMode};
use crate::dispatcher::DispatchConfig;
use crate::gate::WakewordConfig;
use crate::planner::TemplatePlannerConfig;
use crate::speech_clock::SpeakingRateConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierChoice {
    #[default]
    RuleBased,
    /// Labels come from scenario fixtures.
    Oracle,
    External,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerChoice {
    #[default]
    Template,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub speech: SpeakingRateConfig,
    pub wakewords: WakewordConfig,
    pub dispatch: DispatchConfig,
    pub template: TemplatePlannerConfig,
    pub classifier: ClassifierChoice,
    pub planner: PlannerChoice,
    pub clock: ClockMode,
    /// Number of history entries shown to classifiers and planners.
    pub history_window: usize,
    pub classifier_timeout_s: f64,
    /// Generate a reply to ordinary (non-overlapping) user turns.
    pub respond_to_user_turns: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            speech: SpeakingRateConfig::default(),
            wakewords: WakewordConfig::default(),
            dispatch: DispatchConfig::default(),
            template: TemplatePlannerConfig::default(),
            classifier: ClassifierChoice::default(),
            planner: PlannerChoice::default(),
            clock: ClockMode::default(),
            history_window: 10,
            classifier_timeout_s: 2.0,
            respond_to_user_turns: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid session config: {0}")]
pub struct ConfigError(pub String);

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.speech
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        self.dispatch
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        if self.history_window < 1 {
            return Err(ConfigError("history_window must be >= 1".into()));
        }
        match duration_from_secs(self.classifier_timeout_s) {
            Some(d) if !d.is_zero() => {}
            _ => return Err(ConfigError("classifier_timeout_s must be > 0".into())),
        }
        if self.template.hold_phrase.trim().is_empty() {
            return Err(ConfigError("hold_phrase must not be empty".into()));
        }
        Ok(())
    }
}
