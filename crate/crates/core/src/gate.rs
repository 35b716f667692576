//! First pipeline stage: wakeword override and the end-of-turn rule, applied
//! before any classification.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::lexicon::normalized_tokens;
use crate::types::{OverlapEvent, PlannedUtterance};

/// Overlaps with less than this much planned speech left are ignored.
pub const FINISH_UP_WINDOW: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq)]
pub enum GateOutcome {
    WakewordYield,
    FinishUp,
    NeedsClassification(OverlapEvent),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    WakewordYield,
    FinishUp,
    NeedsClassification,
}

impl GateOutcome {
    pub fn kind(&self) -> GateKind {
        match self {
            GateOutcome::WakewordYield => GateKind::WakewordYield,
            GateOutcome::FinishUp => GateKind::FinishUp,
            GateOutcome::NeedsClassification(_) => GateKind::NeedsClassification,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct WakewordConfig {
    wakewords: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WakewordError {
    #[error("at least one wakeword is required")]
    Empty,
    #[error("wakeword `{0}` must be a single token")]
    NotSingleToken(String),
}

impl WakewordConfig {
    /// The robot's name plus "stop".
    pub fn for_robot(name: &str) -> Result<Self, WakewordError> {
        Self::new([name, "stop"])
    }

    pub fn new<I, S>(words: I) -> Result<Self, WakewordError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut wakewords = BTreeSet::new();
        for w in words {
            let raw = w.as_ref();
            let toks = normalized_tokens(raw);
            if toks.len() != 1 {
                return Err(WakewordError::NotSingleToken(raw.to_string()));
            }
            wakewords.extend(toks);
        }
        if wakewords.is_empty() {
            return Err(WakewordError::Empty);
        }
        Ok(Self { wakewords })
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.wakewords.iter().map(String::as_str)
    }
}

impl Default for WakewordConfig {
    fn default() -> Self {
        Self::for_robot("luna").expect("default wakewords are valid")
    }
}

impl TryFrom<Vec<String>> for WakewordConfig {
    type Error = WakewordError;

    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<WakewordConfig> for Vec<String> {
    fn from(c: WakewordConfig) -> Self {
        c.wakewords.into_iter().collect()
    }
}

/// Whole-token, case-insensitive match after stripping punctuation.
pub fn contains_wakeword(transcript: &str, cfg: &WakewordConfig) -> bool {
    normalized_tokens(transcript)
        .iter()
        .any(|t| cfg.wakewords.contains(t))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("robot is not speaking (elapsed {elapsed:?} of {total:?})")]
pub struct RobotSilent {
    pub elapsed: Duration,
    pub total: Duration,
}

/// Gates an overlap against the utterance currently being spoken.
pub fn gate(
    overlap: &OverlapEvent,
    plan: &PlannedUtterance,
    elapsed: Duration,
    cfg: &WakewordConfig,
) -> Result<GateOutcome, RobotSilent> {
    if elapsed >= plan.total_duration {
        return Err(RobotSilent {
            elapsed,
            total: plan.total_duration,
        });
    }
    Ok(gate_with_remaining(
        overlap,
        plan.remaining_duration(elapsed),
        cfg,
    ))
}

/// Gate given the total planned speech still to come. The engine uses this
/// directly when queued speech follows the current utterance.
pub fn gate_with_remaining(
    overlap: &OverlapEvent,
    remaining: Duration,
    cfg: &WakewordConfig,
) -> GateOutcome {
    if contains_wakeword(&overlap.transcript, cfg) {
        GateOutcome::WakewordYield
    } else if remaining < FINISH_UP_WINDOW {
        GateOutcome::FinishUp
    } else {
        GateOutcome::NeedsClassification(overlap.clone())
    }
}
