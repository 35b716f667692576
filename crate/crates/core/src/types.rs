//! Domain vocabulary shared by every stage of the interruption pipeline.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// One whitespace-delimited word of a planned robot utterance, placed on the
/// utterance's time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct WordToken {
    pub text: String,
    pub index: usize,
    /// Offset from the start of the utterance.
    pub start: Duration,
    pub duration: Duration,
    /// The token ends with a clause punctuation mark.
    pub ends_clause: bool,
}

impl WordToken {
    pub fn end(&self) -> Duration {
        self.start + self.duration
    }
}

/// Robot speech as a contiguous word-level schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedUtterance {
    pub full_text: String,
    pub tokens: Vec<WordToken>,
    pub total_duration: Duration,
    pub rate_wpm: f64,
}

impl PlannedUtterance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens `[0, end)` joined by single spaces.
    pub fn prefix_text(&self, end: usize) -> String {
        join_tokens(&self.tokens[..end.min(self.tokens.len())])
    }
}

pub(crate) fn join_tokens(tokens: &[WordToken]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.text);
    }
    out
}

/// Collapses runs of whitespace into single spaces and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// User speech that arrived while the robot held the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapEvent {
    pub transcript: String,
    /// Time since the robot's current logical turn began.
    #[serde(with = "crate::clock::serde_secs")]
    pub onset: Duration,
    pub word_count: usize,
    pub is_final: bool,
}

impl OverlapEvent {
    /// Builds a final overlap event. Returns `None` for empty transcripts,
    /// which never enter the pipeline.
    pub fn new(transcript: &str, onset: Duration) -> Option<Self> {
        let transcript = normalize_whitespace(transcript);
        let word_count = transcript.split(' ').filter(|w| !w.is_empty()).count();
        if word_count == 0 {
            return None;
        }
        Some(Self {
            transcript,
            onset,
            word_count,
            is_final: true,
        })
    }
}

/// Intent of the person who interrupted. Backchannels are short agreements,
/// not a separate category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentLabel {
    Agreement,
    Assistance,
    Clarification,
    Disruptive,
}

impl IntentLabel {
    pub const ALL: [IntentLabel; 4] = [
        IntentLabel::Agreement,
        IntentLabel::Assistance,
        IntentLabel::Clarification,
        IntentLabel::Disruptive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntentLabel::Agreement => "agreement",
            IntentLabel::Assistance => "assistance",
            IntentLabel::Clarification => "clarification",
            IntentLabel::Disruptive => "disruptive",
        }
    }

    pub fn is_cooperative(self) -> bool {
        !matches!(self, IntentLabel::Disruptive)
    }
}

impl fmt::Display for IntentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown intent label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for IntentLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        IntentLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == lower)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

/// How the robot handles an overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandlingDecision {
    /// Ignore the overlap; the current utterance plays out.
    FinishUp,
    /// Give up the floor and respond to what the user said.
    YieldImmediately,
    /// Treat as a backchannel and carry on from the last clause boundary.
    Continue,
    AckAndContinue,
    ClarifyAndContinue,
    /// Defend the turn, summarize what is left, then yield.
    AckAndWrapUp,
}

impl HandlingDecision {
    pub const ALL: [HandlingDecision; 6] = [
        HandlingDecision::FinishUp,
        HandlingDecision::YieldImmediately,
        HandlingDecision::Continue,
        HandlingDecision::AckAndContinue,
        HandlingDecision::ClarifyAndContinue,
        HandlingDecision::AckAndWrapUp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HandlingDecision::FinishUp => "finish_up",
            HandlingDecision::YieldImmediately => "yield_immediately",
            HandlingDecision::Continue => "continue",
            HandlingDecision::AckAndContinue => "ack_and_continue",
            HandlingDecision::ClarifyAndContinue => "clarify_and_continue",
            HandlingDecision::AckAndWrapUp => "ack_and_wrap_up",
        }
    }

    /// Decisions that resume the interrupted content afterwards.
    pub fn resumes(self) -> bool {
        matches!(
            self,
            HandlingDecision::Continue
                | HandlingDecision::AckAndContinue
                | HandlingDecision::ClarifyAndContinue
        )
    }
}

impl fmt::Display for HandlingDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HandlingDecision {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        HandlingDecision::ALL
            .into_iter()
            .find(|d| d.as_str() == lower)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    User,
    Robot,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speaker::User => f.write_str("User"),
            Speaker::Robot => f.write_str("Robot"),
        }
    }
}

/// Something the robot does. Speech-bearing actions are played out on the
/// session clock; `Nod` and `Yield` are instantaneous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RobotAction {
    /// Speak `text`. `resume_index` is set when the text resumes an
    /// interrupted plan from that token; `None` marks a fresh response.
    Speak {
        text: String,
        resume_index: Option<usize>,
    },
    VerbalAck {
        token: String,
    },
    Nod,
    Yield,
    AnswerClarification {
        text: String,
    },
    WrapUpSummary {
        text: String,
    },
}

impl RobotAction {
    /// Text the robot says while performing this action, if any.
    pub fn spoken_text(&self) -> Option<&str> {
        match self {
            RobotAction::Speak { text, .. }
            | RobotAction::AnswerClarification { text }
            | RobotAction::WrapUpSummary { text } => Some(text),
            RobotAction::VerbalAck { token } => Some(token),
            RobotAction::Nod | RobotAction::Yield => None,
        }
    }

    pub fn is_resume(&self) -> bool {
        matches!(
            self,
            RobotAction::Speak {
                resume_index: Some(_),
                ..
            }
        )
    }
}
