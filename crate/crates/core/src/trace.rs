//! Session trace: the ordered record of everything the engine saw, decided
//! and did. Exported as newline-delimited JSON, one `{t, kind, payload}`
//! object per entry.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierSource;
use crate::gate::GateKind;
use crate::planner::PlannerKind;
use crate::types::{HandlingDecision, IntentLabel, RobotAction};

/// Role of a robot speech segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeechKind {
    /// Scripted or caller-initiated robot turn.
    Turn,
    /// Generated reply after a yield or a user turn.
    Response,
    /// Remaining planned content, restarted at a clause boundary.
    Resumed,
    Clarification,
    Ack,
    WrapUp,
}

impl SpeechKind {
    /// Kinds during which the robot holds the floor: only a wakeword gets
    /// through.
    pub fn holds_floor(self) -> bool {
        matches!(self, SpeechKind::Ack | SpeechKind::WrapUp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRoute {
    /// Early exit in the gate.
    Gate,
    Classifier,
    /// The classifier failed or timed out.
    Fallback,
    /// The result came back after the interrupted utterance had ended.
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum TraceEvent {
    RobotPlan {
        segment: u64,
        speech: SpeechKind,
        text: String,
        n_words: usize,
        duration_s: f64,
        turn_origin_s: f64,
        resume_index: Option<usize>,
    },
    RobotWord {
        segment: u64,
        index: usize,
        text: String,
    },
    RobotDone {
        segment: u64,
        complete: bool,
        spoken_words: usize,
    },
    UserInterim {
        text: String,
    },
    UserSpeech {
        utterance: u64,
        text: String,
        robot_speaking: bool,
    },
    UserTurn {
        utterance: u64,
    },
    Gate {
        utterance: u64,
        outcome: GateKind,
        onset_s: f64,
        remaining_s: f64,
        word_count: usize,
    },
    ClassifierRequested {
        utterance: u64,
        request: u64,
    },
    Intent {
        utterance: u64,
        label: IntentLabel,
        source: ClassifierSource,
        latency_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw: Option<String>,
    },
    ClassifierFailure {
        utterance: u64,
        request: u64,
        error: String,
    },
    ClassificationCancelled {
        utterance: u64,
        request: u64,
        reason: String,
    },
    StaleResult {
        request: u64,
    },
    Decision {
        utterance: u64,
        decision: HandlingDecision,
        route: DecisionRoute,
        elapsed_s: f64,
        word_count: usize,
    },
    Resume {
        segment: u64,
        estimated_index: usize,
        resume_index: usize,
    },
    Action {
        action: RobotAction,
    },
    PlannerFailure {
        planner: PlannerKind,
        error: String,
    },
    OverlapDeferred {
        utterance: u64,
        reason: String,
    },
    OverlapReplayed {
        utterance: u64,
    },
    OverlapDiscarded {
        utterance: u64,
    },
    Failure {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Session time in seconds.
    pub t: f64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SessionTrace {
    entries: Vec<TraceEntry>,
}

impl SessionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an entry. Timestamps earlier than the last entry are clamped
    /// forward so the trace stays non-decreasing.
    pub fn push(&mut self, t: f64, event: TraceEvent) {
        let t = match self.entries.last() {
            Some(last) if last.t > t => last.t,
            _ => t,
        };
        self.entries.push(TraceEntry { t, event });
    }

    pub fn since(&self, offset: usize) -> &[TraceEntry] {
        &self.entries[offset.min(self.entries.len())..]
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn decisions(&self) -> impl Iterator<Item = (u64, HandlingDecision, DecisionRoute)> + '_ {
        self.entries.iter().filter_map(|e| match &e.event {
            TraceEvent::Decision {
                utterance,
                decision,
                route,
                ..
            } => Some((*utterance, *decision, *route)),
            _ => None,
        })
    }

    pub fn actions(&self) -> impl Iterator<Item = &RobotAction> + '_ {
        self.entries.iter().filter_map(|e| match &e.event {
            TraceEvent::Action { action } => Some(action),
            _ => None,
        })
    }
}
