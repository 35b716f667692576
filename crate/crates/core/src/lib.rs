//! Interruption handling for conversational agents.
//!
//! Overlapping user speech goes through a fixed pipeline:
//!
//! 1. [`gate`]: a wakeword forces a yield; with under two seconds of
//!    planned speech left the overlap is ignored.
//! 2. [`classifier`]: the interrupter's intent becomes one of agreement,
//!    assistance, clarification or disruptive.
//! 3. [`dispatcher`]: intent, overlap length and time into the turn pick a
//!    [`HandlingDecision`], which expands into [`RobotAction`]s.
//!
//! [`engine::SessionEngine`] runs the pipeline against a word-level speech
//! schedule ([`speech_clock`]) and records a [`trace::SessionTrace`].

pub mod classifier;
pub mod clock;
pub mod config;
pub mod dispatcher;
pub mod engine;
pub mod gate;
pub mod history;
pub mod lexicon;
pub mod planner;
pub mod speech_clock;
pub mod trace;
pub mod types;

pub use classifier::{
    build_prompt, classify, parse_label, rule_based_classify, ClassifierError, ClassifierRequest,
    ClassifierResult, ClassifierSource, IntentClassifier, OracleClassifier, RuleBasedClassifier,
};
pub use config::{ClassifierChoice, PlannerChoice, SessionConfig};
pub use dispatcher::{decide, DispatchConfig, Dispatcher};
pub use engine::{ClassifyTicket, EngineError, Outcome, SessionEngine, SessionState};
pub use gate::{contains_wakeword, gate, GateKind, GateOutcome, WakewordConfig};
pub use history::DialogueHistory;
pub use planner::{PlannerError, PlannerKind, PlannerRequest, ResponsePlanner, TemplatePlanner};
pub use speech_clock::{plan_utterance, SpeakingRateConfig};
pub use trace::{DecisionRoute, SessionTrace, SpeechKind, TraceEntry, TraceEvent};
pub use types::{
    HandlingDecision, IntentLabel, OverlapEvent, PlannedUtterance, RobotAction, Speaker, WordToken,
};
