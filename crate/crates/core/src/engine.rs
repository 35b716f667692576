//! Event-driven session engine.
//!
//! One [`SessionEngine`] per conversation. It schedules robot speech word by
//! word, routes overlapping user speech through gate -> classify -> decide ->
//! expand, executes the resulting actions, keeps the dialogue history and
//! records a [`SessionTrace`].
//!
//! The engine does not own a clock. Every entry point takes the current
//! session time and first catches up on everything due by then (word
//! onsets, utterance completion, classifier timeouts), in time order.
//!
//! Classification is asynchronous: when an overlap needs an intent label the
//! engine hands back a [`ClassifyTicket`] and keeps the robot talking. The
//! driver answers through [`SessionEngine::on_classifier_result`]; position,
//! elapsed time and resume point are computed when the answer is applied,
//! not at overlap onset.

use std::collections::VecDeque;
use std::time::Duration;

use crate::classifier::{ClassifierError, ClassifierRequest, ClassifierResult};
use crate::clock::secs;
use crate::config::{ConfigError, SessionConfig};
use crate::dispatcher::{Dispatcher, ExpandContext, Expansion};
use crate::gate::{contains_wakeword, gate_with_remaining, GateOutcome};
use crate::history::DialogueHistory;
use crate::planner::{self, PlannerKind, PlannerRequest, ResponsePlanner, TemplatePlanner};
use crate::speech_clock::plan_utterance;
use crate::trace::{DecisionRoute, SessionTrace, SpeechKind, TraceEvent};
use crate::types::{
    normalize_whitespace, HandlingDecision, IntentLabel, OverlapEvent, PlannedUtterance,
    RobotAction, Speaker,
};

/// A robot utterance being played out on the session clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSpeech {
    pub segment: u64,
    pub kind: SpeechKind,
    pub plan: PlannedUtterance,
    pub started_at: Duration,
    /// Start of the logical turn; survives resumptions.
    pub turn_origin: Duration,
    emitted: usize,
}

impl ActiveSpeech {
    pub fn ends_at(&self) -> Duration {
        self.started_at + self.plan.total_duration
    }

    pub fn elapsed(&self, now: Duration) -> Duration {
        now.saturating_sub(self.started_at)
    }

    pub fn words_emitted(&self) -> usize {
        self.emitted
    }

    fn next_event_at(&self) -> Duration {
        match self.plan.tokens.get(self.emitted) {
            Some(tok) => self.started_at + tok.start,
            None => self.ends_at(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionState {
    Idle,
    /// Interruptible robot speech.
    RobotSpeaking(ActiveSpeech),
    /// Robot still speaking while an overlap is being classified.
    AwaitingClassification {
        speech: ActiveSpeech,
        overlap: OverlapEvent,
    },
    /// Floor-holding speech (acknowledgement or wrap-up). Only a wakeword
    /// interrupts it.
    ExecutingActions(ActiveSpeech),
    AwaitingUser,
}

impl SessionState {
    pub fn speech(&self) -> Option<&ActiveSpeech> {
        match self {
            SessionState::RobotSpeaking(s)
            | SessionState::ExecutingActions(s)
            | SessionState::AwaitingClassification { speech: s, .. } => Some(s),
            SessionState::Idle | SessionState::AwaitingUser => None,
        }
    }

    fn speech_mut(&mut self) -> Option<&mut ActiveSpeech> {
        match self {
            SessionState::RobotSpeaking(s)
            | SessionState::ExecutingActions(s)
            | SessionState::AwaitingClassification { speech: s, .. } => Some(s),
            SessionState::Idle | SessionState::AwaitingUser => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SessionState::Idle => "idle",
            SessionState::RobotSpeaking(_) => "robot_speaking",
            SessionState::AwaitingClassification { .. } => "awaiting_classification",
            SessionState::ExecutingActions(_) => "executing_actions",
            SessionState::AwaitingUser => "awaiting_user",
        }
    }

    pub fn is_robot_speaking(&self) -> bool {
        self.speech().is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordEvent {
    pub segment: u64,
    pub index: usize,
    pub text: String,
    pub at: Duration,
}

/// Work the driver must perform: classify `request` and report back with
/// `request_id` before `deadline`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyTicket {
    pub request_id: u64,
    pub utterance: u64,
    pub request: ClassifierRequest,
    pub requested_at: Duration,
    pub deadline: Duration,
}

/// What a single engine call produced. The full record is in the trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    /// Words whose onset passed during this call.
    pub words: Vec<WordEvent>,
    /// Actions that started executing during this call.
    pub actions: Vec<RobotAction>,
    pub classify: Vec<ClassifyTicket>,
    /// Full schedule of a turn started by this call.
    pub scheduled: Vec<WordEvent>,
    /// Id assigned to the user utterance passed to this call.
    pub utterance: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("clock went backwards: {now:?} < {last:?}")]
    ClockRegression { now: Duration, last: Duration },
    #[error("robot is already speaking")]
    RobotBusy,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone)]
struct Pending {
    request: u64,
    utterance: u64,
    overlap: OverlapEvent,
    segment: u64,
    turn_origin: Duration,
    deadline: Duration,
}

pub struct SessionEngine {
    cfg: SessionConfig,
    dispatcher: Dispatcher,
    planner: Box<dyn ResponsePlanner>,
    state: SessionState,
    queue: VecDeque<RobotAction>,
    pending: Option<Pending>,
    /// Overlaps heard while they could not be gated, replayed once the robot
    /// is back in interruptible speech.
    deferred: VecDeque<(u64, String)>,
    /// User speech heard during the current segment; written to history
    /// right after the segment's own entry.
    interjections: Vec<(Duration, String)>,
    interim: Option<String>,
    history: DialogueHistory,
    trace: SessionTrace,
    turn_origin: Duration,
    timeout: Duration,
    now: Duration,
    next_segment: u64,
    next_utterance: u64,
    next_request: u64,
    out: Outcome,
}

impl std::fmt::Debug for SessionEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionEngine")
            .field("state", &self.state.name())
            .field("now", &self.now)
            .field("trace_len", &self.trace.len())
            .finish()
    }
}

impl SessionEngine {
    pub fn new(cfg: SessionConfig, planner: Box<dyn ResponsePlanner>) -> Result<Self, EngineError> {
        cfg.validate()?;
        let dispatcher =
            Dispatcher::new(cfg.dispatch.clone()).map_err(|e| ConfigError(e.to_string()))?;
        let timeout = Duration::from_secs_f64(cfg.classifier_timeout_s);
        Ok(Self {
            cfg,
            dispatcher,
            planner,
            state: SessionState::Idle,
            queue: VecDeque::new(),
            pending: None,
            deferred: VecDeque::new(),
            interjections: Vec::new(),
            interim: None,
            history: DialogueHistory::new(),
            trace: SessionTrace::new(),
            turn_origin: Duration::ZERO,
            timeout,
            now: Duration::ZERO,
            next_segment: 0,
            next_utterance: 0,
            next_request: 0,
            out: Outcome::default(),
        })
    }

    /// Engine backed by the template planner configured in `cfg`.
    pub fn with_template_planner(cfg: SessionConfig) -> Result<Self, EngineError> {
        let planner = TemplatePlanner::new(cfg.template.clone());
        Self::new(cfg, Box::new(planner))
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn history(&self) -> &DialogueHistory {
        &self.history
    }

    pub fn trace(&self) -> &SessionTrace {
        &self.trace
    }

    pub fn into_trace(self) -> SessionTrace {
        self.trace
    }

    pub fn queued_actions(&self) -> impl Iterator<Item = &RobotAction> {
        self.queue.iter()
    }

    pub fn now(&self) -> Duration {
        self.now
    }

    pub fn interim_text(&self) -> Option<&str> {
        self.interim.as_deref()
    }

    pub fn pending_request(&self) -> Option<u64> {
        self.pending.as_ref().map(|p| p.request)
    }

    /// True when nothing is spoken, queued or awaited.
    pub fn is_quiescent(&self) -> bool {
        !self.state.is_robot_speaking() && self.queue.is_empty() && self.pending.is_none()
    }

    /// Next time at which the engine has something to do on its own.
    pub fn next_deadline(&self) -> Option<Duration> {
        let speech = self.state.speech().map(ActiveSpeech::next_event_at);
        let timeout = self.pending.as_ref().map(|p| p.deadline);
        match (speech, timeout) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn start_robot_turn(&mut self, now: Duration, text: &str) -> Result<Outcome, EngineError> {
        self.begin(now)?;
        if self.state.is_robot_speaking() {
            return Err(EngineError::RobotBusy);
        }
        let plan = plan_utterance(text, &self.cfg.speech)
            .map_err(|e| EngineError::InvalidInput(e.to_string()))?;
        self.turn_origin = now;
        let segment = self.start_plan(now, SpeechKind::Turn, plan, None);
        if let Some(sp) = self.state.speech().filter(|s| s.segment == segment) {
            self.out.scheduled = sp
                .plan
                .tokens
                .iter()
                .map(|t| WordEvent {
                    segment,
                    index: t.index,
                    text: t.text.clone(),
                    at: now + t.start,
                })
                .collect();
        }
        self.catch_up(now);
        Ok(self.take_outcome())
    }

    /// Delivers recognized user speech. Interim (non-final) text is only
    /// buffered.
    pub fn on_user_speech(
        &mut self,
        now: Duration,
        text: &str,
        is_final: bool,
    ) -> Result<Outcome, EngineError> {
        let text = normalize_whitespace(text);
        if text.is_empty() {
            return Err(EngineError::InvalidInput("empty transcript".into()));
        }
        self.begin(now)?;
        if !is_final {
            self.record(TraceEvent::UserInterim { text: text.clone() });
            self.interim = Some(text);
            return Ok(self.take_outcome());
        }
        self.interim = None;
        let utterance = self.next_utterance;
        self.next_utterance += 1;
        self.out.utterance = Some(utterance);
        self.record(TraceEvent::UserSpeech {
            utterance,
            text: text.clone(),
            robot_speaking: self.state.is_robot_speaking(),
        });

        match &self.state {
            SessionState::Idle | SessionState::AwaitingUser => self.user_turn(now, utterance, &text),
            SessionState::RobotSpeaking(_) => {
                self.interjections.push((now, text.clone()));
                self.gate_overlap(now, utterance, &text);
            }
            SessionState::AwaitingClassification { .. } | SessionState::ExecutingActions(_) => {
                self.interjections.push((now, text.clone()));
                if contains_wakeword(&text, &self.cfg.wakewords) {
                    self.cancel_pending("wakeword");
                    self.gate_overlap(now, utterance, &text);
                } else {
                    let reason = if matches!(self.state, SessionState::ExecutingActions(_)) {
                        "holding floor"
                    } else {
                        "awaiting classification"
                    };
                    self.record(TraceEvent::OverlapDeferred {
                        utterance,
                        reason: reason.into(),
                    });
                    self.deferred.push_back((utterance, text));
                }
            }
        }
        self.catch_up(now);
        Ok(self.take_outcome())
    }

    /// Applies a classifier answer (or failure) for `request_id`. Answers for
    /// unknown or expired requests are recorded and ignored.
    pub fn on_classifier_result(
        &mut self,
        now: Duration,
        request_id: u64,
        result: Result<ClassifierResult, ClassifierError>,
    ) -> Result<Outcome, EngineError> {
        self.begin(now)?;
        let pending = match self.pending.take() {
            Some(p) if p.request == request_id => p,
            other => {
                self.pending = other;
                self.record(TraceEvent::StaleResult {
                    request: request_id,
                });
                self.catch_up(now);
                return Ok(self.take_outcome());
            }
        };
        match result {
            Ok(res) => {
                self.record(TraceEvent::Intent {
                    utterance: pending.utterance,
                    label: res.label,
                    source: res.source,
                    latency_s: secs(res.latency),
                    raw: res.raw,
                });
                self.apply_label(now, pending, res.label);
            }
            Err(e) => self.classifier_failed(now, pending, e),
        }
        self.catch_up(now);
        Ok(self.take_outcome())
    }

    /// Advances to `now`, emitting due words and completing utterances.
    pub fn tick(&mut self, now: Duration) -> Result<Outcome, EngineError> {
        self.begin(now)?;
        Ok(self.take_outcome())
    }

    // ---- internals ----

    fn take_outcome(&mut self) -> Outcome {
        std::mem::take(&mut self.out)
    }

    fn record(&mut self, event: TraceEvent) {
        self.trace.push(secs(self.now), event);
    }

    fn begin(&mut self, now: Duration) -> Result<(), EngineError> {
        if now < self.now {
            return Err(EngineError::ClockRegression {
                now,
                last: self.now,
            });
        }
        self.catch_up(now);
        Ok(())
    }

    fn catch_up(&mut self, now: Duration) {
        while let Some(at) = self.next_deadline().filter(|d| *d <= now) {
            self.fire(at);
        }
        self.now = self.now.max(now);
    }

    fn fire(&mut self, at: Duration) {
        self.now = self.now.max(at);
        let speech_due = self
            .state
            .speech()
            .map(ActiveSpeech::next_event_at)
            .is_some_and(|t| t <= at);
        if speech_due {
            let sp = self.state.speech_mut().expect("speech_due implies speech");
            if let Some(tok) = sp.plan.tokens.get(sp.emitted) {
                let ev = WordEvent {
                    segment: sp.segment,
                    index: tok.index,
                    text: tok.text.clone(),
                    at: sp.started_at + tok.start,
                };
                sp.emitted += 1;
                self.record(TraceEvent::RobotWord {
                    segment: ev.segment,
                    index: ev.index,
                    text: ev.text.clone(),
                });
                self.out.words.push(ev);
            } else {
                self.finish_segment(at);
            }
            return;
        }
        if let Some(p) = self.pending.take_if(|p| p.deadline <= at) {
            self.classifier_failed(at, p, ClassifierError::Timeout(self.timeout));
        }
    }

    fn take_speech(&mut self) -> Option<ActiveSpeech> {
        match std::mem::replace(&mut self.state, SessionState::AwaitingUser) {
            SessionState::RobotSpeaking(s)
            | SessionState::ExecutingActions(s)
            | SessionState::AwaitingClassification { speech: s, .. } => Some(s),
            other => {
                self.state = other;
                None
            }
        }
    }

    fn finish_segment(&mut self, at: Duration) {
        let Some(sp) = self.take_speech() else { return };
        self.append_history(Speaker::Robot, sp.plan.full_text.clone(), sp.started_at, true);
        self.record(TraceEvent::RobotDone {
            segment: sp.segment,
            complete: true,
            spoken_words: sp.plan.len(),
        });
        self.flush_interjections();
        self.run_queue(at);
    }

    /// Stops the current utterance at `at`, recording only the estimated
    /// spoken prefix.
    fn cut_current(&mut self, at: Duration) -> Option<ActiveSpeech> {
        let sp = self.take_speech()?;
        let spoken = sp.plan.estimated_spoken_index(sp.elapsed(at));
        self.append_history(Speaker::Robot, sp.plan.prefix_text(spoken), sp.started_at, false);
        self.record(TraceEvent::RobotDone {
            segment: sp.segment,
            complete: false,
            spoken_words: spoken,
        });
        self.flush_interjections();
        Some(sp)
    }

    fn append_history(&mut self, speaker: Speaker, text: String, at: Duration, complete: bool) {
        if let Err(e) = self.history.append_turn(speaker, text, at, complete) {
            self.record(TraceEvent::Failure {
                message: e.to_string(),
            });
        }
    }

    fn flush_interjections(&mut self) {
        let mut heard = std::mem::take(&mut self.interjections);
        heard.sort_by_key(|(at, _)| *at);
        for (at, text) in heard {
            self.append_history(Speaker::User, text, at, true);
        }
    }

    fn start_plan(
        &mut self,
        at: Duration,
        kind: SpeechKind,
        plan: PlannedUtterance,
        resume_index: Option<usize>,
    ) -> u64 {
        let segment = self.next_segment;
        self.next_segment += 1;
        self.record(TraceEvent::RobotPlan {
            segment,
            speech: kind,
            text: plan.full_text.clone(),
            n_words: plan.len(),
            duration_s: secs(plan.total_duration),
            turn_origin_s: secs(self.turn_origin),
            resume_index,
        });
        let speech = ActiveSpeech {
            segment,
            kind,
            plan,
            started_at: at,
            turn_origin: self.turn_origin,
            emitted: 0,
        };
        self.state = if kind.holds_floor() {
            SessionState::ExecutingActions(speech)
        } else {
            SessionState::RobotSpeaking(speech)
        };
        if !kind.holds_floor() {
            self.replay_deferred(at);
        }
        segment
    }

    fn start_speech(
        &mut self,
        at: Duration,
        kind: SpeechKind,
        text: &str,
        resume_index: Option<usize>,
    ) -> bool {
        match plan_utterance(text, &self.cfg.speech) {
            Ok(plan) => {
                self.start_plan(at, kind, plan, resume_index);
                true
            }
            Err(e) => {
                self.record(TraceEvent::Failure {
                    message: format!("cannot speak {kind:?}: {e}"),
                });
                false
            }
        }
    }

    /// Executes queued actions until one of them starts speech or the queue
    /// runs dry.
    fn run_queue(&mut self, at: Duration) {
        while let Some(action) = self.queue.pop_front() {
            self.record(TraceEvent::Action {
                action: action.clone(),
            });
            self.out.actions.push(action.clone());
            let started = match &action {
                RobotAction::Nod => false,
                RobotAction::Yield => {
                    self.state = SessionState::AwaitingUser;
                    self.discard_deferred();
                    false
                }
                RobotAction::VerbalAck { token } => self.start_speech(at, SpeechKind::Ack, token, None),
                RobotAction::WrapUpSummary { text } => {
                    self.start_speech(at, SpeechKind::WrapUp, text, None)
                }
                RobotAction::AnswerClarification { text } => {
                    self.start_speech(at, SpeechKind::Clarification, text, None)
                }
                RobotAction::Speak {
                    text,
                    resume_index: Some(i),
                } => self.start_speech(at, SpeechKind::Resumed, text, Some(*i)),
                RobotAction::Speak {
                    text,
                    resume_index: None,
                } => {
                    self.turn_origin = at;
                    self.start_speech(at, SpeechKind::Response, text, None)
                }
            };
            if started {
                return;
            }
        }
        if !self.state.is_robot_speaking() {
            self.state = SessionState::AwaitingUser;
            self.discard_deferred();
        }
    }

    fn replay_deferred(&mut self, at: Duration) {
        while matches!(self.state, SessionState::RobotSpeaking(_)) {
            let Some((utterance, text)) = self.deferred.pop_front() else { break };
            self.record(TraceEvent::OverlapReplayed { utterance });
            self.gate_overlap(at, utterance, &text);
        }
    }

    fn discard_deferred(&mut self) {
        while let Some((utterance, _)) = self.deferred.pop_front() {
            self.record(TraceEvent::OverlapDiscarded { utterance });
        }
    }

    fn cancel_pending(&mut self, reason: &str) {
        if let Some(p) = self.pending.take() {
            self.record(TraceEvent::ClassificationCancelled {
                utterance: p.utterance,
                request: p.request,
                reason: reason.into(),
            });
            self.resume_from_wait(p.segment);
        }
    }

    fn queued_speech(&self) -> impl Iterator<Item = &RobotAction> {
        self.queue.iter().filter(|a| a.spoken_text().is_some())
    }

    fn backlog_duration(&self) -> Duration {
        let word = self.cfg.speech.word_duration();
        self.queued_speech()
            .filter_map(RobotAction::spoken_text)
            .map(|t| word * t.split_whitespace().count() as u32)
            .sum()
    }

    /// Queued content (not acknowledgements) still to be delivered.
    fn backlog_text(&self) -> String {
        self.queue
            .iter()
            .filter_map(|a| match a {
                RobotAction::Speak { text, .. } | RobotAction::AnswerClarification { text } => {
                    Some(text.as_str())
                }
                _ => None,
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn user_turn(&mut self, now: Duration, utterance: u64, text: &str) {
        self.cancel_pending("user took a new turn");
        self.discard_deferred();
        self.append_history(Speaker::User, text.to_string(), now, true);
        self.record(TraceEvent::UserTurn { utterance });
        if !self.cfg.respond_to_user_turns {
            self.state = SessionState::AwaitingUser;
            return;
        }
        let req = PlannerRequest {
            kind: PlannerKind::NewResponse,
            history_rendered: self.history.render(self.cfg.history_window),
            trigger_text: text.to_string(),
            remaining_text: String::new(),
        };
        match planner::plan_new_response(self.planner.as_ref(), &req) {
            Ok(reply) => {
                self.turn_origin = now;
                self.start_speech(now, SpeechKind::Response, &reply, None);
            }
            Err(e) => {
                self.record(TraceEvent::PlannerFailure {
                    planner: PlannerKind::NewResponse,
                    error: e.to_string(),
                });
                self.state = SessionState::AwaitingUser;
            }
        }
    }

    fn gate_overlap(&mut self, now: Duration, utterance: u64, text: &str) {
        let Some(sp) = self.state.speech() else { return };
        let elapsed = sp.elapsed(now);
        let onset = now.saturating_sub(sp.turn_origin);
        let Some(overlap) = OverlapEvent::new(text, onset) else { return };
        let remaining = sp.plan.remaining_duration(elapsed) + self.backlog_duration();
        let outcome = gate_with_remaining(&overlap, remaining, &self.cfg.wakewords);
        self.record(TraceEvent::Gate {
            utterance,
            outcome: outcome.kind(),
            onset_s: secs(onset),
            remaining_s: secs(remaining),
            word_count: overlap.word_count,
        });
        let decision_entry = |decision| TraceEvent::Decision {
            utterance,
            decision,
            route: DecisionRoute::Gate,
            elapsed_s: secs(onset),
            word_count: overlap.word_count,
        };
        match outcome {
            GateOutcome::WakewordYield => {
                self.record(decision_entry(HandlingDecision::YieldImmediately));
                self.apply_yield(now, text);
            }
            GateOutcome::FinishUp => {
                self.record(decision_entry(HandlingDecision::FinishUp));
            }
            GateOutcome::NeedsClassification(overlap) => {
                self.request_classification(now, utterance, overlap)
            }
        }
    }

    fn request_classification(&mut self, now: Duration, utterance: u64, overlap: OverlapEvent) {
        let Some(sp) = self.take_speech() else { return };
        let spoken = sp.plan.estimated_spoken_index(sp.elapsed(now));
        let backlog = self.backlog_text();
        let mut remaining = sp.plan.remaining_text(spoken);
        if !backlog.is_empty() {
            remaining = format!("{remaining} {backlog}");
        }
        let request = ClassifierRequest {
            history_rendered: self.history.render(self.cfg.history_window),
            overlap_text: overlap.transcript.clone(),
            elapsed: overlap.onset,
            robot_spoken_text: sp.plan.prefix_text(spoken),
            robot_remaining_text: remaining,
        };
        let request_id = self.next_request;
        self.next_request += 1;
        let deadline = now + self.timeout;
        self.pending = Some(Pending {
            request: request_id,
            utterance,
            overlap: overlap.clone(),
            segment: sp.segment,
            turn_origin: sp.turn_origin,
            deadline,
        });
        self.state = SessionState::AwaitingClassification {
            speech: sp,
            overlap,
        };
        self.record(TraceEvent::ClassifierRequested {
            utterance,
            request: request_id,
        });
        self.out.classify.push(ClassifyTicket {
            request_id,
            utterance,
            request,
            requested_at: now,
            deadline,
        });
    }

    /// Leaves AwaitingClassification if it belongs to `segment`. Returns
    /// whether the robot is still on that utterance.
    fn resume_from_wait(&mut self, segment: u64) -> bool {
        match std::mem::replace(&mut self.state, SessionState::Idle) {
            SessionState::AwaitingClassification { speech, .. } if speech.segment == segment => {
                self.state = SessionState::RobotSpeaking(speech);
                true
            }
            other => {
                self.state = other;
                false
            }
        }
    }

    fn classifier_failed(&mut self, at: Duration, p: Pending, err: ClassifierError) {
        self.record(TraceEvent::ClassifierFailure {
            utterance: p.utterance,
            request: p.request,
            error: err.to_string(),
        });
        self.record(TraceEvent::Decision {
            utterance: p.utterance,
            decision: HandlingDecision::YieldImmediately,
            route: DecisionRoute::Fallback,
            elapsed_s: secs(at.saturating_sub(p.turn_origin)),
            word_count: p.overlap.word_count,
        });
        self.resume_from_wait(p.segment);
        self.apply_yield(at, &p.overlap.transcript);
    }

    fn apply_label(&mut self, at: Duration, p: Pending, label: IntentLabel) {
        let elapsed = at.saturating_sub(p.turn_origin);
        let decision = self.dispatcher.decide(label, p.overlap.word_count, elapsed);
        let live = self.resume_from_wait(p.segment);
        self.record(TraceEvent::Decision {
            utterance: p.utterance,
            decision,
            route: if live {
                DecisionRoute::Classifier
            } else {
                DecisionRoute::Degraded
            },
            elapsed_s: secs(elapsed),
            word_count: p.overlap.word_count,
        });
        if live {
            self.apply_decision(at, decision, label, &p.overlap.transcript);
        } else {
            self.apply_degraded(at, decision, &p.overlap.transcript);
        }
    }

    /// The interrupted utterance already ended: nothing left to resume.
    fn apply_degraded(&mut self, at: Duration, decision: HandlingDecision, trigger: &str) {
        match decision {
            HandlingDecision::FinishUp
            | HandlingDecision::Continue
            | HandlingDecision::AckAndContinue => {}
            HandlingDecision::ClarifyAndContinue => {
                let req = PlannerRequest {
                    kind: PlannerKind::ClarifyAnswer,
                    history_rendered: self.history.render(self.cfg.history_window),
                    trigger_text: trigger.to_string(),
                    remaining_text: String::new(),
                };
                match planner::plan_clarify_answer(self.planner.as_ref(), &req) {
                    Ok(text) => {
                        let answer = RobotAction::AnswerClarification { text };
                        if self.state.is_robot_speaking() {
                            self.queue.push_back(answer);
                        } else {
                            self.turn_origin = at;
                            self.queue.push_front(answer);
                            self.run_queue(at);
                        }
                    }
                    Err(e) => {
                        self.record(TraceEvent::PlannerFailure {
                            planner: PlannerKind::ClarifyAnswer,
                            error: e.to_string(),
                        });
                        self.apply_yield(at, trigger);
                    }
                }
            }
            HandlingDecision::AckAndWrapUp | HandlingDecision::YieldImmediately => {
                self.apply_yield(at, trigger)
            }
        }
    }

    fn apply_yield(&mut self, at: Duration, trigger: &str) {
        self.cut_current(at);
        self.queue.clear();
        let history = self.history.render(self.cfg.history_window);
        let expansion = self
            .dispatcher
            .yield_with_response(trigger, &history, self.planner.as_ref());
        self.execute(at, expansion, true);
    }

    fn apply_decision(
        &mut self,
        at: Duration,
        decision: HandlingDecision,
        label: IntentLabel,
        trigger: &str,
    ) {
        match decision {
            HandlingDecision::FinishUp => return,
            HandlingDecision::YieldImmediately => return self.apply_yield(at, trigger),
            _ => {}
        }
        let elapsed = match self.state.speech() {
            Some(sp) => sp.elapsed(at),
            None => return,
        };
        let Some(sp) = self.cut_current(at) else { return };
        let history = self.history.render(self.cfg.history_window);
        let backlog = self.backlog_text();
        let ctx = ExpandContext {
            plan: &sp.plan,
            elapsed,
            label: Some(label),
            overlap_text: trigger,
            history_rendered: &history,
            backlog_text: &backlog,
        };
        let expansion = self.dispatcher.expand(decision, &ctx, self.planner.as_ref());
        if let Some(r) = expansion.resume {
            self.record(TraceEvent::Resume {
                segment: sp.segment,
                estimated_index: r.estimated_index,
                resume_index: r.resume_index,
            });
        }
        let yields = expansion.actions.contains(&RobotAction::Yield);
        self.execute(at, expansion, yields);
    }

    /// Puts `expansion` at the head of the queue and runs it.
    fn execute(&mut self, at: Duration, expansion: Expansion, clear_backlog: bool) {
        if let Some((planner, err)) = expansion.planner_failure {
            self.record(TraceEvent::PlannerFailure {
                planner,
                error: err.to_string(),
            });
        }
        if clear_backlog {
            self.queue.clear();
        }
        for action in expansion.actions.into_iter().rev() {
            self.queue.push_front(action);
        }
        self.run_queue(at);
    }
}
