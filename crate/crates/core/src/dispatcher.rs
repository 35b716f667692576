//! Second pipeline stage: intent + timing -> handling decision, and the
//! expansion of a decision into robot actions.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::duration_from_secs;
use crate::planner::{self, PlannerError, PlannerKind, PlannerRequest, ResponsePlanner};
use crate::types::{HandlingDecision, IntentLabel, PlannedUtterance, RobotAction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DispatchConfig {
    /// Agreements up to this many words are backchannels.
    pub backchannel_max_words: usize,
    /// Disruptions this early in the turn are aggressive (inclusive).
    pub aggressive_window_s: f64,
    pub agreement_ack_lexicon: Vec<String>,
    pub assistance_ack_lexicon: Vec<String>,
    pub ack_seed: u64,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        Self {
            backchannel_max_words: 2,
            aggressive_window_s: 5.0,
            agreement_ack_lexicon: ["ya", "yes", "uhhum", "sure"].map(String::from).to_vec(),
            assistance_ack_lexicon: ["yeah", "yes", "thanks"].map(String::from).to_vec(),
            ack_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DispatchError {
    #[error("invalid dispatch config: {0}")]
    Config(String),
    #[error("no acknowledgement lexicon for {0} interruptions")]
    NoLexicon(IntentLabel),
}

impl DispatchConfig {
    pub fn validate(&self) -> Result<(), DispatchError> {
        if self.backchannel_max_words < 1 {
            return Err(DispatchError::Config("backchannel_max_words must be >= 1".into()));
        }
        if !(self.aggressive_window_s.is_finite() && self.aggressive_window_s > 0.0) {
            return Err(DispatchError::Config("aggressive_window_s must be > 0".into()));
        }
        if self.agreement_ack_lexicon.is_empty() || self.assistance_ack_lexicon.is_empty() {
            return Err(DispatchError::Config("ack lexicons must be non-empty".into()));
        }
        Ok(())
    }

    pub fn aggressive_window(&self) -> Duration {
        duration_from_secs(self.aggressive_window_s).unwrap_or(Duration::ZERO)
    }

    fn lexicon(&self, label: IntentLabel) -> Option<&[String]> {
        match label {
            IntentLabel::Agreement => Some(&self.agreement_ack_lexicon),
            IntentLabel::Assistance => Some(&self.assistance_ack_lexicon),
            _ => None,
        }
    }
}

/// `elapsed` is measured from the start of the robot's logical turn and is
/// not reset by resumptions.
pub fn decide(
    label: IntentLabel,
    word_count: usize,
    elapsed: Duration,
    cfg: &DispatchConfig,
) -> HandlingDecision {
    match label {
        IntentLabel::Agreement if word_count <= cfg.backchannel_max_words => {
            HandlingDecision::Continue
        }
        IntentLabel::Agreement | IntentLabel::Assistance => HandlingDecision::AckAndContinue,
        IntentLabel::Clarification => HandlingDecision::ClarifyAndContinue,
        IntentLabel::Disruptive if elapsed <= cfg.aggressive_window() => {
            HandlingDecision::AckAndWrapUp
        }
        IntentLabel::Disruptive => HandlingDecision::YieldImmediately,
    }
}

/// Seeded round-robin over the acknowledgement lexicons, one counter per
/// label so traces are reproducible.
#[derive(Debug, Clone, Default)]
pub struct AckPicker {
    agreement: u64,
    assistance: u64,
}

impl AckPicker {
    pub fn pick(&mut self, label: IntentLabel, cfg: &DispatchConfig) -> Result<String, DispatchError> {
        let lexicon = cfg.lexicon(label).ok_or(DispatchError::NoLexicon(label))?;
        if lexicon.is_empty() {
            return Err(DispatchError::NoLexicon(label));
        }
        let counter = match label {
            IntentLabel::Agreement => &mut self.agreement,
            _ => &mut self.assistance,
        };
        let idx = (cfg.ack_seed.wrapping_add(*counter) % lexicon.len() as u64) as usize;
        *counter += 1;
        Ok(lexicon[idx].clone())
    }
}

/// Where the interrupted utterance stood when the decision was applied.
#[derive(Debug, Clone)]
pub struct ExpandContext<'a> {
    pub plan: &'a PlannedUtterance,
    /// Time into `plan`.
    pub elapsed: Duration,
    pub label: Option<IntentLabel>,
    pub overlap_text: &'a str,
    pub history_rendered: &'a str,
    /// Speech already queued behind `plan`, in order.
    pub backlog_text: &'a str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResumeInfo {
    pub estimated_index: usize,
    pub resume_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub actions: Vec<RobotAction>,
    pub resume: Option<ResumeInfo>,
    /// Set when the planner failed and the actions are the yield fallback.
    pub planner_failure: Option<(PlannerKind, PlannerError)>,
}

impl Expansion {
    fn actions(actions: Vec<RobotAction>) -> Self {
        Self {
            actions,
            resume: None,
            planner_failure: None,
        }
    }

    fn fallback(kind: PlannerKind, err: PlannerError) -> Self {
        Self {
            actions: vec![RobotAction::Yield],
            resume: None,
            planner_failure: Some((kind, err)),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dispatcher {
    cfg: DispatchConfig,
    acks: AckPicker,
}

impl Dispatcher {
    pub fn new(cfg: DispatchConfig) -> Result<Self, DispatchError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            acks: AckPicker::default(),
        })
    }

    pub fn config(&self) -> &DispatchConfig {
        &self.cfg
    }

    pub fn decide(&self, label: IntentLabel, word_count: usize, elapsed: Duration) -> HandlingDecision {
        decide(label, word_count, elapsed, &self.cfg)
    }

    pub fn pick_ack(&mut self, label: IntentLabel) -> Result<String, DispatchError> {
        self.acks.pick(label, &self.cfg)
    }

    /// Turns a decision into an ordered action list. Planner failures
    /// degrade to `[Yield]`.
    pub fn expand(
        &mut self,
        decision: HandlingDecision,
        ctx: &ExpandContext<'_>,
        planner: &dyn ResponsePlanner,
    ) -> Expansion {
        let estimated_index = ctx.plan.estimated_spoken_index(ctx.elapsed);
        let resume_index = ctx.plan.resume_point(ctx.elapsed);
        let resume = ResumeInfo {
            estimated_index,
            resume_index,
        };
        let resumed_text = ctx.plan.remaining_text(resume_index);
        let speak_rest = || RobotAction::Speak {
            text: resumed_text.clone(),
            resume_index: Some(resume_index),
        };
        let request = |kind: PlannerKind, remaining: String| PlannerRequest {
            kind,
            history_rendered: ctx.history_rendered.to_string(),
            trigger_text: ctx.overlap_text.to_string(),
            remaining_text: remaining,
        };

        let mut out = match decision {
            HandlingDecision::FinishUp => return Expansion::actions(Vec::new()),
            HandlingDecision::Continue => Expansion::actions(vec![speak_rest()]),
            HandlingDecision::AckAndContinue => {
                let label = match ctx.label {
                    Some(l @ (IntentLabel::Agreement | IntentLabel::Assistance)) => l,
                    _ => IntentLabel::Agreement,
                };
                let token = self
                    .pick_ack(label)
                    .expect("validated config has both ack lexicons");
                Expansion::actions(vec![
                    RobotAction::VerbalAck { token },
                    RobotAction::Nod,
                    speak_rest(),
                ])
            }
            HandlingDecision::ClarifyAndContinue => {
                let req = request(PlannerKind::ClarifyAnswer, resumed_text.clone());
                match planner::plan_clarify_answer(planner, &req) {
                    Ok(text) => Expansion::actions(vec![
                        RobotAction::AnswerClarification { text },
                        speak_rest(),
                    ]),
                    Err(e) => return Expansion::fallback(PlannerKind::ClarifyAnswer, e),
                }
            }
            HandlingDecision::AckAndWrapUp => {
                let remaining = join_nonempty(&resumed_text, ctx.backlog_text);
                let req = request(PlannerKind::WrapUp, remaining);
                match planner::plan_wrapup(planner, &req) {
                    Ok(text) => Expansion::actions(vec![
                        RobotAction::WrapUpSummary { text },
                        RobotAction::Yield,
                    ]),
                    Err(e) => return Expansion::fallback(PlannerKind::WrapUp, e),
                }
            }
            HandlingDecision::YieldImmediately => {
                return self.yield_with_response(ctx.overlap_text, ctx.history_rendered, planner)
            }
        };
        if decision.resumes() {
            out.resume = Some(resume);
        }
        if resumed_text.is_empty() {
            out.actions.retain(|a| !a.is_resume());
        }
        out
    }

    /// `[Yield, Speak(new response)]`, or `[Yield]` when the planner fails.
    pub fn yield_with_response(
        &self,
        trigger: &str,
        history_rendered: &str,
        planner: &dyn ResponsePlanner,
    ) -> Expansion {
        let req = PlannerRequest {
            kind: PlannerKind::NewResponse,
            history_rendered: history_rendered.to_string(),
            trigger_text: trigger.to_string(),
            remaining_text: String::new(),
        };
        match planner::plan_new_response(planner, &req) {
            Ok(text) => Expansion::actions(vec![
                RobotAction::Yield,
                RobotAction::Speak {
                    text,
                    resume_index: None,
                },
            ]),
            Err(e) => Expansion::fallback(PlannerKind::NewResponse, e),
        }
    }
}

fn join_nonempty(a: &str, b: &str) -> String {
    match (a.is_empty(), b.is_empty()) {
        (false, false) => format!("{a} {b}"),
        (true, _) => b.to_string(),
        (false, true) => a.to_string(),
    }
}
