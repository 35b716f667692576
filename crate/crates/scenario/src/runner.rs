//! Deterministic replay of a scenario on a virtual clock.

use std::collections::{BTreeMap, VecDeque};
use std::time::Duration;

use bargein_core::classifier::{
    classify, ClassifierError, ClassifierResult, IntentClassifier, OracleClassifier,
    RuleBasedClassifier,
};
use bargein_core::clock::{secs, Clock, VirtualClock};
use bargein_core::config::{ClassifierChoice, PlannerChoice};
use bargein_core::engine::{ClassifyTicket, EngineError, Outcome, SessionEngine};
use bargein_core::planner::{ResponsePlanner, TemplatePlanner};
use bargein_core::trace::{SessionTrace, TraceEvent};
use bargein_core::IntentLabel;

use crate::model::{Scenario, Step};

/// Upper bound on engine wake-ups while draining; a well-formed session
/// needs a handful per spoken word.
const MAX_WAKEUPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("scenario selects an external {0}, but none was supplied")]
    Unavailable(&'static str),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Result of a replay.
#[derive(Debug, Clone)]
pub struct Replay {
    pub trace: SessionTrace,
    /// Engine utterance id assigned to each script step, if any.
    pub utterances: Vec<Option<u64>>,
    /// Set when the replay stopped on an engine error. The trace ends with a
    /// matching `failure` entry.
    pub failure: Option<String>,
}

impl Replay {
    pub fn ndjson(&self) -> String {
        self.trace.to_ndjson()
    }
}

/// Replays a scenario with the classifier and planner its config selects.
pub fn run_scenario(s: &Scenario) -> Result<Replay, RunError> {
    Replayer::new(s).run()
}

pub struct Replayer<'a> {
    scenario: &'a Scenario,
    classifier: Option<&'a dyn IntentClassifier>,
    planner: Option<Box<dyn ResponsePlanner>>,
}

impl<'a> Replayer<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        Self {
            scenario,
            classifier: None,
            planner: None,
        }
    }

    /// Overrides the configured classifier (oracle labels are then ignored).
    pub fn with_classifier(mut self, c: &'a dyn IntentClassifier) -> Self {
        self.classifier = Some(c);
        self
    }

    pub fn with_planner(mut self, p: Box<dyn ResponsePlanner>) -> Self {
        self.planner = Some(p);
        self
    }

    pub fn run(self) -> Result<Replay, RunError> {
        let s = self.scenario;
        let planner: Box<dyn ResponsePlanner> = match (self.planner, s.config.planner) {
            (Some(p), _) => p,
            (None, PlannerChoice::Template) => Box::new(TemplatePlanner::new(s.config.template.clone())),
            (None, PlannerChoice::External) => return Err(RunError::Unavailable("planner")),
        };
        let classifier = match (self.classifier, s.config.classifier) {
            (Some(c), _) => Labels::Fixed(c),
            (None, ClassifierChoice::RuleBased) => Labels::Fixed(&RuleBasedClassifier),
            (None, ClassifierChoice::Oracle) => Labels::Oracle(BTreeMap::new()),
            (None, ClassifierChoice::External) => return Err(RunError::Unavailable("classifier")),
        };
        let engine = SessionEngine::new(s.config.clone(), planner)?;
        let mut sim = Sim {
            engine,
            clock: VirtualClock::new(),
            labels: classifier,
            latency: s.classifier_latency_s.duration(),
            inflight: VecDeque::new(),
        };

        let mut utterances = vec![None; s.script.len()];
        let mut failure = None;
        let mut turn_start = Duration::ZERO;
        for (i, step) in s.script.iter().enumerate() {
            let res = match step {
                Step::RobotTurn { text } => sim.drain().and_then(|()| {
                    turn_start = sim.clock.now();
                    let out = sim.engine.start_robot_turn(turn_start, text)?;
                    sim.absorb(out, None);
                    Ok(None)
                }),
                Step::UserTurn { text } => sim.drain().and_then(|()| {
                    turn_start = sim.clock.now();
                    sim.user_speech(turn_start, text, true, None)
                }),
                Step::UserEvent {
                    at_s,
                    text,
                    oracle_intent,
                    is_final,
                } => {
                    let at = (turn_start + at_s.duration()).max(sim.clock.now());
                    sim.advance_to(at)
                        .and_then(|()| sim.user_speech(at, text, *is_final, *oracle_intent))
                }
            };
            match res {
                Ok(u) => utterances[i] = u,
                Err(e) => {
                    failure = Some(format!("step {i}: {e}"));
                    break;
                }
            }
        }
        if failure.is_none() {
            if let Err(e) = sim.drain() {
                failure = Some(format!("draining: {e}"));
            }
        }
        let t = secs(sim.clock.now());
        let mut trace = sim.engine.into_trace();
        if let Some(message) = &failure {
            trace.push(t, TraceEvent::Failure {
                message: message.clone(),
            });
        }
        Ok(Replay {
            trace,
            utterances,
            failure,
        })
    }
}

enum Labels<'a> {
    Fixed(&'a dyn IntentClassifier),
    /// Scripted label per engine utterance id.
    Oracle(BTreeMap<u64, IntentLabel>),
}

struct Sim<'a> {
    engine: SessionEngine,
    clock: VirtualClock,
    labels: Labels<'a>,
    latency: Duration,
    /// Classifier answers waiting for their delivery time, in request order.
    inflight: VecDeque<(Duration, u64, Result<ClassifierResult, ClassifierError>)>,
}

impl Sim<'_> {
    fn user_speech(
        &mut self,
        at: Duration,
        text: &str,
        is_final: bool,
        oracle: Option<IntentLabel>,
    ) -> Result<Option<u64>, EngineError> {
        let out = self.engine.on_user_speech(at, text, is_final)?;
        let utterance = out.utterance;
        self.absorb(out, oracle);
        Ok(utterance)
    }

    /// Answers new classification tickets, immediately or after the
    /// configured latency.
    fn absorb(&mut self, out: Outcome, oracle: Option<IntentLabel>) {
        if let (Labels::Oracle(map), Some(u), Some(l)) = (&mut self.labels, out.utterance, oracle) {
            map.insert(u, l);
        }
        for ticket in out.classify {
            let answer = self.answer(&ticket);
            self.inflight
                .push_back((ticket.requested_at + self.latency, ticket.request_id, answer));
        }
    }

    fn answer(&self, ticket: &ClassifyTicket) -> Result<ClassifierResult, ClassifierError> {
        match &self.labels {
            Labels::Fixed(c) => classify(&ticket.request, *c),
            Labels::Oracle(map) => match map.get(&ticket.utterance) {
                Some(l) => classify(&ticket.request, &OracleClassifier(*l)),
                None => Err(ClassifierError::InvalidRequest(format!(
                    "no scripted intent for utterance {}",
                    ticket.utterance
                ))),
            },
        }
    }

    fn next_wakeup(&self) -> Option<Duration> {
        let delivery = self.inflight.front().map(|x| x.0);
        match (self.engine.next_deadline(), delivery) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Processes everything due before `at`, then moves the clock to `at`.
    /// Answers due at exactly `at` are delivered too, before the caller's
    /// own event.
    fn advance_to(&mut self, at: Duration) -> Result<(), EngineError> {
        let mut budget = MAX_WAKEUPS;
        while let Some(t) = self.next_wakeup().filter(|t| *t <= at) {
            self.step(t)?;
            budget -= 1;
            if budget == 0 {
                return Err(EngineError::InvalidInput("session does not settle".into()));
            }
        }
        self.clock.advance_to(at);
        let out = self.engine.tick(at)?;
        self.absorb(out, None);
        Ok(())
    }

    fn step(&mut self, t: Duration) -> Result<(), EngineError> {
        self.clock.advance_to(t);
        let due = self.inflight.front().is_some_and(|x| x.0 <= t);
        let out = if due {
            let (_, id, answer) = self.inflight.pop_front().expect("checked above");
            self.engine.on_classifier_result(t, id, answer)?
        } else {
            self.engine.tick(t)?
        };
        self.absorb(out, None);
        Ok(())
    }

    /// Runs until nothing is spoken, scheduled or awaited.
    fn drain(&mut self) -> Result<(), EngineError> {
        let mut budget = MAX_WAKEUPS;
        while let Some(t) = self.next_wakeup() {
            self.step(t.max(self.clock.now()))?;
            budget -= 1;
            if budget == 0 {
                return Err(EngineError::InvalidInput("session does not settle".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_scenario;

    #[test]
    fn latency_keeps_robot_talking() {
        let s = parse_scenario(
            r#"{"id": "lat", "config": {"classifier": "oracle"}, "classifier_latency_s": 0.8,
                "script": [
                  {"kind": "robot_turn", "text": "one two three four five six seven eight nine ten eleven twelve."},
                  {"kind": "user_event", "at_s": 1.0, "text": "okay", "oracle_intent": "agreement"}]}"#,
            "lat",
        )
        .unwrap();
        let r = run_scenario(&s).unwrap();
        assert!(r.failure.is_none());
        let decision_t = r
            .trace
            .entries()
            .iter()
            .find(|e| matches!(e.event, TraceEvent::Decision { .. }))
            .unwrap()
            .t;
        assert!((decision_t - 1.8).abs() < 1e-9, "{decision_t}");
        assert_eq!(r.utterances, vec![None, Some(0)]);
    }

    #[test]
    fn external_classifier_must_be_supplied() {
        let s = parse_scenario(
            r#"{"id": "ext", "config": {"classifier": "external"},
                "script": [{"kind": "robot_turn", "text": "Hello."}]}"#,
            "ext",
        )
        .unwrap();
        assert_eq!(
            run_scenario(&s).unwrap_err(),
            RunError::Unavailable("classifier")
        );
        let r = Replayer::new(&s).with_classifier(&RuleBasedClassifier).run().unwrap();
        assert!(r.failure.is_none());
    }
}
