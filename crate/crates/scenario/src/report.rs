//! Golden-expectation checking.

use std::fmt;

use serde::Serialize;

use bargein_core::trace::{TraceEntry, TraceEvent};

use crate::model::{Expectation, Scenario};
use crate::runner::Replay;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub step: usize,
    pub field: &'static str,
    pub expected: String,
    pub actual: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub checks: Vec<Check>,
    /// Expectations with a `decision` field that matched.
    pub decisions_matched: usize,
    pub decisions_total: usize,
    /// Replay stopped early on an engine error.
    pub failure: Option<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Fraction of expected decisions reproduced; 1.0 when none are expected.
    pub fn decision_rate(&self) -> f64 {
        if self.decisions_total == 0 {
            1.0
        } else {
            self.decisions_matched as f64 / self.decisions_total as f64
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: decisions {}/{}",
            if self.passed() { "ok  " } else { "FAIL" },
            self.scenario,
            self.decisions_matched,
            self.decisions_total
        )?;
        if let Some(msg) = &self.failure {
            write!(f, "\n    replay failed: {msg}")?;
        }
        for c in self.failed_checks() {
            write!(
                f,
                "\n    step {}: {} expected {}, got {}",
                c.step, c.field, c.expected, c.actual
            )?;
        }
        Ok(())
    }
}

fn label<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => "?".into(),
    }
}

/// What the trace says about one user utterance.
#[derive(Debug, Default)]
struct Observed<'a> {
    gate: Option<String>,
    intent: Option<String>,
    decision: Option<String>,
    route: Option<String>,
    resume_index: Option<usize>,
    spoken: Vec<&'a str>,
}

fn observe(entries: &[TraceEntry], utterance: u64) -> Observed<'_> {
    let mut o = Observed::default();
    let mut after_decision = false;
    for e in entries {
        match &e.event {
            TraceEvent::Gate {
                utterance: u,
                outcome,
                ..
            } if *u == utterance && o.gate.is_none() => o.gate = Some(label(outcome)),
            TraceEvent::Intent {
                utterance: u,
                label: l,
                ..
            } if *u == utterance && o.intent.is_none() => o.intent = Some(label(l)),
            TraceEvent::Decision {
                utterance: u,
                decision,
                route,
                ..
            } => {
                if *u == utterance && o.decision.is_none() {
                    o.decision = Some(label(decision));
                    o.route = Some(label(route));
                    after_decision = true;
                } else if after_decision {
                    break;
                }
            }
            TraceEvent::Resume { resume_index, .. } if after_decision && o.resume_index.is_none() => {
                o.resume_index = Some(*resume_index)
            }
            TraceEvent::Action { action } if after_decision => {
                o.spoken.extend(action.spoken_text());
            }
            _ => {}
        }
    }
    o
}

fn none() -> String {
    "none".into()
}

pub fn check_expectations(replay: &Replay, s: &Scenario) -> Report {
    let entries = replay.trace.entries();
    let mut checks = Vec::new();
    let mut decisions_matched = 0;
    let mut decisions_total = 0;

    for exp in &s.expect {
        let Expectation {
            step,
            gate,
            intent,
            decision,
            route,
            resume_index,
            action_text_prefix,
        } = exp;
        let obs = match replay.utterances.get(*step).copied().flatten() {
            Some(u) => observe(entries, u),
            None => Observed::default(),
        };
        let mut push = |field: &'static str, expected: String, actual: Option<String>, passed: bool| {
            checks.push(Check {
                step: *step,
                field,
                expected,
                actual: actual.unwrap_or_else(none),
                passed,
            });
        };
        if let Some(g) = gate {
            let want = label(g);
            let ok = obs.gate.as_deref() == Some(want.as_str());
            push("gate", want, obs.gate.clone(), ok);
        }
        if let Some(l) = intent {
            let want = label(l);
            let ok = obs.intent.as_deref() == Some(want.as_str());
            push("intent", want, obs.intent.clone(), ok);
        }
        if let Some(d) = decision {
            let want = label(d);
            let ok = obs.decision.as_deref() == Some(want.as_str());
            decisions_total += 1;
            decisions_matched += usize::from(ok);
            push("decision", want, obs.decision.clone(), ok);
        }
        if let Some(r) = route {
            let want = label(r);
            let ok = obs.route.as_deref() == Some(want.as_str());
            push("route", want, obs.route.clone(), ok);
        }
        if let Some(i) = resume_index {
            let ok = obs.resume_index == Some(*i);
            push("resume_index", i.to_string(), obs.resume_index.map(|x| x.to_string()), ok);
        }
        if let Some(prefix) = action_text_prefix {
            let hit = obs.spoken.iter().find(|t| t.starts_with(prefix.as_str()));
            let actual = hit.or(obs.spoken.first()).map(|t| format!("{t:?}"));
            push("action_text_prefix", format!("{prefix:?}"), actual, hit.is_some());
        }
    }

    Report {
        scenario: s.id.clone(),
        checks,
        decisions_matched,
        decisions_total,
        failure: replay.failure.clone(),
    }
}
