//! Wire messages. Every frame is one JSON object:
//! `{"type": ..., "session": ..., "payload": {...}}`; server frames derived
//! from the engine trace also carry `t`, seconds since session start.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use bargein_core::trace::{TraceEntry, TraceEvent};
use bargein_core::RobotAction;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum ClientMessage {
    #[serde(rename = "session.start")]
    Start {
        version: u32,
        /// Partial session config, merged over the server defaults.
        #[serde(default)]
        config: Option<Value>,
    },
    #[serde(rename = "user.speech")]
    UserSpeech {
        text: String,
        #[serde(rename = "final", default = "default_true")]
        is_final: bool,
    },
    /// Starts a robot turn with the given text.
    #[serde(rename = "robot.say")]
    RobotSay { text: String },
    #[serde(rename = "session.end", with = "empty_payload")]
    End,
}

fn default_true() -> bool {
    true
}

/// Accepts a missing, `null` or object payload for unit messages.
mod empty_payload {
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let _ = Option::<serde_json::Map<String, serde_json::Value>>::deserialize(d)?;
        Ok(())
    }
}

/// Parses a client frame; a missing payload is treated as `{}`.
pub fn parse_client(text: &str) -> Result<ClientMessage, serde_json::Error> {
    let mut v: Value = serde_json::from_str(text)?;
    if let Some(obj) = v.as_object_mut() {
        obj.entry("payload").or_insert_with(|| json!({}));
        obj.remove("session");
    }
    serde_json::from_value(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    #[serde(rename = "type")]
    pub kind: String,
    pub session: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub payload: Value,
}

impl ServerMessage {
    pub fn new(kind: &str, session: &str, payload: Value) -> Self {
        Self {
            kind: kind.to_string(),
            session: session.to_string(),
            t: None,
            payload,
        }
    }

    pub fn error(session: &str, code: &str, message: impl Into<String>) -> Self {
        Self::new(
            "error",
            session,
            json!({"code": code, "message": message.into()}),
        )
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

/// The frame mirroring one trace entry.
pub fn from_trace(session: &str, entry: &TraceEntry) -> ServerMessage {
    let t = entry.t;
    let (kind, payload) = match &entry.event {
        TraceEvent::RobotPlan {
            segment,
            speech,
            text,
            n_words,
            duration_s,
            resume_index,
            ..
        } => (
            "robot.plan",
            json!({
                "turn_id": segment,
                "full_text": text,
                "n_words": n_words,
                "speech": speech,
                "duration_s": duration_s,
                "resume_index": resume_index,
            }),
        ),
        TraceEvent::RobotWord {
            segment,
            index,
            text,
        } => (
            "robot.word",
            json!({"turn_id": segment, "index": index, "text": text, "t": t}),
        ),
        TraceEvent::RobotDone {
            segment,
            complete,
            spoken_words,
        } => (
            "robot.done",
            json!({"turn_id": segment, "complete": complete, "spoken_words": spoken_words}),
        ),
        TraceEvent::Gate {
            utterance,
            outcome,
            onset_s,
            remaining_s,
            word_count,
        } => (
            "engine.gate",
            json!({
                "utterance": utterance,
                "outcome": outcome,
                "onset_s": onset_s,
                "remaining_s": remaining_s,
                "word_count": word_count,
            }),
        ),
        TraceEvent::Intent {
            utterance,
            label,
            source,
            latency_s,
            ..
        } => (
            "engine.intent",
            json!({"utterance": utterance, "label": label, "source": source, "latency_s": latency_s}),
        ),
        TraceEvent::Decision {
            utterance,
            decision,
            route,
            elapsed_s,
            word_count,
        } => (
            "engine.decision",
            json!({
                "utterance": utterance,
                "decision": decision,
                "route": route,
                "elapsed_s": elapsed_s,
                "word_count": word_count,
            }),
        ),
        TraceEvent::Action {
            action: RobotAction::Yield,
        } => ("robot.yield", json!({})),
        TraceEvent::Action { action } => ("robot.action", json!({"action": action})),
        other => {
            let mut v = serde_json::to_value(other).expect("trace events always serialize");
            let payload = v
                .get_mut("payload")
                .map(Value::take)
                .unwrap_or_else(|| json!({}));
            let kind = v.get("kind").cloned().unwrap_or(Value::Null);
            ("engine.trace", json!({"kind": kind, "data": payload}))
        }
    };
    ServerMessage {
        kind: kind.to_string(),
        session: session.to_string(),
        t: Some(t),
        payload,
    }
}

/// Recursively overlays `patch` onto `base`.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bargein_core::trace::SessionTrace;
    use bargein_core::HandlingDecision;

    #[test]
    fn parses_client_frames() {
        assert_eq!(
            parse_client(r#"{"type": "user.speech", "payload": {"text": "okay"}}"#).unwrap(),
            ClientMessage::UserSpeech {
                text: "okay".into(),
                is_final: true
            }
        );
        assert_eq!(
            parse_client(r#"{"type": "session.end", "session": "s1"}"#).unwrap(),
            ClientMessage::End
        );
        assert!(matches!(
            parse_client(r#"{"type": "session.start", "payload": {"version": 1}}"#).unwrap(),
            ClientMessage::Start { version: 1, config: None }
        ));
        assert!(parse_client(r#"{"type": "user.shout", "payload": {}}"#).is_err());
        assert!(parse_client(r#"{"type": "user.speech", "payload": {}}"#).is_err());
        assert!(parse_client("not json").is_err());
    }

    #[test]
    fn trace_entries_map_to_frames() {
        let mut trace = SessionTrace::new();
        trace.push(1.0, TraceEvent::Action { action: RobotAction::Yield });
        trace.push(
            1.0,
            TraceEvent::Decision {
                utterance: 0,
                decision: HandlingDecision::Continue,
                route: bargein_core::DecisionRoute::Classifier,
                elapsed_s: 1.0,
                word_count: 1,
            },
        );
        trace.push(1.5, TraceEvent::StaleResult { request: 3 });
        let frames: Vec<_> = trace.entries().iter().map(|e| from_trace("s1", e)).collect();
        assert_eq!(frames[0].kind, "robot.yield");
        assert_eq!(frames[1].kind, "engine.decision");
        assert_eq!(frames[1].payload["decision"], "continue");
        assert_eq!(frames[2].kind, "engine.trace");
        assert_eq!(frames[2].payload, json!({"kind": "stale_result", "data": {"request": 3}}));
        assert!(frames.iter().all(|f| f.session == "s1"));
    }

    #[test]
    fn merge_overlays_nested_objects() {
        let mut base = json!({"speech": {"rate_wpm": 150.0, "min_word_s": 0.05}, "history_window": 10});
        merge_json(&mut base, json!({"speech": {"rate_wpm": 120.0}}));
        assert_eq!(base["speech"], json!({"rate_wpm": 120.0, "min_word_s": 0.05}));
        assert_eq!(base["history_window"], 10);
    }
}
