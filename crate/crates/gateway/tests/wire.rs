use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio::time::timeout;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use bargein_gateway::{spawn, GatewayConfig, ServerMessage};
use bargein_scenario::{check_expectations, parse_scenario, run_scenario};

const LONG: &str = "The mirror matters most, because it can signal planes from far away. \
                    Water comes next, since we cannot survive long without it. \
                    A knife helps with food and shelter.";

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Client {
    ws: Ws,
    seen: Vec<ServerMessage>,
}

async fn server(config: GatewayConfig) -> SocketAddr {
    spawn("127.0.0.1:0".parse().unwrap(), config).await.unwrap()
}

impl Client {
    async fn connect(addr: SocketAddr) -> Self {
        let (ws, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
        Self { ws, seen: Vec::new() }
    }

    async fn send(&mut self, v: Value) {
        self.ws.send(Message::Text(v.to_string().into())).await.unwrap();
    }

    async fn send_raw(&mut self, s: &str) {
        self.ws.send(Message::Text(s.to_string().into())).await.unwrap();
    }

    async fn next(&mut self) -> ServerMessage {
        loop {
            let msg = timeout(Duration::from_secs(10), self.ws.next())
                .await
                .expect("server went quiet")
                .expect("stream ended")
                .unwrap();
            if let Message::Text(t) = msg {
                let m: ServerMessage = serde_json::from_str(t.as_str()).unwrap();
                self.seen.push(m.clone());
                return m;
            }
        }
    }

    async fn until(&mut self, kind: &str) -> ServerMessage {
        loop {
            let m = self.next().await;
            if m.kind == kind {
                return m;
            }
        }
    }

    async fn start(&mut self, config: Value) -> String {
        self.send(json!({"type": "session.start", "payload": {"version": 1, "config": config}}))
            .await;
        let m = self.until("session.started").await;
        m.session
    }

    fn kinds(&self) -> Vec<&str> {
        self.seen.iter().map(|m| m.kind.as_str()).collect()
    }
}

fn fast() -> Value {
    json!({"speech": {"rate_wpm": 300.0}})
}

#[tokio::test(flavor = "multi_thread")]
async fn ordinary_turn_streams_words() {
    let addr = server(GatewayConfig::default()).await;
    let mut c = Client::connect(addr).await;
    let id = c.start(json!({"speech": {"rate_wpm": 600.0}, "respond_to_user_turns": true})).await;
    c.send(json!({"type": "user.speech", "payload": {"text": "what should we take?", "final": true}}))
        .await;
    let plan = c.until("robot.plan").await;
    let n = plan.payload["n_words"].as_u64().unwrap();
    assert!(n > 0);
    let done = c.until("robot.done").await;
    assert_eq!(done.payload["complete"], true);

    let words: Vec<u64> = c
        .seen
        .iter()
        .filter(|m| m.kind == "robot.word")
        .map(|m| m.payload["index"].as_u64().unwrap())
        .collect();
    assert_eq!(words, (0..n).collect::<Vec<_>>());
    assert!(c.seen.iter().all(|m| m.session == id));
}

#[tokio::test(flavor = "multi_thread")]
async fn barge_in_reports_pipeline_in_order() {
    let addr = server(GatewayConfig::default()).await;
    let mut c = Client::connect(addr).await;
    c.start(fast()).await;
    c.send(json!({"type": "robot.say", "payload": {"text": LONG}})).await;
    c.until("robot.plan").await;
    for _ in 0..4 {
        c.until("robot.word").await;
    }
    c.send(json!({"type": "user.speech", "payload": {"text": "No, the water is more important"}}))
        .await;
    c.until("engine.decision").await;
    let pipeline: Vec<&str> = c
        .kinds()
        .into_iter()
        .filter(|k| k.starts_with("engine.") && *k != "engine.trace")
        .collect();
    assert_eq!(pipeline, ["engine.gate", "engine.intent", "engine.decision"]);

    // word indices per turn never go backwards
    let mut last = std::collections::HashMap::new();
    for m in c.seen.iter().filter(|m| m.kind == "robot.word") {
        let turn = m.payload["turn_id"].as_u64().unwrap();
        let idx = m.payload["index"].as_i64().unwrap();
        assert!(idx > *last.get(&turn).unwrap_or(&-1));
        last.insert(turn, idx);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn wakeword_yields() {
    let addr = server(GatewayConfig::default()).await;
    let mut c = Client::connect(addr).await;
    c.start(fast()).await;
    c.send(json!({"type": "robot.say", "payload": {"text": LONG}})).await;
    c.until("robot.word").await;
    c.send(json!({"type": "user.speech", "payload": {"text": "stop"}})).await;
    let gate = c.until("engine.gate").await;
    assert_eq!(gate.payload["outcome"], "wakeword_yield");
    c.until("robot.yield").await;
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_sessions_stay_apart() {
    let addr = server(GatewayConfig::default()).await;
    let mut a = Client::connect(addr).await;
    let mut b = Client::connect(addr).await;
    let ida = a.start(fast()).await;
    let idb = b.start(fast()).await;
    assert_ne!(ida, idb);
    a.send(json!({"type": "robot.say", "payload": {"text": "One two three four."}})).await;
    b.send(json!({"type": "robot.say", "payload": {"text": "Five six seven eight nine."}})).await;
    let (pa, pb) = tokio::join!(a.until("robot.done"), b.until("robot.done"));
    assert_eq!(pa.session, ida);
    assert_eq!(pb.session, idb);
    assert!(a.seen.iter().all(|m| m.session == ida));
    assert!(b.seen.iter().all(|m| m.session == idb));
    let words = |c: &Client| c.seen.iter().filter(|m| m.kind == "robot.word").count();
    assert_eq!((words(&a), words(&b)), (4, 5));
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_messages_get_errors_and_session_survives() {
    let addr = server(GatewayConfig::default()).await;
    let mut c = Client::connect(addr).await;

    c.send(json!({"type": "user.speech", "payload": {"text": "hi"}})).await;
    assert_eq!(c.until("error").await.payload["code"], "no_session");
    c.send(json!({"type": "session.start", "payload": {"version": 9}})).await;
    assert_eq!(c.until("error").await.payload["code"], "unsupported_version");
    c.send(json!({"type": "session.start", "payload": {"version": 1, "config": {"classifier": "oracle"}}}))
        .await;
    assert_eq!(c.until("error").await.payload["code"], "bad_config");

    c.start(fast()).await;
    c.send_raw("{not json").await;
    assert_eq!(c.until("error").await.payload["code"], "bad_message");
    c.send(json!({"type": "user.dance", "payload": {}})).await;
    assert_eq!(c.until("error").await.payload["code"], "bad_message");
    c.send(json!({"type": "robot.say", "payload": {"text": "   "}})).await;
    assert_eq!(c.until("error").await.payload["code"], "rejected");

    c.send(json!({"type": "robot.say", "payload": {"text": "Still here."}})).await;
    c.until("robot.done").await;
    c.send(json!({"type": "session.end"})).await;
    c.until("session.ended").await;
}

#[tokio::test(flavor = "multi_thread")]
async fn trace_is_written_on_disconnect() {
    let dir: PathBuf = std::env::temp_dir().join(format!("bargein-gw-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let addr = server(GatewayConfig {
        trace_dir: Some(dir.clone()),
        ..Default::default()
    })
    .await;
    let mut c = Client::connect(addr).await;
    let id = c.start(fast()).await;
    c.send(json!({"type": "robot.say", "payload": {"text": "Short one."}})).await;
    c.until("robot.done").await;
    drop(c);

    let path = dir.join(format!("{id}.ndjson"));
    let mut text = String::new();
    for _ in 0..100 {
        if let Ok(t) = std::fs::read_to_string(&path) {
            text = t;
            if !text.is_empty() {
                break;
            }
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let kinds: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["kind"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(kinds.first().map(String::as_str), Some("robot_plan"));
    assert!(kinds.iter().any(|k| k == "robot_done"));
    let _ = std::fs::remove_dir_all(&dir);
}

/// Replaying the wire session through the virtual-clock harness gives the
/// same gate/intent/decision sequence.
#[tokio::test(flavor = "multi_thread")]
async fn wire_session_matches_harness_replay() {
    let addr = server(GatewayConfig::default()).await;
    let mut c = Client::connect(addr).await;
    c.start(json!({})).await;
    c.send(json!({"type": "robot.say", "payload": {"text": LONG}})).await;
    let utterances = ["Okay", "What planes?"];
    let mut words_seen = 0;
    for (i, text) in utterances.iter().enumerate() {
        // barge in mid-word so jitter cannot move the event across a slot
        while words_seen < 3 + i * 6 {
            c.until("robot.word").await;
            words_seen += 1;
        }
        tokio::time::sleep(Duration::from_millis(150)).await;
        c.send(json!({"type": "user.speech", "payload": {"text": text}})).await;
        c.until("engine.decision").await;
        words_seen = c.seen.iter().filter(|m| m.kind == "robot.word").count();
    }

    let pick = |kind: &str, field: &str| -> Vec<String> {
        c.seen
            .iter()
            .filter(|m| m.kind == kind)
            .map(|m| m.payload[field].as_str().unwrap().to_string())
            .collect()
    };
    let wire = (
        pick("engine.gate", "outcome"),
        pick("engine.intent", "label"),
        pick("engine.decision", "decision"),
    );
    let onsets: Vec<f64> = c
        .seen
        .iter()
        .filter(|m| m.kind == "engine.gate")
        .map(|m| m.payload["onset_s"].as_f64().unwrap())
        .collect();

    let script: Vec<Value> = std::iter::once(json!({"kind": "robot_turn", "text": LONG}))
        .chain(
            utterances
                .iter()
                .zip(&onsets)
                .map(|(t, at)| json!({"kind": "user_event", "at_s": at, "text": t})),
        )
        .collect();
    let doc = json!({"id": "wire-replay", "script": script}).to_string();
    let s = parse_scenario(&doc, "wire-replay").unwrap();
    let replay = run_scenario(&s).unwrap();
    assert!(check_expectations(&replay, &s).passed());
    let kinds = |k: &str, f: &str| -> Vec<String> {
        replay
            .trace
            .entries()
            .iter()
            .filter_map(|e| {
                let v = serde_json::to_value(e).unwrap();
                (v["kind"] == k).then(|| v["payload"][f].as_str().unwrap().to_string())
            })
            .collect()
    };
    let harness = (
        kinds("gate", "outcome"),
        kinds("intent", "label"),
        kinds("decision", "decision"),
    );
    assert_eq!(wire, harness);
    assert_eq!(wire.2.len(), 2);
}
