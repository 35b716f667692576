use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use bargein_core::classifier::{ClassifierError, ClassifierRequest, ClassifierSource, IntentClassifier};
use bargein_core::planner::{plan_new_response, PlannerError, PlannerKind, PlannerRequest};
use bargein_core::IntentLabel;
use bargein_llm::{ChatClient, LlmClassifier, LlmConfig, LlmError, LlmPlanner};

struct Captured {
    head: String,
    body: serde_json::Value,
}

/// Serves one request with `status` and `body`, after `delay`. The parsed
/// request comes back on the returned channel.
fn serve_once(status: u16, body: &str, delay: Duration) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1", listener.local_addr().unwrap());
    let body = body.to_string();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream);
        let mut head = String::new();
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" || line.is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
            head.push_str(&line);
        }
        let mut buf = vec![0; length];
        reader.read_exact(&mut buf).unwrap();
        let _ = tx.send(Captured {
            head,
            body: serde_json::from_slice(&buf).unwrap(),
        });
        thread::sleep(delay);
        let reply = format!(
            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        );
        let _ = reader.get_mut().write_all(reply.as_bytes());
    });
    (endpoint, rx)
}

fn completion(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn client(endpoint: String) -> ChatClient {
    ChatClient::new(LlmConfig {
        endpoint,
        model: "test-model".into(),
        api_key: Some("secret".into()),
        timeout_s: 1.0,
        ..Default::default()
    })
    .unwrap()
}

fn request() -> ClassifierRequest {
    ClassifierRequest::new("What percent?")
        .with_robot("About forty percent of states", "abolished it.")
        .with_history("User: tell me about it")
}

#[test]
fn classifies_through_chat_endpoint() {
    let (endpoint, rx) = serve_once(200, &completion("Clarification."), Duration::ZERO);
    let c = LlmClassifier::new(client(endpoint));
    let res = c.classify(&request()).unwrap();
    assert_eq!(res.label, IntentLabel::Clarification);
    assert_eq!(res.source, ClassifierSource::External);
    assert_eq!(res.raw.as_deref(), Some("Clarification."));

    let got = rx.recv().unwrap();
    assert!(got.head.starts_with("POST /v1/chat/completions"));
    assert!(got.head.to_ascii_lowercase().contains("authorization: bearer secret"));
    assert_eq!(got.body["model"], "test-model");
    let prompt = got.body["messages"][1]["content"].as_str().unwrap();
    assert!(prompt.contains("\"What percent?\""));
    assert!(prompt.contains("User: tell me about it"));
}

#[test]
fn unparseable_label_is_malformed() {
    let (endpoint, _rx) = serve_once(200, &completion("It could be agreement or disruptive"), Duration::ZERO);
    let err = LlmClassifier::new(client(endpoint)).classify(&request()).unwrap_err();
    assert!(matches!(err, ClassifierError::Malformed(_)), "{err:?}");

    let (endpoint, _rx) = serve_once(200, r#"{"choices": []}"#, Duration::ZERO);
    let err = LlmClassifier::new(client(endpoint)).classify(&request()).unwrap_err();
    assert!(matches!(err, ClassifierError::Malformed(_)), "{err:?}");
}

#[test]
fn http_errors_are_transport_failures() {
    let (endpoint, _rx) = serve_once(503, r#"{"error": "overloaded"}"#, Duration::ZERO);
    let err = client(endpoint).complete("s", "u").unwrap_err();
    assert!(matches!(err, LlmError::Status { status: 503, .. }), "{err:?}");

    let err = LlmClassifier::new(client("http://127.0.0.1:1/v1".into()))
        .classify(&request())
        .unwrap_err();
    assert!(matches!(err, ClassifierError::Transport(_)), "{err:?}");
}

#[test]
fn slow_server_times_out() {
    let (endpoint, _rx) = serve_once(200, &completion("agreement"), Duration::from_millis(1500));
    let err = LlmClassifier::new(client(endpoint)).classify(&request()).unwrap_err();
    assert!(matches!(err, ClassifierError::Timeout(_)), "{err:?}");
}

#[test]
fn planner_passes_text_through() {
    let (endpoint, rx) = serve_once(200, &completion("Fixture reply, unchanged."), Duration::ZERO);
    let planner = LlmPlanner::new(client(endpoint));
    let req = PlannerRequest {
        kind: PlannerKind::NewResponse,
        history_rendered: String::new(),
        trigger_text: "what about the pistol?".into(),
        remaining_text: String::new(),
    };
    assert_eq!(plan_new_response(&planner, &req).unwrap(), "Fixture reply, unchanged.");
    let got = rx.recv().unwrap();
    assert!(got.body["messages"][1]["content"]
        .as_str()
        .unwrap()
        .contains("what about the pistol?"));

    let (endpoint, _rx) = serve_once(200, &completion("   "), Duration::ZERO);
    let planner = LlmPlanner::new(client(endpoint));
    assert!(matches!(
        plan_new_response(&planner, &req),
        Err(PlannerError::InvalidOutput(_))
    ));
}
