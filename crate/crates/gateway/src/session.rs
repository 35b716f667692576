//! One websocket connection = one engine session on a wall clock.

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket};
use serde_json::json;
use tokio::sync::mpsc;
use tokio::time::sleep_until;

use bargein_core::classifier::{
    classify, ClassifierError, ClassifierResult, IntentClassifier, RuleBasedClassifier,
};
use bargein_core::config::{ClassifierChoice, PlannerChoice};
use bargein_core::engine::{ClassifyTicket, EngineError, Outcome, SessionEngine};
use bargein_core::planner::{ResponsePlanner, TemplatePlanner};
use bargein_core::SessionConfig;
use bargein_llm::{ChatClient, LlmClassifier, LlmPlanner};

use crate::protocol::{from_trace, merge_json, parse_client, ClientMessage, ServerMessage, PROTOCOL_VERSION};
use crate::GatewayState;

type Answer = (u64, Result<ClassifierResult, ClassifierError>);

struct Live {
    engine: SessionEngine,
    classifier: Arc<dyn IntentClassifier>,
    /// The planner makes network calls; engine calls must not stall the
    /// async worker.
    blocking_planner: bool,
    origin: Instant,
    sent: usize,
}

impl Live {
    fn now(&self) -> Duration {
        self.origin.elapsed().max(self.engine.now())
    }

    fn call<T>(&mut self, f: impl FnOnce(&mut SessionEngine) -> T) -> T {
        if self.blocking_planner {
            off_worker(|| f(&mut self.engine))
        } else {
            f(&mut self.engine)
        }
    }
}

/// Runs `f` where blocking is allowed. Model clients block on network I/O
/// and must also be created and dropped outside async code.
fn off_worker<T>(f: impl FnOnce() -> T) -> T {
    use tokio::runtime::{Handle, RuntimeFlavor};
    match Handle::try_current().map(|h| h.runtime_flavor()) {
        Ok(RuntimeFlavor::MultiThread) => tokio::task::block_in_place(f),
        _ => f(),
    }
}

enum Flow {
    Continue,
    Close,
}

struct Conn {
    id: String,
    socket: WebSocket,
    state: Arc<GatewayState>,
    live: Option<Live>,
    answers_tx: mpsc::UnboundedSender<Answer>,
}

pub(crate) async fn run(socket: WebSocket, state: Arc<GatewayState>, id: String) {
    let (answers_tx, mut answers_rx) = mpsc::unbounded_channel::<Answer>();
    let mut conn = Conn {
        id,
        socket,
        state,
        live: None,
        answers_tx,
    };
    tracing::info!(session = %conn.id, "connected");
    loop {
        let deadline = conn.deadline();
        let flow = tokio::select! {
            msg = conn.socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => conn.on_text(text.as_str()).await,
                Some(Ok(Message::Binary(_))) => {
                    conn.send(ServerMessage::error(&conn.id, "bad_message", "binary frames are not supported")).await
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => Flow::Close,
                Some(Ok(_)) => Flow::Continue,
            },
            Some((id, answer)) = answers_rx.recv() => {
                conn.engine_step(|e, now| e.on_classifier_result(now, id, answer)).await
            }
            _ = sleep_until(deadline.unwrap_or_else(far_future).into()), if deadline.is_some() => {
                conn.engine_step(|e, now| e.tick(now)).await
            }
        };
        if let Flow::Close = flow {
            break;
        }
    }
    conn.finish();
}

fn far_future() -> Instant {
    Instant::now() + Duration::from_secs(86_400)
}

impl Conn {
    fn deadline(&self) -> Option<Instant> {
        let live = self.live.as_ref()?;
        live.engine.next_deadline().map(|d| live.origin + d)
    }

    async fn send(&mut self, msg: ServerMessage) -> Flow {
        match self.socket.send(Message::Text(msg.to_line().into())).await {
            Ok(()) => Flow::Continue,
            Err(_) => Flow::Close,
        }
    }

    async fn error(&mut self, code: &str, message: impl Into<String>) -> Flow {
        let msg = ServerMessage::error(&self.id, code, message);
        self.send(msg).await
    }

    async fn on_text(&mut self, text: &str) -> Flow {
        let msg = match parse_client(text) {
            Ok(m) => m,
            Err(e) => return self.error("bad_message", e.to_string()).await,
        };
        match msg {
            ClientMessage::Start { version, config } => self.start(version, config).await,
            _ if self.live.is_none() => self.error("no_session", "send session.start first").await,
            ClientMessage::UserSpeech { text, is_final } => {
                self.engine_step(|e, now| e.on_user_speech(now, &text, is_final)).await
            }
            ClientMessage::RobotSay { text } => {
                self.engine_step(|e, now| e.start_robot_turn(now, &text)).await
            }
            ClientMessage::End => {
                let msg = ServerMessage::new("session.ended", &self.id, json!({}));
                self.send(msg).await;
                Flow::Close
            }
        }
    }

    async fn start(&mut self, version: u32, patch: Option<serde_json::Value>) -> Flow {
        if self.live.is_some() {
            return self.error("already_started", "session already started").await;
        }
        if version != PROTOCOL_VERSION {
            return self
                .error(
                    "unsupported_version",
                    format!("server speaks protocol version {PROTOCOL_VERSION}, got {version}"),
                )
                .await;
        }
        match off_worker(|| self.build(patch)) {
            Ok((live, cfg)) => {
                self.live = Some(live);
                let msg = ServerMessage::new(
                    "session.started",
                    &self.id,
                    json!({"version": PROTOCOL_VERSION, "config": cfg}),
                );
                self.send(msg).await
            }
            Err(message) => self.error("bad_config", message).await,
        }
    }

    fn build(&self, patch: Option<serde_json::Value>) -> Result<(Live, SessionConfig), String> {
        let mut merged = serde_json::to_value(&self.state.config.session).map_err(|e| e.to_string())?;
        if let Some(p) = patch {
            if !p.is_object() {
                return Err("config must be an object".into());
            }
            merge_json(&mut merged, p);
        }
        let mut cfg: SessionConfig = serde_json::from_value(merged).map_err(|e| e.to_string())?;
        cfg.clock = bargein_core::clock::ClockMode::Wall;

        let llm = || -> Result<ChatClient, String> {
            let c = self
                .state
                .config
                .llm
                .clone()
                .ok_or("this server has no model endpoint configured")?;
            ChatClient::new(c).map_err(|e| e.to_string())
        };
        let classifier: Arc<dyn IntentClassifier> = match cfg.classifier {
            ClassifierChoice::RuleBased => Arc::new(RuleBasedClassifier),
            ClassifierChoice::External => Arc::new(LlmClassifier::new(llm()?)),
            ClassifierChoice::Oracle => {
                return Err("the oracle classifier is only available in scenario replay".into())
            }
        };
        let planner: Box<dyn ResponsePlanner> = match cfg.planner {
            PlannerChoice::Template => Box::new(TemplatePlanner::new(cfg.template.clone())),
            PlannerChoice::External => Box::new(LlmPlanner::new(llm()?)),
        };
        let blocking_planner = cfg.planner == PlannerChoice::External;
        let engine = SessionEngine::new(cfg.clone(), planner).map_err(|e| e.to_string())?;
        Ok((
            Live {
                engine,
                classifier,
                blocking_planner,
                origin: Instant::now(),
                sent: 0,
            },
            cfg,
        ))
    }

    /// Runs one engine call at the current session time, then mirrors new
    /// trace entries to the client and dispatches classification work.
    async fn engine_step(
        &mut self,
        f: impl FnOnce(&mut SessionEngine, Duration) -> Result<Outcome, EngineError>,
    ) -> Flow {
        let Some(live) = self.live.as_mut() else {
            return Flow::Continue;
        };
        let now = live.now();
        let result = live.call(|e| f(e, now));
        let mut frames: Vec<ServerMessage> = live
            .engine
            .trace()
            .since(live.sent)
            .iter()
            .map(|e| from_trace(&self.id, e))
            .collect();
        live.sent = live.engine.trace().len();
        match result {
            Ok(out) => {
                for ticket in out.classify {
                    self.dispatch(ticket);
                }
            }
            Err(e) => frames.push(ServerMessage::error(&self.id, "rejected", e.to_string())),
        }
        for frame in frames {
            if let Flow::Close = self.send(frame).await {
                return Flow::Close;
            }
        }
        Flow::Continue
    }

    fn dispatch(&self, ticket: ClassifyTicket) {
        let Some(live) = &self.live else { return };
        let classifier = Arc::clone(&live.classifier);
        let tx = self.answers_tx.clone();
        tokio::spawn(async move {
            let id = ticket.request_id;
            let answer = tokio::task::spawn_blocking(move || classify(&ticket.request, &*classifier))
                .await
                .unwrap_or_else(|e| Err(ClassifierError::Transport(format!("classifier task failed: {e}"))));
            // the session may be gone; its timeout already covers us
            let _ = tx.send((id, answer));
        });
    }

    fn finish(self) {
        tracing::info!(session = %self.id, "disconnected");
        let Some(live) = self.live else { return };
        let Some(dir) = &self.state.config.trace_dir else {
            off_worker(|| drop(live));
            return;
        };
        let path = dir.join(format!("{}.ndjson", self.id));
        let written = std::fs::create_dir_all(dir)
            .and_then(|()| std::fs::File::create(&path))
            .and_then(|f| live.engine.trace().write_ndjson(std::io::BufWriter::new(f)));
        match written {
            Ok(()) => tracing::info!(session = %self.id, path = %path.display(), "trace written"),
            Err(e) => tracing::warn!(session = %self.id, error = %e, "could not write trace"),
        }
        off_worker(|| drop(live));
    }
}
