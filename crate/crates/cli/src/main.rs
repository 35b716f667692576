//! `bargein`: replay scenarios, run the golden suite, probe the classifier
//! and serve live sessions.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use bargein_core::classifier::{classify, ClassifierRequest, IntentClassifier, RuleBasedClassifier};
use bargein_core::config::{ClassifierChoice, PlannerChoice};
use bargein_gateway::GatewayConfig;
use bargein_llm::{ChatClient, LlmClassifier, LlmPlanner};
use bargein_scenario::{check_expectations, load_scenario, run_suite, Replayer};

mod config;

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "bargein", version, about = "Interruption handling for spoken agents")]
struct Cli {
    /// JSON config file with optional `session`, `llm` and `trace_dir` sections.
    #[arg(long, global = true, env = "BARGEIN_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replay one scenario and check its expectations.
    Run {
        scenario: PathBuf,
        /// Write the session trace as ND-JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Replay every scenario in a directory; fails if any expectation fails.
    Suite {
        dir: PathBuf,
        /// Write one `<scenario>.ndjson` trace per scenario here.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Serve live sessions over WebSocket.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8765")]
        bind: SocketAddr,
        /// Write each session's trace here when it ends.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Classify one overlapping utterance.
    Classify {
        #[arg(long)]
        text: String,
        /// A dialogue line such as "Robot: ..." or "User: ..."; repeatable.
        #[arg(long)]
        history: Vec<String>,
        /// What the robot had said of its current utterance.
        #[arg(long, default_value = "")]
        spoken: String,
        /// What the robot had left to say.
        #[arg(long, default_value = "")]
        remaining: String,
        /// Seconds since the robot's turn began.
        #[arg(long, default_value_t = 0.0)]
        elapsed: f64,
        /// Ask the configured model instead of the rule-based classifier.
        #[arg(long)]
        external: bool,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether the command succeeded; errors are usage or I/O problems.
fn dispatch(cli: Cli) -> Result<bool> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Run { scenario, trace, json } => run(&cfg, &scenario, trace.as_deref(), json),
        Command::Suite { dir, trace_dir } => suite(&dir, trace_dir.as_deref()),
        Command::Serve { bind, trace_dir } => serve(cfg, bind, trace_dir),
        Command::Classify {
            text,
            history,
            spoken,
            remaining,
            elapsed,
            external,
            json,
        } => {
            let elapsed = Duration::try_from_secs_f64(elapsed)
                .with_context(|| format!("--elapsed must be a non-negative number, got {elapsed}"))?;
            let req = ClassifierRequest::new(text)
                .with_history(history.join("\n"))
                .with_robot(spoken, remaining)
                .with_elapsed(elapsed);
            probe(&cfg, &req, external, json)
        }
    }
}

fn run(cfg: &FileConfig, path: &Path, trace: Option<&Path>, json: bool) -> Result<bool> {
    let s = load_scenario(path)?;
    let external_classifier = match s.config.classifier {
        ClassifierChoice::External => Some(LlmClassifier::new(ChatClient::new(cfg.model_or_default()?)?)),
        _ => None,
    };
    let mut replayer = Replayer::new(&s);
    if let Some(c) = &external_classifier {
        replayer = replayer.with_classifier(c);
    }
    if s.config.planner == PlannerChoice::External {
        replayer = replayer.with_planner(Box::new(LlmPlanner::new(ChatClient::new(cfg.model_or_default()?)?)));
    }
    let replay = replayer.run()?;
    if let Some(out) = trace {
        std::fs::write(out, replay.ndjson()).with_context(|| format!("writing {}", out.display()))?;
    }
    let report = check_expectations(&replay, &s);
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{report}");
    }
    Ok(report.passed())
}

fn suite(dir: &Path, trace_dir: Option<&Path>) -> Result<bool> {
    let run = run_suite(dir)?;
    if run.entries.is_empty() {
        bail!("no scenario files in {}", dir.display());
    }
    if let Some(out) = trace_dir {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    }
    for entry in &run.entries {
        match &entry.outcome {
            Ok((report, trace)) => {
                println!("{report}");
                if let Some(out) = trace_dir {
                    let file = out.join(format!("{}.ndjson", report.scenario));
                    std::fs::write(&file, trace).with_context(|| format!("writing {}", file.display()))?;
                }
            }
            Err(e) => println!("FAIL {}: {e}", entry.path.display()),
        }
    }
    let passed = run.entries.iter().filter(|e| e.passed()).count();
    let (matched, total) = run.decision_totals();
    println!(
        "{passed}/{} scenarios passed, decisions {matched}/{total}",
        run.entries.len()
    );
    Ok(run.passed())
}

fn serve(cfg: FileConfig, bind: SocketAddr, trace_dir: Option<PathBuf>) -> Result<bool> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let gateway = GatewayConfig {
        llm: cfg.model()?,
        trace_dir: trace_dir.or(cfg.trace_dir),
        session: cfg.session,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        println!("listening on {}", listener.local_addr()?);
        std::io::stdout().flush()?;
        bargein_gateway::serve(listener, gateway).await?;
        Ok(true)
    })
}

fn probe(cfg: &FileConfig, req: &ClassifierRequest, external: bool, json: bool) -> Result<bool> {
    let classifier: Box<dyn IntentClassifier> = if external {
        Box::new(LlmClassifier::new(ChatClient::new(cfg.model_or_default()?)?))
    } else {
        Box::new(RuleBasedClassifier)
    };
    let res = classify(req, &*classifier)?;
    if json {
        let out = json!({
            "label": res.label,
            "source": res.source,
            "latency_s": res.latency.as_secs_f64(),
            "raw": res.raw,
        });
        println!("{out}");
    } else {
        println!("{}", res.label);
    }
    Ok(true)
}
