//! Scripted sessions for the interruption engine.
//!
//! A [`Scenario`] is a JSON document: a session config, a script of robot
//! turns and timed user speech, and golden expectations per user step.
//! [`run_scenario`] replays it on a virtual clock, so the trace is a pure
//! function of the file; [`check_expectations`] compares the trace against
//! the expectations.

pub mod corpus;
pub mod model;
pub mod report;
pub mod runner;
pub mod suite;

pub use corpus::{evaluate, load_corpus, CorpusItem, CorpusReport};
pub use model::{load_scenario, parse_scenario, Expectation, Scenario, ScenarioError, Seconds, Step};
pub use report::{check_expectations, Check, Report};
pub use runner::{run_scenario, Replay, Replayer, RunError};
pub use suite::{run_file, run_suite, scenario_files, SuiteEntry, SuiteError, SuiteRun};

/// Directory of the bundled scenario files.
pub fn bundled_scenarios() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

/// The bundled labeled utterance corpus.
pub fn bundled_corpus() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/interruptions.json")
}
