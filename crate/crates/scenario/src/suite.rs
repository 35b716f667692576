//! Runs every scenario file in a directory.

use std::path::{Path, PathBuf};

use crate::model::{load_scenario, ScenarioError};
use crate::report::{check_expectations, Report};
use crate::runner::{run_scenario, RunError};

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{id}: {source}")]
    Run { id: String, source: RunError },
}

#[derive(Debug)]
pub struct SuiteEntry {
    pub path: PathBuf,
    pub outcome: Result<(Report, String), SuiteError>,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        matches!(&self.outcome, Ok((r, _)) if r.passed())
    }

    pub fn report(&self) -> Option<&Report> {
        self.outcome.as_ref().ok().map(|(r, _)| r)
    }

    /// ND-JSON trace of the replay.
    pub fn trace(&self) -> Option<&str> {
        self.outcome.as_ref().ok().map(|(_, t)| t.as_str())
    }
}

#[derive(Debug)]
pub struct SuiteRun {
    pub entries: Vec<SuiteEntry>,
}

impl SuiteRun {
    pub fn passed(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(SuiteEntry::passed)
    }

    pub fn decision_totals(&self) -> (usize, usize) {
        self.entries
            .iter()
            .filter_map(SuiteEntry::report)
            .fold((0, 0), |(m, t), r| (m + r.decisions_matched, t + r.decisions_total))
    }
}

/// `*.json` files directly under `dir`, sorted by name.
pub fn scenario_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ScenarioError> {
    let dir = dir.as_ref();
    let io = |source| ScenarioError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn run_file(path: &Path) -> Result<(Report, String), SuiteError> {
    let s = load_scenario(path)?;
    let replay = run_scenario(&s).map_err(|source| SuiteError::Run {
        id: s.id.clone(),
        source,
    })?;
    Ok((check_expectations(&replay, &s), replay.ndjson()))
}

/// Runs the files in parallel, one thread per scenario; results keep file
/// order.
pub fn run_suite(dir: impl AsRef<Path>) -> Result<SuiteRun, ScenarioError> {
    let files = scenario_files(dir)?;
    let entries = std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .iter()
            .map(|p| scope.spawn(move || run_file(p)))
            .collect();
        files
            .iter()
            .zip(handles)
            .map(|(path, h)| SuiteEntry {
                path: path.clone(),
                outcome: h.join().expect("scenario thread panicked"),
            })
            .collect()
    });
    Ok(SuiteRun { entries })
}
