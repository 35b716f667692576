//! Append-only conversation history fed to classifiers and planners.

use std::time::Duration;

use serde::Serialize;

use crate::types::Speaker;

/// Suffix attached to robot turns that were cut off.
pub const TRUNCATION_MARKER: &str = "[interrupted]";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub speaker: Speaker,
    pub text: String,
    #[serde(with = "crate::clock::serde_secs")]
    pub start: Duration,
    /// False for robot turns that were truncated at an interruption; the
    /// text is then only the estimated spoken prefix.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HistoryError {
    #[error("history entry at {at:?} precedes last entry at {last:?}")]
    OutOfOrder { at: Duration, last: Duration },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DialogueHistory {
    entries: Vec<HistoryEntry>,
}

impl DialogueHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn append_turn(
        &mut self,
        speaker: Speaker,
        text: impl Into<String>,
        start: Duration,
        complete: bool,
    ) -> Result<(), HistoryError> {
        if let Some(last) = self.entries.last() {
            if start < last.start {
                return Err(HistoryError::OutOfOrder {
                    at: start,
                    last: last.start,
                });
            }
        }
        self.entries.push(HistoryEntry {
            speaker,
            text: text.into(),
            start,
            complete,
        });
        Ok(())
    }

    /// Renders the last `max_turns` entries as `Speaker: text` lines.
    pub fn render(&self, max_turns: usize) -> String {
        let skip = self.entries.len().saturating_sub(max_turns.max(1));
        self.entries[skip..]
            .iter()
            .map(|e| {
                if e.complete {
                    format!("{}: {}", e.speaker, e.text)
                } else if e.text.is_empty() {
                    format!("{}: {}", e.speaker, TRUNCATION_MARKER)
                } else {
                    format!("{}: {} {}", e.speaker, e.text, TRUNCATION_MARKER)
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}
