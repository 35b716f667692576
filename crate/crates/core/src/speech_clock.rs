//! Word-level speech schedules.
//!
//! Synthesizers rarely report word timestamps, so progress through an
//! utterance is estimated from a uniform per-word duration derived from the
//! speaking rate. Everything here is a pure function of the plan.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::types::{join_tokens, normalize_whitespace, PlannedUtterance, WordToken};

/// Marks that end a clause. Resumption restarts after the last of these.
pub const CLAUSE_PUNCTUATION: [char; 6] = ['.', ',', '!', '?', ';', ':'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeakingRateConfig {
    pub rate_wpm: f64,
    /// Lower bound on a single word's duration, in seconds.
    pub min_word_s: f64,
}

impl Default for SpeakingRateConfig {
    fn default() -> Self {
        Self {
            rate_wpm: 150.0,
            min_word_s: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("utterance text is empty")]
    EmptyText,
    #[error("invalid speaking rate: {0}")]
    InvalidRate(String),
}

impl SpeakingRateConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(self.rate_wpm.is_finite() && self.rate_wpm > 0.0) {
            return Err(ScheduleError::InvalidRate(format!(
                "rate_wpm must be positive, got {}",
                self.rate_wpm
            )));
        }
        if !(self.min_word_s.is_finite() && self.min_word_s > 0.0) {
            return Err(ScheduleError::InvalidRate(format!(
                "min_word_s must be positive, got {}",
                self.min_word_s
            )));
        }
        Ok(())
    }

    pub fn word_duration(&self) -> Duration {
        let per_word = (60.0 / self.rate_wpm).max(self.min_word_s);
        Duration::from_secs_f64(per_word)
    }
}

pub fn ends_clause(token: &str) -> bool {
    token
        .trim_end_matches(['"', '\'', ')', ']', '\u{201d}', '\u{2019}'])
        .ends_with(CLAUSE_PUNCTUATION)
}

/// Builds a uniform schedule for `text`.
pub fn plan_utterance(
    text: &str,
    cfg: &SpeakingRateConfig,
) -> Result<PlannedUtterance, ScheduleError> {
    cfg.validate()?;
    let full_text = normalize_whitespace(text);
    if full_text.is_empty() {
        return Err(ScheduleError::EmptyText);
    }
    let word = cfg.word_duration();
    let tokens: Vec<WordToken> = full_text
        .split(' ')
        .enumerate()
        .map(|(index, w)| WordToken {
            text: w.to_string(),
            index,
            start: word * index as u32,
            duration: word,
            ends_clause: ends_clause(w),
        })
        .collect();
    let total_duration = word * tokens.len() as u32;
    Ok(PlannedUtterance {
        full_text,
        tokens,
        total_duration,
        rate_wpm: cfg.rate_wpm,
    })
}

impl PlannedUtterance {
    /// Number of tokens fully spoken after `elapsed`.
    pub fn estimated_spoken_index(&self, elapsed: Duration) -> usize {
        self.tokens.partition_point(|t| t.end() <= elapsed)
    }

    pub fn remaining_duration(&self, elapsed: Duration) -> Duration {
        self.total_duration.saturating_sub(elapsed)
    }

    /// Token index to restart from: just after the last clause boundary
    /// strictly before the estimated position, or 0 when there is none.
    pub fn resume_point(&self, elapsed: Duration) -> usize {
        let spoken = self.estimated_spoken_index(elapsed);
        self.tokens[..spoken]
            .iter()
            .rposition(|t| t.ends_clause)
            .map_or(0, |i| i + 1)
    }

    /// Tokens from `from_index` to the end, joined by single spaces.
    pub fn remaining_text(&self, from_index: usize) -> String {
        let from = from_index.min(self.tokens.len());
        join_tokens(&self.tokens[from..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate(wpm: f64) -> SpeakingRateConfig {
        SpeakingRateConfig {
            rate_wpm: wpm,
            ..Default::default()
        }
    }

    fn twenty_words() -> PlannedUtterance {
        let text = (1..=20).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        plan_utterance(&text, &rate(150.0)).unwrap()
    }

    #[test]
    fn uniform_schedule_at_120_wpm() {
        // 60 / 120 = 0.5 s per word
        let p = plan_utterance("Hello there, friend.", &rate(120.0)).unwrap();
        assert_eq!(p.len(), 3);
        for t in &p.tokens {
            assert_eq!(t.duration, Duration::from_millis(500));
        }
        assert_eq!(p.total_duration, Duration::from_millis(1500));
        let clauses: Vec<bool> = p.tokens.iter().map(|t| t.ends_clause).collect();
        assert_eq!(clauses, vec![false, true, true]);
    }

    #[test]
    fn single_word_at_60_wpm() {
        let p = plan_utterance("Yes.", &rate(60.0)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.total_duration, Duration::from_secs(1));
        assert!(p.tokens[0].ends_clause);
    }

    #[test]
    fn twenty_words_take_eight_seconds() {
        assert_eq!(twenty_words().total_duration, Duration::from_secs(8));
    }

    #[test]
    fn floor_clamps_fast_rates() {
        let cfg = SpeakingRateConfig {
            rate_wpm: 6000.0,
            min_word_s: 0.05,
        };
        let p = plan_utterance("a b", &cfg).unwrap();
        assert_eq!(p.tokens[0].duration, Duration::from_millis(50));
    }

    #[test]
    fn rejects_empty_text_and_bad_rate() {
        assert_eq!(
            plan_utterance("   \n", &rate(150.0)).unwrap_err(),
            ScheduleError::EmptyText
        );
        assert!(plan_utterance("hi", &rate(0.0)).is_err());
    }

    #[test]
    fn spoken_index_examples() {
        let p = twenty_words();
        assert_eq!(p.estimated_spoken_index(Duration::ZERO), 0);
        assert_eq!(p.estimated_spoken_index(Duration::from_secs(4)), 10);
        assert_eq!(p.estimated_spoken_index(Duration::from_secs(30)), 20);
    }

    #[test]
    fn remaining_duration_examples() {
        let p = twenty_words();
        assert_eq!(
            p.remaining_duration(Duration::from_millis(6500)),
            Duration::from_millis(1500)
        );
        assert_eq!(p.remaining_duration(Duration::ZERO), Duration::from_secs(8));
        assert_eq!(p.remaining_duration(Duration::from_secs(9)), Duration::ZERO);
    }

    #[test]
    fn resume_point_examples() {
        // clause boundary at token 4, 7 tokens spoken -> resume at 5
        let p = plan_utterance("a b c d e. f g h i j k l", &rate(60.0)).unwrap();
        assert!(p.tokens[4].ends_clause);
        assert_eq!(p.estimated_spoken_index(Duration::from_secs(7)), 7);
        assert_eq!(p.resume_point(Duration::from_secs(7)), 5);
        assert_eq!(p.resume_point(Duration::ZERO), 0);

        let flat = plan_utterance(&"x ".repeat(15), &rate(60.0)).unwrap();
        assert_eq!(flat.resume_point(Duration::from_secs(12)), 0);
    }

    #[test]
    fn resume_ignores_boundary_of_word_in_progress() {
        // "b c." is in progress at 2.5 s; only completed tokens count
        let p = plan_utterance("a, b c. d", &rate(60.0)).unwrap();
        assert_eq!(p.resume_point(Duration::from_millis(2500)), 1);
        assert_eq!(p.resume_point(Duration::from_secs(3)), 3);
    }

    #[test]
    fn remaining_text_examples() {
        let p = plan_utterance("A,  b c.\td e", &rate(60.0)).unwrap();
        assert_eq!(p.remaining_text(0), "A, b c. d e");
        assert_eq!(p.remaining_text(p.len()), "");
        let resume = p.resume_point(Duration::from_secs(4));
        assert_eq!(p.remaining_text(resume), "d e");
    }

    #[test]
    fn clause_detection_sees_through_closing_quotes() {
        assert!(ends_clause("thought.\""));
        assert!(ends_clause("well,"));
        assert!(!ends_clause("uh-huh"));
    }
}
