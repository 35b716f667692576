//! Labeled interruption utterances with minimal conversational context, for
//! measuring classifier agreement.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use bargein_core::classifier::{classify, ClassifierRequest, IntentClassifier};
use bargein_core::IntentLabel;

use crate::model::ScenarioError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusItem {
    pub text: String,
    pub expected: IntentLabel,
    #[serde(default)]
    pub history: String,
    #[serde(default)]
    pub robot_spoken: String,
    #[serde(default)]
    pub robot_remaining: String,
    #[serde(default)]
    pub elapsed_s: f64,
}

impl CorpusItem {
    pub fn request(&self) -> ClassifierRequest {
        ClassifierRequest::new(self.text.clone())
            .with_history(self.history.clone())
            .with_robot(self.robot_spoken.clone(), self.robot_remaining.clone())
            .with_elapsed(Duration::from_secs_f64(self.elapsed_s.max(0.0)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Miss {
    pub text: String,
    pub expected: IntentLabel,
    /// `None` when the classifier returned an error.
    pub got: Option<IntentLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusReport {
    pub total: usize,
    pub correct: usize,
    pub misses: Vec<Miss>,
}

impl CorpusReport {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.correct as f64 / self.total as f64
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusItem>, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        ScenarioError::Parse {
            origin: path.display().to_string(),
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })
}

pub fn evaluate(items: &[CorpusItem], classifier: &dyn IntentClassifier) -> CorpusReport {
    let mut misses = Vec::new();
    for item in items {
        let got = classify(&item.request(), classifier).ok().map(|r| r.label);
        if got != Some(item.expected) {
            misses.push(Miss {
                text: item.text.clone(),
                expected: item.expected,
                got,
            });
        }
    }
    CorpusReport {
        total: items.len(),
        correct: items.len() - misses.len(),
        misses,
    }
}
