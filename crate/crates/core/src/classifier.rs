//! Interrupter intent classification.
//!
//! Classification sits behind [`IntentClassifier`]. The crate ships a
//! deterministic lexical reference ([`RuleBasedClassifier`]) and a fixed
//! label stand-in for scripted scenarios ([`OracleClassifier`]); a
//! language-model client lives in a separate crate and uses
//! [`build_prompt`] and [`parse_label`] from here.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::history::TRUNCATION_MARKER;
use crate::lexicon::{
    contains_phrase, normalized_tokens, shares_content_word, AGREEMENT_PHRASES, AGREEMENT_TOKENS,
    FILLERS, INTERROGATIVES, NEGATIONS, OPINION_SOLICITATIONS,
};
use crate::types::IntentLabel;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierRequest {
    pub history_rendered: String,
    pub overlap_text: String,
    /// Time since the robot started its current logical turn.
    pub elapsed: Duration,
    /// Part of the in-progress utterance estimated to have been said.
    pub robot_spoken_text: String,
    pub robot_remaining_text: String,
}

impl ClassifierRequest {
    pub fn new(overlap_text: impl Into<String>) -> Self {
        Self {
            history_rendered: String::new(),
            overlap_text: overlap_text.into(),
            elapsed: Duration::ZERO,
            robot_spoken_text: String::new(),
            robot_remaining_text: String::new(),
        }
    }

    pub fn with_robot(mut self, spoken: impl Into<String>, remaining: impl Into<String>) -> Self {
        self.robot_spoken_text = spoken.into();
        self.robot_remaining_text = remaining.into();
        self
    }

    pub fn with_history(mut self, rendered: impl Into<String>) -> Self {
        self.history_rendered = rendered.into();
        self
    }

    pub fn with_elapsed(mut self, elapsed: Duration) -> Self {
        self.elapsed = elapsed;
        self
    }

    fn robot_utterance(&self) -> String {
        format!("{} {}", self.robot_spoken_text, self.robot_remaining_text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierSource {
    RuleBased,
    External,
    OracleFixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierResult {
    pub label: IntentLabel,
    pub source: ClassifierSource,
    pub latency: Duration,
    /// Raw model exchange, kept for the trace when body logging is enabled.
    pub raw: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifierError {
    #[error("classifier request is invalid: {0}")]
    InvalidRequest(String),
    #[error("classifier timed out after {0:?}")]
    Timeout(Duration),
    #[error("classifier output could not be parsed: {0}")]
    Malformed(String),
    #[error("classifier transport failed: {0}")]
    Transport(String),
}

pub trait IntentClassifier: Send + Sync {
    fn classify(&self, req: &ClassifierRequest) -> Result<ClassifierResult, ClassifierError>;
}

/// Validates the request and delegates to `imp`.
pub fn classify(
    req: &ClassifierRequest,
    imp: &dyn IntentClassifier,
) -> Result<ClassifierResult, ClassifierError> {
    if req.overlap_text.trim().is_empty() {
        return Err(ClassifierError::InvalidRequest(
            "overlap text is empty".into(),
        ));
    }
    imp.classify(req)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedClassifier;

impl IntentClassifier for RuleBasedClassifier {
    fn classify(&self, req: &ClassifierRequest) -> Result<ClassifierResult, ClassifierError> {
        Ok(ClassifierResult {
            label: rule_based_classify(req),
            source: ClassifierSource::RuleBased,
            latency: Duration::ZERO,
            raw: None,
        })
    }
}

/// Always answers with a preset label. Scenario replay uses it to pin the
/// classification of scripted events.
#[derive(Debug, Clone, Copy)]
pub struct OracleClassifier(pub IntentLabel);

impl IntentClassifier for OracleClassifier {
    fn classify(&self, _req: &ClassifierRequest) -> Result<ClassifierResult, ClassifierError> {
        Ok(ClassifierResult {
            label: self.0,
            source: ClassifierSource::OracleFixture,
            latency: Duration::ZERO,
            raw: None,
        })
    }
}

fn is_question(text: &str, tokens: &[String]) -> bool {
    if text.trim_end().ends_with('?') {
        return true;
    }
    tokens
        .iter()
        .find(|t| !FILLERS.contains(&t.as_str()))
        .is_some_and(|t| INTERROGATIVES.contains(&t.as_str()))
}

/// Ordered lexical heuristics:
///
/// 1. only agreement tokens, or a non-negated, non-question statement that
///    opens with an agreement token or contains an agreement phrase
///    -> `Agreement`
/// 2. a question sharing a content word with the robot's utterance that is
///    not asking for the robot's opinion -> `Clarification`
/// 3. a non-negated statement sharing a content word -> `Assistance`
/// 4. anything else -> `Disruptive`
pub fn rule_based_classify(req: &ClassifierRequest) -> IntentLabel {
    let tokens = normalized_tokens(&req.overlap_text);
    let words: Vec<&str> = tokens
        .iter()
        .map(String::as_str)
        .filter(|t| !FILLERS.contains(t))
        .collect();
    let negated = tokens.iter().any(|t| NEGATIONS.contains(&t.as_str()));
    let question = is_question(&req.overlap_text, &tokens);

    if !words.is_empty() && words.iter().all(|t| AGREEMENT_TOKENS.contains(t)) {
        return IntentLabel::Agreement;
    }
    if !question && !negated {
        let opens_agreeing = words.first().is_some_and(|t| AGREEMENT_TOKENS.contains(t));
        if opens_agreeing || AGREEMENT_PHRASES.iter().any(|p| contains_phrase(&tokens, p)) {
            return IntentLabel::Agreement;
        }
    }

    let related = shares_content_word(&req.overlap_text, &req.robot_utterance());
    if question {
        let solicits = OPINION_SOLICITATIONS
            .iter()
            .any(|p| contains_phrase(&tokens, p));
        if related && !solicits {
            return IntentLabel::Clarification;
        }
    } else if related && !negated {
        return IntentLabel::Assistance;
    }
    IntentLabel::Disruptive
}

const LABEL_GUIDE: [(IntentLabel, &str); 4] = [
    (
        IntentLabel::Agreement,
        "the user signals they follow or agree with the robot (short backchannels such as \"yeah\" count here)",
    ),
    (
        IntentLabel::Assistance,
        "the user supplies a word, item or idea that helps the robot finish what it is saying",
    ),
    (
        IntentLabel::Clarification,
        "the user asks the robot to explain or expand on something it just said",
    ),
    (
        IntentLabel::Disruptive,
        "the user wants the floor: disagreeing, raising their own point, changing the subject or cutting the robot short",
    ),
];

/// Prompt for a language-model classifier.
pub fn build_prompt(req: &ClassifierRequest) -> String {
    let mut p = String::new();
    p.push_str(
        "A robot is talking with a user. The user started speaking while the robot was still \
         talking. Decide what the user intended.\n\nLabels:\n",
    );
    for (label, gloss) in LABEL_GUIDE {
        p.push_str(&format!("- {label}: {gloss}\n"));
    }
    p.push_str("\nConversation so far (turns marked ");
    p.push_str(TRUNCATION_MARKER);
    p.push_str(" were cut off):\n");
    if req.history_rendered.trim().is_empty() {
        p.push_str("(no earlier conversation)\n");
    } else {
        p.push_str(req.history_rendered.trim_end());
        p.push('\n');
    }
    p.push_str("\nRobot utterance in progress:\n");
    p.push_str(&format!("Already said: \"{}\"\n", req.robot_spoken_text));
    p.push_str(&format!("Not yet said: \"{}\"\n", req.robot_remaining_text));
    p.push_str(&format!(
        "\nSeconds since the robot started this turn: {:.1}\n",
        req.elapsed.as_secs_f64()
    ));
    p.push_str(&format!(
        "User said while the robot was speaking: \"{}\"\n",
        req.overlap_text
    ));
    p.push_str(
        "\nAnswer with exactly one word: agreement, assistance, clarification, or disruptive.",
    );
    p
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelParseError {
    #[error("no intent label found in `{0}`")]
    NoLabel(String),
    #[error("several intent labels found in `{0}`")]
    Ambiguous(String),
}

impl From<LabelParseError> for ClassifierError {
    fn from(e: LabelParseError) -> Self {
        ClassifierError::Malformed(e.to_string())
    }
}

/// Strict label extraction: exactly one distinct label word must appear.
pub fn parse_label(raw: &str) -> Result<IntentLabel, LabelParseError> {
    let mut found: Option<IntentLabel> = None;
    for tok in normalized_tokens(raw) {
        if let Ok(label) = tok.parse::<IntentLabel>() {
            match found {
                None => found = Some(label),
                Some(prev) if prev != label => {
                    return Err(LabelParseError::Ambiguous(raw.to_string()))
                }
                Some(_) => {}
            }
        }
    }
    found.ok_or_else(|| LabelParseError::NoLabel(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rb(text: &str, robot: &str) -> IntentLabel {
        rule_based_classify(&ClassifierRequest::new(text).with_robot("", robot))
    }

    #[test]
    fn backchannels_are_agreement() {
        assert_eq!(rb("Yeah", "anything at all"), IntentLabel::Agreement);
        assert_eq!(rb("Okay", ""), IntentLabel::Agreement);
        assert_eq!(rb("yeah yeah", ""), IntentLabel::Agreement);
        assert_eq!(rb("uh, mm-hmm", ""), IntentLabel::Agreement);
        assert_eq!(rb("That's a good idea", ""), IntentLabel::Agreement);
    }

    #[test]
    fn negated_agreement_opener_is_not_agreement() {
        assert_eq!(
            rb("Yes, but we don't have time", "we have plenty of time"),
            IntentLabel::Disruptive
        );
    }

    #[test]
    fn clarification_needs_shared_content() {
        let robot = "About forty percent of the states still use it.";
        assert_eq!(rb("What percent?", robot), IntentLabel::Clarification);
        assert_eq!(
            rb(
                "How many states have capital punishment?",
                "Research suggests the death penalty does not deter crime."
            ),
            IntentLabel::Disruptive
        );
    }

    #[test]
    fn opinion_questions_take_the_floor() {
        assert_eq!(
            rb(
                "what do you think about the flashlight?",
                "The flashlight is useful at night."
            ),
            IntentLabel::Disruptive
        );
    }

    #[test]
    fn assistance_and_disruption() {
        let robot = "We should also pack a knife for cutting rope.";
        assert_eq!(rb("maybe the jack knife", robot), IntentLabel::Assistance);
        assert_eq!(rb("we don't need a knife", robot), IntentLabel::Disruptive);
        assert_eq!(rb("Uh, Luna we we don't have time", robot), IntentLabel::Disruptive);
        assert_eq!(rb("uh", robot), IntentLabel::Disruptive);
    }

    #[test]
    fn prompt_carries_inputs() {
        let req = ClassifierRequest::new("What percent?")
            .with_robot("About forty", "percent of states.")
            .with_elapsed(Duration::from_millis(3200));
        let p = build_prompt(&req);
        assert!(p.contains("3.2"));
        for l in IntentLabel::ALL {
            assert!(p.contains(l.as_str()));
        }
        assert!(p.contains("(no earlier conversation)"));
        assert!(p.contains("Already said: \"About forty\""));
        assert!(p.contains("Not yet said: \"percent of states.\""));
        assert!(p.contains("What percent?"));
        assert!(p.contains("exactly one word"));

        let with_hist = build_prompt(&req.clone().with_history("Robot: We rank it [interrupted]"));
        assert!(with_hist.contains("Robot: We rank it [interrupted]"));
    }

    #[test]
    fn parse_label_examples() {
        assert_eq!(parse_label("disruptive").unwrap(), IntentLabel::Disruptive);
        assert_eq!(
            parse_label("Cooperative clarification.").unwrap(),
            IntentLabel::Clarification
        );
        assert!(matches!(
            parse_label("I think it is friendly"),
            Err(LabelParseError::NoLabel(_))
        ));
        assert!(matches!(
            parse_label("agreement or disruptive"),
            Err(LabelParseError::Ambiguous(_))
        ));
        assert_eq!(
            parse_label("Agreement. Final answer: agreement").unwrap(),
            IntentLabel::Agreement
        );
        for l in IntentLabel::ALL {
            assert_eq!(parse_label(&l.to_string()).unwrap(), l);
        }
    }

    #[test]
    fn classify_rejects_empty_overlap() {
        let err = classify(&ClassifierRequest::new("  "), &RuleBasedClassifier).unwrap_err();
        assert!(matches!(err, ClassifierError::InvalidRequest(_)));
        let ok = classify(&ClassifierRequest::new("okay"), &OracleClassifier(IntentLabel::Assistance))
            .unwrap();
        assert_eq!(ok.label, IntentLabel::Assistance);
        assert_eq!(ok.source, ClassifierSource::OracleFixture);
    }
}
