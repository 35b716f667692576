//! Word lists and tokenization shared by the gate, the rule-based
//! classifier and the template planner.

use std::collections::BTreeSet;

/// Lowercased whitespace tokens with surrounding punctuation removed.
/// Inner apostrophes and hyphens survive ("don't", "uh-huh").
pub fn normalized_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.replace(['\u{2019}', '\u{2018}'], "'")
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Single-token agreement signals, including common backchannels.
pub const AGREEMENT_TOKENS: &[&str] = &[
    "yeah", "okay", "ok", "yes", "right", "sure", "uh-huh", "mm-hmm", "mhm", "uhhum", "yep",
    "yup", "alright", "agreed", "exactly", "absolutely", "definitely", "totally", "true",
];

/// Multi-word agreement phrases, matched on normalized token sequences.
pub const AGREEMENT_PHRASES: &[&str] = &[
    "good idea",
    "great idea",
    "sounds good",
    "sounds great",
    "i agree",
    "makes sense",
    "that's right",
    "that's true",
    "good point",
    "fair enough",
    "go ahead",
    "keep going",
    "got it",
    "i see",
];

pub const FILLERS: &[&str] = &["uh", "um", "uhm", "er", "erm", "ah", "oh", "hmm", "well", "so"];

pub const INTERROGATIVES: &[&str] = &[
    "what", "why", "how", "do", "did", "does", "is", "are", "can", "could", "would", "when",
    "where", "which", "who", "should", "will",
];

pub const NEGATIONS: &[&str] = &[
    "no", "not", "nope", "nah", "never", "don't", "dont", "doesn't", "didn't", "isn't", "aren't",
    "wasn't", "can't", "cannot", "won't", "wouldn't", "shouldn't", "haven't", "but", "disagree",
];

/// Phrases that ask for the robot's own view; such questions take the
/// floor rather than asking for elaboration.
pub const OPINION_SOLICITATIONS: &[&str] = &[
    "what do you think",
    "do you think",
    "how do you feel",
    "what about",
    "how about",
    "what's your opinion",
    "what is your opinion",
];

const STOPWORDS: &[&str] = &[
    "about", "above", "after", "again", "also", "another", "because", "been", "before", "being",
    "both", "could", "does", "doing", "each", "even", "from", "have", "having", "here", "into",
    "just", "know", "like", "many", "more", "most", "much", "must", "need", "only", "other",
    "over", "really", "should", "some", "such", "than", "that", "that's", "their", "them", "then",
    "there", "these", "they", "thing", "things", "think", "this", "those", "very", "want", "well",
    "were", "what", "what's", "when", "where", "which", "while", "will", "with", "would", "your",
    "yours", "yeah", "okay", "right", "sure", "luna",
];

/// Tokens of length four or more that are not stopwords.
pub fn content_words(text: &str) -> BTreeSet<String> {
    normalized_tokens(text)
        .into_iter()
        .filter(|t| t.chars().count() >= 4 && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

pub fn shares_content_word(a: &str, b: &str) -> bool {
    let left = content_words(a);
    !left.is_empty() && content_words(b).iter().any(|w| left.contains(w))
}

/// True when `tokens` contains `phrase` as a contiguous token sequence.
pub fn contains_phrase(tokens: &[String], phrase: &str) -> bool {
    let needle: Vec<&str> = phrase.split(' ').collect();
    tokens
        .windows(needle.len())
        .any(|w| w.iter().zip(&needle).all(|(a, b)| a == b))
}

/// Splits text into sentences at tokens ending in `.`, `!` or `?`.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for w in text.split_whitespace() {
        current.push(w);
        let bare = w.trim_end_matches(['"', '\'', ')', '\u{201d}']);
        if bare.ends_with(['.', '!', '?']) {
            out.push(current.join(" "));
            current.clear();
        }
    }
    if !current.is_empty() {
        out.push(current.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_strip_edges_only() {
        assert_eq!(
            normalized_tokens("Uh, Luna we don\u{2019}t (really) uh-huh!"),
            vec!["uh", "luna", "we", "don't", "really", "uh-huh"]
        );
    }

    #[test]
    fn content_words_skip_short_and_stopwords() {
        let w = content_words("What percent of the states have it?");
        assert_eq!(w.into_iter().collect::<Vec<_>>(), vec!["percent", "states"]);
    }

    #[test]
    fn phrase_and_sentence_helpers() {
        let toks = normalized_tokens("That's a good idea!");
        assert!(contains_phrase(&toks, "good idea"));
        assert!(!contains_phrase(&toks, "great idea"));
        assert_eq!(
            sentences("It can be used. Also it is light. trailing"),
            vec!["It can be used.", "Also it is light.", "trailing"]
        );
    }
}
