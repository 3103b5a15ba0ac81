//! Extraction of labels and reflection outcomes from model replies.
//!
//! Only the first non-blank line is searched. Tokens match at word
//! boundaries; the earliest match wins, and at equal offsets the longer
//! token wins, so "not relevant" is never read as "relevant".

use serde::{Deserialize, Serialize};

use super::Label;
use crate::text::{find_word, fold};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTokens {
    pub relevant: Vec<String>,
    pub not_relevant: Vec<String>,
}

impl LabelTokens {
    /// English tokens plus the language's own, when known.
    pub fn for_language(language: &str) -> Self {
        let mut relevant = vec!["relevant".to_owned()];
        let mut not_relevant = vec!["not relevant".to_owned(), "irrelevant".to_owned(), "not_relevant".to_owned()];
        let (r, n): (&[&str], &[&str]) = match language {
            "es" => (&["relevante"], &["no relevante", "no es relevante", "irrelevante"]),
            "ne" => (&["सान्दर्भिक", "सम्बन्धित"], &["सान्दर्भिक छैन", "असान्दर्भिक", "सम्बन्धित छैन"]),
            _ => (&[], &[]),
        };
        relevant.extend(r.iter().map(|s| s.to_string()));
        not_relevant.extend(n.iter().map(|s| s.to_string()));
        LabelTokens { relevant, not_relevant }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionTokens {
    pub affirm: Vec<String>,
    pub reject: Vec<String>,
}

impl Default for ReflectionTokens {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        ReflectionTokens {
            affirm: v(&["correct", "yes", "confirmed", "accurate"]),
            reject: v(&["incorrect", "not correct", "no", "wrong", "inaccurate", "not accurate"]),
        }
    }
}

fn first_line(text: &str) -> &str {
    text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("")
}

/// Earliest token hit on the first line as `(offset, length, is_first_group)`.
fn earliest(line: &str, first: &[String], second: &[String]) -> Option<bool> {
    let folded = fold(line);
    let mut best: Option<(usize, usize, bool)> = None;
    for (group, tokens) in [(true, first), (false, second)] {
        for token in tokens {
            let token = fold(token);
            if let Some(at) = find_word(&folded, &token) {
                let better = match best {
                    None => true,
                    Some((b_at, b_len, _)) => at < b_at || (at == b_at && token.len() > b_len),
                };
                if better {
                    best = Some((at, token.len(), group));
                }
            }
        }
    }
    best.map(|(_, _, g)| g)
}

pub fn parse_label(response: &str, tokens: &LabelTokens) -> Option<Label> {
    earliest(first_line(response), &tokens.not_relevant, &tokens.relevant)
        .map(|negative| if negative { Label::NotRelevant } else { Label::Relevant })
}

/// The free-text reason: whatever follows `Explanation:`, otherwise the rest
/// of the reply after the first line.
pub fn justification(response: &str) -> String {
    let lower = response.to_lowercase();
    if let Some(at) = lower.find("explanation:") {
        // `to_lowercase` can shift byte offsets for some scripts; fall back below.
        if response.is_char_boundary(at) && response.len() == lower.len() {
            return response[at + "explanation:".len()..].trim().to_owned();
        }
    }
    let trimmed = response.trim();
    match trimmed.split_once('\n') {
        Some((_, rest)) => rest.trim().to_owned(),
        None => trimmed.to_owned(),
    }
}

pub fn parse_reflection(response: &str, tokens: &ReflectionTokens) -> Option<bool> {
    earliest(first_line(response), &tokens.reject, &tokens.affirm).map(|reject| !reject)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_negation_safe() {
        let t = LabelTokens::for_language("en");
        assert_eq!(parse_label("Relevant. Explanation: patrols.", &t), Some(Label::Relevant));
        assert_eq!(parse_label("Not relevant. Explanation: sports coverage.", &t), Some(Label::NotRelevant));
        assert_eq!(parse_label("Relevant. It is not relevant to sport", &t), Some(Label::Relevant));
        assert_eq!(parse_label("\n  irrelevant\n", &t), Some(Label::NotRelevant));
        assert_eq!(parse_label("I cannot tell.\nRelevant", &t), None);
        assert_eq!(parse_label("", &t), None);
    }

    #[test]
    fn language_tokens() {
        let es = LabelTokens::for_language("es");
        assert_eq!(parse_label("No relevante: deportes", &es), Some(Label::NotRelevant));
        assert_eq!(parse_label("Relevante. Explicación: caza", &es), Some(Label::Relevant));
        let ne = LabelTokens::for_language("ne");
        assert_eq!(parse_label("सान्दर्भिक छैन।", &ne), Some(Label::NotRelevant));
        assert_eq!(parse_label("सान्दर्भिक।", &ne), Some(Label::Relevant));
    }

    #[test]
    fn justification_extraction() {
        assert_eq!(
            justification("Relevant. Explanation: discusses anti-poaching patrols in a national park."),
            "discusses anti-poaching patrols in a national park."
        );
        assert_eq!(justification("Not relevant\nIt is about football."), "It is about football.");
        assert_eq!(justification("Relevant"), "Relevant");
    }

    #[test]
    fn reflection_outcomes() {
        let t = ReflectionTokens::default();
        assert_eq!(
            parse_reflection("The assessment is incorrect; the article is about a climbing expedition.", &t),
            Some(false)
        );
        assert_eq!(parse_reflection("Correct. The article covers rhino poaching.", &t), Some(true));
        assert_eq!(parse_reflection("Yes, that is right.", &t), Some(true));
        assert_eq!(parse_reflection("Not correct.", &t), Some(false));
        assert_eq!(parse_reflection("Hmm.", &t), None);
    }
}
