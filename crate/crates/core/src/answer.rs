//! Final-answer keys and the normalization used for strict matching.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Normalized final answer of one reasoning path.
///
/// `NoAnswer` marks a path whose answer could not be extracted. It sorts after
/// every real answer and is serialized as JSON `null`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AnswerKey {
    Answer(String),
    NoAnswer,
}

impl AnswerKey {
    pub fn is_no_answer(&self) -> bool {
        matches!(self, AnswerKey::NoAnswer)
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AnswerKey::Answer(s) => Some(s),
            AnswerKey::NoAnswer => None,
        }
    }
}

impl Ord for AnswerKey {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (AnswerKey::Answer(a), AnswerKey::Answer(b)) => a.cmp(b),
            (AnswerKey::Answer(_), AnswerKey::NoAnswer) => Ordering::Less,
            (AnswerKey::NoAnswer, AnswerKey::Answer(_)) => Ordering::Greater,
            (AnswerKey::NoAnswer, AnswerKey::NoAnswer) => Ordering::Equal,
        }
    }
}

impl PartialOrd for AnswerKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for AnswerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerKey::Answer(s) => f.write_str(s),
            AnswerKey::NoAnswer => f.write_str("NO_ANSWER"),
        }
    }
}

impl Serialize for AnswerKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            AnswerKey::Answer(s) => serializer.serialize_some(s),
            AnswerKey::NoAnswer => serializer.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for AnswerKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(match Option::<String>::deserialize(deserializer)? {
            Some(s) => AnswerKey::Answer(s),
            None => AnswerKey::NoAnswer,
        })
    }
}

/// Normalize a raw answer string for strict matching.
///
/// Trims whitespace, lowercases, strips trailing punctuation, and
/// canonicalizes numerals (thousands separators removed, trailing fractional
/// zeros dropped so `"12.0"` and `"12"` compare equal). An empty result is
/// `NoAnswer`.
pub fn normalize_answer(raw: &str) -> AnswerKey {
    let lowered = raw.trim().to_lowercase();
    let stripped = lowered.trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '.' | ',' | ';' | ':' | '!' | '?'));
    if stripped.is_empty() {
        return AnswerKey::NoAnswer;
    }
    match canonical_number(stripped) {
        Some(n) => AnswerKey::Answer(n),
        None => AnswerKey::Answer(stripped.to_string()),
    }
}

fn canonical_number(s: &str) -> Option<String> {
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    if int_part.is_empty() || !valid_integer_part(int_part) {
        return None;
    }
    let digits: String = int_part.chars().filter(|c| *c != ',').collect();
    let mut out = String::from(sign);
    out.push_str(&digits);
    if let Some(frac) = frac_part {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let frac = frac.trim_end_matches('0');
        if !frac.is_empty() {
            out.push('.');
            out.push_str(frac);
        }
    }
    if out == "-0" {
        out = "0".to_string();
    }
    Some(out)
}

// Plain digits, or digits grouped in threes by commas ("1,234,567").
fn valid_integer_part(s: &str) -> bool {
    if !s.contains(',') {
        return s.chars().all(|c| c.is_ascii_digit());
    }
    let mut groups = s.split(',');
    let head = groups.next().unwrap_or_default();
    if head.is_empty() || head.len() > 3 || !head.chars().all(|c| c.is_ascii_digit()) {
        return false;
    }
    groups.all(|g| g.len() == 3 && g.chars().all(|c| c.is_ascii_digit()))
}
