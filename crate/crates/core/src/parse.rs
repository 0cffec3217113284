//! Lenient parsing of model verdicts.

use thiserror::Error;

use crate::record::Label;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no verdict found in model output {0:?}")]
    Unparseable(String),
    #[error("score {0} is outside the 0-9 scale")]
    OutOfRange(i64),
}

/// Finds the first standalone TRUE/FALSE (or YES/NO) token, ignoring case
/// and any surrounding punctuation or quotes.
pub fn parse_binary(raw: &str) -> Result<Label, ParseError> {
    raw.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .find_map(|token| match token.to_ascii_uppercase().as_str() {
            "TRUE" | "YES" => Some(Label::Hateful),
            "FALSE" | "NO" => Some(Label::NotHateful),
            _ => None,
        })
        .ok_or_else(|| ParseError::Unparseable(raw.to_string()))
}

/// Canonical token for a binary verdict.
pub fn render_binary(label: Label) -> &'static str {
    match label {
        Label::Hateful => "TRUE",
        Label::NotHateful => "FALSE",
    }
}

/// Takes the first integer literal (optionally signed) in the text.
pub fn parse_scale(raw: &str) -> Result<u8, ParseError> {
    let bytes = raw.as_bytes();
    let start = bytes
        .iter()
        .position(u8::is_ascii_digit)
        .ok_or_else(|| ParseError::Unparseable(raw.to_string()))?;
    let end = bytes[start..]
        .iter()
        .position(|b| !b.is_ascii_digit())
        .map_or(bytes.len(), |n| start + n);
    let negative = start > 0 && bytes[start - 1] == b'-';
    let magnitude: i64 = raw[start..end].parse().unwrap_or(i64::MAX);
    let value = if negative { -magnitude } else { magnitude };
    if (0..=9).contains(&value) {
        Ok(value as u8)
    } else {
        Err(ParseError::OutOfRange(value))
    }
}
