//! Parsing of financial number strings such as `$1,234.5`, `(12)` or `14.1%`.

use crate::scalar::Scalar;

/// A number recovered from a raw string together with the formatting cues
/// that the answer-comparison rules need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParsedNumber<T> {
    pub value: T,
    /// A `%` sign was present (and stripped; the value is not rescaled).
    pub percent: bool,
    /// Digits after the decimal point as written.
    pub decimals: u32,
}

/// Parse a raw cell or answer string into a number.
///
/// Strips surrounding whitespace, `$`, thousands `,` and a trailing `%`;
/// parentheses around the whole number mean negative. Anything else that is
/// not a plain decimal literal yields `None`.
pub fn parse_number<T: Scalar>(raw: &str) -> Option<ParsedNumber<T>> {
    let mut s = raw.trim();
    if s.is_empty() {
        return None;
    }
    let mut negative = false;
    if let Some(inner) = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        negative = true;
        s = inner.trim();
    }
    let mut percent = false;
    if let Some(rest) = s.strip_suffix('%') {
        percent = true;
        s = rest.trim_end();
    }
    if let Some(rest) = s.strip_prefix('-') {
        if negative {
            return None;
        }
        negative = true;
        s = rest.trim_start();
    }
    if let Some(rest) = s.strip_prefix('$') {
        s = rest.trim_start();
    }
    // "-$5" and "$-5" are both seen in filings.
    if let Some(rest) = s.strip_prefix('-') {
        if negative {
            return None;
        }
        negative = true;
        s = rest;
    }
    if s.is_empty() {
        return None;
    }

    let mut cleaned = String::with_capacity(s.len());
    let mut seen_dot = false;
    let mut digits = 0usize;
    let bytes = s.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'0'..=b'9' => {
                digits += 1;
                cleaned.push(b as char);
            }
            b'.' if !seen_dot => {
                seen_dot = true;
                cleaned.push('.');
            }
            b',' if !seen_dot && i > 0 && bytes[i - 1].is_ascii_digit() => {
                // thousands separator: exactly three digits must follow
                let group = &bytes[i + 1..];
                let run = group.iter().take_while(|c| c.is_ascii_digit()).count();
                if run != 3 {
                    return None;
                }
            }
            _ => return None,
        }
    }
    if digits == 0 {
        return None;
    }
    let decimals = cleaned.split_once('.').map(|(_, f)| f.len() as u32).unwrap_or(0);
    let value: T = cleaned.parse().ok()?;
    let value = if negative { -value } else { value };
    Some(ParsedNumber {
        value,
        percent,
        decimals,
    })
}

/// Convenience wrapper returning only the value.
pub fn parse_value<T: Scalar>(raw: &str) -> Option<T> {
    parse_number(raw).map(|p| p.value)
}
