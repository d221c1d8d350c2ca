//! Plate text cleanup: allowlist filtering, position-aware confusion
//! correction and parsing of the `SS DD LLL NNNN` registration format
//! (2 state letters, 2 district digits, 1-3 series letters, 1-4 digits).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{text:?} does not match the plate format")]
pub struct FormatMismatch {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlateNumber {
    pub state: String,
    pub district: String,
    pub series: String,
    pub number: String,
}

impl fmt::Display for PlateNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}{}", self.state, self.district, self.series, self.number)
    }
}

/// Uppercases and keeps only `A-Z` and `0-9`, preserving order.
pub fn filter_allowlist(text: &str) -> String {
    text.chars()
        .map(|c| c.to_ascii_uppercase())
        .filter(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
        .collect()
}

/// Splits `text` into plate fields: two letters, two digits, the letter run
/// that follows (1-3), and the remaining 1-4 digits.
pub fn parse_plate_format(text: &str) -> Result<PlateNumber, FormatMismatch> {
    let mismatch = || FormatMismatch { text: text.to_string() };
    let b = text.as_bytes();
    if b.len() < 6 || !b.is_ascii() {
        return Err(mismatch());
    }
    if !b[..2].iter().all(u8::is_ascii_uppercase) || !b[2..4].iter().all(u8::is_ascii_digit) {
        return Err(mismatch());
    }
    let series_len = b[4..].iter().take_while(|c| c.is_ascii_uppercase()).count();
    let rest = &b[4 + series_len..];
    if !(1..=3).contains(&series_len) || !(1..=4).contains(&rest.len()) || !rest.iter().all(u8::is_ascii_digit) {
        return Err(mismatch());
    }
    Ok(PlateNumber {
        state: text[..2].to_string(),
        district: text[2..4].to_string(),
        series: text[4..4 + series_len].to_string(),
        number: text[4 + series_len..].to_string(),
    })
}

/// Digit/letter look-alike pairs used when a position's expected class
/// disagrees with the recognized character.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMap {
    /// `(digit, letter)` pairs.
    pairs: Vec<(char, char)>,
}

impl Default for ConfusionMap {
    fn default() -> Self {
        Self::extended()
    }
}

impl ConfusionMap {
    /// `0/O` and `1/I` only.
    pub fn basic() -> Self {
        Self {
            pairs: vec![('0', 'O'), ('1', 'I')],
        }
    }

    /// The basic pairs plus `5/S`, `8/B` and `2/Z`.
    pub fn extended() -> Self {
        Self {
            pairs: vec![('0', 'O'), ('1', 'I'), ('5', 'S'), ('8', 'B'), ('2', 'Z')],
        }
    }

    fn to_letter(&self, c: char) -> Option<char> {
        self.pairs.iter().find(|(d, _)| *d == c).map(|&(_, l)| l)
    }

    fn to_digit(&self, c: char) -> Option<char> {
        self.pairs.iter().find(|(_, l)| *l == c).map(|&(d, _)| d)
    }

    /// `c` coerced to the wanted class: `(char, substituted)`, or `None` if impossible.
    fn coerce(&self, c: char, want_letter: bool) -> Option<(char, bool)> {
        match (want_letter, c.is_ascii_uppercase(), c.is_ascii_digit()) {
            (true, true, _) | (false, _, true) => Some((c, false)),
            (true, _, true) => self.to_letter(c).map(|l| (l, true)),
            (false, true, _) => self.to_digit(c).map(|d| (d, true)),
            _ => None,
        }
    }
}

/// [`correct_by_position_with`] using the extended confusion pairs.
pub fn correct_by_position(text: &str) -> (String, bool) {
    correct_by_position_with(text, &ConfusionMap::extended())
}

/// Fits `text` to the plate grammar by position and swaps look-alike
/// characters that sit in a position of the wrong class.
///
/// Every series/number split compatible with the length is tried; the split
/// needing the fewest substitutions is applied if it is the only one at that
/// cost. Otherwise the text is returned unchanged with `false`.
pub fn correct_by_position_with(text: &str, map: &ConfusionMap) -> (String, bool) {
    let chars: Vec<char> = text.chars().collect();
    let len = chars.len();
    if !(6..=11).contains(&len) {
        return (text.to_string(), false);
    }
    let mut best: Option<(usize, String)> = None;
    let mut tied = false;
    for series in 1..=3usize {
        let Some(number) = (len - 4).checked_sub(series) else {
            continue;
        };
        if !(1..=4).contains(&number) {
            continue;
        }
        let mut out = String::with_capacity(len);
        let mut cost = 0;
        let feasible = chars.iter().enumerate().all(|(i, &c)| {
            let want_letter = i < 2 || (4..4 + series).contains(&i);
            match map.coerce(c, want_letter) {
                Some((fixed, swapped)) => {
                    out.push(fixed);
                    cost += swapped as usize;
                    true
                }
                None => false,
            }
        });
        if !feasible {
            continue;
        }
        match &best {
            Some((c, _)) if cost > *c => {}
            Some((c, _)) if cost == *c => tied = true,
            _ => {
                best = Some((cost, out));
                tied = false;
            }
        }
    }
    match best {
        Some((cost, out)) if !tied && cost > 0 => (out, true),
        _ => (text.to_string(), false),
    }
}
