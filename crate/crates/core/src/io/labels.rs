//! Label files: one nonnegative integer per line.

use crate::error::{Error, Result};

/// Largest accepted class id. Per-class tables are sized by the largest id.
pub const MAX_LABEL_ID: usize = 1023;

/// Parses a label file. Surrounding whitespace is ignored and trailing
/// blank lines are allowed; any other blank line is an error, since it
/// would shift every later label.
pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    let body = text.trim_end();
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.lines()
        .enumerate()
        .map(|(i, line)| {
            let t = line.trim();
            if t.is_empty() {
                return Err(Error::Format(format!("line {}: blank label", i + 1)));
            }
            let id = t
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("line {}: not a nonnegative integer: {t:?}", i + 1)))?;
            if id > MAX_LABEL_ID {
                return Err(Error::Format(format!("line {}: label {id} above {MAX_LABEL_ID}", i + 1)));
            }
            Ok(id)
        })
        .collect()
}

pub fn labels_to_string(labels: &[usize]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

/// One more than the largest id, or 0 for no labels.
pub fn class_count(labels: &[usize]) -> Result<usize> {
    match labels.iter().copied().max() {
        Some(m) if m > MAX_LABEL_ID => Err(Error::InvalidParameter(format!("label {m} above {MAX_LABEL_ID}"))),
        m => Ok(m.map_or(0, |m| m + 1)),
    }
}

/// Errors unless the ids used are exactly `0..C` for some `C`.
pub fn check_contiguous(labels: &[usize]) -> Result<usize> {
    let Some(&max) = labels.iter().max() else {
        return Err(Error::InvalidParameter("no labels".into()));
    };
    if max >= labels.len() {
        // some id below max must be missing
        return Err(Error::InvalidParameter(format!("label id {max} exceeds {} samples", labels.len())));
    }
    let mut seen = vec![false; max + 1];
    for &l in labels {
        seen[l] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::InvalidParameter(format!("label ids skip {missing}")));
    }
    Ok(max + 1)
}
