use std::fmt::Write;

use crate::error::{Error, Result};
use crate::linops::CsrMatrix;

use super::ClassificationSpec;

/// Parsed LIBSVM data with 0-based feature indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LibsvmData {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub labels: Vec<f64>,
    pub dim: usize,
}

impl LibsvmData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_spec(&self, lambda: f64) -> Result<ClassificationSpec> {
        ClassificationSpec::new(CsrMatrix::from_sorted_rows(&self.rows, self.dim)?, self.labels.clone(), lambda)
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_number(tok: &str, line: usize, what: &str) -> Result<f64> {
    let t = tok.replace('\u{2212}', "-");
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(line, format!("{what} `{tok}` is not a finite number"))),
    }
}

/// Parses `label idx:val idx:val ...` lines with 1-based, strictly
/// increasing indices. Text after `#` is ignored, as are blank lines.
/// Labels `0` are read as `-1`. `dim` overrides the feature count, which
/// otherwise is the largest index seen.
pub fn parse_libsvm(text: &str, dim: Option<usize>) -> Result<LibsvmData> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_idx = 0usize;
    let mut zero_labels = 0usize;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        let Some(lab) = toks.next() else { continue };
        let b = parse_number(lab, line, "label")?;
        let b = if b == 1.0 {
            1.0
        } else if b == -1.0 {
            -1.0
        } else if b == 0.0 {
            zero_labels += 1;
            -1.0
        } else {
            return Err(parse_err(line, format!("label `{lab}` is not one of -1, 0, 1")));
        };
        let mut row: Vec<(usize, f64)> = Vec::new();
        for tok in toks {
            let (i, v) = tok.split_once(':').ok_or_else(|| parse_err(line, format!("malformed token `{tok}`")))?;
            let idx: usize = i.parse().map_err(|_| parse_err(line, format!("bad index in `{tok}`")))?;
            if idx == 0 {
                return Err(parse_err(line, format!("index 0 in `{tok}`; indices are 1-based")));
            }
            if row.last().is_some_and(|(p, _)| *p + 1 >= idx) {
                return Err(parse_err(line, format!("index {idx} does not increase")));
            }
            let val = parse_number(v, line, "value")?;
            max_idx = max_idx.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        labels.push(b);
    }
    if zero_labels > 0 {
        log::warn!("{zero_labels} labels 0 read as -1");
    }
    let dim = match dim {
        Some(d) if d < max_idx => return Err(parse_err(0, format!("feature index {max_idx} exceeds the declared dimension {d}"))),
        Some(d) => d,
        None => max_idx,
    };
    Ok(LibsvmData { rows, labels, dim })
}

/// Writes one line per sample; values use the shortest round-trip format.
pub fn serialize_libsvm(data: &LibsvmData) -> String {
    let mut s = String::new();
    for (row, b) in data.rows.iter().zip(&data.labels) {
        s.push_str(if *b > 0.0 { "+1" } else { "-1" });
        for (j, v) in row {
            write!(s, " {}:{}", j + 1, v).expect("writing to a string");
        }
        s.push('\n');
    }
    s
}
