//! LETOR / LibSVM text format.
//!
//! One document per line: `<label> qid:<q> <i>:<v> ... [# comment]`, fields
//! separated by runs of spaces or tabs, feature indices 1-based and strictly
//! increasing. Blank lines are skipped; LF and CRLF endings are accepted.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, QueryGroup};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CommentPolicy {
    Keep,
    #[default]
    Strip,
}

/// What to do when a qid shows up again after a different qid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QidPolicy {
    #[default]
    Error,
    Merge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LibsvmLine {
    pub label: f64,
    pub qid: String,
    /// `(index, value)` pairs with 1-based, strictly increasing indices.
    pub features: Vec<(usize, f64)>,
    pub comment: Option<String>,
}

fn parse_err(line: usize, token: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        token: token.to_string(),
        message: message.into(),
    }
}

/// Parses one non-blank line. `line_no` is only used in error messages.
pub fn parse_libsvm_line(line: &str, line_no: usize, comments: CommentPolicy) -> Result<LibsvmLine> {
    let (body, comment) = match line.find('#') {
        Some(pos) => (&line[..pos], Some(line[pos + 1..].trim().to_string())),
        None => (line, None),
    };
    let mut tokens = body.split_ascii_whitespace();

    let label_tok = tokens.next().ok_or_else(|| parse_err(line_no, "", "empty line"))?;
    let label: f64 = label_tok
        .parse()
        .map_err(|_| parse_err(line_no, label_tok, "label is not a number"))?;
    if !label.is_finite() {
        return Err(parse_err(line_no, label_tok, "label is not finite"));
    }

    let qid_tok = tokens
        .next()
        .ok_or_else(|| parse_err(line_no, label_tok, "missing qid"))?;
    let qid = match qid_tok.strip_prefix("qid:") {
        Some(q) if !q.is_empty() => q.to_string(),
        _ => return Err(parse_err(line_no, qid_tok, "missing qid")),
    };

    let mut features = Vec::new();
    let mut last = 0usize;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(line_no, tok, "expected <index>:<value>"))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| parse_err(line_no, tok, "feature index is not a positive integer"))?;
        if idx == 0 {
            return Err(parse_err(line_no, tok, "feature indices are 1-based"));
        }
        if idx <= last {
            return Err(parse_err(line_no, tok, "non-increasing or duplicate feature index"));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| parse_err(line_no, tok, "feature value is not a number"))?;
        if !val.is_finite() {
            return Err(parse_err(line_no, tok, "feature value is not finite"));
        }
        features.push((idx, val));
        last = idx;
    }

    Ok(LibsvmLine {
        label,
        qid,
        features,
        comment: match comments {
            CommentPolicy::Keep => comment,
            CommentPolicy::Strip => None,
        },
    })
}

/// Canonical single-space rendering of a parsed line.
pub fn format_libsvm_line(line: &LibsvmLine) -> String {
    let mut out = format!("{} qid:{}", line.label, line.qid);
    for (i, v) in &line.features {
        out.push_str(&format!(" {i}:{v}"));
    }
    if let Some(c) = &line.comment {
        out.push_str(" # ");
        out.push_str(c);
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Dense width; when `None` it is the largest index seen.
    pub feature_dim: Option<usize>,
    pub qid_policy: QidPolicy,
}

struct Pending {
    qid: String,
    labels: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

pub fn load_dataset(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Dataset {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    read_dataset(BufReader::new(file), &path.display().to_string(), options).map_err(|e| match e {
        Error::InvalidArgument(message) => Error::Dataset {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Reads a dataset from any buffered reader; `source` goes into provenance.
pub fn read_dataset<R: BufRead>(reader: R, source: &str, options: &LoadOptions) -> Result<Dataset> {
    let mut pending: Vec<Pending> = Vec::new();
    let mut position: HashMap<String, usize> = HashMap::new();
    let mut max_index = 0usize;

    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_libsvm_line(&line, line_no, CommentPolicy::Strip)?;
        if let Some(&(idx, _)) = parsed.features.last() {
            max_index = max_index.max(idx);
            if let Some(d) = options.feature_dim {
                if idx > d {
                    return Err(parse_err(
                        line_no,
                        &idx.to_string(),
                        format!("feature index exceeds feature_dim {d}"),
                    ));
                }
            }
        }

        let continues_last = pending.last().is_some_and(|p| p.qid == parsed.qid);
        let slot = if continues_last {
            pending.len() - 1
        } else if let Some(&slot) = position.get(&parsed.qid) {
            match options.qid_policy {
                QidPolicy::Merge => slot,
                QidPolicy::Error => {
                    return Err(parse_err(
                        line_no,
                        &format!("qid:{}", parsed.qid),
                        "qid reappears after a different qid (non-contiguous)",
                    ))
                }
            }
        } else {
            position.insert(parsed.qid.clone(), pending.len());
            pending.push(Pending {
                qid: parsed.qid.clone(),
                labels: Vec::new(),
                rows: Vec::new(),
            });
            pending.len() - 1
        };
        pending[slot].labels.push(parsed.label);
        pending[slot].rows.push(parsed.features);
    }

    if pending.is_empty() {
        return Err(Error::invalid("empty file: no documents"));
    }
    let d = options.feature_dim.unwrap_or(max_index).max(1);

    let groups = pending
        .into_iter()
        .map(|p| {
            let mut features = Array2::zeros((p.rows.len(), d));
            for (r, row) in p.rows.iter().enumerate() {
                for &(idx, v) in row {
                    features[[r, idx - 1]] = v;
                }
            }
            QueryGroup::new(p.qid, features, p.labels)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = groups.iter().flat_map(|g| &g.labels).find(|&&y| y < 0.0) {
        return Err(Error::invalid(format!("negative relevance label {bad}")));
    }
    let ds = Dataset::new(groups, source)?;
    Ok(ds.with_step(format!("loaded from {source} (d={d})")))
}
