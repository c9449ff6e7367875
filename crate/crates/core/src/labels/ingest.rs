use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use super::{check_scale, EvaluationRecord, LabelError, Party, Ratings, Result};

const COLUMNS: [&str; 7] = [
    "respondent_id",
    "party",
    "image_id",
    "sentiment",
    "subject_of_harm",
    "object_of_harm",
    "accuracy",
];

/// A data row that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowRejection {
    /// 1-based line number in the source, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    pub records: Vec<EvaluationRecord>,
    /// Rows whose party is neither Democrat nor Republican.
    pub dropped_other: usize,
    pub rejected: Vec<RowRejection>,
}

impl IngestOutcome {
    pub fn rows_seen(&self) -> usize {
        self.records.len() + self.dropped_other + self.rejected.len()
    }
}

pub fn ingest_path(path: impl AsRef<Path>) -> Result<IngestOutcome> {
    ingest_responses(File::open(path)?)
}

/// Reads a delimited survey export with a header row.
///
/// Column order is free; the seven named columns must all be present.
/// Comma is the default delimiter, tab is detected from the header line.
pub fn ingest_responses<R: Read>(mut source: R) -> Result<IngestOutcome> {
    let mut raw = Vec::new();
    source.read_to_end(&mut raw)?;
    let header_line = raw.split(|&b| b == b'\n').next().unwrap_or(&[]);
    let delimiter = if header_line.contains(&b'\t') && !header_line.contains(&b',') {
        b'\t'
    } else {
        b','
    };

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(raw.as_slice());

    let headers = reader.headers()?.clone();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(LabelError::EmptyInput);
    }
    let mut idx = [0usize; 7];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| LabelError::MissingColumn(name.to_string()))?;
    }

    let mut out = IngestOutcome::default();
    let mut any_row = false;
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        any_row = true;
        match parse_row(&row, &idx) {
            Ok(Some(rec)) => out.records.push(rec),
            Ok(None) => out.dropped_other += 1,
            Err(reason) => out.rejected.push(RowRejection { line, reason }),
        }
    }
    if !any_row {
        return Err(LabelError::EmptyInput);
    }
    Ok(out)
}

fn parse_row(
    row: &csv::StringRecord,
    idx: &[usize; 7],
) -> std::result::Result<Option<EvaluationRecord>, String> {
    let field = |i: usize| -> std::result::Result<&str, String> {
        row.get(idx[i])
            .ok_or_else(|| format!("missing field `{}`", COLUMNS[i]))
    };
    let respondent_id = field(0)?;
    let party_raw = field(1)?;
    let image_id = field(2)?;
    if party_raw.is_empty() {
        return Err("empty party".into());
    }
    if image_id.is_empty() {
        return Err("empty image_id".into());
    }
    let mut scores = [0.0; 4];
    for (k, score) in scores.iter_mut().enumerate() {
        let name = COLUMNS[3 + k];
        let text = field(3 + k)?;
        let v: f64 = text
            .parse()
            .map_err(|_| format!("`{name}` is not a number: {text:?}"))?;
        *score = check_scale(v).map_err(|_| format!("`{name}` = {v} outside [1, 7]"))?;
    }
    let party = Party::normalize(party_raw);
    if party == Party::Other {
        return Ok(None);
    }
    Ok(Some(EvaluationRecord {
        respondent_id: respondent_id.to_string(),
        party,
        image_id: image_id.to_string(),
        ratings: Ratings {
            sentiment: scores[0],
            subject_of_harm: scores[1],
            object_of_harm: scores[2],
            accuracy: scores[3],
        },
    }))
}
