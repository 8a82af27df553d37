//! Conversion from span-annotated judgments (the public Build release layout)
//! into line-delimited corpus records.
//!
//! Each source record looks like
//!
//! ```text
//! {"id": 1735,
//!  "data": {"text": "<full judgment text>"},
//!  "annotations": [{"result": [{"value": {"start": 0, "end": 95, "labels": ["PREAMBLE"]}}, ...]}]}
//! ```
//!
//! Offsets are character offsets into `data.text`. The input may be a single
//! JSON array or one record per line.

use serde::Deserialize;
use serde_json::Value;

use super::DocumentRecord;
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct SourceRecord {
    id: Value,
    data: SourceData,
    #[serde(default)]
    annotations: Vec<Annotation>,
}

#[derive(Debug, Deserialize)]
struct SourceData {
    text: String,
}

#[derive(Debug, Deserialize)]
struct Annotation {
    #[serde(default)]
    result: Vec<SpanResult>,
}

#[derive(Debug, Deserialize)]
struct SpanResult {
    value: SpanValue,
}

#[derive(Debug, Deserialize)]
struct SpanValue {
    start: usize,
    end: usize,
    labels: Vec<String>,
}

fn read_source(input: &str) -> Result<Vec<SourceRecord>> {
    let trimmed = input.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| Error::MalformedRecord {
            line: e.line(),
            message: e.to_string(),
        });
    }
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn doc_id(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Converts span-annotated records into corpus lines, one sentence per span,
/// spans sorted by start offset.
pub fn convert_build(input: &str) -> Result<String> {
    let mut out = String::new();
    for source in read_source(input)? {
        let id = doc_id(&source.id);
        let chars: Vec<char> = source.data.text.chars().collect();
        let mut spans: Vec<&SpanValue> = source
            .annotations
            .iter()
            .find(|a| !a.result.is_empty())
            .map(|a| a.result.iter().map(|r| &r.value).collect())
            .unwrap_or_default();
        spans.sort_by_key(|s| (s.start, s.end));

        let mut record = DocumentRecord {
            id: id.clone(),
            sentences: Vec::with_capacity(spans.len()),
            labels: Vec::with_capacity(spans.len()),
        };
        let mut prev_end = 0;
        for span in spans {
            if span.start > span.end || span.end > chars.len() {
                return Err(Error::Span {
                    doc_id: id,
                    message: format!(
                        "span {}..{} outside document of {} characters",
                        span.start,
                        span.end,
                        chars.len()
                    ),
                });
            }
            if span.start < prev_end {
                return Err(Error::Span {
                    doc_id: id,
                    message: format!("span starting at {} overlaps previous span", span.start),
                });
            }
            let label = span.labels.first().ok_or_else(|| Error::Span {
                doc_id: id.clone(),
                message: format!("span {}..{} has no label", span.start, span.end),
            })?;
            let text: String = chars[span.start..span.end].iter().collect();
            record.sentences.push(text.trim().to_owned());
            record.labels.push(label.clone());
            prev_end = span.end;
        }
        if record.sentences.is_empty() {
            return Err(Error::EmptyDocument(id));
        }
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    Ok(out)
}
