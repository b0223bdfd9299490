//! Prompt records and the line-delimited dataset file.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id":"prompt-00000","text":"Did the doctor write a report?","labels":{"structure":"question","emotion":"neutral","speed":"normal","tone":"rising"}}
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::labels::{Emotion, ProsodyLabels, Speed, Structure, Tone};
use crate::textmetrics::normalize_tokens;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub text: String,
    #[serde(rename = "labels")]
    pub target: ProsodyLabels,
}

/// Serializes one record exactly as it appears in a dataset file (no newline).
pub fn record_line(record: &PromptRecord) -> String {
    serde_json::to_string(record).expect("records always serialize")
}

pub fn write_prompts(path: &Path, records: &[PromptRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        writeln!(out, "{}", record_line(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_prompts(path: &Path) -> Result<Vec<PromptRecord>> {
    parse_prompts(&fs::read_to_string(path)?)
}

/// Parses dataset text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_prompts(content: &str) -> Result<Vec<PromptRecord>> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_line(line, line_no)?;
        if normalize_tokens(&record.text).is_empty() {
            return Err(Error::EmptyText { line: line_no, text: record.text });
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId { line: line_no, id: record.id });
        }
        records.push(record);
    }
    Ok(records)
}

fn parse_line(line: &str, line_no: usize) -> Result<PromptRecord> {
    let malformed = |message: String| Error::MalformedLine { line: line_no, message };
    let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("expected a JSON object".into()))?;
    let string_field = |obj: &serde_json::Map<String, Value>, key: &str| -> Result<String> {
        obj.get(key)
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| malformed(format!("missing or non-string field `{key}`")))
    };
    let id = string_field(obj, "id")?;
    let text = string_field(obj, "text")?;
    let labels = obj
        .get("labels")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed("missing or non-object field `labels`".into()))?;

    // Parse each category separately so an unknown value is reported by field.
    fn category<T: std::str::FromStr<Err = crate::labels::UnknownCategory>>(
        raw: String,
        line: usize,
    ) -> Result<T> {
        raw.parse::<T>().map_err(|e| Error::UnknownCategory {
            line,
            field: e.field,
            value: e.value,
        })
    }
    let target = ProsodyLabels {
        structure: category::<Structure>(string_field(labels, "structure")?, line_no)?,
        emotion: category::<Emotion>(string_field(labels, "emotion")?, line_no)?,
        speed: category::<Speed>(string_field(labels, "speed")?, line_no)?,
        tone: category::<Tone>(string_field(labels, "tone")?, line_no)?,
    };
    Ok(PromptRecord { id, text, target })
}
