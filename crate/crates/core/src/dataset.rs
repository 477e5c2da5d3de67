//! Line-delimited JSON datasets and artifact files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Question;

/// One dataset line: `{"id", "question", "reference"?, "topic"?, "difficulty"?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<f64>,
}

impl From<&Question> for DatasetRecord {
    fn from(q: &Question) -> Self {
        DatasetRecord {
            id: q.id.clone(),
            question: q.text.clone(),
            reference: q.reference.clone(),
            topic: q.topic,
            difficulty: q.difficulty,
        }
    }
}

impl TryFrom<DatasetRecord> for Question {
    type Error = Error;

    fn try_from(r: DatasetRecord) -> Result<Question> {
        let mut q = Question::new(r.id, r.question)?;
        q.reference = r.reference;
        q.topic = r.topic;
        q.difficulty = r.difficulty;
        q.validate()?;
        Ok(q)
    }
}

/// Reads every non-blank line of `path` as a `T`.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::parse(path, e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_questions(path: &Path) -> Result<Vec<Question>> {
    let records: Vec<DatasetRecord> = read_jsonl(path)?;
    if records.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut seen = std::collections::HashSet::new();
    records
        .into_iter()
        .map(|r| {
            if !seen.insert(r.id.clone()) {
                return Err(Error::parse(
                    path,
                    format!("duplicate question id `{}`", r.id),
                ));
            }
            Question::try_from(r)
        })
        .collect()
}

pub fn save_questions(path: &Path, questions: &[Question]) -> Result<()> {
    let records: Vec<DatasetRecord> = questions.iter().map(DatasetRecord::from).collect();
    write_jsonl(path, &records)
}
