//! Private dataset ingestion and per-token subsampling.
//!
//! JSONL records are objects with `text` and `label` string fields (other
//! fields are ignored). CSV files have a header row with `text` and `label`
//! columns.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{ProviderError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Some(Self::Jsonl),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

impl std::str::FromStr for DataFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown data format `{other}` (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    /// Declared labels, or the labels seen in order of first appearance.
    pub labels: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn label_counts(&self) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> = self.labels.iter().map(|l| (l.clone(), 0)).collect();
        for ex in &self.examples {
            *counts.entry(ex.label.clone()).or_default() += 1;
        }
        counts
    }

    /// Checks records against the declared label set, or infers it.
    pub fn from_examples(rows: Vec<(usize, Example)>, declared: Option<&[String]>) -> Result<Self> {
        let mut labels: Vec<String> = declared.map(<[String]>::to_vec).unwrap_or_default();
        let mut examples = Vec::with_capacity(rows.len());
        for (line, ex) in rows {
            if ex.text.is_empty() {
                return Err(ProviderError::Parse {
                    line,
                    message: "empty text".into(),
                });
            }
            if !labels.contains(&ex.label) {
                if declared.is_some() {
                    return Err(ProviderError::UnknownLabel { line, label: ex.label });
                }
                labels.push(ex.label.clone());
            }
            examples.push(ex);
        }
        Ok(Self { examples, labels })
    }
}

pub fn load_dataset(path: &Path, format: DataFormat, declared_labels: Option<&[String]>) -> Result<Dataset> {
    let raw = std::fs::read_to_string(path).map_err(|source| ProviderError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let rows = match format {
        DataFormat::Jsonl => parse_jsonl(&raw)?,
        DataFormat::Csv => parse_csv(&raw)?,
    };
    Dataset::from_examples(rows, declared_labels)
}

pub fn parse_jsonl(raw: &str) -> Result<Vec<(usize, Example)>> {
    let mut rows = Vec::new();
    for (i, text) in raw.lines().enumerate() {
        let line = i + 1;
        if text.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(text).map_err(|e| ProviderError::Parse {
            line,
            message: e.to_string(),
        })?;
        rows.push((line, ex));
    }
    Ok(rows)
}

pub fn parse_csv(raw: &str) -> Result<Vec<(usize, Example)>> {
    let mut reader = csv::Reader::from_reader(raw.as_bytes());
    let mut rows = Vec::new();
    for record in reader.deserialize::<Example>() {
        let ex = record.map_err(|e| ProviderError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        // header is line 1
        let line = rows.len() + 2;
        rows.push((line, ex));
    }
    Ok(rows)
}

/// Draws `m·n` examples with `label` uniformly without replacement and splits
/// them into `m` consecutive blocks of `n`.
pub fn partition_subsets<'a, R: Rng + ?Sized>(
    data: &'a [Example],
    label: &str,
    m: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<&'a Example>>> {
    let pool: Vec<&Example> = data.iter().filter(|e| e.label == label).collect();
    let needed = m * n;
    if needed > pool.len() || m == 0 {
        return Err(ProviderError::InsufficientExamples {
            label: label.to_string(),
            needed,
            available: pool.len(),
        });
    }
    let drawn = sample(rng, pool.len(), needed);
    let picked: Vec<&Example> = drawn.iter().map(|i| pool[i]).collect();
    Ok(picked.chunks(n.max(1)).take(m).map(<[&Example]>::to_vec).collect())
}
