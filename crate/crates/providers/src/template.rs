//! Prompt construction.
//!
//! A prompt is the instruction, then each example rendered label first, then
//! a query block for the target label ending in the text generated so far.
//! Template files have three sections introduced by `[instruction]`,
//! `[example]` and `[query]` header lines. A section's body runs up to the
//! next header; only the newline ending its last line is dropped, so blank
//! lines are significant.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dataset::Example;
use crate::error::{ProviderError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub instruction: String,
    /// Uses `{label}` and `{text}`.
    pub example_format: String,
    /// Uses `{label}` and `{generated}`.
    pub query_format: String,
}

const SECTIONS: [&str; 3] = ["instruction", "example", "query"];

impl PromptTemplate {
    pub fn new(instruction: &str, example_format: &str, query_format: &str) -> Result<Self> {
        let t = Self {
            instruction: instruction.into(),
            example_format: example_format.into(),
            query_format: query_format.into(),
        };
        t.validate()?;
        Ok(t)
    }

    /// Label-first layout: `"{label_name}: {label}\n{text_name}: {text}\n\n"`.
    pub fn labelled(instruction: &str, label_name: &str, text_name: &str) -> Self {
        Self {
            instruction: format!("{instruction}\n\n"),
            example_format: format!("{label_name}: {{label}}\n{text_name}: {{text}}\n\n"),
            query_format: format!("{label_name}: {{label}}\n{text_name}:{{generated}}"),
        }
    }

    /// Built-in templates for the benchmark tasks.
    pub fn preset(task: &str) -> Option<Self> {
        let t = match task.to_ascii_lowercase().as_str() {
            "agnews" => Self::labelled(
                "Given a label of news type, generate the chosen type of news accordingly.",
                "News Type",
                "Text",
            ),
            "dbpedia" => Self::labelled(
                "Given a label of document type, generate the chosen type of document accordingly.",
                "Document Type",
                "Text",
            ),
            "trec" => Self::labelled(
                "Given a label of answer type, generate a question based on the given answer type accordingly.",
                "Answer Type",
                "Text",
            ),
            "mit-g" | "mitg" => Self::labelled(
                "Given a genre for the film, generate a description accordingly and make sure to include the given genre in the description.",
                "Genre",
                "Sentence",
            ),
            "mit-d" | "mitd" => Self::labelled(
                "Given a director for the film, generate a description accordingly and make sure to include the given director in the description.",
                "Director",
                "Sentence",
            ),
            _ => return None,
        };
        Some(t)
    }

    pub fn parse(raw: &str) -> Result<Self> {
        let mut bodies: [Option<String>; 3] = [None, None, None];
        let mut current: Option<usize> = None;
        let mut buf = String::new();
        let flush = |current: Option<usize>, buf: &mut String, bodies: &mut [Option<String>; 3]| -> Result<()> {
            if let Some(i) = current {
                if bodies[i].is_some() {
                    return Err(ProviderError::Template(format!("section [{}] appears twice", SECTIONS[i])));
                }
                let body = buf.strip_suffix('\n').unwrap_or(buf).to_string();
                bodies[i] = Some(body);
            } else if !buf.trim().is_empty() {
                return Err(ProviderError::Template("text before the first section header".into()));
            }
            buf.clear();
            Ok(())
        };
        for line in raw.split_inclusive('\n') {
            let header = line.trim_end_matches(['\n', '\r']);
            if let Some(name) = header.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
                if let Some(i) = SECTIONS.iter().position(|s| *s == name) {
                    flush(current, &mut buf, &mut bodies)?;
                    current = Some(i);
                    continue;
                }
            }
            buf.push_str(line);
        }
        flush(current, &mut buf, &mut bodies)?;
        let [instruction, example, query] = bodies;
        let missing = |name: &str| ProviderError::Template(format!("missing section [{name}]"));
        Self::new(
            &instruction.ok_or_else(|| missing("instruction"))?,
            &example.ok_or_else(|| missing("example"))?,
            &query.ok_or_else(|| missing("query"))?,
        )
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|source| ProviderError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&raw)
    }

    pub fn validate(&self) -> Result<()> {
        check_placeholders("example", &self.example_format, &["label", "text"])?;
        check_placeholders("query", &self.query_format, &["label", "generated"])?;
        check_placeholders("instruction", &self.instruction, &[])
    }

    /// Renders the prompt. With an empty subset this is the public prompt.
    pub fn build_prompt(&self, subset: &[&Example], label: &str, prefix: &str) -> String {
        let mut out = self.instruction.clone();
        for ex in subset {
            out.push_str(&self.example_format.replace("{label}", &ex.label).replace("{text}", &ex.text));
        }
        out.push_str(&self.query_format.replace("{label}", label).replace("{generated}", prefix));
        out
    }
}

fn check_placeholders(section: &str, body: &str, allowed: &[&str]) -> Result<()> {
    let mut found = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find('{') {
        let tail = &rest[start + 1..];
        let Some(end) = tail.find('}') else { break };
        let name = &tail[..end];
        if !allowed.contains(&name) {
            return Err(ProviderError::Template(format!("unknown placeholder {{{name}}} in [{section}]")));
        }
        found.push(name);
        rest = &tail[end + 1..];
    }
    for name in allowed {
        if !found.contains(name) {
            return Err(ProviderError::Template(format!("[{section}] lacks {{{name}}}")));
        }
    }
    Ok(())
}
