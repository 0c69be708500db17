//! The on-disk layout of an extraction run.
//!
//! ```text
//! <run>/config.json        configuration snapshot
//! <run>/prompts.jsonl      one line per request: ids and digests
//! <run>/raw/<id>.json      each response, written as it arrives
//! <run>/predictions.jsonl  one record per instance, corpus order
//! <run>/metadata.json      counts, rejection tallies, assumed defaults
//! ```
//!
//! Nothing time-dependent is written, so a rerun with a mock backend
//! reproduces every file byte for byte.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{summarize, ExtractionConfig, PipelineError, PredictionRecord};
use crate::llm::sha256_hex;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// File name for a request's raw response. Characters outside
/// `[A-Za-z0-9._-]` are replaced, and a digest suffix keeps replaced names
/// distinct.
pub fn raw_file_name(request_id: &str) -> String {
    let safe: String = request_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if safe == request_id && !safe.starts_with('.') {
        format!("{safe}.json")
    } else {
        format!("{safe}-{}.json", &sha256_hex(request_id.as_bytes())[..12])
    }
}

pub fn predictions_to_jsonl(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>, PipelineError> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| PipelineError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Run metadata: summary counts plus the defaults the run assumed.
pub fn run_metadata(config: &ExtractionConfig, records: &[PredictionRecord]) -> serde_json::Value {
    serde_json::json!({
        "summary": summarize(records),
        "assumptions": {
            "extraction_temperature": config.temperature,
            "max_tokens": config.max_tokens,
            "grounding_policy": config.grounding_policy,
            "demo_order": config.prompt.demo_order,
            "multi_turn": config.prompt.multi_turn,
            "reprompts_on_parse_failure": 1,
        },
    })
}

pub struct RunDirectory {
    root: PathBuf,
}

impl RunDirectory {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let root = root.into();
        let raw = root.join("raw");
        std::fs::create_dir_all(&raw).map_err(io_err(&raw))?;
        Ok(RunDirectory { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn raw_dir(&self) -> PathBuf {
        self.root.join("raw")
    }

    pub fn predictions_path(&self) -> PathBuf {
        self.root.join("predictions.jsonl")
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), PipelineError> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).map_err(io_err(&path))
    }

    pub fn write_config(&self, config: &impl Serialize) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(config).expect("config serializes");
        self.write("config.json", &(text + "\n"))
    }

    pub fn write_results(
        &self,
        records: &[PredictionRecord],
        metadata: &serde_json::Value,
    ) -> Result<(), PipelineError> {
        let mut prompts = String::new();
        for p in records.iter().flat_map(|r| &r.prompts) {
            prompts.push_str(&serde_json::to_string(p).expect("prompt record serializes"));
            prompts.push('\n');
        }
        self.write("prompts.jsonl", &prompts)?;
        self.write("predictions.jsonl", &predictions_to_jsonl(records))?;
        let meta = serde_json::to_string_pretty(metadata).expect("metadata serializes");
        self.write("metadata.json", &(meta + "\n"))
    }
}
