//! Span-annotated instance corpora in JSON Lines form.
//!
//! Offsets are counted in Unicode scalar values, not bytes, so a span can be
//! checked by plain substring equality regardless of tokenizer.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::EventSchema;

const MARITIME_SEEDS: &str = include_str!("../fixtures/maritime_seeds.jsonl");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed instance: {message}")]
    Parse { line: usize, message: String },
    #[error("instance {instance_id}: duplicate instance id")]
    DuplicateId { instance_id: String },
    #[error("instance {instance_id}: empty instance id")]
    EmptyId { instance_id: String },
    #[error("instance {instance_id}: span [{start}, {end}) is outside text of length {len}")]
    SpanOutOfRange {
        instance_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("instance {instance_id}: span [{start}, {end}) text {expected:?} does not match substring {actual:?}")]
    SpanMismatch {
        instance_id: String,
        start: usize,
        end: usize,
        expected: String,
        actual: String,
    },
    #[error("instance {instance_id}: unknown event type {event_type:?}")]
    UnknownEventType {
        instance_id: String,
        event_type: String,
    },
    #[error("instance {instance_id}: unknown role {role:?} for event type {event_type:?}")]
    UnknownRole {
        instance_id: String,
        event_type: String,
        role: String,
    },
    #[error("instance {instance_id}: duplicate argument {role:?} at [{start}, {end})")]
    DuplicateArgument {
        instance_id: String,
        role: String,
        start: usize,
        end: usize,
    },
}

/// A half-open character range plus the text it covers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl Span {
    pub fn new(start: usize, end: usize, text: impl Into<String>) -> Self {
        Span {
            start,
            end,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgumentMention {
    pub role: String,
    pub span: Span,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArgumentWire {
    role: String,
    start: usize,
    end: usize,
    text: String,
}

impl Serialize for ArgumentMention {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ArgumentWire {
            role: self.role.clone(),
            start: self.span.start,
            end: self.span.end,
            text: self.span.text.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ArgumentMention {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let w = ArgumentWire::deserialize(deserializer)?;
        Ok(ArgumentMention {
            role: w.role,
            span: Span::new(w.start, w.end, w.text),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub event_type: String,
    pub trigger: Span,
    #[serde(default)]
    pub arguments: Vec<ArgumentMention>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Granularity {
    #[serde(rename = "sentence")]
    Sentence,
    #[serde(rename = "multi-sentence")]
    MultiSentence,
    #[serde(rename = "document")]
    Document,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub id: String,
    pub text: String,
    pub granularity: Granularity,
    #[serde(default)]
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub schema_name: String,
    pub split: Split,
    pub instances: Vec<Instance>,
}

/// Substring of `text` by character offsets, or `None` when out of range.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let start_byte = indices.nth(start)?;
    let end_byte = if end == start {
        start_byte
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[start_byte..end_byte])
}

/// Checks one instance against its schema. Used by the loader and by
/// synthetic-data validation.
pub fn validate_instance(instance: &Instance, schema: &EventSchema) -> Result<(), CorpusError> {
    let id = &instance.id;
    if id.trim().is_empty() {
        return Err(CorpusError::EmptyId {
            instance_id: id.clone(),
        });
    }
    let len = instance.text.chars().count();
    let check_span = |span: &Span| -> Result<(), CorpusError> {
        if span.start >= span.end || span.end > len {
            return Err(CorpusError::SpanOutOfRange {
                instance_id: id.clone(),
                start: span.start,
                end: span.end,
                len,
            });
        }
        let actual = char_slice(&instance.text, span.start, span.end).unwrap_or_default();
        if actual != span.text {
            return Err(CorpusError::SpanMismatch {
                instance_id: id.clone(),
                start: span.start,
                end: span.end,
                expected: span.text.clone(),
                actual: actual.to_string(),
            });
        }
        Ok(())
    };
    for event in &instance.events {
        let Some(def) = schema.event_type(&event.event_type) else {
            return Err(CorpusError::UnknownEventType {
                instance_id: id.clone(),
                event_type: event.event_type.clone(),
            });
        };
        check_span(&event.trigger)?;
        let mut seen = HashSet::new();
        for arg in &event.arguments {
            if !def.has_role(&arg.role) {
                return Err(CorpusError::UnknownRole {
                    instance_id: id.clone(),
                    event_type: event.event_type.clone(),
                    role: arg.role.clone(),
                });
            }
            check_span(&arg.span)?;
            if !seen.insert((arg.role.trim(), arg.span.start, arg.span.end)) {
                return Err(CorpusError::DuplicateArgument {
                    instance_id: id.clone(),
                    role: arg.role.clone(),
                    start: arg.span.start,
                    end: arg.span.end,
                });
            }
        }
    }
    Ok(())
}

impl Instance {
    fn normalize(&mut self) {
        for event in &mut self.events {
            let t = event.event_type.trim();
            if t.len() != event.event_type.len() {
                event.event_type = t.to_string();
            }
            for arg in &mut event.arguments {
                let r = arg.role.trim();
                if r.len() != arg.role.len() {
                    arg.role = r.to_string();
                }
            }
        }
    }
}

impl Corpus {
    pub fn new(schema_name: impl Into<String>, split: Split) -> Self {
        Corpus {
            schema_name: schema_name.into(),
            split,
            instances: Vec::new(),
        }
    }

    /// Parses JSON Lines and validates every instance. Blank lines are
    /// skipped.
    pub fn from_jsonl_str(
        source: &str,
        schema: &EventSchema,
        split: Split,
    ) -> Result<Self, CorpusError> {
        let mut instances = Vec::new();
        for (i, line) in source.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut instance: Instance =
                serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            instance.normalize();
            instances.push(instance);
        }
        Self::from_instances(schema, split, instances)
    }

    pub fn from_instances(
        schema: &EventSchema,
        split: Split,
        instances: Vec<Instance>,
    ) -> Result<Self, CorpusError> {
        let mut ids = HashSet::new();
        for instance in &instances {
            validate_instance(instance, schema)?;
            if !ids.insert(instance.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    instance_id: instance.id.clone(),
                });
            }
        }
        Ok(Corpus {
            schema_name: schema.name.clone(),
            split,
            instances,
        })
    }

    pub fn from_path(
        path: impl AsRef<Path>,
        schema: &EventSchema,
        split: Split,
    ) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl_str(&source, schema, split)
    }

    /// The 20 hand-written Maritime seed reports shipped with the crate.
    pub fn maritime_seeds() -> Self {
        Self::from_jsonl_str(MARITIME_SEEDS, &EventSchema::maritime(), Split::Train)
            .expect("bundled maritime seeds are valid")
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for instance in &self.instances {
            out.push_str(&serde_json::to_string(instance).expect("instance serializes"));
            out.push('\n');
        }
        out
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        let mut stats = CorpusStats::default();
        stats.instances = self.instances.len();
        for instance in &self.instances {
            stats.events += instance.events.len();
            *stats
                .events_per_instance
                .entry(instance.events.len())
                .or_default() += 1;
            for event in &instance.events {
                stats.arguments += event.arguments.len();
                *stats.per_type.entry(event.event_type.clone()).or_default() += 1;
            }
        }
        stats
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub instances: usize,
    pub events: usize,
    pub arguments: usize,
    /// events-per-instance value → number of instances with that many events
    pub events_per_instance: BTreeMap<usize, usize>,
    pub per_type: BTreeMap<String, usize>,
}
