//! The structured answer contract between prompts and model responses.
//!
//! Models are asked for a fenced JSON value. Parsing takes the first
//! well-formed JSON value anywhere in the response and ignores the prose
//! around it. Items with the wrong shape are dropped and counted rather than
//! failing the whole answer.
//!
//! * detection: `[{"trigger": str, "event_type": str}]`
//! * arguments: `[{"event_type": str, "trigger": str, "arguments": {role: str | [str]}}]`
//! * synthesis: `{"text": str, "events": <arguments format>}`

use serde_json::{Map, Value};
use thiserror::Error;

use crate::corpus::{EventRecord, Instance};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("response contains no JSON value")]
    NoJson,
    #[error("expected a JSON {expected}, found {found}")]
    WrongShape {
        expected: &'static str,
        found: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DetectionItem {
    pub trigger: String,
    pub event_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgumentItem {
    pub event_type: String,
    pub trigger: String,
    /// (role, filler) pairs in answer order. A role may repeat.
    pub arguments: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    /// Items dropped because they did not have the expected shape.
    pub malformed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisAnswer {
    pub text: String,
    pub events: Vec<ArgumentItem>,
    pub malformed: usize,
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Returns the first complete JSON array or object embedded in `text`.
pub fn first_json_value(text: &str) -> Option<Value> {
    for (pos, c) in text.char_indices() {
        if c != '[' && c != '{' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[pos..]).into_iter::<Value>();
        if let Some(Ok(v)) = stream.next() {
            return Some(v);
        }
    }
    None
}

fn top_array(text: &str) -> Result<Vec<Value>, AnswerError> {
    match first_json_value(text).ok_or(AnswerError::NoJson)? {
        Value::Array(items) => Ok(items),
        other => Err(AnswerError::WrongShape {
            expected: "array",
            found: kind(&other),
        }),
    }
}

fn non_empty_str(obj: &Map<String, Value>, key: &str) -> Option<String> {
    obj.get(key)
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

pub fn parse_detection_answer(text: &str) -> Result<Parsed<DetectionItem>, AnswerError> {
    let mut parsed = Parsed {
        items: Vec::new(),
        malformed: 0,
    };
    for item in top_array(text)? {
        let fields = item.as_object().and_then(|o| {
            Some(DetectionItem {
                trigger: non_empty_str(o, "trigger")?,
                event_type: non_empty_str(o, "event_type")?,
            })
        });
        match fields {
            Some(d) => parsed.items.push(d),
            None => parsed.malformed += 1,
        }
    }
    Ok(parsed)
}

fn argument_item(v: &Value) -> Option<(ArgumentItem, usize)> {
    let o = v.as_object()?;
    let event_type = non_empty_str(o, "event_type")?;
    let trigger = non_empty_str(o, "trigger")?;
    let mut arguments = Vec::new();
    let mut bad = 0;
    match o.get("arguments") {
        None | Some(Value::Null) => {}
        Some(Value::Object(map)) => {
            for (role, filler) in map {
                let role = role.trim().to_string();
                match filler {
                    Value::Null => {}
                    Value::String(s) if s.trim().is_empty() => {}
                    Value::String(s) => arguments.push((role, s.trim().to_string())),
                    Value::Array(list) => {
                        for f in list {
                            match f.as_str().map(str::trim) {
                                Some("") => {}
                                Some(s) => arguments.push((role.clone(), s.to_string())),
                                None => bad += 1,
                            }
                        }
                    }
                    _ => bad += 1,
                }
            }
        }
        Some(_) => return None,
    }
    Some((
        ArgumentItem {
            event_type,
            trigger,
            arguments,
        },
        bad,
    ))
}

fn argument_items(values: &[Value]) -> Parsed<ArgumentItem> {
    let mut parsed = Parsed {
        items: Vec::new(),
        malformed: 0,
    };
    for v in values {
        match argument_item(v) {
            Some((item, bad)) => {
                parsed.items.push(item);
                parsed.malformed += bad;
            }
            None => parsed.malformed += 1,
        }
    }
    parsed
}

pub fn parse_argument_answer(text: &str) -> Result<Parsed<ArgumentItem>, AnswerError> {
    Ok(argument_items(&top_array(text)?))
}

pub fn parse_synthesis_answer(text: &str) -> Result<SynthesisAnswer, AnswerError> {
    let value = first_json_value(text).ok_or(AnswerError::NoJson)?;
    let obj = value.as_object().ok_or(AnswerError::WrongShape {
        expected: "object",
        found: kind(&value),
    })?;
    let report = obj.get("text").and_then(Value::as_str).unwrap_or_default();
    let events = match obj.get("events") {
        Some(Value::Array(items)) => argument_items(items),
        Some(other) => {
            return Err(AnswerError::WrongShape {
                expected: "array",
                found: kind(other),
            })
        }
        None => Parsed {
            items: Vec::new(),
            malformed: 0,
        },
    };
    Ok(SynthesisAnswer {
        text: report.to_string(),
        events: events.items,
        malformed: events.malformed,
    })
}

impl DetectionItem {
    pub fn from_gold(instance: &Instance) -> Vec<DetectionItem> {
        instance
            .events
            .iter()
            .map(|e| DetectionItem {
                trigger: e.trigger.text.clone(),
                event_type: e.event_type.clone(),
            })
            .collect()
    }
}

impl ArgumentItem {
    pub fn from_gold(event: &EventRecord) -> ArgumentItem {
        ArgumentItem {
            event_type: event.event_type.clone(),
            trigger: event.trigger.text.clone(),
            arguments: event
                .arguments
                .iter()
                .map(|a| (a.role.clone(), a.span.text.clone()))
                .collect(),
        }
    }

    fn to_value(&self) -> Value {
        let mut args = Map::new();
        for (role, filler) in &self.arguments {
            match args.get_mut(role) {
                None => {
                    args.insert(role.clone(), Value::String(filler.clone()));
                }
                Some(Value::Array(list)) => list.push(Value::String(filler.clone())),
                Some(existing) => {
                    let first = existing.take();
                    *existing = Value::Array(vec![first, Value::String(filler.clone())]);
                }
            }
        }
        let mut obj = Map::new();
        obj.insert("event_type".into(), Value::String(self.event_type.clone()));
        obj.insert("trigger".into(), Value::String(self.trigger.clone()));
        obj.insert("arguments".into(), Value::Object(args));
        Value::Object(obj)
    }
}

fn fenced(value: &Value) -> String {
    format!(
        "```json\n{}\n```",
        serde_json::to_string_pretty(value).expect("json value serializes")
    )
}

pub fn render_detection_answer(items: &[DetectionItem]) -> String {
    let arr = items
        .iter()
        .map(|d| {
            let mut o = Map::new();
            o.insert("trigger".into(), Value::String(d.trigger.clone()));
            o.insert("event_type".into(), Value::String(d.event_type.clone()));
            Value::Object(o)
        })
        .collect();
    fenced(&Value::Array(arr))
}

pub fn render_argument_answer(items: &[ArgumentItem]) -> String {
    fenced(&Value::Array(items.iter().map(ArgumentItem::to_value).collect()))
}

pub fn render_synthesis_answer(text: &str, events: &[ArgumentItem]) -> String {
    let mut o = Map::new();
    o.insert("text".into(), Value::String(text.to_string()));
    o.insert(
        "events".into(),
        Value::Array(events.iter().map(ArgumentItem::to_value).collect()),
    );
    fenced(&Value::Object(o))
}
