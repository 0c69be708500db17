//! Event schemas: the closed vocabulary of event types and argument roles.
//!
//! A schema is loaded from a JSON document, trimmed, validated, and then
//! treated as immutable. Every prompt, parser, and scorer consults it to
//! decide which event types and roles exist.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MARITIME_SCHEMA: &str = include_str!("../fixtures/maritime_schema.json");

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("failed to read schema {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed schema document: {0}")]
    Parse(String),
    #[error("invalid schema at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("unknown event type {0:?}")]
    UnknownEventType(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgumentRoleDef {
    pub name: String,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventTypeDef {
    pub name: String,
    pub definition: String,
    pub roles: Vec<ArgumentRoleDef>,
}

impl EventTypeDef {
    pub fn role(&self, name: &str) -> Option<&ArgumentRoleDef> {
        let name = name.trim();
        self.roles.iter().find(|r| r.name == name)
    }

    pub fn has_role(&self, name: &str) -> bool {
        self.role(name).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSchema {
    pub name: String,
    pub version: String,
    pub event_types: Vec<EventTypeDef>,
}

impl EventSchema {
    /// Parses and validates a schema document.
    pub fn from_json_str(source: &str) -> Result<Self, SchemaError> {
        let mut schema: EventSchema =
            serde_json::from_str(source).map_err(|e| SchemaError::Parse(e.to_string()))?;
        schema.normalize();
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&source)
    }

    /// The bundled Maritime schema: 16 event types, each carrying all six
    /// argument roles.
    pub fn maritime() -> Self {
        Self::from_json_str(MARITIME_SCHEMA).expect("bundled maritime schema is valid")
    }

    fn normalize(&mut self) {
        trim_in_place(&mut self.name);
        for ty in &mut self.event_types {
            trim_in_place(&mut ty.name);
            for role in &mut ty.roles {
                trim_in_place(&mut role.name);
            }
        }
    }

    fn validate(&self) -> Result<(), SchemaError> {
        let fail = |path: String, message: &str| {
            Err(SchemaError::Validation {
                path,
                message: message.to_string(),
            })
        };
        if self.name.is_empty() {
            return fail("name".into(), "schema name is empty");
        }
        if self.event_types.is_empty() {
            return fail("event_types".into(), "schema defines no event types");
        }
        let mut seen_types = HashSet::new();
        for (i, ty) in self.event_types.iter().enumerate() {
            let path = format!("event_types[{i}]");
            if ty.name.is_empty() {
                return fail(format!("{path}.name"), "event type name is empty");
            }
            if !seen_types.insert(ty.name.as_str()) {
                return fail(
                    format!("{path}.name"),
                    &format!("duplicate event type {:?}", ty.name),
                );
            }
            if ty.definition.trim().is_empty() {
                return fail(
                    format!("{path}.definition"),
                    &format!("event type {:?} has an empty definition", ty.name),
                );
            }
            let mut seen_roles = HashSet::new();
            for (j, role) in ty.roles.iter().enumerate() {
                let rpath = format!("{path}.roles[{j}]");
                if role.name.is_empty() {
                    return fail(format!("{rpath}.name"), "role name is empty");
                }
                if !seen_roles.insert(role.name.as_str()) {
                    return fail(
                        format!("{rpath}.name"),
                        &format!("duplicate role {:?} in event type {:?}", role.name, ty.name),
                    );
                }
                if role.definition.trim().is_empty() {
                    return fail(
                        format!("{rpath}.definition"),
                        &format!("role {:?} of {:?} has an empty definition", role.name, ty.name),
                    );
                }
            }
        }
        Ok(())
    }

    pub fn event_type(&self, name: &str) -> Option<&EventTypeDef> {
        let name = name.trim();
        self.event_types.iter().find(|t| t.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.event_type(name).is_some()
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        self.event_types.iter().map(|t| t.name.as_str())
    }

    /// Restricts the schema to the requested event types, keeping schema
    /// order. Duplicate requests collapse.
    pub fn subset<S: AsRef<str>>(&self, types: &[S]) -> Result<EventSchema, SchemaError> {
        let wanted: HashSet<&str> = types.iter().map(|t| t.as_ref().trim()).collect();
        for name in &wanted {
            if !self.contains(name) {
                return Err(SchemaError::UnknownEventType((*name).to_string()));
            }
        }
        Ok(EventSchema {
            name: self.name.clone(),
            version: self.version.clone(),
            event_types: self
                .event_types
                .iter()
                .filter(|t| wanted.contains(t.name.as_str()))
                .cloned()
                .collect(),
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }
}

fn trim_in_place(s: &mut String) {
    let trimmed = s.trim();
    if trimmed.len() != s.len() {
        *s = trimmed.to_string();
    }
}
