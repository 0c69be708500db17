use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PromptError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placeholder {
    TaskDescription,
    EventTypeDefinitions,
    ExtractionRules,
    OutputFormat,
    Examples,
    QueryText,
    DetectedEvents,
    SeedExamples,
    ChosenEventTypes,
}

impl Placeholder {
    pub const ALL: [Placeholder; 9] = [
        Placeholder::TaskDescription,
        Placeholder::EventTypeDefinitions,
        Placeholder::ExtractionRules,
        Placeholder::OutputFormat,
        Placeholder::Examples,
        Placeholder::QueryText,
        Placeholder::DetectedEvents,
        Placeholder::SeedExamples,
        Placeholder::ChosenEventTypes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Placeholder::TaskDescription => "task_description",
            Placeholder::EventTypeDefinitions => "event_type_definitions",
            Placeholder::ExtractionRules => "extraction_rules",
            Placeholder::OutputFormat => "output_format",
            Placeholder::Examples => "examples",
            Placeholder::QueryText => "query_text",
            Placeholder::DetectedEvents => "detected_events",
            Placeholder::SeedExamples => "seed_examples",
            Placeholder::ChosenEventTypes => "chosen_event_types",
        }
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{{{}}}}}", self.as_str())
    }
}

impl FromStr for Placeholder {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Placeholder::ALL.into_iter().find(|p| p.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Event detection: triggers and types.
    Ed,
    /// Argument extraction for already-detected events.
    Eae,
    /// Detection and argument extraction in a single prompt.
    Joint,
    Synthesis,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Ed => "ed",
            TaskKind::Eae => "eae",
            TaskKind::Joint => "joint",
            TaskKind::Synthesis => "synthesis",
        }
    }

    /// Placeholders a template of this kind must contain.
    pub fn required(self) -> &'static [Placeholder] {
        use Placeholder::*;
        match self {
            TaskKind::Ed | TaskKind::Joint => {
                &[EventTypeDefinitions, OutputFormat, Examples, QueryText]
            }
            TaskKind::Eae => &[
                EventTypeDefinitions,
                OutputFormat,
                Examples,
                QueryText,
                DetectedEvents,
            ],
            TaskKind::Synthesis => &[SeedExamples, ChosenEventTypes, OutputFormat],
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
enum Piece {
    Text(String),
    Slot(Placeholder),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Section {
    pub name: String,
    pieces: Vec<Piece>,
}

impl Section {
    pub fn placeholders(&self) -> impl Iterator<Item = Placeholder> + '_ {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot(s) => Some(*s),
            Piece::Text(_) => None,
        })
    }
}

/// A prompt template: named sections of text with `{{placeholder}}` slots.
///
/// In the file format a line of the form `@@ name` opens a new section. Text
/// before the first such line forms a section called `main`. Sections are
/// rendered in order and joined with a blank line; sections that render to
/// whitespace are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptTemplate {
    pub task_kind: TaskKind,
    pub sections: Vec<Section>,
}

fn parse_section(name: &str, body: &str) -> Result<Section, PromptError> {
    let mut pieces = Vec::new();
    let mut used = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or_else(|| PromptError::UnterminatedPlaceholder {
            section: name.to_string(),
        })?;
        let raw = after[..close].trim();
        let slot: Placeholder = raw.parse().map_err(|_| PromptError::UnknownPlaceholder {
            name: raw.to_string(),
            section: name.to_string(),
        })?;
        if used.contains(&slot) {
            return Err(PromptError::RepeatedPlaceholder {
                name: slot.as_str().to_string(),
                section: name.to_string(),
            });
        }
        used.push(slot);
        if open > 0 {
            pieces.push(Piece::Text(rest[..open].to_string()));
        }
        pieces.push(Piece::Slot(slot));
        rest = &after[close + 2..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest.to_string()));
    }
    Ok(Section {
        name: name.to_string(),
        pieces,
    })
}

impl PromptTemplate {
    pub fn parse(task_kind: TaskKind, source: &str) -> Result<Self, PromptError> {
        let mut sections = Vec::new();
        let mut name = String::from("main");
        let mut body = String::new();
        let mut seen_header = false;
        for line in source.split_inclusive('\n') {
            if let Some(header) = line.strip_prefix("@@") {
                if seen_header || !body.trim().is_empty() {
                    sections.push(parse_section(&name, body.trim_end_matches('\n'))?);
                }
                let header = header.trim();
                if header.is_empty() {
                    return Err(PromptError::EmptySectionName);
                }
                name = header.to_string();
                body.clear();
                seen_header = true;
            } else {
                body.push_str(line);
            }
        }
        if seen_header || !body.trim().is_empty() {
            sections.push(parse_section(&name, body.trim_end_matches('\n'))?);
        }
        let template = PromptTemplate {
            task_kind,
            sections,
        };
        for required in task_kind.required() {
            if !template.placeholders().any(|p| p == *required) {
                return Err(PromptError::MissingPlaceholder {
                    name: required.as_str().to_string(),
                    task_kind,
                });
            }
        }
        Ok(template)
    }

    pub fn from_path(task_kind: TaskKind, path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| PromptError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(task_kind, &source)
    }

    pub fn placeholders(&self) -> impl Iterator<Item = Placeholder> + '_ {
        self.sections.iter().flat_map(Section::placeholders)
    }

    /// Renders the template. Every slot must have a value.
    pub fn render(&self, values: &BTreeMap<Placeholder, String>) -> Result<String, PromptError> {
        let mut rendered = Vec::with_capacity(self.sections.len());
        for section in &self.sections {
            let mut out = String::new();
            for piece in &section.pieces {
                match piece {
                    Piece::Text(t) => out.push_str(t),
                    Piece::Slot(p) => out.push_str(values.get(p).ok_or_else(|| {
                        PromptError::UnresolvedPlaceholder {
                            name: p.as_str().to_string(),
                        }
                    })?),
                }
            }
            if !out.trim().is_empty() {
                rendered.push(out.trim_end().to_string());
            }
        }
        Ok(rendered.join("\n\n"))
    }

    /// Canonical source text, used for digests.
    pub fn source(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            out.push_str("@@ ");
            out.push_str(&s.name);
            out.push('\n');
            for p in &s.pieces {
                match p {
                    Piece::Text(t) => out.push_str(t),
                    Piece::Slot(slot) => out.push_str(&slot.to_string()),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ED: &str = "intro {{task_description}}\n@@ schema\nTypes:\n{{event_type_definitions}}\n@@ tail\n{{output_format}}\n{{examples}}\nText: {{ query_text }}\n";

    #[test]
    fn parses_sections() {
        let t = PromptTemplate::parse(TaskKind::Ed, ED).unwrap();
        let names: Vec<_> = t.sections.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["main", "schema", "tail"]);
        assert_eq!(t.placeholders().count(), 5);
        let again = PromptTemplate::parse(TaskKind::Ed, &t.source()).unwrap();
        assert_eq!(again.sections.len(), 3);
    }

    #[test]
    fn template_errors() {
        assert!(matches!(
            PromptTemplate::parse(TaskKind::Ed, "{{colour}}"),
            Err(PromptError::UnknownPlaceholder { name, .. }) if name == "colour"
        ));
        assert!(matches!(
            PromptTemplate::parse(TaskKind::Ed, "{{examples}} {{examples}}"),
            Err(PromptError::RepeatedPlaceholder { .. })
        ));
        assert!(matches!(
            PromptTemplate::parse(TaskKind::Ed, "{{examples"),
            Err(PromptError::UnterminatedPlaceholder { .. })
        ));
        assert!(matches!(
            PromptTemplate::parse(TaskKind::Ed, "@@\nx"),
            Err(PromptError::EmptySectionName)
        ));
        assert!(matches!(
            PromptTemplate::parse(TaskKind::Eae, ED),
            Err(PromptError::MissingPlaceholder { name, .. }) if name == "detected_events"
        ));
    }

    #[test]
    fn same_placeholder_in_different_sections_is_allowed() {
        let src = "{{examples}}\n@@ b\n{{examples}}";
        let t = PromptTemplate::parse(TaskKind::Synthesis, &format!(
            "{src}\n@@ c\n{{{{seed_examples}}}} {{{{chosen_event_types}}}} {{{{output_format}}}}"
        ))
        .unwrap();
        assert_eq!(t.sections.len(), 3);
    }

    #[test]
    fn render_drops_empty_sections_and_flags_unresolved() {
        let t = PromptTemplate::parse(TaskKind::Ed, ED).unwrap();
        let mut values = BTreeMap::new();
        values.insert(Placeholder::TaskDescription, "Do it.".to_string());
        values.insert(Placeholder::EventTypeDefinitions, "- a".to_string());
        values.insert(Placeholder::OutputFormat, "JSON".to_string());
        values.insert(Placeholder::Examples, String::new());
        assert!(matches!(
            t.render(&values),
            Err(PromptError::UnresolvedPlaceholder { name }) if name == "query_text"
        ));
        values.insert(Placeholder::QueryText, "hello".to_string());
        let out = t.render(&values).unwrap();
        assert_eq!(out, "intro Do it.\n\nTypes:\n- a\n\nJSON\n\nText: hello");
    }
}
