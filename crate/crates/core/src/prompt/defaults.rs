//! Built-in templates and instruction texts.

use super::template::{PromptTemplate, TaskKind};

pub const ED_TEMPLATE: &str = "\
@@ task
{{task_description}}
@@ schema
Event types and their definitions:
{{event_type_definitions}}
@@ rules
Extraction rules:
{{extraction_rules}}
@@ format
Output format:
{{output_format}}
@@ examples
{{examples}}
@@ query
### Query
Text: {{query_text}}
Answer:
";

pub const EAE_TEMPLATE: &str = "\
@@ task
{{task_description}}
@@ schema
Event types and argument roles:
{{event_type_definitions}}
@@ rules
Extraction rules:
{{extraction_rules}}
@@ format
Output format:
{{output_format}}
@@ examples
{{examples}}
@@ query
### Query
Text: {{query_text}}
Detected events:
{{detected_events}}
Answer:
";

pub const JOINT_TEMPLATE: &str = "\
@@ task
{{task_description}}
@@ schema
Event types and argument roles:
{{event_type_definitions}}
@@ rules
Extraction rules:
{{extraction_rules}}
@@ format
Output format:
{{output_format}}
@@ examples
{{examples}}
@@ query
### Query
Text: {{query_text}}
Answer:
";

pub const SYNTHESIS_TEMPLATE: &str = "\
@@ task
{{task_description}}
@@ seeds
Seed reports with their annotations:
{{seed_examples}}
@@ chosen
The new report must describe the following event types, mentioning the listed arguments:
{{chosen_event_types}}
@@ rules
Rules:
{{extraction_rules}}
@@ format
Output format:
{{output_format}}
";

const ED_TASK: &str = "You are an expert annotator for event detection. Read the text and identify every \
event mention. For each one, give the trigger (the word or phrase that most clearly expresses the event) \
and its event type chosen from the list below.";

const EAE_TASK: &str = "You are an expert annotator for event argument extraction. The events in the text \
have already been detected. For each detected event, extract the text that fills each of its argument \
roles, using only the roles defined below.";

const JOINT_TASK: &str = "You are an expert annotator for event extraction. Read the text, identify every \
event mention with its trigger and event type, and extract the text that fills each argument role of \
that event type.";

const SYNTHESIS_TASK: &str = "You write realistic incident reports for an event extraction dataset. \
Write one new report in the style of the seed reports, together with its event annotations.";

const EXTRACTION_RULES: &str = "\
1. Triggers and argument values must be copied exactly from the text as contiguous substrings.
2. Report one event per trigger occurrence.
3. Use only the event types and argument roles listed above.
4. Leave out roles that are not mentioned in the text.
5. Respond with the output format below and nothing else.";

const SYNTHESIS_RULES: &str = "\
1. The report must contain at least one event of every listed event type.
2. Every trigger and argument value must appear verbatim in the report text.
3. Use only the listed event types and argument roles.
4. Respond with the output format below and nothing else.";

const ED_FORMAT: &str = "A JSON array inside a ```json fenced block. Each element is an object \
{\"trigger\": string, \"event_type\": string}. Use [] when the text describes no event.";

const EAE_FORMAT: &str = "A JSON array inside a ```json fenced block with one element per event: \
{\"event_type\": string, \"trigger\": string, \"arguments\": {role: string}}. A role with several \
values maps to an array of strings.";

const SYNTHESIS_FORMAT: &str = "A JSON object inside a ```json fenced block: {\"text\": string, \
\"events\": [{\"event_type\": string, \"trigger\": string, \"arguments\": {role: string}}]}.";

/// Fixed instruction texts substituted into the task, rules and format slots.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Instructions {
    pub task_description: String,
    pub extraction_rules: String,
    pub output_format: String,
}

impl Instructions {
    pub fn for_kind(kind: TaskKind) -> Self {
        let (task, rules, format) = match kind {
            TaskKind::Ed => (ED_TASK, EXTRACTION_RULES, ED_FORMAT),
            TaskKind::Eae => (EAE_TASK, EXTRACTION_RULES, EAE_FORMAT),
            TaskKind::Joint => (JOINT_TASK, EXTRACTION_RULES, EAE_FORMAT),
            TaskKind::Synthesis => (SYNTHESIS_TASK, SYNTHESIS_RULES, SYNTHESIS_FORMAT),
        };
        Instructions {
            task_description: task.to_string(),
            extraction_rules: rules.to_string(),
            output_format: format.to_string(),
        }
    }
}

/// Appended to a prompt when the first response could not be parsed.
pub fn format_reminder(kind: TaskKind) -> String {
    format!(
        "\n\nYour previous answer could not be parsed. Reply again using exactly this format: {}",
        Instructions::for_kind(kind).output_format
    )
}

pub fn default_template(kind: TaskKind) -> PromptTemplate {
    let src = match kind {
        TaskKind::Ed => ED_TEMPLATE,
        TaskKind::Eae => EAE_TEMPLATE,
        TaskKind::Joint => JOINT_TEMPLATE,
        TaskKind::Synthesis => SYNTHESIS_TEMPLATE,
    };
    PromptTemplate::parse(kind, src).expect("built-in template is valid")
}
