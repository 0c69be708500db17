//! Byte-deterministic prompt assembly for detection, argument extraction,
//! single-step extraction and report synthesis.
//!
//! A prompt is a [`PromptTemplate`] filled with instruction texts, schema
//! definitions, demonstration blocks and the query. Every demonstration is
//! rendered as one `### Example N` block and the query as one `### Query`
//! block, so the block structure can be checked on the final text.

mod defaults;
mod select;
mod template;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::answer::{
    render_argument_answer, render_detection_answer, render_synthesis_answer, ArgumentItem,
    DetectionItem,
};
use crate::corpus::Instance;
use crate::embed::EmbedError;
use crate::index::IndexError;
use crate::llm::ChatMessage;
use crate::schema::{EventSchema, EventTypeDef};

pub use defaults::{default_template, format_reminder, Instructions};
pub use select::{DemoMode, DemoSelector, Selection};
pub use template::{Placeholder, PromptTemplate, Section, TaskKind};

pub const EXAMPLE_MARKER: &str = "### Example ";
pub const QUERY_MARKER: &str = "### Query";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown placeholder {{{{{name}}}}} in section {section:?}")]
    UnknownPlaceholder { name: String, section: String },
    #[error("placeholder {{{{{name}}}}} used more than once in section {section:?}")]
    RepeatedPlaceholder { name: String, section: String },
    #[error("unterminated placeholder in section {section:?}")]
    UnterminatedPlaceholder { section: String },
    #[error("section header without a name")]
    EmptySectionName,
    #[error("{task_kind} template lacks required placeholder {{{{{name}}}}}")]
    MissingPlaceholder { name: String, task_kind: TaskKind },
    #[error("placeholder {{{{{name}}}}} has no value for this prompt")]
    UnresolvedPlaceholder { name: String },
    #[error("template is for {found} prompts, expected {expected}")]
    WrongTemplateKind { expected: TaskKind, found: TaskKind },
    #[error("demonstration {instance_id} is a {found} demonstration, expected {expected}")]
    WrongDemoKind {
        instance_id: String,
        expected: TaskKind,
        found: TaskKind,
    },
    #[error("demonstration {instance_id} target does not follow the output format")]
    InvalidDemonstration { instance_id: String },
    #[error("argument prompt schema includes undetected event type {event_type:?}")]
    ScopingViolation { event_type: String },
    #[error("event type {0:?} is not in the schema")]
    UnknownEventType(String),
    #[error("role {role:?} is not defined for event type {event_type:?}")]
    UnknownRole { event_type: String, role: String },
    #[error("synthesis prompt needs at least one seed example")]
    NoSeeds,
    #[error("synthesis prompt needs at least one chosen event type")]
    NoChosenTypes,
    #[error("fixed demonstrations need a canonical example list")]
    MissingCanonical,
    #[error("canonical example {0:?} is not in the demonstration pool")]
    UnknownCanonical(String),
    #[error("retrieval-augmented demonstrations need an index and an embedder")]
    MissingIndex,
    #[error("index entry {0:?} is not in the demonstration pool")]
    IndexPoolMismatch(String),
    #[error("index dimension {index} differs from embedder dimension {embedder}")]
    DimensionMismatch { index: usize, embedder: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("failed to read template {path}: {message}")]
    Io { path: String, message: String },
}

/// One worked example inserted into a prompt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Demonstration {
    pub instance_id: String,
    pub task_kind: TaskKind,
    pub input_text: String,
    /// Detected events shown with the input, for argument demonstrations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub target: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

impl Demonstration {
    pub fn from_gold(kind: TaskKind, instance: &Instance, similarity: Option<f64>) -> Self {
        let args = || -> Vec<ArgumentItem> {
            instance.events.iter().map(ArgumentItem::from_gold).collect()
        };
        let (context, target) = match kind {
            TaskKind::Ed => (None, render_detection_answer(&DetectionItem::from_gold(instance))),
            TaskKind::Eae => (
                Some(render_detected(&DetectionItem::from_gold(instance))),
                render_argument_answer(&args()),
            ),
            TaskKind::Joint => (None, render_argument_answer(&args())),
            TaskKind::Synthesis => (None, render_synthesis_answer(&instance.text, &args())),
        };
        Demonstration {
            instance_id: instance.id.clone(),
            task_kind: kind,
            input_text: instance.text.clone(),
            context,
            target,
            similarity,
        }
    }

    fn target_parses(&self) -> bool {
        match self.task_kind {
            TaskKind::Ed => crate::answer::parse_detection_answer(&self.target).is_ok(),
            TaskKind::Eae | TaskKind::Joint => {
                crate::answer::parse_argument_answer(&self.target).is_ok()
            }
            TaskKind::Synthesis => crate::answer::parse_synthesis_answer(&self.target).is_ok(),
        }
    }

    fn prompt_block(&self, n: usize) -> String {
        let mut block = format!("{EXAMPLE_MARKER}{n}\n");
        if self.task_kind == TaskKind::Synthesis {
            block.push_str(&self.target);
            return block;
        }
        block.push_str("Text: ");
        block.push_str(&self.input_text);
        block.push('\n');
        if let Some(ctx) = &self.context {
            block.push_str("Detected events:\n");
            block.push_str(ctx);
            block.push('\n');
        }
        block.push_str("Answer:");
        block
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoOrder {
    #[default]
    MostSimilarFirst,
    MostSimilarLast,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptOptions {
    pub demo_order: DemoOrder,
    /// Send demonstrations as prior user/assistant turns instead of inline
    /// example blocks.
    pub multi_turn: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub task_kind: TaskKind,
    pub text: String,
    /// Demonstrations in the order they appear in the prompt.
    pub demonstrations: Vec<Demonstration>,
    /// Prior user/assistant exchanges, populated only in multi-turn mode.
    pub turns: Vec<(String, String)>,
    pub query_instance_id: String,
    pub config_digest: String,
}

impl PromptBundle {
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(self.turns.len() * 2 + 1);
        for (user, assistant) in &self.turns {
            out.push(ChatMessage::user(user.clone()));
            out.push(ChatMessage::assistant(assistant.clone()));
        }
        out.push(ChatMessage::user(self.text.clone()));
        out
    }

    /// (example blocks, query blocks) across the prompt text and any turns.
    pub fn block_counts(&self) -> (usize, usize) {
        let (mut ex, mut q) = count_blocks(&self.text);
        for (user, _) in &self.turns {
            let (e, qq) = count_blocks(user);
            ex += e;
            q += qq;
        }
        (ex, q)
    }
}

/// Counts lines opening an example block and lines opening a query block.
pub fn count_blocks(text: &str) -> (usize, usize) {
    text.lines().fold((0, 0), |(e, q), line| {
        if line.starts_with(EXAMPLE_MARKER) {
            (e + 1, q)
        } else if line == QUERY_MARKER {
            (e, q + 1)
        } else {
            (e, q)
        }
    })
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn render_detected(detected: &[DetectionItem]) -> String {
    if detected.is_empty() {
        return "(none)".to_string();
    }
    detected
        .iter()
        .map(|d| format!("- {}: {}", d.event_type, json_str(&d.trigger)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_type_list(schema: &EventSchema) -> String {
    schema
        .event_types
        .iter()
        .map(|t| format!("- {}: {}", t.name, t.definition))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_type_with_roles<'a>(
    ty: &EventTypeDef,
    roles: impl Iterator<Item = &'a crate::schema::ArgumentRoleDef>,
) -> String {
    let mut out = format!("- {}: {}\n  Roles:", ty.name, ty.definition);
    let mut any = false;
    for r in roles {
        any = true;
        out.push_str(&format!("\n  - {}: {}", r.name, r.definition));
    }
    if !any {
        out.push_str(" (none)");
    }
    out
}

fn render_types_with_roles<'a>(types: impl Iterator<Item = &'a EventTypeDef>) -> String {
    types
        .map(|t| render_type_with_roles(t, t.roles.iter()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn check_template(template: &PromptTemplate, expected: TaskKind) -> Result<(), PromptError> {
    if template.task_kind != expected {
        return Err(PromptError::WrongTemplateKind {
            expected,
            found: template.task_kind,
        });
    }
    Ok(())
}

fn check_demos(demos: &[Demonstration], expected: TaskKind) -> Result<(), PromptError> {
    for d in demos {
        if d.task_kind != expected {
            return Err(PromptError::WrongDemoKind {
                instance_id: d.instance_id.clone(),
                expected,
                found: d.task_kind,
            });
        }
        if !d.target_parses() {
            return Err(PromptError::InvalidDemonstration {
                instance_id: d.instance_id.clone(),
            });
        }
    }
    Ok(())
}

fn digest(value: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(value).expect("digest input serializes");
    hex::encode(Sha256::digest(&bytes))
}

struct Assembly<'a> {
    template: &'a PromptTemplate,
    options: &'a PromptOptions,
    demos: Vec<Demonstration>,
    values: BTreeMap<Placeholder, String>,
    query_id: &'a str,
    digest_extra: serde_json::Value,
}

impl Assembly<'_> {
    fn finish(mut self) -> Result<PromptBundle, PromptError> {
        if self.options.demo_order == DemoOrder::MostSimilarLast {
            self.demos.reverse();
        }
        let mut turns = Vec::new();
        let examples = if self.options.multi_turn {
            for (i, d) in self.demos.iter().enumerate() {
                turns.push((d.prompt_block(i + 1), d.target.clone()));
            }
            String::new()
        } else {
            self.demos
                .iter()
                .enumerate()
                .map(|(i, d)| format!("{}\n{}", d.prompt_block(i + 1), d.target))
                .collect::<Vec<_>>()
                .join("\n\n")
        };
        let kind = self.template.task_kind;
        if kind == TaskKind::Synthesis {
            self.values.insert(Placeholder::SeedExamples, examples);
        } else {
            self.values.insert(Placeholder::Examples, examples);
        }
        let text = self.template.render(&self.values)?;
        let config_digest = digest(&serde_json::json!({
            "task_kind": kind,
            "template": self.template.source(),
            "values": self.values,
            "demonstrations": self.demos,
            "query_instance_id": self.query_id,
            "options": self.options,
            "extra": self.digest_extra,
        }));
        Ok(PromptBundle {
            task_kind: kind,
            text,
            demonstrations: self.demos,
            turns,
            query_instance_id: self.query_id.to_string(),
            config_digest,
        })
    }
}

fn base_values(kind: TaskKind) -> BTreeMap<Placeholder, String> {
    let ins = Instructions::for_kind(kind);
    BTreeMap::from([
        (Placeholder::TaskDescription, ins.task_description),
        (Placeholder::ExtractionRules, ins.extraction_rules),
        (Placeholder::OutputFormat, ins.output_format),
    ])
}

/// Event-detection prompt over every type in `schema`.
pub fn build_ed_prompt(
    template: &PromptTemplate,
    schema: &EventSchema,
    demos: &[Demonstration],
    query: &Instance,
    options: &PromptOptions,
) -> Result<PromptBundle, PromptError> {
    check_template(template, TaskKind::Ed)?;
    check_demos(demos, TaskKind::Ed)?;
    let mut values = base_values(TaskKind::Ed);
    values.insert(Placeholder::EventTypeDefinitions, render_type_list(schema));
    values.insert(Placeholder::QueryText, query.text.clone());
    Assembly {
        template,
        options,
        demos: demos.to_vec(),
        values,
        query_id: &query.id,
        digest_extra: serde_json::json!({ "query_text": query.text }),
    }
    .finish()
}

/// Argument-extraction prompt scoped to the detected event types.
///
/// `schema_subset` must contain exactly the detected types. Role sections
/// follow detection order.
pub fn build_eae_prompt(
    template: &PromptTemplate,
    schema_subset: &EventSchema,
    detected: &[DetectionItem],
    demos: &[Demonstration],
    query: &Instance,
    options: &PromptOptions,
) -> Result<PromptBundle, PromptError> {
    check_template(template, TaskKind::Eae)?;
    check_demos(demos, TaskKind::Eae)?;
    let mut order: Vec<&str> = Vec::new();
    for d in detected {
        let name = d.event_type.trim();
        if !schema_subset.contains(name) {
            return Err(PromptError::UnknownEventType(name.to_string()));
        }
        if !order.contains(&name) {
            order.push(name);
        }
    }
    let detected_set: HashSet<&str> = order.iter().copied().collect();
    if let Some(extra) = schema_subset.type_names().find(|t| !detected_set.contains(t)) {
        return Err(PromptError::ScopingViolation {
            event_type: extra.to_string(),
        });
    }
    let definitions = render_types_with_roles(
        order
            .iter()
            .map(|n| schema_subset.event_type(n).expect("checked above")),
    );
    let mut values = base_values(TaskKind::Eae);
    values.insert(Placeholder::EventTypeDefinitions, definitions);
    values.insert(Placeholder::QueryText, query.text.clone());
    values.insert(Placeholder::DetectedEvents, render_detected(detected));
    Assembly {
        template,
        options,
        demos: demos.to_vec(),
        values,
        query_id: &query.id,
        digest_extra: serde_json::json!({ "query_text": query.text }),
    }
    .finish()
}

/// Single-step prompt carrying the full schema with all roles.
pub fn build_joint_prompt(
    template: &PromptTemplate,
    schema: &EventSchema,
    demos: &[Demonstration],
    query: &Instance,
    options: &PromptOptions,
) -> Result<PromptBundle, PromptError> {
    check_template(template, TaskKind::Joint)?;
    check_demos(demos, TaskKind::Joint)?;
    let mut values = base_values(TaskKind::Joint);
    values.insert(
        Placeholder::EventTypeDefinitions,
        render_types_with_roles(schema.event_types.iter()),
    );
    values.insert(Placeholder::QueryText, query.text.clone());
    Assembly {
        template,
        options,
        demos: demos.to_vec(),
        values,
        query_id: &query.id,
        digest_extra: serde_json::json!({ "query_text": query.text }),
    }
    .finish()
}

/// An event type picked for a synthetic report, with the roles to mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChosenType {
    pub event_type: String,
    pub roles: Vec<String>,
}

/// Report-synthesis prompt. `item_id` identifies the generated item.
pub fn build_synthesis_prompt(
    template: &PromptTemplate,
    schema: &EventSchema,
    seeds: &[Instance],
    chosen: &[ChosenType],
    item_id: &str,
) -> Result<PromptBundle, PromptError> {
    check_template(template, TaskKind::Synthesis)?;
    if seeds.is_empty() {
        return Err(PromptError::NoSeeds);
    }
    if chosen.is_empty() {
        return Err(PromptError::NoChosenTypes);
    }
    let mut blocks = Vec::with_capacity(chosen.len());
    for c in chosen {
        let ty = schema
            .event_type(&c.event_type)
            .ok_or_else(|| PromptError::UnknownEventType(c.event_type.clone()))?;
        let mut roles = Vec::with_capacity(c.roles.len());
        for r in &c.roles {
            roles.push(ty.role(r).ok_or_else(|| PromptError::UnknownRole {
                event_type: c.event_type.clone(),
                role: r.clone(),
            })?);
        }
        blocks.push(render_type_with_roles(ty, roles.into_iter()));
    }
    let demos: Vec<Demonstration> = seeds
        .iter()
        .map(|s| Demonstration::from_gold(TaskKind::Synthesis, s, None))
        .collect();
    let mut values = base_values(TaskKind::Synthesis);
    values.insert(Placeholder::ChosenEventTypes, blocks.join("\n"));
    Assembly {
        template,
        options: &PromptOptions::default(),
        demos,
        values,
        query_id: item_id,
        digest_extra: serde_json::json!({ "chosen": chosen }),
    }
    .finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    fn seeds() -> Corpus {
        Corpus::maritime_seeds()
    }

    fn ed_demos(n: usize) -> Vec<Demonstration> {
        seeds().instances[1..=n]
            .iter()
            .map(|i| Demonstration::from_gold(TaskKind::Ed, i, None))
            .collect()
    }

    #[test]
    fn zero_shot_has_no_example_block() {
        let schema = EventSchema::maritime();
        let q = &seeds().instances[0];
        let b = build_ed_prompt(&default_template(TaskKind::Ed), &schema, &[], q, &PromptOptions::default())
            .unwrap();
        assert_eq!(b.block_counts(), (0, 1));
        assert!(!b.text.contains(EXAMPLE_MARKER));
        assert!(b.text.contains(&q.text));
    }

    #[test]
    fn ed_sections_in_order() {
        let schema = EventSchema::maritime();
        let q = &seeds().instances[0];
        let b = build_ed_prompt(&default_template(TaskKind::Ed), &schema, &ed_demos(5), q, &PromptOptions::default())
            .unwrap();
        assert_eq!(b.block_counts(), (5, 1));
        let ins = Instructions::for_kind(TaskKind::Ed);
        let pos = |s: &str| b.text.find(s).unwrap_or_else(|| panic!("missing {s}"));
        let task = pos(&ins.task_description);
        let types = pos("- hail: ");
        let rules = pos(&ins.extraction_rules);
        let format = pos(&ins.output_format);
        let example = pos("### Example 1");
        let query = pos(QUERY_MARKER);
        assert!(task < types && types < rules && rules < format && format < example && example < query);
        for ty in &schema.event_types {
            assert!(b.text.contains(&ty.definition));
        }
    }

    #[test]
    fn wrong_kinds_are_rejected() {
        let schema = EventSchema::maritime();
        let q = &seeds().instances[0];
        let eae_demo = Demonstration::from_gold(TaskKind::Eae, &seeds().instances[2], None);
        assert!(matches!(
            build_ed_prompt(&default_template(TaskKind::Ed), &schema, &[eae_demo], q, &PromptOptions::default()),
            Err(PromptError::WrongDemoKind { .. })
        ));
        assert!(matches!(
            build_ed_prompt(&default_template(TaskKind::Eae), &schema, &[], q, &PromptOptions::default()),
            Err(PromptError::WrongTemplateKind { .. })
        ));
        let mut broken = Demonstration::from_gold(TaskKind::Ed, &seeds().instances[2], None);
        broken.target = "nothing".into();
        assert!(matches!(
            build_ed_prompt(&default_template(TaskKind::Ed), &schema, &[broken], q, &PromptOptions::default()),
            Err(PromptError::InvalidDemonstration { .. })
        ));
    }

    #[test]
    fn ed_template_using_detected_events_is_unresolved() {
        let t = PromptTemplate::parse(
            TaskKind::Ed,
            "{{event_type_definitions}} {{output_format}} {{examples}} {{query_text}} {{detected_events}}",
        )
        .unwrap();
        let q = &seeds().instances[0];
        assert!(matches!(
            build_ed_prompt(&t, &EventSchema::maritime(), &[], q, &PromptOptions::default()),
            Err(PromptError::UnresolvedPlaceholder { name }) if name == "detected_events"
        ));
    }

    fn detected(pairs: &[(&str, &str)]) -> Vec<DetectionItem> {
        pairs
            .iter()
            .map(|(t, tr)| DetectionItem {
                event_type: t.to_string(),
                trigger: tr.to_string(),
            })
            .collect()
    }

    #[test]
    fn eae_scoping() {
        let schema = EventSchema::maritime();
        let q = &seeds().instances[2];
        let det = detected(&[("kidnap", "kidnapped")]);
        let subset = schema.subset(&["kidnap"]).unwrap();
        let b = build_eae_prompt(&default_template(TaskKind::Eae), &subset, &det, &[], q, &PromptOptions::default())
            .unwrap();
        for ty in &schema.event_types {
            for role in &ty.roles {
                assert_eq!(b.text.contains(&role.definition), ty.name == "kidnap", "{}", role.definition);
            }
        }
        assert!(b.text.contains("- kidnap: \"kidnapped\""));

        assert!(matches!(
            build_eae_prompt(
                &default_template(TaskKind::Eae),
                &schema,
                &detected(&[("arrive", "arrived")]),
                &[],
                q,
                &PromptOptions::default()
            ),
            Err(PromptError::ScopingViolation { .. })
        ));
    }

    #[test]
    fn eae_role_sections_follow_detection_order() {
        let schema = EventSchema::maritime();
        let q = &seeds().instances[2];
        let det = detected(&[("transmit", "transmitted"), ("kidnap", "kidnapped")]);
        let subset = schema.subset(&["kidnap", "transmit"]).unwrap();
        let b = build_eae_prompt(&default_template(TaskKind::Eae), &subset, &det, &[], q, &PromptOptions::default())
            .unwrap();
        let t = b.text.find("- transmit: A vessel sends").unwrap();
        let k = b.text.find("- kidnap: Crew or passengers").unwrap();
        assert!(t < k);
    }

    #[test]
    fn determinism_and_digest_sensitivity() {
        let schema = EventSchema::maritime();
        let corpus = seeds();
        let build = |q: &Instance, demos: &[Demonstration]| {
            build_ed_prompt(&default_template(TaskKind::Ed), &schema, demos, q, &PromptOptions::default()).unwrap()
        };
        let a = build(&corpus.instances[0], &ed_demos(2));
        let b = build(&corpus.instances[0], &ed_demos(2));
        assert_eq!(a.text, b.text);
        assert_eq!(a.config_digest, b.config_digest);
        let c = build(&corpus.instances[0], &ed_demos(3));
        let d = build(&corpus.instances[5], &ed_demos(2));
        assert_ne!(a.config_digest, c.config_digest);
        assert_ne!(a.config_digest, d.config_digest);
        assert_eq!(a.config_digest.len(), 64);
    }

    #[test]
    fn order_and_multi_turn_options() {
        let schema = EventSchema::maritime();
        let q = &seeds().instances[0];
        let mut demos = ed_demos(3);
        for (i, d) in demos.iter_mut().enumerate() {
            d.similarity = Some(1.0 - i as f64 * 0.1);
        }
        let last = PromptOptions {
            demo_order: DemoOrder::MostSimilarLast,
            multi_turn: false,
        };
        let b = build_ed_prompt(&default_template(TaskKind::Ed), &schema, &demos, q, &last).unwrap();
        assert_eq!(b.demonstrations[2].similarity, Some(1.0));
        let first_pos = b.text.find(&demos[0].input_text).unwrap();
        let last_pos = b.text.find(&demos[2].input_text).unwrap();
        assert!(last_pos < first_pos);

        let mt = PromptOptions {
            demo_order: DemoOrder::MostSimilarFirst,
            multi_turn: true,
        };
        let b = build_ed_prompt(&default_template(TaskKind::Ed), &schema, &demos, q, &mt).unwrap();
        assert_eq!(count_blocks(&b.text), (0, 1));
        assert_eq!(b.block_counts(), (3, 1));
        let msgs = b.messages();
        assert_eq!(msgs.len(), 7);
        assert_eq!(msgs[1].content, demos[0].target);
    }

    #[test]
    fn synthesis_prompt() {
        let schema = EventSchema::maritime();
        let corpus = seeds();
        let chosen = vec![
            ChosenType {
                event_type: "depart".into(),
                roles: vec!["date".into(), "ship name".into()],
            },
            ChosenType {
                event_type: "arrive".into(),
                roles: vec!["location".into()],
            },
        ];
        let t = default_template(TaskKind::Synthesis);
        let b = build_synthesis_prompt(&t, &schema, &corpus.instances[..3], &chosen, "item-1").unwrap();
        assert!(b.text.contains("- depart: ") && b.text.contains("- arrive: "));
        assert!(b.text.contains("  - ship name: The name of the vessel involved in the departure."));
        assert_eq!(b.block_counts().0, 3);
        let again = build_synthesis_prompt(&t, &schema, &corpus.instances[..3], &chosen, "item-1").unwrap();
        assert_eq!(b, again);

        assert!(matches!(
            build_synthesis_prompt(&t, &schema, &[], &chosen, "x"),
            Err(PromptError::NoSeeds)
        ));
        let bad = vec![ChosenType {
            event_type: "teleport".into(),
            roles: vec![],
        }];
        assert!(matches!(
            build_synthesis_prompt(&t, &schema, &corpus.instances[..1], &bad, "x"),
            Err(PromptError::UnknownEventType(_))
        ));
    }
}
