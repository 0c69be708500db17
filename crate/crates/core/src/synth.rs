//! Synthetic report generation with self-annotation and strict validation.
//!
//! Each item draws seed reports and one to three event types from its own
//! random stream (`rng_seed + item index`), asks the model for a new report
//! with annotations, and keeps it only if the annotations ground in the text
//! and conform to the schema. Rejected drafts are retried with a fresh draw
//! from the same stream.

use std::collections::HashSet;
use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{parse_synthesis_answer, render_synthesis_answer, ArgumentItem, SynthesisAnswer};
use crate::corpus::{
    validate_instance, ArgumentMention, Corpus, EventRecord, Granularity, Instance, Span, Split,
};
use crate::llm::{
    ChatBackend, CompletionRequest, MockBackend, SYNTHESIS_MAX_TOKENS, SYNTHESIS_TEMPERATURE,
};
use crate::pipeline::{ground_string, GroundingPolicy};
use crate::prompt::{build_synthesis_prompt, ChosenType, PromptBundle, PromptError, PromptTemplate};
use crate::retry::ordered_parallel_map;
use crate::schema::EventSchema;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("mock script: {0}")]
    Script(#[from] crate::llm::LlmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub seeds_per_prompt: usize,
    pub target_count: usize,
    pub temperature: f32,
    pub max_tokens: u32,
    pub rng_seed: u64,
    pub max_retries_per_item: u32,
    pub min_types: usize,
    pub max_types: usize,
    pub model_name: String,
    pub max_inflight: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            seeds_per_prompt: 3,
            target_count: 10,
            temperature: SYNTHESIS_TEMPERATURE,
            max_tokens: SYNTHESIS_MAX_TOKENS,
            rng_seed: 0,
            max_retries_per_item: 3,
            min_types: 1,
            max_types: 3,
            model_name: "mock".into(),
            max_inflight: 4,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self, pool: &Corpus, schema: &EventSchema) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Config(m));
        if self.seeds_per_prompt == 0 || self.seeds_per_prompt > pool.len() {
            return fail(format!(
                "seeds_per_prompt {} must be between 1 and the seed pool size {}",
                self.seeds_per_prompt,
                pool.len()
            ));
        }
        if self.target_count == 0 {
            return fail("target_count must be positive".into());
        }
        if self.max_retries_per_item == 0 || self.max_inflight == 0 || self.max_tokens == 0 {
            return fail("max_retries_per_item, max_inflight and max_tokens must be positive".into());
        }
        if self.min_types == 0
            || self.min_types > self.max_types
            || self.max_types > schema.event_types.len()
        {
            return fail(format!(
                "type count range {}..={} is invalid for {} event types",
                self.min_types,
                self.max_types,
                schema.event_types.len()
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return fail(format!("temperature {} outside [0, 2]", self.temperature));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "kebab-case")]
pub enum RejectReason {
    EmptyText,
    UnknownType(String),
    UnknownRole { event_type: String, role: String },
    Ungrounded(String),
    MissingChosenType(String),
    SpanViolation(String),
    Malformed(usize),
    Unparseable(String),
    Backend(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::EmptyText => write!(f, "empty text"),
            RejectReason::UnknownType(t) => write!(f, "unknown type {t}"),
            RejectReason::UnknownRole { event_type, role } => {
                write!(f, "unknown role {role} for {event_type}")
            }
            RejectReason::Ungrounded(s) => write!(f, "ungrounded {s:?}"),
            RejectReason::MissingChosenType(t) => write!(f, "missing chosen type {t}"),
            RejectReason::SpanViolation(m) => write!(f, "span violation: {m}"),
            RejectReason::Malformed(n) => write!(f, "{n} malformed annotation item(s)"),
            RejectReason::Unparseable(m) => write!(f, "unparseable response: {m}"),
            RejectReason::Backend(m) => write!(f, "backend error: {m}"),
        }
    }
}

fn ground(text: &str, needle: &str) -> Option<Span> {
    ground_string(text, needle, GroundingPolicy::FirstOccurrence).span
}

/// Checks a drafted report. Returns the grounded instance when there are no
/// reject reasons.
pub fn validate_synthetic(
    id: &str,
    draft: &SynthesisAnswer,
    schema: &EventSchema,
    chosen: &[ChosenType],
) -> (Option<Instance>, Vec<RejectReason>) {
    let mut reasons = Vec::new();
    if draft.text.trim().is_empty() {
        reasons.push(RejectReason::EmptyText);
    }
    if draft.malformed > 0 {
        reasons.push(RejectReason::Malformed(draft.malformed));
    }
    let text = draft.text.as_str();
    let mut events = Vec::new();
    for item in &draft.events {
        let Some(ty) = schema.event_type(&item.event_type) else {
            reasons.push(RejectReason::UnknownType(item.event_type.clone()));
            continue;
        };
        let trigger = ground(text, &item.trigger);
        if trigger.is_none() {
            reasons.push(RejectReason::Ungrounded(item.trigger.clone()));
        }
        let mut seen = HashSet::new();
        let mut arguments = Vec::new();
        for (role, filler) in &item.arguments {
            if !ty.has_role(role) {
                reasons.push(RejectReason::UnknownRole {
                    event_type: ty.name.clone(),
                    role: role.clone(),
                });
                continue;
            }
            match ground(text, filler) {
                None => reasons.push(RejectReason::Ungrounded(filler.clone())),
                Some(span) => {
                    if seen.insert((role.clone(), span.start, span.end)) {
                        arguments.push(ArgumentMention {
                            role: role.clone(),
                            span,
                        });
                    }
                }
            }
        }
        if let Some(trigger) = trigger {
            events.push(EventRecord {
                event_type: ty.name.clone(),
                trigger,
                arguments,
            });
        }
    }
    for c in chosen {
        if !draft.events.iter().any(|e| e.event_type == c.event_type) {
            reasons.push(RejectReason::MissingChosenType(c.event_type.clone()));
        }
    }
    if !reasons.is_empty() {
        return (None, reasons);
    }
    let instance = Instance {
        id: id.to_string(),
        text: draft.text.clone(),
        granularity: Granularity::MultiSentence,
        events,
    };
    if let Err(e) = validate_instance(&instance, schema) {
        return (None, vec![RejectReason::SpanViolation(e.to_string())]);
    }
    (Some(instance), reasons)
}

/// The draft form of an accepted instance, for re-validation.
pub fn instance_as_draft(instance: &Instance) -> SynthesisAnswer {
    SynthesisAnswer {
        text: instance.text.clone(),
        events: instance.events.iter().map(ArgumentItem::from_gold).collect(),
        malformed: 0,
    }
}

/// Seeds and event types drawn for one attempt at one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemPlan {
    pub item: usize,
    pub attempt: u32,
    /// Indices into the seed pool, in draw order.
    pub seeds: Vec<usize>,
    pub chosen: Vec<ChosenType>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub id: String,
    pub seed_ids: Vec<String>,
    pub chosen_types: Vec<ChosenType>,
    pub prompt_sha256: String,
    pub config_digest: String,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionEntry {
    pub item: usize,
    pub attempt: u32,
    pub request_id: String,
    pub reasons: Vec<RejectReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutput {
    pub corpus: Corpus,
    pub provenance: Vec<Provenance>,
    pub rejections: Vec<RejectionEntry>,
    /// Items that exhausted their retries.
    pub skipped: Vec<usize>,
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for i in items {
        out.push_str(&serde_json::to_string(i).expect("record serializes"));
        out.push('\n');
    }
    out
}

impl SynthesisOutput {
    pub fn provenance_jsonl(&self) -> String {
        jsonl(&self.provenance)
    }

    pub fn rejections_jsonl(&self) -> String {
        jsonl(&self.rejections)
    }

    pub fn undershoot(&self) -> usize {
        self.skipped.len()
    }
}

pub fn item_id(item: usize) -> String {
    format!("synth-{:06}", item + 1)
}

pub struct Synthesizer<'a> {
    config: &'a SynthesisConfig,
    schema: &'a EventSchema,
    pool: &'a Corpus,
    template: &'a PromptTemplate,
}

impl<'a> Synthesizer<'a> {
    pub fn new(
        config: &'a SynthesisConfig,
        schema: &'a EventSchema,
        pool: &'a Corpus,
        template: &'a PromptTemplate,
    ) -> Result<Self, SynthError> {
        config.validate(pool, schema)?;
        Ok(Synthesizer {
            config,
            schema,
            pool,
            template,
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng, item: usize, attempt: u32) -> ItemPlan {
        let seeds = sample(rng, self.pool.len(), self.config.seeds_per_prompt).into_vec();
        let n = rng.random_range(self.config.min_types..=self.config.max_types);
        let chosen = sample(rng, self.schema.event_types.len(), n)
            .into_iter()
            .map(|i| {
                let ty = &self.schema.event_types[i];
                ChosenType {
                    event_type: ty.name.clone(),
                    roles: ty.roles.iter().map(|r| r.name.clone()).collect(),
                }
            })
            .collect();
        ItemPlan {
            item,
            attempt,
            seeds,
            chosen,
        }
    }

    /// The draw for `attempt` (1-based) of `item`. Attempts consume the
    /// item's stream in order, so the plan never depends on other items.
    pub fn plan(&self, item: usize, attempt: u32) -> ItemPlan {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.rng_seed.wrapping_add(item as u64));
        let mut plan = self.draw(&mut rng, item, 1);
        for a in 2..=attempt.max(1) {
            plan = self.draw(&mut rng, item, a);
        }
        plan
    }

    pub fn bundle(&self, plan: &ItemPlan) -> Result<PromptBundle, PromptError> {
        let seeds: Vec<Instance> = plan
            .seeds
            .iter()
            .map(|&i| self.pool.instances[i].clone())
            .collect();
        build_synthesis_prompt(self.template, self.schema, &seeds, &plan.chosen, &item_id(plan.item))
    }

    pub fn request(&self, plan: &ItemPlan, bundle: &PromptBundle) -> CompletionRequest {
        CompletionRequest {
            model_name: self.config.model_name.clone(),
            prompt_text: bundle.text.clone(),
            history: Vec::new(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            request_id: format!("{}.a{}", item_id(plan.item), plan.attempt),
        }
    }

    fn run_item(
        &self,
        backend: &dyn ChatBackend,
        item: usize,
    ) -> Result<(Option<(Instance, Provenance)>, Vec<RejectionEntry>), SynthError> {
        let mut rejections = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.rng_seed.wrapping_add(item as u64));
        for attempt in 1..=self.config.max_retries_per_item {
            let plan = self.draw(&mut rng, item, attempt);
            let bundle = self.bundle(&plan)?;
            let request = self.request(&plan, &bundle);
            let reasons = match backend.complete(&request) {
                Err(e) => vec![RejectReason::Backend(e.to_string())],
                Ok(resp) => match parse_synthesis_answer(&resp.text) {
                    Err(e) => vec![RejectReason::Unparseable(e.to_string())],
                    Ok(draft) => {
                        let (inst, reasons) =
                            validate_synthetic(&item_id(item), &draft, self.schema, &plan.chosen);
                        if let Some(inst) = inst {
                            let prov = Provenance {
                                id: inst.id.clone(),
                                seed_ids: plan
                                    .seeds
                                    .iter()
                                    .map(|&i| self.pool.instances[i].id.clone())
                                    .collect(),
                                chosen_types: plan.chosen.clone(),
                                prompt_sha256: request.prompt_digest(),
                                config_digest: bundle.config_digest.clone(),
                                attempt,
                            };
                            return Ok((Some((inst, prov)), rejections));
                        }
                        reasons
                    }
                },
            };
            log::info!(
                "{} rejected: {}",
                request.request_id,
                reasons.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
            );
            rejections.push(RejectionEntry {
                item,
                attempt,
                request_id: request.request_id,
                reasons,
            });
        }
        log::warn!(
            "{} skipped after {} attempt(s)",
            item_id(item),
            self.config.max_retries_per_item
        );
        Ok((None, rejections))
    }

    /// Generates up to `target_count` instances. Items run concurrently but
    /// the output is ordered by item index.
    pub fn synthesize(&self, backend: &dyn ChatBackend) -> Result<SynthesisOutput, SynthError> {
        let items: Vec<usize> = (0..self.config.target_count).collect();
        let results = ordered_parallel_map(&items, self.config.max_inflight, |_, &i| {
            self.run_item(backend, i)
        });
        let mut instances = Vec::new();
        let mut provenance = Vec::new();
        let mut rejections = Vec::new();
        let mut skipped = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            let (accepted, rej) = r?;
            rejections.extend(rej);
            match accepted {
                Some((inst, prov)) => {
                    instances.push(inst);
                    provenance.push(prov);
                }
                None => skipped.push(i),
            }
        }
        let corpus = Corpus::from_instances(self.schema, Split::Train, instances)
            .map_err(|e| SynthError::Config(format!("accepted instance failed validation: {e}")))?;
        Ok(SynthesisOutput {
            corpus,
            provenance,
            rejections,
            skipped,
        })
    }

    /// Scripts a mock backend for the first `attempts` attempts of every
    /// item. `respond` may decline an attempt by returning `None`.
    pub fn plan_script<F>(&self, attempts: u32, respond: F) -> Result<MockBackend, SynthError>
    where
        F: Fn(&ItemPlan) -> Option<String>,
    {
        let mut mock = MockBackend::new();
        for item in 0..self.config.target_count {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.rng_seed.wrapping_add(item as u64));
            for attempt in 1..=attempts.min(self.config.max_retries_per_item) {
                let plan = self.draw(&mut rng, item, attempt);
                if let Some(answer) = respond(&plan) {
                    let bundle = self.bundle(&plan)?;
                    mock.insert(self.request(&plan, &bundle).prompt_digest(), answer)?;
                }
            }
        }
        Ok(mock)
    }
}

/// A valid synthesis answer for `plan` assembled from pool reports: for each
/// chosen type, the text and annotation of the first pool report containing
/// that type. Types absent from the pool are left out.
pub fn composite_response(plan: &ItemPlan, pool: &Corpus) -> String {
    let mut texts: Vec<&str> = Vec::new();
    let mut events = Vec::new();
    for c in &plan.chosen {
        let Some((inst, ev)) = pool
            .instances
            .iter()
            .find_map(|i| i.events.iter().find(|e| e.event_type == c.event_type).map(|e| (i, e)))
        else {
            continue;
        };
        if !texts.contains(&inst.text.as_str()) {
            texts.push(&inst.text);
        }
        let mut item = ArgumentItem::from_gold(ev);
        item.arguments.retain(|(role, _)| c.roles.contains(role));
        events.push(item);
    }
    render_synthesis_answer(&texts.join(" "), &events)
}
