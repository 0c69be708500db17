//! Decomposed event extraction: event detection, then argument extraction
//! scoped to the detected types. A single-step mode that asks for everything
//! in one prompt is kept for comparison.

mod ground;
mod plan;
mod run_dir;

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{
    parse_argument_answer, parse_detection_answer, AnswerError, ArgumentItem, DetectionItem,
    Parsed,
};
use crate::corpus::{Corpus, Instance, Span};
use crate::eval::normalize;
use crate::llm::{ChatBackend, CompletionRequest, LlmError, EXTRACTION_MAX_TOKENS};
use crate::prompt::{
    build_eae_prompt, build_ed_prompt, build_joint_prompt, default_template, format_reminder,
    DemoMode, DemoSelector, PromptBundle, PromptError, PromptOptions, PromptTemplate, Selection,
    TaskKind,
};
use crate::retry::ordered_parallel_map;
use crate::schema::{EventSchema, EventTypeDef};

pub use ground::{ground_string, Grounding, GroundingPolicy};
pub use plan::{gold_response, plan_gold_echo, plan_script};
pub use run_dir::{
    predictions_to_jsonl, raw_file_name, read_predictions, run_metadata, RunDirectory,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid extraction config: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("mock script: {0}")]
    Script(#[from] LlmError),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionMode {
    /// Detection prompt, then an argument prompt per instance.
    #[default]
    Decomposed,
    /// One prompt carrying the whole schema.
    SingleStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub mode: ExtractionMode,
    pub demo_mode: DemoMode,
    pub k: usize,
    /// Demonstration ids for fixed mode, in order of use.
    pub canonical_ids: Vec<String>,
    pub grounding_policy: GroundingPolicy,
    pub prompt: PromptOptions,
    pub model_name: String,
    pub temperature: f32,
    pub max_tokens: u32,
    pub max_inflight: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            mode: ExtractionMode::Decomposed,
            demo_mode: DemoMode::None,
            k: 0,
            canonical_ids: Vec::new(),
            grounding_policy: GroundingPolicy::FirstOccurrence,
            prompt: PromptOptions::default(),
            model_name: "mock".into(),
            temperature: crate::llm::EXTRACTION_TEMPERATURE,
            max_tokens: EXTRACTION_MAX_TOKENS,
            max_inflight: 4,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if (self.demo_mode == DemoMode::None) != (self.k == 0) {
            return Err(PipelineError::Config(format!(
                "demo_mode {} is incompatible with k = {}",
                self.demo_mode.as_str(),
                self.k
            )));
        }
        if self.demo_mode == DemoMode::Fixed && self.canonical_ids.is_empty() {
            return Err(PipelineError::Config(
                "fixed demonstrations need canonical_ids".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(PipelineError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 || self.max_inflight == 0 {
            return Err(PipelineError::Config(
                "max_tokens and max_inflight must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub ed: PromptTemplate,
    pub eae: PromptTemplate,
    pub joint: PromptTemplate,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            ed: default_template(TaskKind::Ed),
            eae: default_template(TaskKind::Eae),
            joint: default_template(TaskKind::Joint),
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// A predicted string with its grounded position, when one was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedSpan {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    pub text: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub ambiguous: bool,
}

impl PredictedSpan {
    fn grounded(text: &str, g: &Grounding) -> Self {
        PredictedSpan {
            start: g.span.as_ref().map(|s| s.start),
            end: g.span.as_ref().map(|s| s.end),
            text: text.to_string(),
            ambiguous: g.ambiguous,
        }
    }

    fn from_span(span: &Span) -> Self {
        PredictedSpan {
            start: Some(span.start),
            end: Some(span.end),
            text: span.text.clone(),
            ambiguous: false,
        }
    }

    pub fn offsets(&self) -> Option<(usize, usize)> {
        self.start.zip(self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedArgument {
    pub role: String,
    #[serde(flatten)]
    pub span: PredictedSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedEvent {
    pub event_type: String,
    pub trigger: PredictedSpan,
    #[serde(default)]
    pub arguments: Vec<PredictedArgument>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectedEvent {
    pub event_type: String,
    pub trigger_text: String,
    pub grounded_span: Option<Span>,
    pub ambiguous: bool,
}

/// Counts of model output that was dropped or could not be tied to the input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HallucinationTally {
    /// Event types absent from the schema.
    pub rejected_types: usize,
    /// Roles not defined for their event type.
    pub rejected_roles: usize,
    /// Argument answers for an event that was never detected.
    pub out_of_scope_events: usize,
    /// Triggers or fillers that do not occur in the input text.
    pub ungrounded_strings: usize,
    pub ambiguous_matches: usize,
    /// Answer items without the expected fields.
    pub malformed_items: usize,
    pub parse_failures: usize,
    pub backend_errors: usize,
}

impl HallucinationTally {
    pub fn merge(&mut self, o: &HallucinationTally) {
        self.rejected_types += o.rejected_types;
        self.rejected_roles += o.rejected_roles;
        self.out_of_scope_events += o.out_of_scope_events;
        self.ungrounded_strings += o.ungrounded_strings;
        self.ambiguous_matches += o.ambiguous_matches;
        self.malformed_items += o.malformed_items;
        self.parse_failures += o.parse_failures;
        self.backend_errors += o.backend_errors;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordStatus {
    Ok,
    /// The answer could not be parsed even after a reminder.
    ParseFailed,
    Error,
}

/// One model exchange, kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub request_id: String,
    pub step: String,
    pub prompt_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A prompt as sent, for the run's prompt log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub request_id: String,
    pub instance_id: String,
    pub step: String,
    pub prompt_sha256: String,
    pub config_digest: String,
    pub demonstrations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub status: RecordStatus,
    pub events: Vec<PredictedEvent>,
    #[serde(default)]
    pub raw: Vec<RawResponse>,
    #[serde(default)]
    pub rejections: HallucinationTally,
    #[serde(default)]
    pub prompt_digests: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub demo_shortfall: usize,
    #[serde(skip)]
    pub prompts: Vec<PromptRecord>,
}

impl PredictionRecord {
    /// The gold events of `instance` as a prediction.
    pub fn from_gold(instance: &Instance) -> Self {
        let events = instance
            .events
            .iter()
            .map(|e| PredictedEvent {
                event_type: e.event_type.clone(),
                trigger: PredictedSpan::from_span(&e.trigger),
                arguments: e
                    .arguments
                    .iter()
                    .map(|a| PredictedArgument {
                        role: a.role.clone(),
                        span: PredictedSpan::from_span(&a.span),
                    })
                    .collect(),
            })
            .collect();
        PredictionRecord {
            id: instance.id.clone(),
            status: RecordStatus::Ok,
            events,
            raw: Vec::new(),
            rejections: HallucinationTally::default(),
            prompt_digests: Vec::new(),
            error: None,
            demo_shortfall: 0,
            prompts: Vec::new(),
        }
    }

    fn failed(id: &str, status: RecordStatus, trace: Trace, error: String) -> Self {
        PredictionRecord {
            id: id.to_string(),
            status,
            events: Vec::new(),
            raw: trace.raw,
            rejections: trace.tally,
            prompt_digests: trace.digests,
            error: Some(error),
            demo_shortfall: 0,
            prompts: trace.prompts,
        }
    }
}

/// Everything recorded while processing one instance.
#[derive(Debug, Default)]
pub struct Trace {
    pub raw: Vec<RawResponse>,
    pub digests: Vec<String>,
    pub prompts: Vec<PromptRecord>,
    pub tally: HallucinationTally,
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("unparseable answer: {0}")]
    ParseFailed(AnswerError),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("failed to persist raw response {path}: {message}")]
    Io { path: String, message: String },
}

pub struct Extractor<'a> {
    config: &'a ExtractionConfig,
    schema: &'a EventSchema,
    templates: &'a Templates,
    selector: &'a DemoSelector<'a>,
    backend: &'a dyn ChatBackend,
    raw_dir: Option<PathBuf>,
}

impl<'a> Extractor<'a> {
    pub fn new(
        config: &'a ExtractionConfig,
        schema: &'a EventSchema,
        templates: &'a Templates,
        selector: &'a DemoSelector<'a>,
        backend: &'a dyn ChatBackend,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        if selector.mode() != config.demo_mode || selector.k() != config.k {
            return Err(PipelineError::Config(format!(
                "demonstration selector ({} k={}) does not match the config ({} k={})",
                selector.mode().as_str(),
                selector.k(),
                config.demo_mode.as_str(),
                config.k
            )));
        }
        Ok(Extractor {
            config,
            schema,
            templates,
            selector,
            backend,
            raw_dir: None,
        })
    }

    /// Writes every response to `dir` as soon as it arrives.
    pub fn with_raw_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.raw_dir = Some(dir.into());
        self
    }

    pub fn config(&self) -> &ExtractionConfig {
        self.config
    }

    pub fn selector(&self) -> &DemoSelector<'a> {
        self.selector
    }

    pub fn ed_bundle(&self, query: &Instance, sel: &Selection) -> Result<PromptBundle, PromptError> {
        build_ed_prompt(
            &self.templates.ed,
            self.schema,
            &sel.demonstrations(TaskKind::Ed),
            query,
            &self.config.prompt,
        )
    }

    pub fn eae_bundle(
        &self,
        query: &Instance,
        sel: &Selection,
        detected: &[DetectedEvent],
    ) -> Result<PromptBundle, PromptError> {
        let mut types: Vec<&str> = Vec::new();
        for d in detected {
            if !types.contains(&d.event_type.as_str()) {
                types.push(&d.event_type);
            }
        }
        let subset = self
            .schema
            .subset(&types)
            .map_err(|_| PromptError::UnknownEventType(types.join(", ")))?;
        let items: Vec<DetectionItem> = detected
            .iter()
            .map(|d| DetectionItem {
                trigger: d.trigger_text.clone(),
                event_type: d.event_type.clone(),
            })
            .collect();
        build_eae_prompt(
            &self.templates.eae,
            &subset,
            &items,
            &sel.demonstrations(TaskKind::Eae),
            query,
            &self.config.prompt,
        )
    }

    pub fn joint_bundle(&self, query: &Instance, sel: &Selection) -> Result<PromptBundle, PromptError> {
        build_joint_prompt(
            &self.templates.joint,
            self.schema,
            &sel.demonstrations(TaskKind::Joint),
            query,
            &self.config.prompt,
        )
    }

    pub fn request(&self, bundle: &PromptBundle, request_id: impl Into<String>) -> CompletionRequest {
        let mut history = Vec::with_capacity(bundle.turns.len() * 2);
        for (user, assistant) in &bundle.turns {
            history.push(crate::llm::ChatMessage::user(user.clone()));
            history.push(crate::llm::ChatMessage::assistant(assistant.clone()));
        }
        CompletionRequest {
            model_name: self.config.model_name.clone(),
            prompt_text: bundle.text.clone(),
            history,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            request_id: request_id.into(),
        }
    }

    fn send(
        &self,
        query: &Instance,
        step: &str,
        bundle: &PromptBundle,
        request: &CompletionRequest,
        trace: &mut Trace,
    ) -> Result<String, StepError> {
        let digest = request.prompt_digest();
        trace.prompts.push(PromptRecord {
            request_id: request.request_id.clone(),
            instance_id: query.id.clone(),
            step: step.to_string(),
            prompt_sha256: digest.clone(),
            config_digest: bundle.config_digest.clone(),
            demonstrations: bundle
                .demonstrations
                .iter()
                .map(|d| d.instance_id.clone())
                .collect(),
        });
        let result = self.backend.complete(request);
        let raw = match &result {
            Ok(r) => RawResponse {
                request_id: request.request_id.clone(),
                step: step.to_string(),
                prompt_sha256: digest,
                text: Some(r.text.clone()),
                finish_reason: r.finish_reason.clone(),
                error: None,
            },
            Err(e) => RawResponse {
                request_id: request.request_id.clone(),
                step: step.to_string(),
                prompt_sha256: digest,
                text: None,
                finish_reason: None,
                error: Some(e.to_string()),
            },
        };
        log::debug!(
            "response {} prompt={} {:?}",
            raw.request_id,
            raw.prompt_sha256,
            raw.text.as_deref().or(raw.error.as_deref())
        );
        if let Some(dir) = &self.raw_dir {
            let path = dir.join(raw_file_name(&raw.request_id));
            let body = serde_json::to_string_pretty(&raw).expect("raw response serializes");
            std::fs::write(&path, body + "\n").map_err(|e| StepError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        }
        trace.raw.push(raw);
        match result {
            Ok(r) => Ok(r.text),
            Err(e) => {
                trace.tally.backend_errors += 1;
                Err(StepError::Backend(e))
            }
        }
    }

    /// Sends `bundle`, and once more with a format reminder if the answer
    /// does not parse.
    fn call<T>(
        &self,
        query: &Instance,
        kind: TaskKind,
        bundle: &PromptBundle,
        trace: &mut Trace,
        parse: impl Fn(&str) -> Result<T, AnswerError>,
    ) -> Result<T, StepError> {
        let step = kind.as_str();
        trace.digests.push(bundle.config_digest.clone());
        let mut request = self.request(bundle, format!("{}.{step}", query.id));
        let text = self.send(query, step, bundle, &request, trace)?;
        let err = match parse(&text) {
            Ok(v) => return Ok(v),
            Err(e) => e,
        };
        log::warn!("{}: {step} answer did not parse ({err}); reprompting", query.id);
        request.request_id.push_str(".retry");
        request.prompt_text.push_str(&format_reminder(kind));
        let text = self.send(query, step, bundle, &request, trace)?;
        parse(&text).map_err(|e| {
            trace.tally.parse_failures += 1;
            StepError::ParseFailed(e)
        })
    }

    fn canonical_type(&self, name: &str) -> Option<&'a EventTypeDef> {
        let name = name.trim();
        self.schema.event_type(name).or_else(|| {
            self.schema
                .event_types
                .iter()
                .find(|t| t.name.eq_ignore_ascii_case(name))
        })
    }

    fn ground(&self, text: &str, needle: &str, tally: &mut HallucinationTally) -> Grounding {
        let g = ground_string(text, needle, self.config.grounding_policy);
        if g.ungrounded {
            tally.ungrounded_strings += 1;
        }
        if g.ambiguous {
            tally.ambiguous_matches += 1;
        }
        g
    }

    /// Applies the closed-world filter, deduplication and grounding to a
    /// parsed detection answer.
    pub fn interpret_detection(
        &self,
        query: &Instance,
        parsed: Parsed<DetectionItem>,
        tally: &mut HallucinationTally,
    ) -> Vec<DetectedEvent> {
        tally.malformed_items += parsed.malformed;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for item in parsed.items {
            let Some(ty) = self.canonical_type(&item.event_type) else {
                log::info!("{}: rejected event type {:?}", query.id, item.event_type);
                tally.rejected_types += 1;
                continue;
            };
            if !seen.insert((ty.name.clone(), normalize(&item.trigger))) {
                continue;
            }
            let g = self.ground(&query.text, &item.trigger, tally);
            out.push(DetectedEvent {
                event_type: ty.name.clone(),
                trigger_text: item.trigger,
                grounded_span: g.span,
                ambiguous: g.ambiguous,
            });
        }
        out
    }

    fn arguments(
        &self,
        query: &Instance,
        ty: &EventTypeDef,
        args: &[(String, String)],
        tally: &mut HallucinationTally,
    ) -> Vec<PredictedArgument> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (role, filler) in args {
            let role = role.trim();
            let Some(def) = ty
                .role(role)
                .or_else(|| ty.roles.iter().find(|r| r.name.eq_ignore_ascii_case(role)))
            else {
                log::info!("{}: rejected role {role:?} for {}", query.id, ty.name);
                tally.rejected_roles += 1;
                continue;
            };
            if !seen.insert((def.name.as_str(), normalize(filler))) {
                continue;
            }
            let g = self.ground(&query.text, filler, tally);
            out.push(PredictedArgument {
                role: def.name.clone(),
                span: PredictedSpan::grounded(filler, &g),
            });
        }
        out
    }

    /// Attaches parsed argument answers to the detected events. Every
    /// detection yields one event, with or without arguments.
    pub fn interpret_arguments(
        &self,
        query: &Instance,
        detected: &[DetectedEvent],
        parsed: Parsed<ArgumentItem>,
        tally: &mut HallucinationTally,
    ) -> Vec<PredictedEvent> {
        tally.malformed_items += parsed.malformed;
        let mut events: Vec<PredictedEvent> = detected
            .iter()
            .map(|d| PredictedEvent {
                event_type: d.event_type.clone(),
                trigger: PredictedSpan {
                    start: d.grounded_span.as_ref().map(|s| s.start),
                    end: d.grounded_span.as_ref().map(|s| s.end),
                    text: d.trigger_text.clone(),
                    ambiguous: d.ambiguous,
                },
                arguments: Vec::new(),
            })
            .collect();
        let mut matched = vec![false; detected.len()];
        for item in parsed.items {
            let Some(ty) = self.canonical_type(&item.event_type) else {
                tally.rejected_types += 1;
                continue;
            };
            let trigger = normalize(&item.trigger);
            let slot = (0..detected.len())
                .find(|&i| {
                    !matched[i]
                        && detected[i].event_type == ty.name
                        && normalize(&detected[i].trigger_text) == trigger
                })
                .or_else(|| {
                    (0..detected.len()).find(|&i| !matched[i] && detected[i].event_type == ty.name)
                });
            let Some(i) = slot else {
                tally.out_of_scope_events += 1;
                continue;
            };
            matched[i] = true;
            events[i].arguments = self.arguments(query, ty, &item.arguments, tally);
        }
        events
    }

    fn interpret_joint(
        &self,
        query: &Instance,
        parsed: Parsed<ArgumentItem>,
        tally: &mut HallucinationTally,
    ) -> Vec<PredictedEvent> {
        tally.malformed_items += parsed.malformed;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for item in parsed.items {
            let Some(ty) = self.canonical_type(&item.event_type) else {
                tally.rejected_types += 1;
                continue;
            };
            if !seen.insert((ty.name.clone(), normalize(&item.trigger))) {
                continue;
            }
            let g = self.ground(&query.text, &item.trigger, tally);
            out.push(PredictedEvent {
                event_type: ty.name.clone(),
                trigger: PredictedSpan::grounded(&item.trigger, &g),
                arguments: self.arguments(query, ty, &item.arguments, tally),
            });
        }
        out
    }

    pub fn detect_events(
        &self,
        query: &Instance,
        sel: &Selection,
        trace: &mut Trace,
    ) -> Result<Vec<DetectedEvent>, StepError> {
        let bundle = self.ed_bundle(query, sel)?;
        let parsed = self.call(query, TaskKind::Ed, &bundle, trace, parse_detection_answer)?;
        Ok(self.interpret_detection(query, parsed, &mut trace.tally))
    }

    /// Argument extraction for `detected`. No call is made when nothing was
    /// detected.
    pub fn extract_arguments(
        &self,
        query: &Instance,
        sel: &Selection,
        detected: &[DetectedEvent],
        trace: &mut Trace,
    ) -> Result<Vec<PredictedEvent>, StepError> {
        if detected.is_empty() {
            return Ok(Vec::new());
        }
        let bundle = self.eae_bundle(query, sel, detected)?;
        let parsed = self.call(query, TaskKind::Eae, &bundle, trace, parse_argument_answer)?;
        Ok(self.interpret_arguments(query, detected, parsed, &mut trace.tally))
    }

    pub fn extract_joint(
        &self,
        query: &Instance,
        sel: &Selection,
        trace: &mut Trace,
    ) -> Result<Vec<PredictedEvent>, StepError> {
        let bundle = self.joint_bundle(query, sel)?;
        let parsed = self.call(query, TaskKind::Joint, &bundle, trace, parse_argument_answer)?;
        Ok(self.interpret_joint(query, parsed, &mut trace.tally))
    }

    /// Runs the configured mode on one instance. Failures are recorded in
    /// the returned record, never raised.
    pub fn process(&self, query: &Instance, sel: &Selection) -> PredictionRecord {
        let mut trace = Trace::default();
        let result = match self.config.mode {
            ExtractionMode::Decomposed => self
                .detect_events(query, sel, &mut trace)
                .and_then(|d| self.extract_arguments(query, sel, &d, &mut trace)),
            ExtractionMode::SingleStep => self.extract_joint(query, sel, &mut trace),
        };
        match result {
            Ok(events) => PredictionRecord {
                id: query.id.clone(),
                status: RecordStatus::Ok,
                events,
                raw: trace.raw,
                rejections: trace.tally,
                prompt_digests: trace.digests,
                error: None,
                demo_shortfall: sel.shortfall,
                prompts: trace.prompts,
            },
            Err(e) => {
                let status = match e {
                    StepError::ParseFailed(_) => RecordStatus::ParseFailed,
                    _ => RecordStatus::Error,
                };
                log::warn!("{}: {e}", query.id);
                let mut rec = PredictionRecord::failed(&query.id, status, trace, e.to_string());
                rec.demo_shortfall = sel.shortfall;
                rec
            }
        }
    }

    /// Processes every instance of `corpus`, in parallel up to the
    /// configured in-flight bound. Output follows corpus order.
    pub fn run_extraction(&self, corpus: &Corpus) -> Vec<PredictionRecord> {
        let selections: Vec<Result<Selection<'a>, String>> =
            match self.selector.select_all(&corpus.instances) {
                Ok(all) => all.into_iter().map(Ok).collect(),
                Err(e) => {
                    log::warn!("batch demonstration selection failed ({e}); selecting per instance");
                    corpus
                        .instances
                        .iter()
                        .map(|q| self.selector.select(q).map_err(|e| e.to_string()))
                        .collect()
                }
            };
        let work: Vec<(&Instance, Result<Selection<'a>, String>)> =
            corpus.instances.iter().zip(selections).collect();
        ordered_parallel_map(&work, self.config.max_inflight, |_, (q, sel)| match sel {
            Ok(sel) => self.process(q, sel),
            Err(e) => PredictionRecord::failed(
                &q.id,
                RecordStatus::Error,
                Trace::default(),
                format!("demonstration selection failed: {e}"),
            ),
        })
    }
}

/// Aggregate counts over a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub instances: usize,
    pub ok: usize,
    pub parse_failed: usize,
    pub errors: usize,
    pub predicted_events: usize,
    pub predicted_arguments: usize,
    pub backend_calls: usize,
    pub demo_shortfall: usize,
    pub tally: HallucinationTally,
}

pub fn summarize(records: &[PredictionRecord]) -> RunSummary {
    let mut s = RunSummary {
        instances: records.len(),
        ..RunSummary::default()
    };
    for r in records {
        match r.status {
            RecordStatus::Ok => s.ok += 1,
            RecordStatus::ParseFailed => s.parse_failed += 1,
            RecordStatus::Error => s.errors += 1,
        }
        s.predicted_events += r.events.len();
        s.predicted_arguments += r.events.iter().map(|e| e.arguments.len()).sum::<usize>();
        s.backend_calls += r.raw.len();
        s.demo_shortfall += r.demo_shortfall;
        s.tally.merge(&r.rejections);
    }
    s
}
