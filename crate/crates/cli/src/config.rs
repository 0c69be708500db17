//! Run configuration files.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Omitted schema and corpus paths fall back to the bundled maritime
//! schema and seed reports.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use evex::corpus::{Corpus, Split};
use evex::embed::EmbeddingProviderConfig;
use evex::eval::ScoreOptions;
use evex::index::Metric;
use evex::llm::{ChatBackend, LlmConfig, MockBackend, RemoteChatBackend};
use evex::pipeline::{ExtractionConfig, Templates};
use evex::prompt::{default_template, PromptTemplate, TaskKind};
use evex::schema::EventSchema;
use evex::synth::SynthesisConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplatePaths {
    pub ed: Option<PathBuf>,
    pub eae: Option<PathBuf>,
    pub joint: Option<PathBuf>,
    pub synthesis: Option<PathBuf>,
}

/// Exactly one of the two must be set when a command talks to a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub mock_script: Option<PathBuf>,
    pub remote: Option<LlmConfig>,
}

fn default_embedding() -> EmbeddingProviderConfig {
    EmbeddingProviderConfig::local_hash(1536)
}

fn default_metric() -> Metric {
    Metric::Cosine
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub schema: Option<PathBuf>,
    /// Demonstration pool and synthesis seeds.
    #[serde(default)]
    pub train: Option<PathBuf>,
    /// Corpus that extraction runs over and scoring compares against.
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub templates: TemplatePaths,
    #[serde(default)]
    pub index: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub scoring: ScoreOptions,
    #[serde(default = "default_embedding")]
    pub embedding: EmbeddingProviderConfig,
    #[serde(default = "default_metric")]
    pub index_metric: Metric,
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn must_exist(what: &str, p: &Option<PathBuf>) -> Result<()> {
    match p {
        Some(path) if !path.is_file() => bail!("{what} file {} does not exist", path.display()),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.check_inputs()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.schema,
            &mut self.train,
            &mut self.test,
            &mut self.index,
            &mut self.output_dir,
            &mut self.templates.ed,
            &mut self.templates.eae,
            &mut self.templates.joint,
            &mut self.templates.synthesis,
            &mut self.llm.mock_script,
        ] {
            resolve(base, p);
        }
    }

    /// Input files must exist; the index and output directory are produced
    /// by commands and are checked where they are used.
    pub fn check_inputs(&self) -> Result<()> {
        must_exist("schema", &self.schema)?;
        must_exist("train corpus", &self.train)?;
        must_exist("test corpus", &self.test)?;
        must_exist("ED template", &self.templates.ed)?;
        must_exist("EAE template", &self.templates.eae)?;
        must_exist("joint template", &self.templates.joint)?;
        must_exist("synthesis template", &self.templates.synthesis)?;
        must_exist("mock script", &self.llm.mock_script)?;
        if self.llm.mock_script.is_some() && self.llm.remote.is_some() {
            bail!("llm: set either mock_script or remote, not both");
        }
        self.extraction.validate()?;
        Ok(())
    }

    pub fn load_schema(&self) -> Result<EventSchema> {
        match &self.schema {
            Some(p) => EventSchema::from_path(p).with_context(|| format!("loading schema {}", p.display())),
            None => Ok(EventSchema::maritime()),
        }
    }

    fn corpus(&self, path: &Option<PathBuf>, schema: &EventSchema, split: Split) -> Result<Corpus> {
        match path {
            Some(p) => Corpus::from_path(p, schema, split).with_context(|| format!("loading corpus {}", p.display())),
            None => Ok(Corpus::maritime_seeds()),
        }
    }

    pub fn load_train(&self, schema: &EventSchema) -> Result<Corpus> {
        self.corpus(&self.train, schema, Split::Train)
    }

    pub fn load_test(&self, schema: &EventSchema) -> Result<Corpus> {
        self.corpus(&self.test, schema, Split::Test)
    }

    fn template(&self, kind: TaskKind, path: &Option<PathBuf>) -> Result<PromptTemplate> {
        match path {
            Some(p) => PromptTemplate::from_path(kind, p).with_context(|| format!("loading template {}", p.display())),
            None => Ok(default_template(kind)),
        }
    }

    pub fn load_templates(&self) -> Result<Templates> {
        Ok(Templates {
            ed: self.template(TaskKind::Ed, &self.templates.ed)?,
            eae: self.template(TaskKind::Eae, &self.templates.eae)?,
            joint: self.template(TaskKind::Joint, &self.templates.joint)?,
        })
    }

    pub fn load_synthesis_template(&self) -> Result<PromptTemplate> {
        self.template(TaskKind::Synthesis, &self.templates.synthesis)
    }

    pub fn backend(&self) -> Result<Box<dyn ChatBackend>> {
        match (&self.llm.mock_script, &self.llm.remote) {
            (Some(p), None) => Ok(Box::new(
                MockBackend::from_path(p).with_context(|| format!("loading mock script {}", p.display()))?,
            )),
            (None, Some(remote)) => Ok(Box::new(RemoteChatBackend::new(remote.clone())?)),
            (None, None) => bail!("no model configured: set llm.mock_script or llm.remote"),
            (Some(_), Some(_)) => bail!("llm: set either mock_script or remote, not both"),
        }
    }

    pub fn index_path(&self) -> Result<&Path> {
        self.index.as_deref().context("config sets no index path")
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> Result<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .context("no output directory: pass --out or set output_dir")
    }
}
