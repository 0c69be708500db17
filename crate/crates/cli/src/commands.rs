use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use evex::corpus::{Corpus, Split};
use evex::eval::{compare_runs, score as score_run, EvalReport, ScoreOptions, Strictness};
use evex::embed::truncate_chars;
use evex::index::FlatIndex;
use evex::llm::{ChatBackend, MockBackend, ScriptEntry};
use evex::pipeline::{
    plan_gold_echo, read_predictions, run_metadata, summarize, ExtractionConfig, Extractor,
    PredictionRecord, RunDirectory, Templates,
};
use evex::prompt::{DemoMode, DemoSelector};
use evex::schema::EventSchema;
use evex::synth::{composite_response, Synthesizer};

use crate::config::RunConfig;
use crate::ExtractionFlags;

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

pub fn schema_validate(path: &Path) -> Result<()> {
    let schema = EventSchema::from_path(path)?;
    let roles: usize = schema.event_types.iter().map(|t| t.roles.len()).sum();
    println!(
        "{}: valid, {} event types, {} role definitions",
        schema.name,
        schema.event_types.len(),
        roles
    );
    Ok(())
}

pub fn corpus_stats(path: &Path, schema: Option<&Path>) -> Result<()> {
    let schema = match schema {
        Some(p) => EventSchema::from_path(p)?,
        None => EventSchema::maritime(),
    };
    let corpus = Corpus::from_path(path, &schema, Split::Test)?;
    print!("{}", to_json(&corpus.stats()));
    Ok(())
}

fn load_index(config: &RunConfig) -> Result<FlatIndex> {
    let path = config.index_path()?;
    if !path.is_file() {
        bail!(
            "index {} does not exist; run index-build first",
            path.display()
        );
    }
    Ok(FlatIndex::load(path)?)
}

pub fn index_build(config_path: &Path, force: bool) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let path = config.index_path()?;
    let schema = config.load_schema()?;
    let train = config.load_train(&schema)?;
    let embedder = config.embedding.build()?;
    let texts: Vec<&str> = train.instances.iter().map(|i| i.text.as_str()).collect();
    let vectors = embedder.embed_batch(&texts)?;
    let index = FlatIndex::build(
        embedder.dim(),
        config.index_metric,
        train.instances.iter().map(|i| i.id.clone()).zip(vectors),
    )?;
    if path.exists() && !force {
        let old = FlatIndex::load(path).with_context(|| {
            format!("existing index {} is unreadable; pass --force to replace it", path.display())
        })?;
        if old.dim() != index.dim() || old.metric() != index.metric() {
            bail!(
                "existing index {} has dim {} ({}), new index has dim {} ({}); pass --force to replace it",
                path.display(),
                old.dim(),
                old.metric(),
                index.dim(),
                index.metric()
            );
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    index.save(path)?;
    println!(
        "indexed {} instances (dim {}, {}) into {}",
        index.len(),
        index.dim(),
        index.metric(),
        path.display()
    );
    let max_chars = config.embedding.max_chars;
    let truncated: Vec<&str> = train
        .instances
        .iter()
        .filter(|i| truncate_chars(&i.text, max_chars).1)
        .map(|i| i.id.as_str())
        .collect();
    if !truncated.is_empty() {
        println!(
            "embedded only the first {max_chars} characters of {} instances: {}",
            truncated.len(),
            truncated.join(", ")
        );
    }
    Ok(())
}

pub fn index_query(config_path: &Path, text: Option<String>, id: Option<String>, k: usize) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let index = load_index(&config)?;
    let embedder = config.embedding.build()?;
    if embedder.dim() != index.dim() {
        bail!("index has dim {}, embedder has dim {}", index.dim(), embedder.dim());
    }
    let (query_text, excluded) = match (text, id) {
        (Some(t), _) => (t, HashSet::new()),
        (None, Some(id)) => {
            let schema = config.load_schema()?;
            let train = config.load_train(&schema)?;
            let test = config.load_test(&schema)?;
            let inst = train
                .get(&id)
                .or_else(|| test.get(&id))
                .with_context(|| format!("no instance {id:?} in the train or test corpus"))?;
            (inst.text.clone(), HashSet::from([id]))
        }
        (None, None) => bail!("pass --text or --id"),
    };
    let q = embedder.embed_text(&query_text)?;
    for hit in index.query_excluding(&q, k, &excluded)? {
        println!("{}\t{:.6}\t{}", hit.rank, hit.score, hit.instance_id);
    }
    Ok(())
}

fn apply_flags(config: &mut RunConfig, flags: &ExtractionFlags, mock_script: Option<PathBuf>) -> Result<()> {
    let e = &mut config.extraction;
    if let Some(mode) = flags.mode {
        e.mode = mode;
    }
    if let Some(demo_mode) = flags.demo_mode {
        e.demo_mode = demo_mode;
        if demo_mode == DemoMode::None && flags.k.is_none() {
            e.k = 0;
        }
    }
    if let Some(k) = flags.k {
        e.k = k;
    }
    if let Some(g) = flags.grounding {
        e.grounding_policy = g;
    }
    if flags.multi_turn {
        e.prompt.multi_turn = true;
    }
    if let Some(script) = mock_script {
        config.llm.mock_script = Some(script);
        config.llm.remote = None;
    }
    config.check_inputs()
}

/// Runs `f` with the demonstration selector that `extraction` asks for.
fn with_selector<R>(
    config: &RunConfig,
    extraction: &ExtractionConfig,
    train: &Corpus,
    f: impl FnOnce(&DemoSelector) -> Result<R>,
) -> Result<R> {
    match extraction.demo_mode {
        DemoMode::None => f(&DemoSelector::none()),
        DemoMode::Fixed => f(&DemoSelector::fixed(train, &extraction.canonical_ids, extraction.k)?),
        DemoMode::Rae => {
            let index = load_index(config)?;
            let embedder = config.embedding.build()?;
            let selector = DemoSelector::rae(train, &index, embedder.as_ref(), extraction.k)?;
            f(&selector)
        }
    }
}

struct Inputs {
    schema: EventSchema,
    train: Corpus,
    test: Corpus,
    templates: Templates,
}

impl Inputs {
    fn load(config: &RunConfig) -> Result<Self> {
        let schema = config.load_schema()?;
        Ok(Inputs {
            train: config.load_train(&schema)?,
            test: config.load_test(&schema)?,
            templates: config.load_templates()?,
            schema,
        })
    }
}

fn run_into(
    dir: &Path,
    config: &RunConfig,
    extraction: &ExtractionConfig,
    inputs: &Inputs,
    backend: &dyn ChatBackend,
) -> Result<Vec<PredictionRecord>> {
    let rd = RunDirectory::create(dir)?;
    let records = with_selector(config, extraction, &inputs.train, |selector| {
        let ex = Extractor::new(extraction, &inputs.schema, &inputs.templates, selector, backend)?
            .with_raw_dir(rd.raw_dir());
        Ok(ex.run_extraction(&inputs.test))
    })?;
    let mut snapshot = config.clone();
    snapshot.extraction = extraction.clone();
    rd.write_config(&snapshot)?;
    rd.write_results(&records, &run_metadata(extraction, &records))?;
    Ok(records)
}

pub fn extract(
    config_path: &Path,
    flags: &ExtractionFlags,
    mock_script: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut config = RunConfig::load(config_path)?;
    apply_flags(&mut config, flags, mock_script)?;
    let dir = config.output_dir(out.as_deref())?;
    let inputs = Inputs::load(&config)?;
    let backend = config.backend()?;
    let records = run_into(&dir, &config, &config.extraction, &inputs, backend.as_ref())?;
    let s = summarize(&records);
    println!(
        "{} instances: {} ok, {} parse failures, {} errors; {} events, {} arguments -> {}",
        s.instances,
        s.ok,
        s.parse_failed,
        s.errors,
        s.predicted_events,
        s.predicted_arguments,
        dir.display()
    );
    Ok(())
}

pub struct ScoreArgs {
    pub gold: PathBuf,
    pub predictions: PathBuf,
    pub schema: Option<PathBuf>,
    pub strictness: Strictness,
    pub any_event_type: bool,
    pub json: bool,
    pub out: Option<PathBuf>,
}

pub fn score(args: ScoreArgs) -> Result<()> {
    let schema = match &args.schema {
        Some(p) => EventSchema::from_path(p)?,
        None => EventSchema::maritime(),
    };
    let gold = Corpus::from_path(&args.gold, &schema, Split::Test)?;
    let predictions = read_predictions(&args.predictions)?;
    let options = ScoreOptions {
        strictness: args.strictness,
        arg_requires_event_type: !args.any_event_type,
    };
    let report = score_run(&gold, &predictions, options)?;
    if args.json {
        print!("{}", to_json(&report));
    } else {
        print!("{}", report.to_text());
    }
    if let Some(out) = &args.out {
        write(out, &to_json(&report))?;
    }
    Ok(())
}

pub fn synthesize(
    config_path: &Path,
    target: Option<usize>,
    seed: Option<u64>,
    mock_script: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(t) = target {
        config.synthesis.target_count = t;
    }
    if let Some(s) = seed {
        config.synthesis.rng_seed = s;
    }
    if let Some(script) = mock_script {
        config.llm.mock_script = Some(script);
        config.llm.remote = None;
    }
    config.check_inputs()?;
    let dir = config.output_dir(out.as_deref())?;
    let schema = config.load_schema()?;
    let pool = config.load_train(&schema)?;
    let template = config.load_synthesis_template()?;
    let backend = config.backend()?;
    let synth = Synthesizer::new(&config.synthesis, &schema, &pool, &template)?;
    let output = synth.synthesize(backend.as_ref())?;
    write(&dir.join("corpus.jsonl"), &output.corpus.to_jsonl())?;
    write(&dir.join("provenance.jsonl"), &output.provenance_jsonl())?;
    write(&dir.join("rejections.jsonl"), &output.rejections_jsonl())?;
    write(&dir.join("config.json"), &to_json(&config))?;
    for item in &output.skipped {
        log::warn!("item {item} exhausted its retries");
    }
    println!(
        "synthesized {} of {} instances ({} short, {} rejected attempts) -> {}",
        output.corpus.len(),
        config.synthesis.target_count,
        output.undershoot(),
        output.rejections.len(),
        dir.display()
    );
    Ok(())
}

/// The four regimes of a sweep: label, demonstration mode, k.
const REGIMES: [(&str, DemoMode, usize); 4] = [
    ("zero-shot", DemoMode::None, 0),
    ("one-shot", DemoMode::Fixed, 1),
    ("five-shot", DemoMode::Fixed, 5),
    ("five-shot-rae", DemoMode::Rae, 5),
];

fn regime_configs(config: &RunConfig, train: &Corpus) -> Vec<(&'static str, ExtractionConfig)> {
    // One spare canonical id so a query drawn from the pool still gets k.
    let canonical = if config.extraction.canonical_ids.is_empty() {
        train.instances.iter().take(6).map(|i| i.id.clone()).collect()
    } else {
        config.extraction.canonical_ids.clone()
    };
    REGIMES
        .iter()
        .map(|&(label, demo_mode, k)| {
            let mut e = config.extraction.clone();
            e.demo_mode = demo_mode;
            e.k = k;
            e.canonical_ids = canonical.clone();
            (label, e)
        })
        .collect()
}

pub fn sweep(config_path: &Path, mock_script: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(script) = mock_script {
        config.llm.mock_script = Some(script);
        config.llm.remote = None;
    }
    config.check_inputs()?;
    let dir = config.output_dir(out.as_deref())?;
    let inputs = Inputs::load(&config)?;
    let backend = config.backend()?;
    let mut reports: Vec<(String, EvalReport)> = Vec::new();
    for (label, extraction) in regime_configs(&config, &inputs.train) {
        let run_dir = dir.join(label);
        let records = run_into(&run_dir, &config, &extraction, &inputs, backend.as_ref())?;
        let report = score_run(&inputs.test, &records, config.scoring)?;
        write(&run_dir.join("report.json"), &to_json(&report))?;
        reports.push((label.to_string(), report));
    }
    let comparison = compare_runs(&reports)?;
    write(&dir.join("comparison.txt"), &comparison.to_text())?;
    write(&dir.join("comparison.csv"), &comparison.to_csv())?;
    print!("{}", comparison.to_text());
    Ok(())
}

fn merge(into: &mut MockBackend, from: &MockBackend) -> Result<()> {
    for line in from.to_jsonl().lines() {
        let entry: ScriptEntry = serde_json::from_str(line)?;
        into.insert(entry.prompt_sha256, entry.response)?;
    }
    Ok(())
}

pub fn echo_script(
    config_path: &Path,
    flags: &ExtractionFlags,
    sweep: bool,
    synthesis: bool,
    out: &Path,
) -> Result<()> {
    let mut config = RunConfig::load(config_path)?;
    apply_flags(&mut config, flags, None)?;
    let idle = MockBackend::new();
    let mut script = MockBackend::new();
    if synthesis {
        let schema = config.load_schema()?;
        let pool = config.load_train(&schema)?;
        let template = config.load_synthesis_template()?;
        let synth = Synthesizer::new(&config.synthesis, &schema, &pool, &template)?;
        script = synth.plan_script(1, |plan| Some(composite_response(plan, &pool)))?;
    } else {
        let inputs = Inputs::load(&config)?;
        let runs = if sweep {
            regime_configs(&config, &inputs.train)
        } else {
            vec![("run", config.extraction.clone())]
        };
        for (_, extraction) in &runs {
            let planned = with_selector(&config, extraction, &inputs.train, |selector| {
                let planner = Extractor::new(extraction, &inputs.schema, &inputs.templates, selector, &idle)?;
                Ok(plan_gold_echo(&planner, &inputs.test)?)
            })?;
            merge(&mut script, &planned)?;
        }
    }
    write(out, &script.to_jsonl())?;
    println!("wrote {} scripted responses to {}", script.len(), out.display());
    Ok(())
}
