use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use evex::corpus::{Corpus, Instance};
use evex::embed::{Embedder, LocalHashEmbedder};
use evex::index::{FlatIndex, Metric};
use evex::llm::{ChatBackend, CompletionRequest, FnBackend, LlmError, MockBackend};
use evex::pipeline::{
    gold_response, plan_gold_echo, plan_script, run_metadata, DetectedEvent, ExtractionConfig,
    ExtractionMode, Extractor, PredictionRecord, RecordStatus, RunDirectory, Templates, Trace,
};
use evex::prompt::{count_blocks, DemoMode, DemoSelector, TaskKind, EXAMPLE_MARKER};
use evex::schema::EventSchema;

fn seeds() -> Corpus {
    Corpus::maritime_seeds()
}

type Canon = BTreeSet<(String, String, Vec<(String, String)>)>;

fn canonical(events: impl Iterator<Item = (String, String, Vec<(String, String)>)>) -> Canon {
    events
        .map(|(t, tr, mut args)| {
            args.sort();
            (t, tr, args)
        })
        .collect()
}

fn gold_canon(i: &Instance) -> Canon {
    canonical(i.events.iter().map(|e| {
        (
            e.event_type.clone(),
            e.trigger.text.clone(),
            e.arguments.iter().map(|a| (a.role.clone(), a.span.text.clone())).collect(),
        )
    }))
}

fn pred_canon(r: &PredictionRecord) -> Canon {
    canonical(r.events.iter().map(|e| {
        (
            e.event_type.clone(),
            e.trigger.text.clone(),
            e.arguments.iter().map(|a| (a.role.clone(), a.span.text.clone())).collect(),
        )
    }))
}

/// Records every request before delegating to `inner`.
fn recording(inner: Arc<dyn ChatBackend>) -> (FnBackend, Arc<Mutex<Vec<CompletionRequest>>>) {
    let log = Arc::new(Mutex::new(Vec::new()));
    let sink = log.clone();
    let backend = FnBackend::new(move |r| {
        sink.lock().unwrap().push(r.clone());
        inner.complete(r).map(|x| x.text)
    });
    (backend, log)
}

fn gold_echo_run(config: &ExtractionConfig) -> Vec<PredictionRecord> {
    let schema = EventSchema::maritime();
    let corpus = seeds();
    let templates = Templates::default();
    let selector = DemoSelector::none();
    let idle = MockBackend::new();
    let planner = Extractor::new(config, &schema, &templates, &selector, &idle).unwrap();
    let mock = plan_gold_echo(&planner, &corpus).unwrap();
    let ex = Extractor::new(config, &schema, &templates, &selector, &mock).unwrap();
    ex.run_extraction(&corpus)
}

#[test]
fn gold_echo_reproduces_gold() {
    let corpus = seeds();
    let records = gold_echo_run(&ExtractionConfig::default());
    assert_eq!(records.len(), corpus.len());
    for (r, g) in records.iter().zip(&corpus.instances) {
        assert_eq!(r.id, g.id);
        assert_eq!(r.status, RecordStatus::Ok);
        assert_eq!(pred_canon(r), gold_canon(g));
        assert_eq!(r.rejections, Default::default());
        for e in &r.events {
            assert!(e.trigger.offsets().is_some());
        }
    }
}

#[test]
fn single_step_matches_decomposed_under_gold_echo() {
    let decomposed = gold_echo_run(&ExtractionConfig::default());
    let single = gold_echo_run(&ExtractionConfig {
        mode: ExtractionMode::SingleStep,
        ..ExtractionConfig::default()
    });
    for (a, b) in decomposed.iter().zip(&single) {
        assert_eq!(pred_canon(a), pred_canon(b));
        assert_eq!(b.raw.len(), 1);
    }
}

#[test]
fn multi_turn_gold_echo() {
    let schema = EventSchema::maritime();
    let corpus = seeds();
    let templates = Templates::default();
    let ids: Vec<String> = corpus.instances[..3].iter().map(|i| i.id.clone()).collect();
    let selector = DemoSelector::fixed(&corpus, &ids, 2).unwrap();
    let mut config = ExtractionConfig {
        demo_mode: DemoMode::Fixed,
        k: 2,
        canonical_ids: ids,
        ..ExtractionConfig::default()
    };
    config.prompt.multi_turn = true;
    let idle = MockBackend::new();
    let planner = Extractor::new(&config, &schema, &templates, &selector, &idle).unwrap();
    let mock: Arc<dyn ChatBackend> = Arc::new(plan_gold_echo(&planner, &corpus).unwrap());
    let (backend, log) = recording(mock);
    let ex = Extractor::new(&config, &schema, &templates, &selector, &backend).unwrap();
    let records = ex.run_extraction(&corpus);
    for (r, g) in records.iter().zip(&corpus.instances) {
        assert_eq!(pred_canon(r), gold_canon(g));
    }
    for req in log.lock().unwrap().iter() {
        assert_eq!(req.history.len(), 4);
        assert_eq!(count_blocks(&req.prompt_text).0, 0);
    }
}

#[test]
fn zero_shot_prompts_have_no_examples() {
    let schema = EventSchema::maritime();
    let corpus = seeds();
    let templates = Templates::default();
    let selector = DemoSelector::none();
    let config = ExtractionConfig::default();
    let idle = MockBackend::new();
    let planner = Extractor::new(&config, &schema, &templates, &selector, &idle).unwrap();
    let mock: Arc<dyn ChatBackend> = Arc::new(plan_gold_echo(&planner, &corpus).unwrap());
    let (backend, log) = recording(mock);
    let ex = Extractor::new(&config, &schema, &templates, &selector, &backend).unwrap();
    ex.run_extraction(&corpus);
    let log = log.lock().unwrap();
    assert!(!log.is_empty());
    for req in log.iter() {
        assert!(!req.prompt_text.contains(EXAMPLE_MARKER));
        assert_eq!(count_blocks(&req.prompt_text), (0, 1));
        assert_eq!(req.temperature, 0.0);
    }
}

#[test]
fn rae_prompts_carry_k_sorted_examples() {
    let schema = EventSchema::maritime();
    let corpus = seeds();
    let templates = Templates::default();
    let emb = LocalHashEmbedder::with_dim(128).unwrap();
    let entries = corpus
        .instances
        .iter()
        .map(|i| (i.id.clone(), emb.embed_text(&i.text).unwrap()));
    let index = FlatIndex::build(128, Metric::Cosine, entries).unwrap();
    let selector = DemoSelector::rae(&corpus, &index, &emb, 5).unwrap();
    let config = ExtractionConfig {
        demo_mode: DemoMode::Rae,
        k: 5,
        ..ExtractionConfig::default()
    };
    let idle = MockBackend::new();
    let planner = Extractor::new(&config, &schema, &templates, &selector, &idle).unwrap();
    let mock = plan_gold_echo(&planner, &corpus).unwrap();
    let ex = Extractor::new(&config, &schema, &templates, &selector, &mock).unwrap();
    for q in &corpus.instances {
        let sel = selector.select(q).unwrap();
        let bundle = ex.ed_bundle(q, &sel).unwrap();
        assert_eq!(bundle.block_counts(), (5, 1));
        let sims: Vec<f64> = bundle.demonstrations.iter().map(|d| d.similarity.unwrap()).collect();
        assert!(sims.windows(2).all(|w| w[0] >= w[1]));
        assert!(bundle.demonstrations.iter().all(|d| d.instance_id != q.id));
    }
    let records = ex.run_extraction(&corpus);
    for (r, g) in records.iter().zip(&corpus.instances) {
        assert_eq!(pred_canon(r), gold_canon(g));
    }
}

#[test]
fn config_rejects_inconsistent_demo_settings() {
    let bad = ExtractionConfig {
        k: 5,
        ..ExtractionConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = ExtractionConfig {
        demo_mode: DemoMode::Rae,
        k: 0,
        ..ExtractionConfig::default()
    };
    assert!(bad.validate().is_err());
    let ok = ExtractionConfig {
        demo_mode: DemoMode::Rae,
        k: 5,
        ..ExtractionConfig::default()
    };
    let schema = EventSchema::maritime();
    let templates = Templates::default();
    let selector = DemoSelector::none();
    let idle = MockBackend::new();
    assert!(Extractor::new(&ok, &schema, &templates, &selector, &idle).is_err());
}

fn one(instance: &Instance) -> Corpus {
    Corpus::from_instances(&EventSchema::maritime(), evex::corpus::Split::Test, vec![instance.clone()]).unwrap()
}

/// Runs the default decomposed config on `corpus` with scripted answers.
fn run_scripted<F>(corpus: &Corpus, respond: F) -> (Vec<PredictionRecord>, usize)
where
    F: Fn(TaskKind, &Instance) -> String,
{
    let schema = EventSchema::maritime();
    let templates = Templates::default();
    let selector = DemoSelector::none();
    let config = ExtractionConfig::default();
    let idle = MockBackend::new();
    let planner = Extractor::new(&config, &schema, &templates, &selector, &idle).unwrap();
    let mock = plan_script(&planner, corpus, respond).unwrap();
    let ex = Extractor::new(&config, &schema, &templates, &selector, &mock).unwrap();
    let records = ex.run_extraction(corpus);
    (records, mock.calls())
}

#[test]
fn out_of_schema_type_is_rejected_and_counted() {
    let inst = &seeds().instances[1];
    let (records, _) = run_scripted(&one(inst), |kind, i| match kind {
        TaskKind::Ed => "```json\n[{\"trigger\": \"arrived\", \"event_type\": \"arrive\"}, {\"trigger\": \"Nordic Star\", \"event_type\": \"teleport\"}]\n```".into(),
        _ => gold_response(kind, i),
    });
    let r = &records[0];
    assert_eq!(r.rejections.rejected_types, 1);
    assert_eq!(r.events.len(), 1);
    assert_eq!(r.events[0].event_type, "arrive");
}

#[test]
fn duplicate_detections_collapse() {
    let inst = &seeds().instances[1];
    let (records, _) = run_scripted(&one(inst), |kind, i| match kind {
        TaskKind::Ed => "[{\"trigger\": \"arrived\", \"event_type\": \"arrive\"}, {\"trigger\": \"Arrived \", \"event_type\": \"arrive\"}]".into(),
        _ => gold_response(kind, i),
    });
    assert_eq!(records[0].events.len(), 1);
    assert_eq!(pred_canon(&records[0]), gold_canon(inst));
}

#[test]
fn unknown_role_is_rejected_and_counted() {
    let inst = &seeds().instances[0];
    let (records, _) = run_scripted(&one(inst), |kind, i| match kind {
        TaskKind::Eae => "[{\"event_type\": \"depart\", \"trigger\": \"departed\", \"arguments\": {\"color\": \"red\", \"ship name\": \"Ocean Pride\"}}]".into(),
        _ => gold_response(kind, i),
    });
    let r = &records[0];
    assert_eq!(r.rejections.rejected_roles, 1);
    let depart = r.events.iter().find(|e| e.event_type == "depart").unwrap();
    assert_eq!(depart.arguments.len(), 1);
    assert_eq!(depart.arguments[0].role, "ship name");
    let transit = r.events.iter().find(|e| e.event_type == "transit").unwrap();
    assert!(transit.arguments.is_empty());
}

#[test]
fn no_detection_means_one_call() {
    let inst = &seeds().instances[1];
    let (records, calls) = run_scripted(&one(inst), |kind, _| match kind {
        TaskKind::Ed => "```json\n[]\n```".into(),
        _ => unreachable!("no argument prompt is planned"),
    });
    assert_eq!(calls, 1);
    assert_eq!(records[0].status, RecordStatus::Ok);
    assert!(records[0].events.is_empty());

    let schema = EventSchema::maritime();
    let templates = Templates::default();
    let selector = DemoSelector::none();
    let config = ExtractionConfig::default();
    let backend = FnBackend::new(|_| Err(LlmError::Backend("must not be called".into())));
    let ex = Extractor::new(&config, &schema, &templates, &selector, &backend).unwrap();
    let sel = selector.select(inst).unwrap();
    let mut trace = Trace::default();
    let detected: Vec<DetectedEvent> = Vec::new();
    assert!(ex.extract_arguments(inst, &sel, &detected, &mut trace).unwrap().is_empty());
    assert_eq!(backend.calls(), 0);
}

#[test]
fn parse_failure_gets_one_reprompt() {
    let schema = EventSchema::maritime();
    let templates = Templates::default();
    let selector = DemoSelector::none();
    let config = ExtractionConfig::default();
    let inst = seeds().instances[1].clone();
    let corpus = one(&inst);

    let always_bad = FnBackend::new(|_| Ok("I cannot answer that.".into()));
    let ex = Extractor::new(&config, &schema, &templates, &selector, &always_bad).unwrap();
    let r = &ex.run_extraction(&corpus)[0];
    assert_eq!(r.status, RecordStatus::ParseFailed);
    assert!(r.events.is_empty());
    assert_eq!(r.rejections.parse_failures, 1);
    assert_eq!(always_bad.calls(), 2);
    assert!(r.raw[1].request_id.ends_with(".retry"));

    let gold = inst.clone();
    let recovers = FnBackend::new(move |req| {
        if req.request_id.ends_with(".ed") {
            Ok("no idea".into())
        } else if req.request_id.ends_with(".ed.retry") {
            assert!(req.prompt_text.contains("could not be parsed"));
            Ok(gold_response(TaskKind::Ed, &gold))
        } else {
            Ok(gold_response(TaskKind::Eae, &gold))
        }
    });
    let ex = Extractor::new(&config, &schema, &templates, &selector, &recovers).unwrap();
    let r = &ex.run_extraction(&corpus)[0];
    assert_eq!(r.status, RecordStatus::Ok);
    assert_eq!(pred_canon(r), gold_canon(&inst));
    assert_eq!(recovers.calls(), 3);
}

#[test]
fn backend_errors_do_not_abort_the_run() {
    let schema = EventSchema::maritime();
    let templates = Templates::default();
    let selector = DemoSelector::none();
    let config = ExtractionConfig::default();
    let corpus = seeds();
    let idle = MockBackend::new();
    let planner = Extractor::new(&config, &schema, &templates, &selector, &idle).unwrap();
    let mut mock = plan_gold_echo(&planner, &corpus).unwrap();
    let mut sparse = MockBackend::new();
    // Drop the scripted answers for one instance.
    let skip = &corpus.instances[4];
    let sel = selector.select(skip).unwrap();
    let skipped_digest = planner
        .request(&planner.ed_bundle(skip, &sel).unwrap(), "x")
        .prompt_digest();
    for line in mock.to_jsonl().lines() {
        let entry: evex::llm::ScriptEntry = serde_json::from_str(line).unwrap();
        if entry.prompt_sha256 != skipped_digest {
            sparse.insert(entry.prompt_sha256, entry.response).unwrap();
        }
    }
    mock = sparse;
    let ex = Extractor::new(&config, &schema, &templates, &selector, &mock).unwrap();
    let records = ex.run_extraction(&corpus);
    assert_eq!(records[4].status, RecordStatus::Error);
    assert!(records[4].events.is_empty());
    assert_eq!(records[4].rejections.backend_errors, 1);
    assert!(records.iter().enumerate().all(|(i, r)| i == 4 || r.status == RecordStatus::Ok));
}

#[test]
fn eae_prompts_define_only_detected_roles() {
    let schema = EventSchema::maritime();
    let corpus = seeds();
    let templates = Templates::default();
    let selector = DemoSelector::none();
    let config = ExtractionConfig::default();
    let idle = MockBackend::new();
    let planner = Extractor::new(&config, &schema, &templates, &selector, &idle).unwrap();
    let mock: Arc<dyn ChatBackend> = Arc::new(plan_gold_echo(&planner, &corpus).unwrap());
    let (backend, log) = recording(mock);
    let ex = Extractor::new(&config, &schema, &templates, &selector, &backend).unwrap();
    ex.run_extraction(&corpus);
    let log = log.lock().unwrap();
    for inst in &corpus.instances {
        let eae = log
            .iter()
            .find(|r| r.request_id == format!("{}.eae", inst.id))
            .expect("argument prompt sent");
        let detected: BTreeSet<&str> = inst.events.iter().map(|e| e.event_type.as_str()).collect();
        for ty in &schema.event_types {
            for role in &ty.roles {
                assert_eq!(
                    eae.prompt_text.contains(&role.definition),
                    detected.contains(ty.name.as_str()),
                    "{} / {}",
                    inst.id,
                    role.definition
                );
            }
        }
    }
}

#[test]
fn reruns_write_identical_run_directories() {
    let schema = EventSchema::maritime();
    let corpus = seeds();
    let templates = Templates::default();
    let selector = DemoSelector::none();
    let config = ExtractionConfig::default();
    let idle = MockBackend::new();
    let planner = Extractor::new(&config, &schema, &templates, &selector, &idle).unwrap();
    let mock = plan_gold_echo(&planner, &corpus).unwrap();
    let run = |dir: &std::path::Path| {
        let rd = RunDirectory::create(dir).unwrap();
        let ex = Extractor::new(&config, &schema, &templates, &selector, &mock)
            .unwrap()
            .with_raw_dir(rd.raw_dir());
        let records = ex.run_extraction(&corpus);
        rd.write_config(&config).unwrap();
        rd.write_results(&records, &run_metadata(&config, &records)).unwrap();
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(a.path());
    run(b.path());
    let listing = |d: &std::path::Path| {
        let mut files: Vec<_> = walk(d).into_iter().map(|p| p.strip_prefix(d).unwrap().to_path_buf()).collect();
        files.sort();
        files
    };
    let files = listing(a.path());
    assert_eq!(files, listing(b.path()));
    assert!(files.iter().any(|f| f.ends_with("predictions.jsonl")));
    assert_eq!(files.iter().filter(|f| f.starts_with("raw")).count(), 40);
    for f in &files {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{}",
            f.display()
        );
    }
    let back = evex::pipeline::read_predictions(a.path().join("predictions.jsonl")).unwrap();
    assert_eq!(back.len(), 20);
    assert_eq!(pred_canon(&back[0]), gold_canon(&corpus.instances[0]));
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
