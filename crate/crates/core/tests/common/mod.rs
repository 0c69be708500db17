//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;

use evex::corpus::{ArgumentMention, EventRecord, Granularity, Instance, Span};
use evex::index::Metric;
use evex::pipeline::{PredictedArgument, PredictedEvent, PredictedSpan, PredictionRecord};
use rand::Rng;

pub fn random_vectors<R: Rng>(rng: &mut R, n: usize, dim: usize, unit: bool) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            if unit {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
            }
            v.into_iter().map(|x| x as f32).collect()
        })
        .collect()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Similarity as the index defines it: cosine, or negated Euclidean distance.
pub fn similarity(metric: Metric, q: &[f32], v: &[f32]) -> f64 {
    match metric {
        Metric::Cosine => {
            let d = dot(q, q).sqrt() * dot(v, v).sqrt();
            if d == 0.0 {
                0.0
            } else {
                dot(q, v) / d
            }
        }
        Metric::L2 => {
            let sq: f64 = q
                .iter()
                .zip(v)
                .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
                .sum();
            -sq.sqrt()
        }
    }
}

/// Full sort of every entry: score descending, then id ascending.
pub fn brute_rank(entries: &[(String, Vec<f32>)], metric: Metric, q: &[f32]) -> Vec<String> {
    let mut scored: Vec<(f64, &str)> = entries
        .iter()
        .map(|(id, v)| (similarity(metric, q, v), id.as_str()))
        .collect();
    scored.sort_by(|a, b| match b.0.partial_cmp(&a.0).unwrap() {
        Ordering::Equal => a.1.cmp(b.1),
        o => o,
    });
    scored.into_iter().map(|(_, id)| id.to_string()).collect()
}

pub fn norm_text(s: &str) -> String {
    let lower = s.to_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    words.join(" ")
}

/// Matched count by exhaustive pairing: every prediction takes the first
/// unused gold item equal to it.
pub fn pair_matches<T: PartialEq>(gold: &[T], pred: &[T]) -> usize {
    let mut used = vec![false; gold.len()];
    let mut n = 0;
    for p in pred {
        for (i, g) in gold.iter().enumerate() {
            if !used[i] && g == p {
                used[i] = true;
                n += 1;
                break;
            }
        }
    }
    n
}

pub fn prf(gold: usize, pred: usize, matched: usize) -> (f64, f64, f64) {
    let p = if pred == 0 { 0.0 } else { matched as f64 / pred as f64 };
    let r = if gold == 0 { 0.0 } else { matched as f64 / gold as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// (instance, type, text) for triggers; (instance, type, role, text) for
/// arguments.
pub type TrigItem = (String, String, String);
pub type ArgItem = (String, String, String, String);

pub fn gold_items(instances: &[Instance]) -> (Vec<TrigItem>, Vec<ArgItem>) {
    let mut t = Vec::new();
    let mut a = Vec::new();
    for i in instances {
        for e in &i.events {
            t.push((i.id.clone(), e.event_type.clone(), norm_text(&e.trigger.text)));
            for m in &e.arguments {
                a.push((
                    i.id.clone(),
                    e.event_type.clone(),
                    m.role.clone(),
                    norm_text(&m.span.text),
                ));
            }
        }
    }
    (t, a)
}

pub fn predicted_items(records: &[PredictionRecord]) -> (Vec<TrigItem>, Vec<ArgItem>) {
    let mut t = Vec::new();
    let mut a = Vec::new();
    for r in records {
        for e in &r.events {
            t.push((r.id.clone(), e.event_type.clone(), norm_text(&e.trigger.text)));
            for m in &e.arguments {
                a.push((
                    r.id.clone(),
                    e.event_type.clone(),
                    m.role.clone(),
                    norm_text(&m.span.text),
                ));
            }
        }
    }
    (t, a)
}

const WORDS: &[&str] = &["vessel", "Vessel", "port", "tanker", "sailed", "Aden", "0400", "moored"];
const TYPES: &[&str] = &["depart", "arrive", "block", "hail"];
const ROLES: &[&str] = &["date", "location", "ship name"];

/// A random but schema-valid instance: words joined by spaces, events
/// anchored on random words.
pub fn random_instance<R: Rng>(rng: &mut R, id: &str) -> Instance {
    let n_words = rng.random_range(4..12);
    let words: Vec<&str> = (0..n_words)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect();
    let mut spans = Vec::new();
    let mut pos = 0;
    for w in &words {
        spans.push(Span::new(pos, pos + w.chars().count(), *w));
        pos += w.chars().count() + 1;
    }
    let text = words.join(" ");
    let events = (0..rng.random_range(0..4))
        .map(|_| EventRecord {
            event_type: TYPES[rng.random_range(0..TYPES.len())].to_string(),
            trigger: spans[rng.random_range(0..spans.len())].clone(),
            arguments: {
                let mut args: Vec<ArgumentMention> = Vec::new();
                for _ in 0..rng.random_range(0..4) {
                    let m = ArgumentMention {
                        role: ROLES[rng.random_range(0..ROLES.len())].to_string(),
                        span: spans[rng.random_range(0..spans.len())].clone(),
                    };
                    if !args.contains(&m) {
                        args.push(m);
                    }
                }
                args
            },
        })
        .collect();
    Instance {
        id: id.to_string(),
        text,
        granularity: Granularity::Sentence,
        events,
    }
}

/// A noisy prediction for `gold`: events dropped, retyped, reworded or
/// invented at random.
pub fn perturb<R: Rng>(rng: &mut R, gold: &Instance) -> PredictionRecord {
    let mut rec = PredictionRecord::from_gold(gold);
    let mut events = Vec::new();
    for e in rec.events.drain(..) {
        match rng.random_range(0..5) {
            0 => {}
            1 => {
                let mut e = e;
                e.event_type = TYPES[rng.random_range(0..TYPES.len())].to_string();
                events.push(e);
            }
            2 => {
                let mut e = e;
                e.trigger.text = e.trigger.text.to_uppercase();
                e.arguments.retain(|_| rng.random_bool(0.5));
                events.push(e);
            }
            _ => events.push(e),
        }
    }
    for _ in 0..rng.random_range(0..2) {
        events.push(PredictedEvent {
            event_type: TYPES[rng.random_range(0..TYPES.len())].to_string(),
            trigger: PredictedSpan {
                start: None,
                end: None,
                text: WORDS[rng.random_range(0..WORDS.len())].to_string(),
                ambiguous: false,
            },
            arguments: vec![PredictedArgument {
                role: ROLES[rng.random_range(0..ROLES.len())].to_string(),
                span: PredictedSpan {
                    start: None,
                    end: None,
                    text: WORDS[rng.random_range(0..WORDS.len())].to_string(),
                    ambiguous: false,
                },
            }],
        });
    }
    rec.events = events;
    rec
}
