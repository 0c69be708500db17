//! Trig-C and Arg-C micro precision, recall and F1.
//!
//! A trigger counts when its event type and normalized string match a gold
//! trigger of the same instance; an argument counts when its event type,
//! role and normalized string match. Matching is one-to-one with
//! multiplicity: a key that occurs twice in gold can be matched twice.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::pipeline::{HallucinationTally, PredictionRecord, PredictedSpan};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("prediction for unknown instance {0:?}")]
    UnknownInstance(String),
    #[error("more than one prediction record for instance {0:?}")]
    DuplicatePrediction(String),
    #[error("comparison needs at least two reports, got {0}")]
    TooFewReports(usize),
}

/// Trim, lowercase and collapse internal whitespace.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    /// Type (and role) plus normalized string.
    #[default]
    String,
    /// As `String`, and the character offsets must agree too.
    Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreOptions {
    pub strictness: Strictness,
    /// Whether an argument needs the right event type to count.
    pub arg_requires_event_type: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            strictness: Strictness::String,
            arg_requires_event_type: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelScore {
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl LevelScore {
    pub fn from_counts(gold: usize, predicted: usize, matched: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        LevelScore {
            gold,
            predicted,
            matched,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub trigger: LevelScore,
    pub argument: LevelScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub options: ScoreOptions,
    pub instances: usize,
    /// Gold instances without a prediction record; scored as empty.
    pub missing_predictions: usize,
    pub trigger: LevelScore,
    pub argument: LevelScore,
    pub per_type: BTreeMap<String, TypeScore>,
    pub tally: HallucinationTally,
}

type Key = (Option<String>, Option<String>, String, Option<(usize, usize)>);

#[derive(Default, Clone, Copy)]
struct Counts {
    gold: usize,
    predicted: usize,
    matched: usize,
}

fn offsets(strictness: Strictness, span: Option<(usize, usize)>) -> Option<(usize, usize)> {
    match strictness {
        Strictness::String => None,
        Strictness::Span => span,
    }
}

/// Multiset intersection size of two key lists.
fn matched(gold: &[Key], pred: &[Key], span_required: bool) -> usize {
    let mut bag: HashMap<&Key, usize> = HashMap::new();
    for k in gold {
        *bag.entry(k).or_default() += 1;
    }
    let mut n = 0;
    for k in pred {
        if span_required && k.3.is_none() {
            continue;
        }
        if let Some(c) = bag.get_mut(k) {
            if *c > 0 {
                *c -= 1;
                n += 1;
            }
        }
    }
    n
}

struct Items {
    triggers: Vec<(String, Key)>,
    arguments: Vec<(String, Key)>,
}

fn trigger_key(ty: &str, text: &str, span: Option<(usize, usize)>) -> Key {
    (Some(ty.to_string()), None, normalize(text), span)
}

fn gold_items(inst: &crate::corpus::Instance, o: &ScoreOptions) -> Items {
    let mut items = Items {
        triggers: Vec::new(),
        arguments: Vec::new(),
    };
    for e in &inst.events {
        let span = offsets(o.strictness, Some((e.trigger.start, e.trigger.end)));
        items
            .triggers
            .push((e.event_type.clone(), trigger_key(&e.event_type, &e.trigger.text, span)));
        for a in &e.arguments {
            let span = offsets(o.strictness, Some((a.span.start, a.span.end)));
            let key = (
                o.arg_requires_event_type.then(|| e.event_type.clone()),
                Some(a.role.clone()),
                normalize(&a.span.text),
                span,
            );
            items.arguments.push((e.event_type.clone(), key));
        }
    }
    items
}

fn predicted_items(rec: &PredictionRecord, o: &ScoreOptions) -> Items {
    let mut items = Items {
        triggers: Vec::new(),
        arguments: Vec::new(),
    };
    let span_of = |s: &PredictedSpan| offsets(o.strictness, s.offsets());
    for e in &rec.events {
        items.triggers.push((
            e.event_type.clone(),
            trigger_key(&e.event_type, &e.trigger.text, span_of(&e.trigger)),
        ));
        for a in &e.arguments {
            let key = (
                o.arg_requires_event_type.then(|| e.event_type.clone()),
                Some(a.role.clone()),
                normalize(&a.span.text),
                span_of(&a.span),
            );
            items.arguments.push((e.event_type.clone(), key));
        }
    }
    items
}

fn keys(items: &[(String, Key)]) -> Vec<Key> {
    items.iter().map(|(_, k)| k.clone()).collect()
}

fn of_type(items: &[(String, Key)], ty: &str) -> Vec<Key> {
    items
        .iter()
        .filter(|(t, _)| t == ty)
        .map(|(_, k)| {
            let mut k = k.clone();
            k.0 = Some(ty.to_string());
            k
        })
        .collect()
}

/// Scores `predictions` against `gold`. Per-type argument scores always key
/// on the event type.
pub fn score(
    gold: &Corpus,
    predictions: &[PredictionRecord],
    options: ScoreOptions,
) -> Result<EvalReport, EvalError> {
    let gold_ids: HashSet<&str> = gold.instances.iter().map(|i| i.id.as_str()).collect();
    let mut by_id: HashMap<&str, &PredictionRecord> = HashMap::new();
    let mut tally = HallucinationTally::default();
    for p in predictions {
        if !gold_ids.contains(p.id.as_str()) {
            return Err(EvalError::UnknownInstance(p.id.clone()));
        }
        if by_id.insert(&p.id, p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.id.clone()));
        }
        tally.merge(&p.rejections);
    }
    let span_required = options.strictness == Strictness::Span;
    let mut trig = Counts::default();
    let mut arg = Counts::default();
    let mut per_type: BTreeMap<String, (Counts, Counts)> = BTreeMap::new();
    let mut missing = 0;
    let empty = Items {
        triggers: Vec::new(),
        arguments: Vec::new(),
    };
    for inst in &gold.instances {
        let g = gold_items(inst, &options);
        let p_owned;
        let p = match by_id.get(inst.id.as_str()) {
            Some(rec) => {
                p_owned = predicted_items(rec, &options);
                &p_owned
            }
            None => {
                missing += 1;
                &empty
            }
        };
        let add = |c: &mut Counts, g: &[Key], p: &[Key]| {
            c.gold += g.len();
            c.predicted += p.len();
            c.matched += matched(g, p, span_required);
        };
        add(&mut trig, &keys(&g.triggers), &keys(&p.triggers));
        add(&mut arg, &keys(&g.arguments), &keys(&p.arguments));
        let types: HashSet<&str> = g
            .triggers
            .iter()
            .chain(&p.triggers)
            .chain(&g.arguments)
            .chain(&p.arguments)
            .map(|(t, _)| t.as_str())
            .collect();
        for ty in types {
            let entry = per_type.entry(ty.to_string()).or_default();
            add(&mut entry.0, &of_type(&g.triggers, ty), &of_type(&p.triggers, ty));
            add(&mut entry.1, &of_type(&g.arguments, ty), &of_type(&p.arguments, ty));
        }
    }
    let level = |c: Counts| LevelScore::from_counts(c.gold, c.predicted, c.matched);
    Ok(EvalReport {
        options,
        instances: gold.instances.len(),
        missing_predictions: missing,
        trigger: level(trig),
        argument: level(arg),
        per_type: per_type
            .into_iter()
            .map(|(t, (tc, ac))| {
                (
                    t,
                    TypeScore {
                        trigger: level(tc),
                        argument: level(ac),
                    },
                )
            })
            .collect(),
        tally,
    })
}

fn level_row(out: &mut String, w: usize, name: &str, s: &LevelScore) {
    let _ = writeln!(
        out,
        "{name:<w$} {:>7} {:>7} {:>7} {:>8.4} {:>8.4} {:>8.4}",
        s.gold, s.predicted, s.matched, s.precision, s.recall, s.f1
    );
}

impl EvalReport {
    /// Fixed-width text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let strictness = match self.options.strictness {
            Strictness::String => "string",
            Strictness::Span => "span",
        };
        let _ = writeln!(
            out,
            "strictness: {strictness}; arguments require event type: {}",
            self.options.arg_requires_event_type
        );
        let w = self
            .per_type
            .keys()
            .map(|ty| ty.chars().count() + 5)
            .fold(16, usize::max);
        let _ = writeln!(
            out,
            "{:<w$} {:>7} {:>7} {:>7} {:>8} {:>8} {:>8}",
            "level", "gold", "pred", "match", "P", "R", "F1"
        );
        level_row(&mut out, w, "Trig-C", &self.trigger);
        level_row(&mut out, w, "Arg-C", &self.argument);
        if !self.per_type.is_empty() {
            out.push('\n');
            for (ty, s) in &self.per_type {
                level_row(&mut out, w, &format!("{ty} trig"), &s.trigger);
                level_row(&mut out, w, &format!("{ty} arg"), &s.argument);
            }
        }
        let t = &self.tally;
        let _ = writeln!(
            out,
            "\nrejected types {}, rejected roles {}, out-of-scope events {}, ungrounded {}, ambiguous {}, malformed {}, parse failures {}, backend errors {}",
            t.rejected_types,
            t.rejected_roles,
            t.out_of_scope_events,
            t.ungrounded_strings,
            t.ambiguous_matches,
            t.malformed_items,
            t.parse_failures,
            t.backend_errors
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub trig_f1: f64,
    pub arg_f1: f64,
    pub trig_delta: f64,
    pub arg_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// One row per report, in the given order, with deltas against the first.
pub fn compare_runs(reports: &[(String, EvalReport)]) -> Result<Comparison, EvalError> {
    if reports.len() < 2 {
        return Err(EvalError::TooFewReports(reports.len()));
    }
    let base = &reports[0].1;
    Ok(Comparison {
        rows: reports
            .iter()
            .map(|(label, r)| ComparisonRow {
                label: label.clone(),
                trig_f1: r.trigger.f1,
                arg_f1: r.argument.f1,
                trig_delta: r.trigger.f1 - base.trigger.f1,
                arg_delta: r.argument.f1 - base.argument.f1,
            })
            .collect(),
    })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(6);
        let mut out = format!(
            "{:<width$} {:>8} {:>8} {:>8} {:>8}\n",
            "run", "Trig-C", "dTrig", "Arg-C", "dArg"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$} {:>8.2} {:>+8.2} {:>8.2} {:>+8.2}",
                r.label,
                r.trig_f1 * 100.0,
                r.trig_delta * 100.0,
                r.arg_f1 * 100.0,
                r.arg_delta * 100.0
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["run", "trig_f1", "trig_delta", "arg_f1", "arg_delta"])
            .expect("write to memory");
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                format!("{:.6}", r.trig_f1),
                format!("{:.6}", r.trig_delta),
                format!("{:.6}", r.arg_f1),
                format!("{:.6}", r.arg_delta),
            ])
            .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{PredictedEvent, PredictedSpan};

    fn seeds() -> Corpus {
        Corpus::maritime_seeds()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("  The  Ocean\tPRIDE \n"), "the ocean pride");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn perfect_match() {
        let gold = seeds();
        let preds: Vec<_> = gold.instances.iter().map(PredictionRecord::from_gold).collect();
        for strictness in [Strictness::String, Strictness::Span] {
            let r = score(&gold, &preds, ScoreOptions { strictness, ..Default::default() }).unwrap();
            assert_eq!(r.trigger.f1, 1.0);
            assert_eq!(r.argument.f1, 1.0);
            assert_eq!(r.missing_predictions, 0);
        }
    }

    #[test]
    fn empty_predictions_score_zero() {
        let gold = seeds();
        let r = score(&gold, &[], ScoreOptions::default()).unwrap();
        assert_eq!(r.trigger.precision, 0.0);
        assert_eq!(r.trigger.recall, 0.0);
        assert_eq!(r.trigger.f1, 0.0);
        assert_eq!(r.missing_predictions, 20);
    }

    #[test]
    fn id_errors() {
        let gold = seeds();
        let mut p = PredictionRecord::from_gold(&gold.instances[0]);
        let dup = vec![p.clone(), p.clone()];
        assert_eq!(
            score(&gold, &dup, ScoreOptions::default()).unwrap_err(),
            EvalError::DuplicatePrediction(p.id.clone())
        );
        p.id = "ghost".into();
        assert_eq!(
            score(&gold, &[p], ScoreOptions::default()).unwrap_err(),
            EvalError::UnknownInstance("ghost".into())
        );
    }

    #[test]
    fn case_and_space_insensitive_but_type_sensitive() {
        let gold = seeds();
        let inst = &gold.instances[1];
        let mut p = PredictionRecord::from_gold(inst);
        p.events[0].trigger.text = " ARRIVED ".into();
        let one = Corpus::from_instances(&crate::schema::EventSchema::maritime(), gold.split, vec![inst.clone()]).unwrap();
        let r = score(&one, &[p.clone()], ScoreOptions::default()).unwrap();
        assert_eq!(r.trigger.matched, 1);
        p.events[0].event_type = "depart".into();
        let r = score(&one, &[p.clone()], ScoreOptions::default()).unwrap();
        assert_eq!(r.trigger.matched, 0);
        assert_eq!(r.argument.matched, 0);
        let loose = ScoreOptions {
            arg_requires_event_type: false,
            ..Default::default()
        };
        let r = score(&one, &[p], loose).unwrap();
        assert_eq!(r.argument.matched, r.argument.gold);
    }

    #[test]
    fn span_strictness_needs_offsets() {
        let gold = seeds();
        let inst = &gold.instances[1];
        let one = Corpus::from_instances(&crate::schema::EventSchema::maritime(), gold.split, vec![inst.clone()]).unwrap();
        let mut p = PredictionRecord::from_gold(inst);
        p.events[0].trigger = PredictedSpan {
            start: None,
            end: None,
            text: "arrived".into(),
            ambiguous: false,
        };
        let span = ScoreOptions {
            strictness: Strictness::Span,
            ..Default::default()
        };
        assert_eq!(score(&one, &[p.clone()], span).unwrap().trigger.matched, 0);
        assert_eq!(score(&one, &[p], ScoreOptions::default()).unwrap().trigger.matched, 1);
    }

    #[test]
    fn comparison_deltas() {
        let gold = seeds();
        let mut a = score(&gold, &[], ScoreOptions::default()).unwrap();
        a.trigger = LevelScore { f1: 0.5, ..a.trigger };
        let mut b = a.clone();
        b.trigger.f1 = 0.6;
        let c = compare_runs(&[("zero".into(), a.clone()), ("one".into(), b)]).unwrap();
        assert!((c.rows[1].trig_delta - 0.1).abs() < 1e-12);
        assert_eq!(c.rows[0].trig_delta, 0.0);
        assert!(c.to_text().contains("+10.00"));
        assert!(c.to_csv().starts_with("run,trig_f1,trig_delta,arg_f1,arg_delta\n"));
        assert_eq!(compare_runs(&[("x".into(), a)]), Err(EvalError::TooFewReports(1)));
    }

    #[test]
    fn repeated_gold_items_match_with_multiplicity() {
        let gold = seeds();
        let inst = &gold.instances[1];
        let one = Corpus::from_instances(&crate::schema::EventSchema::maritime(), gold.split, vec![inst.clone()]).unwrap();
        let mut p = PredictionRecord::from_gold(inst);
        let copy: PredictedEvent = p.events[0].clone();
        p.events.push(copy);
        let r = score(&one, &[p], ScoreOptions::default()).unwrap();
        assert_eq!((r.trigger.gold, r.trigger.predicted, r.trigger.matched), (1, 2, 1));
    }
}
