//! Building mock scripts that answer exactly the prompts a run will send.

use crate::answer::{
    parse_detection_answer, render_argument_answer, render_detection_answer,
    render_synthesis_answer, ArgumentItem, DetectionItem,
};
use crate::corpus::{Corpus, Instance};
use crate::llm::MockBackend;
use crate::prompt::TaskKind;

use super::{ExtractionMode, Extractor, HallucinationTally, PipelineError};

/// The gold answer for `instance` in the output format of `kind`.
pub fn gold_response(kind: TaskKind, instance: &Instance) -> String {
    let args = || -> Vec<ArgumentItem> { instance.events.iter().map(ArgumentItem::from_gold).collect() };
    match kind {
        TaskKind::Ed => render_detection_answer(&DetectionItem::from_gold(instance)),
        TaskKind::Eae | TaskKind::Joint => render_argument_answer(&args()),
        TaskKind::Synthesis => render_synthesis_answer(&instance.text, &args()),
    }
}

/// Scripts a mock backend for every first-attempt prompt `extractor` will
/// send over `corpus`. `respond` supplies the answer for each step; the
/// argument prompt is derived from whatever the scripted detection answer
/// yields after filtering.
pub fn plan_script<F>(
    extractor: &Extractor<'_>,
    corpus: &Corpus,
    respond: F,
) -> Result<MockBackend, PipelineError>
where
    F: Fn(TaskKind, &Instance) -> String,
{
    let selections = extractor.selector().select_all(&corpus.instances)?;
    let mut mock = MockBackend::new();
    for (q, sel) in corpus.instances.iter().zip(&selections) {
        match extractor.config().mode {
            ExtractionMode::Decomposed => {
                let bundle = extractor.ed_bundle(q, sel)?;
                let answer = respond(TaskKind::Ed, q);
                mock.insert(extractor.request(&bundle, "plan").prompt_digest(), answer.clone())?;
                let Ok(parsed) = parse_detection_answer(&answer) else {
                    continue;
                };
                let detected =
                    extractor.interpret_detection(q, parsed, &mut HallucinationTally::default());
                if detected.is_empty() {
                    continue;
                }
                let bundle = extractor.eae_bundle(q, sel, &detected)?;
                mock.insert(
                    extractor.request(&bundle, "plan").prompt_digest(),
                    respond(TaskKind::Eae, q),
                )?;
            }
            ExtractionMode::SingleStep => {
                let bundle = extractor.joint_bundle(q, sel)?;
                mock.insert(
                    extractor.request(&bundle, "plan").prompt_digest(),
                    respond(TaskKind::Joint, q),
                )?;
            }
        }
    }
    Ok(mock)
}

/// A mock backend that answers every prompt with the gold annotation.
pub fn plan_gold_echo(extractor: &Extractor<'_>, corpus: &Corpus) -> Result<MockBackend, PipelineError> {
    plan_script(extractor, corpus, gold_response)
}
