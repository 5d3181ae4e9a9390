//! Replays a compiled model against the machine it came from and reports
//! the first disagreement.
//!
//! The comparison is word-for-word, not verdict-for-verdict: on every input
//! the model's generated sentence must equal the reference trace token by
//! token, and the decoded answer must match the reference answer. A
//! disagreement is data, not an error — the report names the input and the
//! step where the two sides part ways, which is what makes fault injection
//! and regression hunting cheap.

use crate::alphabet::{Alphabet, Symbol, scanned_at};
use crate::fst::{Dfst, fst_run};
use crate::llm::{Answer, FixedLlm, GenerationTrace, join_names};
use crate::tm::{MultiTapeTm, tm_run, tma_run};
use crate::words::{fst_word, tm_word};

use super::assemble::endmarked_prompt;
use super::tm::{TmCompileParams, TmMode};
use super::{CompileError, enumerate_inputs, enumerate_inputs_upto};

/// What the reference side expects of one input: the exact token texts the
/// model should generate and the answer they should decode to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceRun {
    pub sentence: Vec<String>,
    pub answer: Answer,
}

/// The first step at which a model's sentence departs from the reference.
/// `step` indexes generated tokens; a mismatch past the last word means the
/// sentences agreed but the decoded answers did not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub input: String,
    pub step: usize,
    pub expected: String,
    pub actual: String,
}

/// Outcome of replaying a model against its reference on an input set.
/// Checking stops at the first divergence, so `inputs_checked` then counts
/// the inputs up to and including the diverging one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub inputs_checked: usize,
    pub steps_checked: usize,
    pub divergence: Option<Divergence>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Runs `model` on every input in `inputs` and compares each generated
/// sentence and decoded answer against `reference_for`. Returns at the first
/// divergence. Errors surface only when a side cannot run at all — a model
/// that runs and disagrees is a divergence, not an error.
pub fn verify_equivalence<F>(
    alphabet: &Alphabet,
    model: &FixedLlm,
    inputs: &[Vec<Symbol>],
    mut reference_for: F,
) -> Result<EquivalenceReport, CompileError>
where
    F: FnMut(&[Symbol]) -> Result<ReferenceRun, CompileError>,
{
    let mut inputs_checked = 0;
    let mut steps_checked = 0;
    for input in inputs {
        inputs_checked += 1;
        let reference = reference_for(input)?;
        let prompt = endmarked_prompt(alphabet, model, input)?;
        let trace = model.generate(&prompt, model.window())?;
        let divergence =
            first_divergence(model, &alphabet.format_string(input), &reference, &trace);
        if divergence.is_some() {
            return Ok(EquivalenceReport { inputs_checked, steps_checked, divergence });
        }
        steps_checked += reference.sentence.len();
    }
    Ok(EquivalenceReport { inputs_checked, steps_checked, divergence: None })
}

fn first_divergence(
    model: &FixedLlm,
    input_text: &str,
    reference: &ReferenceRun,
    trace: &GenerationTrace,
) -> Option<Divergence> {
    let got: Vec<&str> = trace.generated.iter().map(|&t| model.vocabulary().text(t)).collect();
    for step in 0..reference.sentence.len().max(got.len()) {
        let want = reference.sentence.get(step).map(String::as_str);
        let have = got.get(step).copied();
        if want != have {
            return Some(Divergence {
                input: input_text.to_string(),
                step,
                expected: want.unwrap_or("<end of sentence>").to_string(),
                actual: have.unwrap_or("<end of sentence>").to_string(),
            });
        }
    }
    let answer = model.decode_answer(trace);
    if answer != reference.answer {
        return Some(Divergence {
            input: input_text.to_string(),
            step: reference.sentence.len(),
            expected: format!("{:?}", reference.answer),
            actual: format!("{answer:?}"),
        });
    }
    None
}

/// Checks a compiled transducer model against `machine` on every input of
/// length at most `max_input_length`.
pub fn verify_fst_model(
    machine: &Dfst,
    model: &FixedLlm,
    max_input_length: usize,
) -> Result<EquivalenceReport, CompileError> {
    let alphabet = machine.input_alphabet().clone();
    let inputs = enumerate_inputs_upto(&alphabet, max_input_length);
    verify_equivalence(&alphabet, model, &inputs, |input| {
        let run = fst_run(machine, input)?;
        let sentence = run
            .trace
            .iter()
            .map(|c| fst_word(machine, c.state, c.head, scanned_at(input, c.head)))
            .collect();
        let names: Vec<String> =
            run.output.iter().map(|&s| machine.output_alphabet().name(s).to_string()).collect();
        Ok(ReferenceRun { sentence, answer: Answer::Output(join_names(&names)) })
    })
}

/// Checks a compiled batch-machine model against `machine` on every input of
/// exactly the length it was compiled for, using the same space bound, step
/// base, and advice as the compilation.
pub fn verify_tm_model(
    machine: &MultiTapeTm,
    model: &FixedLlm,
    params: &TmCompileParams,
) -> Result<EquivalenceReport, CompileError> {
    let alphabet = machine.input_alphabet().clone();
    let inputs = enumerate_inputs(&alphabet, params.input_length);
    verify_equivalence(&alphabet, model, &inputs, |input| {
        let run = match &params.advice {
            Some(f) => tma_run(machine, f, input, params.space_bound, params.step_base)?,
            None => tm_run(machine, input, params.space_bound, params.step_base)?,
        };
        let sentence = run.trace.iter().map(|c| tm_word(machine, c, false)).collect();
        let answer = match params.mode {
            TmMode::Acceptor => match run.verdict {
                crate::run::Verdict::Accept => Answer::Accept,
                _ => Answer::Reject,
            },
            TmMode::Function => {
                let final_config = run.trace.last().expect("a halted run has a final config");
                let names: Vec<String> = machine
                    .decode_output_tape(final_config)
                    .iter()
                    .map(|&s| machine.work_alphabet().name(s).to_string())
                    .collect();
                Answer::Output(join_names(&names))
            }
        };
        Ok(ReferenceRun { sentence, answer })
    })
}
