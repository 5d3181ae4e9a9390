//! Reads a two-way transducer back out of a next-token predictor.
//!
//! A compiled model's decoder is a finite machine in disguise: the newest
//! token determines where attention fetches next, and the fetched cell
//! together with that token determines the following token. Replaying
//! generation on every input up to a length bound therefore observes the
//! whole transition table. Each non-stop token becomes a transducer state,
//! the fetch target plays the head, the change in fetch target between
//! consecutive steps is the head movement, and the names attached to each
//! token by the decode table become the output tape.

use std::collections::BTreeMap;
use std::collections::btree_map::Entry;

use crate::alphabet::{
    Alphabet, LEFT_END_NAME, Move, RIGHT_END_NAME, Symbol, TapeSymbol, scanned_at,
};
use crate::fst::{Dfst, DfstBuilder};
use crate::llm::{FixedLlm, StopReason, TokenId};
use crate::run::Verdict;
use crate::words::BEGIN_TOKEN;

use super::CompileError;
use super::assemble::endmarked_prompt;
use super::enumerate_inputs_upto;

/// State occupied before the model has produced its first token.
const START_STATE: &str = "start";
/// State entered when the model produces a stop token.
const HALT_STATE: &str = "halt";
/// Sink that fills table entries no observed run ever exercises.
const DEAD_STATE: &str = "dead";

/// One observed decoder transition. `movement` is where the *next* fetch
/// landed relative to this one, `next` is the token produced (`None` once a
/// stop token ends the run), and `emitted` are the names the decode table
/// attaches to that token.
#[derive(PartialEq, Eq)]
struct Observed {
    movement: Move,
    next: Option<TokenId>,
    emitted: Vec<String>,
}

/// Recovers a deterministic two-way transducer from `model` by running it on
/// every input of length at most `max_input_length` and recording each
/// decoder transition. On the covered inputs the result reproduces the
/// model's emissions exactly; table entries never observed lead to an
/// unreachable sink state.
///
/// The model must address its input through per-cell `in:` tokens and always
/// fetch one of them, the first fetch must land on the left endmarker, and
/// consecutive fetch targets may differ by at most one cell — anything else
/// has no transducer counterpart and is reported as [`CompileError::InvalidParams`].
/// Distinct tokens (plus the start and halt states) are counted against
/// `state_budget`; exceeding it is [`CompileError::StateBudgetExceeded`].
pub fn extract_fst(
    model: &FixedLlm,
    max_input_length: usize,
    state_budget: usize,
) -> Result<Dfst, CompileError> {
    let input_alphabet = recover_input_alphabet(model)?;
    let mut rules: BTreeMap<(Option<TokenId>, TapeSymbol), Observed> = BTreeMap::new();

    for input in enumerate_inputs_upto(&input_alphabet, max_input_length) {
        let prompt = endmarked_prompt(&input_alphabet, model, &input)?;
        let trace = model.generate(&prompt, model.window())?;
        if trace.stopped != StopReason::StopToken {
            return Err(CompileError::NotHalting {
                input: input_alphabet.format_string(&input),
                verdict: Verdict::StepBoundExceeded,
            });
        }
        let cell_count = prompt.len() - 1;
        for (i, step) in trace.steps.iter().enumerate() {
            if step.fetched >= cell_count {
                return Err(CompileError::InvalidParams(format!(
                    "fetch landed at context position {} of input {:?}, beyond the last input cell",
                    step.fetched,
                    input_alphabet.format_string(&input),
                )));
            }
            if i == 0 && step.fetched != 0 {
                return Err(CompileError::InvalidParams(format!(
                    "first fetch landed at position {}, but a transducer starts on the left endmarker",
                    step.fetched,
                )));
            }
            let from = if i == 0 { None } else { Some(trace.generated[i - 1]) };
            let cell = scanned_at(&input, step.fetched);
            let observed = if model.stop_tokens().contains(&step.token) {
                Observed { movement: Move::Stay, next: None, emitted: emissions(model, step.token) }
            } else {
                let delta = trace.steps[i + 1].fetched as i64 - step.fetched as i64;
                let movement = match delta {
                    -1 => Move::Left,
                    0 => Move::Stay,
                    1 => Move::Right,
                    _ => {
                        return Err(CompileError::InvalidParams(format!(
                            "fetch target jumped {delta} cells in one step; a head moves at most one",
                        )));
                    }
                };
                Observed { movement, next: Some(step.token), emitted: emissions(model, step.token) }
            };
            match rules.entry((from, cell)) {
                Entry::Vacant(slot) => {
                    slot.insert(observed);
                }
                Entry::Occupied(slot) if *slot.get() == observed => {}
                Entry::Occupied(_) => {
                    return Err(CompileError::SuccessorConflict {
                        current: state_text(model, from),
                        fetched: cell.display(&input_alphabet).to_string(),
                    });
                }
            }
        }
    }

    let mut state_names: BTreeMap<TokenId, String> = BTreeMap::new();
    for observed in rules.values() {
        if let Some(token) = observed.next {
            let index = state_names.len();
            state_names.entry(token).or_insert_with(|| format!("t{index}"));
        }
    }
    if state_names.len() + 2 > state_budget {
        return Err(CompileError::StateBudgetExceeded { cap: state_budget });
    }

    let mut output_names: Vec<String> = rules
        .values()
        .flat_map(|observed| observed.emitted.iter().cloned())
        .collect();
    output_names.sort();
    output_names.dedup();
    let output_alphabet = Alphabet::new(output_names)?;

    let mut builder = DfstBuilder::new(input_alphabet.clone(), output_alphabet.clone())
        .state(START_STATE)
        .initial(START_STATE);
    for name in state_names.values() {
        builder = builder.state(name);
    }
    builder = builder.state(HALT_STATE).halting(HALT_STATE).state(DEAD_STATE);

    let name_of = |token: Option<TokenId>| -> &str {
        match token {
            None => START_STATE,
            Some(t) => &state_names[&t],
        }
    };
    for ((from, cell), observed) in &rules {
        let next = match observed.next {
            None => HALT_STATE,
            Some(t) => &state_names[&t],
        };
        let symbols: Vec<Symbol> = observed
            .emitted
            .iter()
            .map(|name| output_alphabet.require(name))
            .collect::<Result<_, _>>()?;
        builder = builder.rule(
            name_of(*from),
            cell.display(&input_alphabet),
            observed.movement,
            next,
            &output_alphabet.format_string(&symbols),
        )?;
    }

    let live = std::iter::once((None, START_STATE))
        .chain(state_names.iter().map(|(token, name)| (Some(*token), name.as_str())));
    for (from, state) in live {
        for cell in TapeSymbol::enumerate(&input_alphabet) {
            if !rules.contains_key(&(from, cell)) {
                builder =
                    builder.rule(state, cell.display(&input_alphabet), Move::Stay, DEAD_STATE, "")?;
            }
        }
    }
    for cell in TapeSymbol::enumerate(&input_alphabet) {
        builder = builder.rule(DEAD_STATE, cell.display(&input_alphabet), Move::Stay, DEAD_STATE, "")?;
    }

    Ok(builder.build()?)
}

/// The input alphabet a model addresses through its `in:` cell tokens, in
/// vocabulary order (which preserves the original declaration order).
fn recover_input_alphabet(model: &FixedLlm) -> Result<Alphabet, CompileError> {
    let mut names = Vec::new();
    for (_, text) in model.vocabulary().tokens() {
        if let Some(rest) = text.strip_prefix("in:") {
            if rest != LEFT_END_NAME && rest != RIGHT_END_NAME {
                names.push(rest.to_string());
            }
        }
    }
    if names.is_empty() {
        return Err(CompileError::InvalidParams(
            "the model has no in: cell tokens to recover an input alphabet from".into(),
        ));
    }
    Ok(Alphabet::new(names)?)
}

fn emissions(model: &FixedLlm, token: TokenId) -> Vec<String> {
    model.decode_info().emit_leaving.get(&token).cloned().unwrap_or_default()
}

fn state_text(model: &FixedLlm, token: Option<TokenId>) -> String {
    match token {
        None => BEGIN_TOKEN.to_string(),
        Some(t) => model.vocabulary().text(t).to_string(),
    }
}
