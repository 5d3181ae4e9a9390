//! Transducer-to-predictor compilation.
//!
//! The compiled vocabulary holds the control tokens, one prompt token per
//! input tape cell value, and one rule word per transducer surface
//! configuration `(state, head, scanned)` reached on any input of length at
//! most `n`. A prompt spells the endmarked input followed by [`BEGIN_TOKEN`];
//! generation then replays the transducer run one rule word per step.
//!
//! Each rule word's embedding carries, in its `target` field, the position
//! code of the input cell the *next* configuration scans. The attention step
//! therefore fetches that cell's prompt token, and the successor table maps
//! (fetched cell, current word) to the next word. Halting words map to the
//! end fixpoint whatever was fetched.

use std::collections::{BTreeMap, BTreeSet};

use crate::alphabet::{Symbol, TapeSymbol, scanned_at};
use crate::fst::{Dfst, StateId, fst_run};
use crate::llm::{FixedLlm, ModelMode, TokenId, position_code, position_code_bits};
use crate::run::{Verdict, ceil_log2};
use crate::words::{BEGIN_TOKEN, fst_word, prompt_token};

use super::assemble::{Assembly, assemble, control_and_prompt_tokens, endmarked_prompt, insert_relation};
use super::layout::{FST_DIM_C, FieldMap, KIND_WIDTH, KIND_WORD, RowWriter};
use super::{CompileError, CompileReport, CompiledModel, enumerate_inputs_upto};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FstCompileParams {
    /// The model simulates the transducer on every input of length ≤ n.
    pub max_input_length: usize,
}

/// The prompt for one input: its endmarked cells as prompt tokens, then the
/// begin-generation token.
pub fn fst_prompt(
    machine: &Dfst,
    model: &FixedLlm,
    input: &[Symbol],
) -> Result<Vec<TokenId>, CompileError> {
    endmarked_prompt(machine.input_alphabet(), model, input)
}

/// A surface configuration plus the input position its successor scans.
struct WordStep {
    text: String,
    scanned: TapeSymbol,
    /// Head position after this word's rule fires; halting words keep 0.
    fetch: usize,
}

fn word_step(machine: &Dfst, state: StateId, head: usize, scanned: TapeSymbol) -> WordStep {
    let fetch = match machine.rule(state, scanned) {
        Some(rule) => (head as isize + rule.movement.offset()) as usize,
        None => 0,
    };
    WordStep { text: fst_word(machine, state, head, scanned), scanned, fetch }
}

pub fn compile_fst(machine: &Dfst, params: FstCompileParams) -> Result<CompiledModel, CompileError> {
    let n = params.max_input_length;
    if n == 0 {
        return Err(CompileError::InvalidParams("max input length must be ≥ 1".into()));
    }
    let alphabet = machine.input_alphabet();

    // Pass 1: replay the oracle on every admissible input, collecting the
    // words reached, the relation (fetched cell, word) → next word, and the
    // context size the longest run needs.
    let mut words: BTreeMap<String, (StateId, usize, TapeSymbol)> = BTreeMap::new();
    let mut relation: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut halting_words: BTreeSet<String> = BTreeSet::new();
    let mut window = 0usize;
    let mut max_sentence = 0usize;
    let inputs = enumerate_inputs_upto(alphabet, n);
    for input in &inputs {
        let result = fst_run(machine, input)?;
        if result.verdict != Verdict::Accept {
            return Err(CompileError::NotHalting {
                input: alphabet.format_string(input),
                verdict: result.verdict,
            });
        }
        let steps: Vec<WordStep> = result
            .trace
            .iter()
            .map(|c| {
                let scanned = scanned_at(input, c.head);
                words.entry(fst_word(machine, c.state, c.head, scanned)).or_insert((
                    c.state,
                    c.head,
                    scanned,
                ));
                word_step(machine, c.state, c.head, scanned)
            })
            .collect();
        let prompt_len = input.len() + 3;
        window = window.max(prompt_len + steps.len());
        max_sentence = max_sentence.max(steps.len());
        halting_words.insert(steps.last().expect("trace is never empty").text.clone());
        let first = &steps[0];
        insert_relation(
            &mut relation,
            prompt_token(alphabet, TapeSymbol::LeftEnd),
            BEGIN_TOKEN.to_string(),
            &first.text,
        )?;
        for pair in steps.windows(2) {
            let fetched = prompt_token(alphabet, pair[1].scanned);
            insert_relation(&mut relation, fetched, pair[0].text.clone(), &pair[1].text)?;
        }
    }

    // Pass 2: lay out embeddings and assemble the model.
    let bits_w = position_code_bits(window);
    let bits_head = ceil_log2(n + 4) as usize;
    let sym_width = alphabet.len() + 2;
    let map = FieldMap::builder()
        .field("bias", 1)
        .field("fetchable", 1)
        .field("kind", KIND_WIDTH)
        .field("symbol", sym_width)
        .field("state", machine.state_count())
        .field("head", bits_head)
        .field("scanned", sym_width)
        .field("target", bits_w)
        .build();
    let dimension = map.dimension();
    let dimension_bound =
        FST_DIM_C * (machine.state_count() + alphabet.len() + ceil_log2(n.max(2)) as usize);
    if dimension > dimension_bound {
        return Err(CompileError::DimensionBound { dimension, bound: dimension_bound });
    }

    let (mut texts, mut embeddings) = control_and_prompt_tokens(&map, alphabet);
    let prompt_token_count = texts.len() - 2;
    for (text, &(state, head, scanned)) in &words {
        texts.push(text.clone());
        embeddings.push(
            RowWriter::new(&map)
                .set("bias", 0, 1)
                .one_hot("kind", KIND_WORD)
                .one_hot("state", state.0 as usize)
                .code("head", &position_code(head, bits_head))
                .one_hot("scanned", scanned.ordinal())
                .code(
                    "target",
                    &position_code(word_step(machine, state, head, scanned).fetch, bits_w),
                )
                .finish(),
        );
    }
    let token_count = texts.len();
    let word_count = words.len();

    let mut emit_leaving = BTreeMap::new();
    for (text, (state, _head, scanned)) in &words {
        if let Some(rule) = machine.rule(*state, *scanned) {
            if !rule.output.is_empty() {
                let names: Vec<String> = rule
                    .output
                    .iter()
                    .map(|&s| machine.output_alphabet().name(s).to_string())
                    .collect();
                emit_leaving.insert(text.clone(), names);
            }
        }
    }

    let (model, successor_entries) = assemble(Assembly {
        map: &map,
        texts,
        embeddings,
        window,
        relation: &relation,
        terminal_texts: halting_words,
        pausing_texts: BTreeSet::new(),
        residual_fields: ["kind", "state", "head", "scanned"].map(String::from).into(),
        mode: ModelMode::Emitting,
        accept_texts: BTreeSet::new(),
        reject_texts: BTreeSet::new(),
        emit_leaving,
    })?;
    let report = CompileReport {
        token_count,
        word_count,
        prompt_token_count,
        window,
        dimension,
        dimension_bound,
        successor_entries,
        inputs_covered: inputs.len(),
        max_sentence_len: max_sentence,
    };
    Ok(CompiledModel { model, report })
}
