//! Machine-to-predictor compilation for space-bounded batch runs.
//!
//! The compiled vocabulary holds the control tokens, one prompt token per
//! input cell value, and one configuration word per machine configuration —
//! by default those reached on some input of length exactly `n`, under
//! [`VocabularyPolicy::ExhaustiveUpToK`] every configuration of size ≤ k.
//! A prompt spells the endmarked input followed by [`BEGIN_TOKEN`];
//! generation then replays the run one configuration word per step.
//!
//! A configuration word carries everything about the configuration except
//! the input itself: state, input head position and scanned cell, each work
//! tape's contents and head, and the advice cursor and scanned advice cell.
//! The one thing a step needs from outside the word is the input cell
//! scanned next, so the word's `target` field names the prompt position its
//! rule moves the input head to, and the successor table maps (fetched cell,
//! current word) to the next word.

use std::collections::{BTreeMap, BTreeSet};

use crate::advice::AdviceFunction;
use crate::alphabet::{Alphabet, Symbol, TapeSymbol};
use crate::llm::{FixedLlm, ModelMode, TokenId, position_code, position_code_bits};
use crate::run::{Verdict, ceil_log2};
use crate::tm::{InputView, MultiTapeTm, TapeState, TmConfiguration, apply_step, tm_run, tma_run};
use crate::words::{BEGIN_TOKEN, prompt_token, tm_word};

use super::assemble::{
    Assembly, assemble, control_and_prompt_tokens, endmarked_prompt, insert_relation,
};
use super::layout::{ADVICE_CURSOR_BITS, FieldMap, KIND_WIDTH, KIND_WORD, RowWriter, TM_DIM_C};
use super::{CompileError, CompileReport, CompiledModel, enumerate_inputs};

/// How the compiled model answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TmMode {
    /// The final word's state decides accept or reject.
    Acceptor,
    /// The answer is read off the output tape of the final word.
    Function,
}

/// Which configuration words enter the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabularyPolicy {
    /// Only configurations some length-n input actually reaches.
    ReachableOnly,
    /// Every configuration of size ≤ k, provided the vocabulary stays within
    /// `cap` tokens; `None` caps at c^k for the machine's step base c.
    ExhaustiveUpToK { cap: Option<usize> },
}

#[derive(Debug, Clone)]
pub struct TmCompileParams {
    /// The model simulates the machine on every input of length exactly n.
    pub input_length: usize,
    /// Work tape extent the machine must stay within; checked by a pre-pass
    /// over all covered inputs.
    pub space_bound: usize,
    /// Step-budget base for the pre-pass; defaults to the machine's.
    pub step_base: Option<u32>,
    pub advice: Option<AdviceFunction>,
    pub mode: TmMode,
    pub vocabulary_policy: VocabularyPolicy,
}

impl TmCompileParams {
    pub fn new(input_length: usize, space_bound: usize) -> Self {
        TmCompileParams {
            input_length,
            space_bound,
            step_base: None,
            advice: None,
            mode: TmMode::Acceptor,
            vocabulary_policy: VocabularyPolicy::ReachableOnly,
        }
    }
}

/// The prompt for one input: its endmarked cells as prompt tokens, then the
/// begin-generation token.
pub fn tm_prompt(
    machine: &MultiTapeTm,
    model: &FixedLlm,
    input: &[Symbol],
) -> Result<Vec<TokenId>, CompileError> {
    endmarked_prompt(machine.input_alphabet(), model, input)
}

/// The embedding layout for configuration words at input length `n`, space
/// bound `k`, and context `window`. After the fields every compiled model
/// shares (`bias`, `fetchable`, `kind`, `symbol`) come the state one-hot,
/// the input head position code `inpos` and scanned-cell one-hot `inscan`,
/// then per work tape `t` the field `w{t}` of k cell one-hots and the head
/// position code `h{t}`, the advice cursor code `advcur` (reserved whether
/// or not the machine reads advice, so declaring advice widens embeddings by
/// exactly the `advsym` scanned-cell one-hot that follows it), and the fetch
/// `target`.
pub fn tm_field_map(machine: &MultiTapeTm, n: usize, k: usize, window: usize) -> FieldMap {
    let sym_width = machine.input_alphabet().len() + 2;
    let gamma = machine.work_alphabet().len();
    let mut b = FieldMap::builder()
        .field("bias", 1)
        .field("fetchable", 1)
        .field("kind", KIND_WIDTH)
        .field("symbol", sym_width)
        .field("state", machine.state_count())
        .field("inpos", ceil_log2(n + 4) as usize)
        .field("inscan", sym_width);
    for t in 0..machine.tape_count() {
        b = b
            .field(format!("w{t}"), k * gamma)
            .field(format!("h{t}"), ceil_log2(k + 1) as usize);
    }
    b = b.field("advcur", ADVICE_CURSOR_BITS);
    if let Some(a) = machine.advice_alphabet() {
        b = b.field("advsym", a.len() + 1);
    }
    b.field("target", position_code_bits(window)).build()
}

pub fn compile_tm(
    machine: &MultiTapeTm,
    params: &TmCompileParams,
) -> Result<CompiledModel, CompileError> {
    let n = params.input_length;
    let k = params.space_bound;
    if k == 0 {
        return Err(CompileError::InvalidParams("space bound must be ≥ 1".into()));
    }
    if params.advice.is_some() && !machine.uses_advice() {
        return Err(CompileError::InvalidParams(
            "advice supplied for a machine without an advice alphabet".into(),
        ));
    }
    let advice: Vec<Symbol> = match &params.advice {
        Some(f) => f.string_for(n)?.to_vec(),
        None => Vec::new(),
    };
    let alphabet = machine.input_alphabet();

    // Pre-pass: run the oracle on every covered input, checking the space
    // bound and collecting the words reached, the relation (fetched cell,
    // word) → next word, and the context size the longest run needs.
    let inputs = enumerate_inputs(alphabet, n);
    let mut words: BTreeMap<String, TmConfiguration> = BTreeMap::new();
    let mut relation: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut window = 0usize;
    let mut max_sentence = 0usize;
    for input in &inputs {
        let result = match &params.advice {
            Some(f) => tma_run(machine, f, input, k, params.step_base)?,
            None => tm_run(machine, input, k, params.step_base)?,
        };
        match result.verdict {
            Verdict::Accept | Verdict::Reject => {}
            Verdict::SpaceExceeded => {
                return Err(CompileError::SpaceBoundViolated {
                    input: alphabet.format_string(input),
                    used: result.space,
                    bound: k,
                });
            }
            verdict => {
                return Err(CompileError::NotHalting {
                    input: alphabet.format_string(input),
                    verdict,
                });
            }
        }
        let texts: Vec<String> =
            result.trace.iter().map(|c| tm_word(machine, c, false)).collect();
        window = window.max(input.len() + 3 + texts.len());
        max_sentence = max_sentence.max(texts.len());
        insert_relation(
            &mut relation,
            prompt_token(alphabet, TapeSymbol::LeftEnd),
            BEGIN_TOKEN.to_string(),
            &texts[0],
        )?;
        for (i, text) in texts.iter().enumerate() {
            words.entry(text.clone()).or_insert_with(|| result.trace[i].clone());
            if i + 1 < texts.len() {
                let fetched = prompt_token(alphabet, result.trace[i + 1].scanned_input);
                insert_relation(&mut relation, fetched, text.clone(), &texts[i + 1])?;
            }
        }
    }

    if let VocabularyPolicy::ExhaustiveUpToK { cap } = params.vocabulary_policy {
        let c = params.step_base.unwrap_or_else(|| machine.default_step_base());
        let cap = cap.unwrap_or_else(|| (c as usize).saturating_pow(k as u32));
        extend_exhaustive(machine, n, k, &advice, cap, &mut words, &mut relation)?;
    }
    for cfg in words.values() {
        if cfg.advice_cursor >= 1 << ADVICE_CURSOR_BITS {
            return Err(CompileError::InvalidParams(format!(
                "advice cursor {} does not fit the {ADVICE_CURSOR_BITS}-bit cursor code",
                cfg.advice_cursor
            )));
        }
    }

    let map = tm_field_map(machine, n, k, window);
    let dimension = map.dimension();
    let dimension_bound = TM_DIM_C * k;
    if dimension > dimension_bound {
        return Err(CompileError::DimensionBound { dimension, bound: dimension_bound });
    }

    let (mut texts, mut embeddings) = control_and_prompt_tokens(&map, alphabet);
    let prompt_token_count = texts.len() - 2;
    for (text, cfg) in &words {
        texts.push(text.clone());
        embeddings.push(word_row(machine, &map, k, cfg));
    }
    let token_count = texts.len();
    let word_count = words.len();

    let mut terminal_texts = BTreeSet::new();
    let mut accept_texts = BTreeSet::new();
    let mut reject_texts = BTreeSet::new();
    for (text, cfg) in &words {
        if machine.is_terminal(cfg.state) {
            terminal_texts.insert(text.clone());
            if cfg.state == machine.accept_state() {
                accept_texts.insert(text.clone());
            } else {
                reject_texts.insert(text.clone());
            }
        }
    }
    let mode = match params.mode {
        TmMode::Acceptor => ModelMode::Acceptor,
        TmMode::Function => ModelMode::Function {
            tape: machine.output_tape(),
            blank: machine.work_alphabet().name(machine.blank()).to_string(),
        },
    };

    let (model, successor_entries) = assemble(Assembly {
        map: &map,
        texts,
        embeddings,
        window,
        relation: &relation,
        terminal_texts,
        pausing_texts: BTreeSet::new(),
        residual_fields: residual_fields(machine),
        mode,
        accept_texts,
        reject_texts,
        emit_leaving: BTreeMap::new(),
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

/// Current-word fields carried into successor keys: everything that
/// distinguishes configurations.
fn residual_fields(machine: &MultiTapeTm) -> Vec<String> {
    let mut names: Vec<String> =
        ["kind", "state", "inpos", "inscan"].map(String::from).into();
    for t in 0..machine.tape_count() {
        names.push(format!("w{t}"));
        names.push(format!("h{t}"));
    }
    names.push("advcur".into());
    if machine.advice_alphabet().is_some() {
        names.push("advsym".into());
    }
    names
}

fn word_row(machine: &MultiTapeTm, map: &FieldMap, k: usize, cfg: &TmConfiguration) -> Vec<i64> {
    let blank = machine.blank();
    let gamma = machine.work_alphabet().len();
    let mut row = RowWriter::new(map)
        .set("bias", 0, 1)
        .one_hot("kind", KIND_WORD)
        .one_hot("state", cfg.state.0 as usize)
        .code("inpos", &position_code(cfg.input_pos, map.width("inpos")))
        .one_hot("inscan", cfg.scanned_input.ordinal());
    for (t, tape) in cfg.tapes.iter().enumerate() {
        let cells = format!("w{t}");
        for i in 0..k {
            let cell = tape.cells.get(i).copied().unwrap_or(blank);
            row = row.set(&cells, i * gamma + cell.0 as usize, 1);
        }
        let head = format!("h{t}");
        row = row.code(&head, &position_code(tape.head, map.width(&head)));
    }
    row = row.code("advcur", &position_code(cfg.advice_cursor, ADVICE_CURSOR_BITS));
    if map.has("advsym") {
        let slot = cfg.scanned_advice.map_or(0, |s| 1 + s.0 as usize);
        row = row.one_hot("advsym", slot);
    }
    let target = fetch_target(machine, cfg);
    row.code("target", &position_code(target, map.width("target"))).finish()
}

/// The input position the word's rule moves the head to; terminal words keep
/// a harmless 0, their successors all being the end fixpoint.
fn fetch_target(machine: &MultiTapeTm, cfg: &TmConfiguration) -> usize {
    if machine.is_terminal(cfg.state) {
        return 0;
    }
    let blank = machine.blank();
    let scanned_work: Vec<Symbol> =
        cfg.tapes.iter().map(|t| t.cells.get(t.head).copied().unwrap_or(blank)).collect();
    let key = (cfg.state, cfg.scanned_input, scanned_work, cfg.scanned_advice);
    let rule = machine.rule(&key).expect("transition table is total by construction");
    (cfg.input_pos as isize + rule.input_move.offset()) as usize
}

/// Admissible cells at an endmarked input position.
fn cells_at(alphabet: &Alphabet, n: usize, pos: usize) -> Vec<TapeSymbol> {
    if pos == 0 {
        vec![TapeSymbol::LeftEnd]
    } else if pos == n + 1 {
        vec![TapeSymbol::RightEnd]
    } else {
        alphabet.symbols().map(TapeSymbol::Plain).collect()
    }
}

fn extend_exhaustive(
    machine: &MultiTapeTm,
    n: usize,
    k: usize,
    advice: &[Symbol],
    cap: usize,
    words: &mut BTreeMap<String, TmConfiguration>,
    relation: &mut BTreeMap<(String, String), String>,
) -> Result<(), CompileError> {
    let predicted = exhaustive_count(machine, n, k, advice.len());
    if predicted > cap {
        return Err(CompileError::VocabularyBudgetExceeded { size: predicted, cap });
    }
    for cfg in enumerate_configs(machine, n, k, advice) {
        words.entry(tm_word(machine, &cfg, false)).or_insert(cfg);
    }
    if words.len() > cap {
        return Err(CompileError::VocabularyBudgetExceeded { size: words.len(), cap });
    }
    // One edge per (word, admissible next cell). A successor outside the
    // vocabulary would need more than k cells or advice past the string, so
    // no valid run reaches it; its edge is dropped.
    let snapshot: Vec<(String, TmConfiguration)> =
        words.iter().map(|(t, c)| (t.clone(), c.clone())).collect();
    for (text, cfg) in &snapshot {
        if machine.is_terminal(cfg.state) {
            continue;
        }
        let (stepped, rule) = apply_step(machine, cfg, InputView::Port, advice);
        let pos = (cfg.input_pos as isize + rule.input_move.offset()) as usize;
        for cell in cells_at(machine.input_alphabet(), n, pos) {
            let mut next = stepped.clone();
            next.input_pos = pos;
            next.scanned_input = cell;
            if next.size() > k {
                continue;
            }
            let next_text = tm_word(machine, &next, false);
            if !words.contains_key(&next_text) {
                continue;
            }
            insert_relation(
                relation,
                prompt_token(machine.input_alphabet(), cell),
                text.clone(),
                &next_text,
            )?;
        }
    }
    Ok(())
}

/// The number of configurations `enumerate_configs` yields, computed without
/// materializing them.
/// Joint count of work tape states of extent ≤ k: trailing-blank-free
/// contents (1 + Σ (γ-1)·γ^(len-1)) times k head positions, per tape.
pub(super) fn tape_combination_count(machine: &MultiTapeTm, k: usize) -> usize {
    let gamma = machine.work_alphabet().len();
    let mut contents: usize = 1;
    let mut shorter: usize = 1;
    for _ in 1..=k {
        contents = contents.saturating_add(shorter.saturating_mul(gamma - 1));
        shorter = shorter.saturating_mul(gamma);
    }
    let per_tape = contents.saturating_mul(k);
    let mut tapes: usize = 1;
    for _ in 0..machine.tape_count() {
        tapes = tapes.saturating_mul(per_tape);
    }
    tapes
}

fn exhaustive_count(machine: &MultiTapeTm, n: usize, k: usize, advice_len: usize) -> usize {
    let tapes = tape_combination_count(machine, k);
    let input_cells = 2 + n.saturating_mul(machine.input_alphabet().len());
    let cursors = if machine.uses_advice() { advice_len + 1 } else { 1 };
    machine
        .state_count()
        .saturating_mul(input_cells)
        .saturating_mul(tapes)
        .saturating_mul(cursors)
}

fn enumerate_configs(
    machine: &MultiTapeTm,
    n: usize,
    k: usize,
    advice: &[Symbol],
) -> Vec<TmConfiguration> {
    let tapes = enumerate_tapes(machine, k);
    let mut combos: Vec<Vec<TapeState>> = vec![Vec::new()];
    for _ in 0..machine.tape_count() {
        let mut next = Vec::with_capacity(combos.len() * tapes.len());
        for combo in &combos {
            for tape in &tapes {
                let mut c = combo.clone();
                c.push(tape.clone());
                next.push(c);
            }
        }
        combos = next;
    }
    let cursors: Vec<(usize, Option<Symbol>)> = if machine.uses_advice() {
        (0..=advice.len()).map(|t| (t, advice.get(t).copied())).collect()
    } else {
        vec![(0, None)]
    };
    let mut out = Vec::new();
    for state in machine.state_ids() {
        for pos in 0..=n + 1 {
            for cell in cells_at(machine.input_alphabet(), n, pos) {
                for tapes in &combos {
                    for &(cursor, scanned) in &cursors {
                        out.push(TmConfiguration {
                            state,
                            input_pos: pos,
                            scanned_input: cell,
                            tapes: tapes.clone(),
                            advice_cursor: cursor,
                            scanned_advice: scanned,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Every single-tape state of extent ≤ k: trailing-blank-free contents with
/// the head anywhere on the first k cells.
fn enumerate_tapes(machine: &MultiTapeTm, k: usize) -> Vec<TapeState> {
    let blank = machine.blank();
    let mut exact: Vec<Vec<Symbol>> = vec![Vec::new()];
    let mut canonical: Vec<Vec<Symbol>> = vec![Vec::new()];
    for _ in 1..=k {
        let mut longer = Vec::new();
        for prefix in &exact {
            for s in machine.work_alphabet().symbols() {
                let mut cells = prefix.clone();
                cells.push(s);
                longer.push(cells);
            }
        }
        exact = longer;
        canonical.extend(exact.iter().filter(|c| c.last() != Some(&blank)).cloned());
    }
    canonical
        .into_iter()
        .flat_map(|cells| (0..k).map(move |head| TapeState { cells: cells.clone(), head }))
        .collect()
}
