//! The back half shared by the compilers: once a compiler has enumerated its
//! vocabulary, laid out embeddings, and tabulated the successor relation,
//! everything else — attention matrices, successor keys, totalization onto
//! the end fixpoint, decode tables — is the same construction.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::alphabet::{Alphabet, Symbol, TapeSymbol, scanned_at};
use crate::llm::{
    AttentionSpec, DecodeInfo, FixedLlm, IntMatrix, ModelMode, TokenId, Vocabulary, position_code,
    position_code_bits,
};
use crate::words::{BEGIN_TOKEN, END_TOKEN, prompt_token};

use super::CompileError;
use super::layout::{ATTEND_BONUS, FieldMap, KIND_END, KIND_GO, KIND_PROMPT, RowWriter};

/// The prompt for one endmarked input: its cells as prompt tokens, then the
/// begin-generation token.
pub(super) fn endmarked_prompt(
    alphabet: &Alphabet,
    model: &FixedLlm,
    input: &[Symbol],
) -> Result<Vec<TokenId>, CompileError> {
    let mut prompt = Vec::with_capacity(input.len() + 3);
    for pos in 0..input.len() + 2 {
        let text = prompt_token(alphabet, scanned_at(input, pos));
        prompt.push(model.vocabulary().require(&text)?);
    }
    prompt.push(model.vocabulary().require(BEGIN_TOKEN)?);
    Ok(prompt)
}

/// The control tokens and per-cell prompt tokens every compiled model
/// starts from, paired with their embeddings.
pub(super) fn control_and_prompt_tokens(
    map: &FieldMap,
    alphabet: &Alphabet,
) -> (Vec<String>, Vec<Vec<i64>>) {
    let bits_w = map.width("target");
    let base = |kind: usize| {
        RowWriter::new(map)
            .set("bias", 0, 1)
            .one_hot("kind", kind)
            .code("target", &position_code(0, bits_w))
    };
    let mut texts = vec![BEGIN_TOKEN.to_string(), END_TOKEN.to_string()];
    let mut embeddings = vec![base(KIND_GO).finish(), base(KIND_END).finish()];
    for cell in TapeSymbol::enumerate(alphabet) {
        texts.push(prompt_token(alphabet, cell));
        embeddings.push(
            base(KIND_PROMPT)
                .set("fetchable", 0, 1)
                .one_hot("symbol", cell.ordinal())
                .finish(),
        );
    }
    (texts, embeddings)
}

pub(super) fn insert_relation(
    relation: &mut BTreeMap<(String, String), String>,
    fetched: String,
    current: String,
    next: &str,
) -> Result<(), CompileError> {
    match relation.insert((fetched.clone(), current.clone()), next.to_string()) {
        Some(previous) if previous != next => {
            Err(CompileError::SuccessorConflict { current, fetched })
        }
        _ => Ok(()),
    }
}

fn check_injective(texts: &[String], embeddings: &[Vec<i64>]) -> Result<(), CompileError> {
    let mut seen: HashMap<&[i64], &str> = HashMap::new();
    for (text, row) in texts.iter().zip(embeddings) {
        if let Some(other) = seen.insert(row.as_slice(), text) {
            return Err(CompileError::EmbeddingCollision { a: other.to_string(), b: text.clone() });
        }
    }
    Ok(())
}

/// Everything a compiler hands over for final model construction.
pub(super) struct Assembly<'a> {
    pub map: &'a FieldMap,
    pub texts: Vec<String>,
    pub embeddings: Vec<Vec<i64>>,
    pub window: usize,
    /// (fetched token text, current token text) → next token text.
    pub relation: &'a BTreeMap<(String, String), String>,
    /// Words that stop generation for good; they and the end token map
    /// every fetch onto the end fixpoint.
    pub terminal_texts: BTreeSet<String>,
    /// Words that stop generation but can be prompted onward: only the
    /// successors the relation names exist, everything else stays missing.
    pub pausing_texts: BTreeSet<String>,
    /// Current-token fields carried into successor keys, in layout order.
    pub residual_fields: Vec<String>,
    pub mode: ModelMode,
    pub accept_texts: BTreeSet<String>,
    pub reject_texts: BTreeSet<String>,
    pub emit_leaving: BTreeMap<String, Vec<String>>,
}

/// Builds the predictor; returns it with the successor table size.
pub(super) fn assemble(a: Assembly<'_>) -> Result<(FixedLlm, usize), CompileError> {
    check_injective(&a.texts, &a.embeddings)?;
    let vocabulary = Vocabulary::new(a.texts.clone())?;
    let map = a.map;
    let dimension = map.dimension();
    let bits_w = position_code_bits(a.window);
    let full = dimension + bits_w;

    let mut query = IntMatrix::zero(1 + bits_w, full);
    let mut key = IntMatrix::zero(1 + bits_w, full);
    query.set(0, map.range("bias").start, 1);
    key.set(0, map.range("fetchable").start, ATTEND_BONUS);
    for b in 0..bits_w {
        query.set(1 + b, map.range("target").start + b, 1);
        key.set(1 + b, dimension + b, 1);
    }
    let value = map.projection(&["kind", "symbol"], full);
    let residual_names: Vec<&str> = a.residual_fields.iter().map(String::as_str).collect();
    let residual = map.projection(&residual_names, full);

    // The value and residual projections ignore the position-code columns, so
    // successor keys can be computed from zero-padded embeddings.
    let padded = |text: &str| -> Vec<i64> {
        let mut x = a.embeddings[vocabulary.id(text).expect("compiled token").index()].clone();
        x.resize(full, 0);
        x
    };
    let mut successor: HashMap<Vec<i64>, TokenId> = HashMap::new();
    for ((fetched, current), next) in a.relation {
        let mut k = value.apply(&padded(fetched));
        k.extend(residual.apply(&padded(current)));
        successor.insert(k, vocabulary.require(next)?);
    }
    let end_id = vocabulary.require(END_TOKEN)?;
    let fetched_payloads: BTreeSet<Vec<i64>> =
        a.texts.iter().map(|t| value.apply(&padded(t))).collect();
    for terminal in a.terminal_texts.iter().map(String::as_str).chain([END_TOKEN]) {
        let r = residual.apply(&padded(terminal));
        for payload in &fetched_payloads {
            let mut k = payload.clone();
            k.extend(r.iter().copied());
            successor.entry(k).or_insert(end_id);
        }
    }

    let stop_tokens: BTreeSet<TokenId> = a
        .terminal_texts
        .iter()
        .chain(&a.pausing_texts)
        .map(|w| vocabulary.require(w))
        .collect::<Result<_, _>>()?;
    let to_ids = |texts: &BTreeSet<String>| -> Result<BTreeSet<TokenId>, CompileError> {
        texts.iter().map(|t| Ok(vocabulary.require(t)?)).collect()
    };
    let decode = DecodeInfo {
        accept_tokens: to_ids(&a.accept_texts)?,
        reject_tokens: to_ids(&a.reject_texts)?,
        emit_leaving: a
            .emit_leaving
            .iter()
            .map(|(t, names)| Ok((vocabulary.require(t)?, names.clone())))
            .collect::<Result<_, CompileError>>()?,
    };

    let successor_entries = successor.len();
    let model = FixedLlm::new(
        vocabulary,
        a.embeddings,
        a.window,
        AttentionSpec { query, key, value, residual },
        successor,
        stop_tokens,
        end_id,
        a.mode,
        decode,
    )?;
    Ok((model, successor_entries))
}
