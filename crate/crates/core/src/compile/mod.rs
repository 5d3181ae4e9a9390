//! Compilers between machines and fixed predictors.
//!
//! [`compile_fst`] and [`compile_tm`] build a predictor whose generated
//! sentences replay a machine's configuration traces word for word;
//! [`extract_fst`] goes the other way, reading a two-way transducer off a
//! predictor's reachable decoder states. [`verify`] holds the equivalence
//! drivers the test suites and the CLI share.
//!
//! A compiled model serves exactly one machine and parameter set: the
//! vocabulary, window, and successor table are sized to the declared input
//! set, and the compiler fails rather than emit a model it could not size.

pub mod layout;

mod assemble;
mod extract;
mod fst;
mod stream;
mod tm;
mod verify;

pub use extract::extract_fst;
pub use fst::{FstCompileParams, compile_fst, fst_prompt};
pub use stream::{StreamMember, compile_stream_member, stream_field_map};
pub use tm::{TmCompileParams, TmMode, VocabularyPolicy, compile_tm, tm_field_map, tm_prompt};
pub use verify::{
    Divergence, EquivalenceReport, ReferenceRun, verify_equivalence, verify_fst_model,
    verify_tm_model,
};

use thiserror::Error;

use crate::advice::AdviceError;
use crate::alphabet::{Alphabet, AlphabetError, Symbol};
use crate::fst::FstError;
use crate::llm::{FixedLlm, LlmError};
use crate::run::Verdict;
use crate::tm::TmError;
use crate::words::WordError;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompileError {
    #[error(transparent)]
    Alphabet(#[from] AlphabetError),
    #[error(transparent)]
    Fst(#[from] FstError),
    #[error(transparent)]
    Tm(#[from] TmError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Advice(#[from] AdviceError),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error("bad compile parameters: {0}")]
    InvalidParams(String),
    #[error("machine does not halt on input {input:?}: run ended {verdict}")]
    NotHalting { input: String, verdict: Verdict },
    #[error("space bound violated on input {input:?}: used {used}, bound {bound}")]
    SpaceBoundViolated { input: String, used: usize, bound: usize },
    #[error("vocabulary of {size} tokens exceeds the cap of {cap}")]
    VocabularyBudgetExceeded { size: usize, cap: usize },
    #[error("embedding dimension {dimension} exceeds the declared bound {bound}")]
    DimensionBound { dimension: usize, bound: usize },
    #[error("tokens {a:?} and {b:?} received identical embeddings")]
    EmbeddingCollision { a: String, b: String },
    #[error("conflicting successors for token {current:?} fetching {fetched:?}")]
    SuccessorConflict { current: String, fetched: String },
    #[error("decoder state enumeration exceeded the cap of {cap}")]
    StateBudgetExceeded { cap: usize },
}

/// Construction statistics, reported next to the model so tests and the CLI
/// can check counts independently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileReport {
    pub token_count: usize,
    /// Tokens rendering configurations (rule words or configuration words).
    pub word_count: usize,
    pub prompt_token_count: usize,
    pub window: usize,
    pub dimension: usize,
    pub dimension_bound: usize,
    pub successor_entries: usize,
    pub inputs_covered: usize,
    /// Longest generated sentence over the covered inputs.
    pub max_sentence_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledModel {
    pub model: FixedLlm,
    pub report: CompileReport,
}

/// Every word of the given length over the alphabet, in lexicographic symbol
/// order.
pub fn enumerate_inputs(alphabet: &Alphabet, length: usize) -> Vec<Vec<Symbol>> {
    let symbols: Vec<Symbol> = alphabet.symbols().collect();
    let mut out = vec![Vec::new()];
    for _ in 0..length {
        let mut next = Vec::with_capacity(out.len() * symbols.len());
        for prefix in &out {
            for &s in &symbols {
                let mut word = prefix.clone();
                word.push(s);
                next.push(word);
            }
        }
        out = next;
    }
    out
}

/// `enumerate_inputs` for every length up to and including `max_length`.
pub fn enumerate_inputs_upto(alphabet: &Alphabet, max_length: usize) -> Vec<Vec<Symbol>> {
    (0..=max_length).flat_map(|m| enumerate_inputs(alphabet, m)).collect()
}
