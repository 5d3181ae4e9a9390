//! tokensim: machines and the fixed next-token predictors that simulate them.
//!
//! The crate has three layers:
//!
//! * oracle machine models: deterministic two-way transducers ([`fst`]),
//!   deterministic multi-tape Turing machines with optional advice ([`tm`]),
//!   and their interactive stream form ([`stream`]);
//! * a fixed decoder-only predictor over exact integer arithmetic ([`llm`]),
//!   together with compilers in both directions ([`compile`]), evolving model
//!   lineages ([`lineage`]), and a description-driven interpreter
//!   ([`bridge`]);
//! * a harness: text formats ([`textfmt`]), a machine corpus ([`corpus`]),
//!   and equivalence suites ([`suites`]).

pub mod advice;
pub mod alphabet;
pub mod compile;
pub mod fst;
pub mod lineage;
pub mod llm;
pub mod run;
pub mod stream;
pub mod tm;
pub mod words;

pub use advice::AdviceFunction;
pub use alphabet::{Alphabet, Move, Symbol, TapeSymbol};
pub use compile::{
    CompileError, CompileReport, CompiledModel, Divergence, EquivalenceReport, FstCompileParams,
    ReferenceRun, StreamMember, TmCompileParams, TmMode, VocabularyPolicy, compile_fst,
    compile_stream_member, compile_tm, extract_fst, verify_equivalence, verify_fst_model,
    verify_tm_model,
};
pub use fst::{Dfst, DfstBuilder, FstConfiguration, StateId, fst_run, fst_run_str};
pub use lineage::{
    Lineage, LineageError, LineageRunReport, ReconstructionEvent, Trigger, process_stream,
    process_stream_doubling, reconstruct,
};
pub use llm::{
    Answer, FixedLlm, GenerationTrace, LlmError, TokenId, Vocabulary, parse_description,
    serialize_description,
};
pub use run::{RunResult, Verdict, ceil_log2, step_bound};
pub use stream::{KSchedule, StreamEvent, StreamOutcome, StreamRunResult, itma_run_stream};
pub use tm::{
    AdviceMove, MultiTapeTm, TapeState, TmBuilder, TmConfiguration, tm_run, tm_step, tma_run,
};
