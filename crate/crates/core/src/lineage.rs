//! Lineages: sequences of stream members carrying one interactive machine
//! across a stream, growing the space allowance on demand.
//!
//! The first member is compiled from the machine's initial configuration
//! with the first schedule entry as its allowance. Before each epoch the
//! driver looks one step ahead: if the successor of the resume configuration
//! outgrows the current member, or the advice string for the new prefix
//! length differs from the one the member was compiled with, it reconstructs
//! — compiles the next member from the switch configuration ρ, with the next
//! schedule entry and the current advice — and resumes there. A member can
//! also run out of room mid-epoch, when generation reaches a configuration
//! whose successor was deliberately left out of the vocabulary; ρ is then
//! the last generated word, and the new member finishes the epoch.
//!
//! Reconstruction never loses or repeats a step: ρ is the last configuration
//! that fits, the new member's prompt carries it, and its first generated
//! word is ρ's successor.

use std::collections::HashSet;

use thiserror::Error;

use crate::advice::{AdviceError, AdviceFunction};
use crate::alphabet::{AlphabetError, Symbol, TapeSymbol};
use crate::compile::{CompileError, StreamMember, compile_stream_member};
use crate::llm::LlmError;
use crate::run::Verdict;
use crate::stream::StreamOutcome;
use crate::tm::{InputView, MultiTapeTm, TmConfiguration, TmError, apply_step};
use crate::words::{WordError, parse_tm_word, tm_word};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LineageError {
    #[error(transparent)]
    Alphabet(#[from] AlphabetError),
    #[error(transparent)]
    Advice(#[from] AdviceError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Tm(#[from] TmError),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error("bad schedule: {0}")]
    InvalidSchedule(String),
    #[error("space bound {new_k} does not grow the current bound {old_k}")]
    BoundNotIncreased { old_k: usize, new_k: usize },
    #[error("a trigger at stream position {position} found no remaining schedule entry")]
    ScheduleExhausted { position: usize },
}

/// Why a reconstruction fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    SpaceExceeded,
    AdviceChanged,
    Both,
}

/// One member handoff: the switch configuration and the bound growth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconstructionEvent {
    pub trigger: Trigger,
    /// Word of the last configuration that fits the old member; the next
    /// member is compiled from it.
    pub switch_configuration: String,
    /// 1-based stream position of the epoch the trigger interrupted.
    pub stream_position: usize,
    pub old_k: usize,
    pub new_k: usize,
}

/// The members built along one stream, oldest first, with the machine and
/// advice they simulate.
#[derive(Debug, Clone)]
pub struct Lineage {
    pub machine: MultiTapeTm,
    pub advice: AdviceFunction,
    pub members: Vec<StreamMember>,
    pub log: Vec<ReconstructionEvent>,
}

impl Lineage {
    /// The space allowances member by member; strictly increasing.
    pub fn bounds(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.space_bound).collect()
    }

    pub fn current(&self) -> &StreamMember {
        self.members.last().expect("a lineage has at least one member")
    }
}

#[derive(Debug, Clone)]
pub struct LineageRunReport {
    pub lineage: Lineage,
    /// Output symbols per input, concatenated across members at seams.
    pub chunks: Vec<Vec<Symbol>>,
    /// Generated word texts per epoch, likewise spanning seams.
    pub sentences: Vec<Vec<String>>,
    pub outcome: StreamOutcome,
    /// 1-based index of the member that ended the run.
    pub final_member: usize,
}

/// Compiles the member that takes over from `current` at the configuration
/// behind `switch_word`, under a strictly larger space bound and the advice
/// in force at the switch.
pub fn reconstruct(
    machine: &MultiTapeTm,
    current: &StreamMember,
    switch_word: &str,
    new_k: usize,
    advice: &[Symbol],
) -> Result<StreamMember, LineageError> {
    if new_k <= current.space_bound {
        return Err(LineageError::BoundNotIncreased { old_k: current.space_bound, new_k });
    }
    let rho = parse_tm_word(machine, switch_word, true)?;
    Ok(compile_stream_member(machine, advice, new_k, &rho)?)
}

/// Runs `stream` through a lineage whose members take their bounds from
/// `schedule`: the first entry sizes the first member and each trigger
/// consumes the next entry.
pub fn process_stream(
    machine: &MultiTapeTm,
    advice: &AdviceFunction,
    stream: &[Symbol],
    schedule: &[usize],
) -> Result<LineageRunReport, LineageError> {
    let Some((&first_k, rest)) = schedule.split_first() else {
        return Err(LineageError::InvalidSchedule(
            "the schedule needs at least the first member's bound".into(),
        ));
    };
    if !schedule.windows(2).all(|w| w[0] < w[1]) {
        return Err(LineageError::InvalidSchedule("bounds must be strictly increasing".into()));
    }
    let mut rest = rest.iter().copied();
    drive(machine, advice, stream, first_k, |_| rest.next())
}

/// [`process_stream`] with an implicit schedule that doubles the bound at
/// every trigger, up to `k_limit`.
pub fn process_stream_doubling(
    machine: &MultiTapeTm,
    advice: &AdviceFunction,
    stream: &[Symbol],
    first_k: usize,
    k_limit: usize,
) -> Result<LineageRunReport, LineageError> {
    if first_k == 0 || k_limit < first_k {
        return Err(LineageError::InvalidSchedule(format!(
            "doubling from {first_k} up to {k_limit} allows no member",
        )));
    }
    drive(machine, advice, stream, first_k, |old_k| {
        let next = old_k.saturating_mul(2);
        (next <= k_limit).then_some(next)
    })
}

/// How one member's leg of an epoch ended.
enum LegEnd {
    Await(TmConfiguration),
    Halted(Verdict),
    Diverged,
    /// The next configuration outgrows the member; ρ is the last that fits.
    OutOfSpace(TmConfiguration),
}

fn drive(
    machine: &MultiTapeTm,
    advice: &AdviceFunction,
    stream: &[Symbol],
    first_k: usize,
    mut next_bound: impl FnMut(usize) -> Option<usize>,
) -> Result<LineageRunReport, LineageError> {
    machine.await_state().ok_or(TmError::MissingDeclaration("await"))?;
    for &s in stream {
        machine.input_alphabet().check(s)?;
    }
    if machine.advice_alphabet().is_none() && !advice.is_empty_everywhere() {
        return Err(TmError::AdviceNotSupported.into());
    }
    advice.validate_interactive(stream.len())?;

    let advice0 = advice.string_for(0)?.to_vec();
    let first = compile_stream_member(machine, &advice0, first_k, &machine.initial_config(&advice0))?;
    let mut config = first.start.clone();
    let mut lineage = Lineage {
        machine: machine.clone(),
        advice: advice.clone(),
        members: vec![first],
        log: Vec::new(),
    };
    let mut chunks = Vec::new();
    let mut sentences = Vec::new();
    let mut outcome = StreamOutcome::Completed;

    'stream: for (idx, &symbol) in stream.iter().enumerate() {
        let epoch = idx + 1;
        let advice_now = advice.string_for(epoch)?;
        let mut resume = config.clone();
        resume.scanned_input = TapeSymbol::Plain(symbol);
        resume.scanned_advice = advice_now.get(resume.advice_cursor).copied();

        // Boundary triggers, checked before the member is prompted: compare
        // the advice strings and look one step ahead for the space bound.
        let member = lineage.current();
        let advice_changed = member.advice != advice_now;
        let space_exceeded = !machine.is_terminal(resume.state)
            && apply_step(machine, &resume, InputView::Port, advice_now).0.size()
                > member.space_bound;
        if advice_changed || space_exceeded {
            let trigger = match (space_exceeded, advice_changed) {
                (true, true) => Trigger::Both,
                (true, false) => Trigger::SpaceExceeded,
                (false, true) => Trigger::AdviceChanged,
                (false, false) => unreachable!(),
            };
            grow(&mut lineage, &mut next_bound, trigger, &resume, epoch, advice_now)?;
        }

        let mut chunk = Vec::new();
        let mut sentence = Vec::new();
        let mut seen = HashSet::from([tm_word(machine, &resume, true)]);
        let mut leg_start = resume;
        let end = loop {
            match epoch_leg(machine, lineage.current(), &leg_start, &mut seen, &mut sentence, &mut chunk)? {
                LegEnd::OutOfSpace(rho) => {
                    grow(&mut lineage, &mut next_bound, Trigger::SpaceExceeded, &rho, epoch, advice_now)?;
                    leg_start = rho;
                }
                end => break end,
            }
        };
        chunks.push(chunk);
        sentences.push(sentence);
        match end {
            LegEnd::Await(cfg) => config = cfg,
            LegEnd::Halted(verdict) => {
                outcome = StreamOutcome::Halted { verdict, epoch };
                break 'stream;
            }
            LegEnd::Diverged => {
                outcome = StreamOutcome::Diverged { epoch };
                break 'stream;
            }
            LegEnd::OutOfSpace(_) => unreachable!("space exhaustion is handled in the leg loop"),
        }
    }

    let final_member = lineage.members.len();
    Ok(LineageRunReport { lineage, chunks, sentences, outcome, final_member })
}

/// Consumes the next schedule entry and appends the reconstructed member.
fn grow(
    lineage: &mut Lineage,
    next_bound: &mut impl FnMut(usize) -> Option<usize>,
    trigger: Trigger,
    rho: &TmConfiguration,
    position: usize,
    advice_now: &[Symbol],
) -> Result<(), LineageError> {
    let old_k = lineage.current().space_bound;
    let new_k = next_bound(old_k).ok_or(LineageError::ScheduleExhausted { position })?;
    let switch_configuration = tm_word(&lineage.machine, rho, true);
    let member =
        reconstruct(&lineage.machine, lineage.current(), &switch_configuration, new_k, advice_now)?;
    lineage.log.push(ReconstructionEvent {
        trigger,
        switch_configuration,
        stream_position: position,
        old_k,
        new_k,
    });
    lineage.members.push(member);
    Ok(())
}

/// Generates with one member from `resume` until the epoch ends or the
/// member runs out of room, accumulating emissions and word texts. `seen`
/// spans the whole epoch: a regenerated word means the machine is cycling,
/// since the port and advice are fixed between await states.
fn epoch_leg(
    machine: &MultiTapeTm,
    member: &StreamMember,
    resume: &TmConfiguration,
    seen: &mut HashSet<String>,
    sentence: &mut Vec<String>,
    chunk: &mut Vec<Symbol>,
) -> Result<LegEnd, LineageError> {
    let mut context = member.epoch_prompt(machine, resume)?;
    let mut current = resume.clone();
    loop {
        let token = match member.model.next_token(&context) {
            Ok((token, _)) => token,
            Err(LlmError::MissingSuccessor { .. }) => return Ok(LegEnd::OutOfSpace(current)),
            Err(e) => return Err(e.into()),
        };
        context.push(token);
        let text = member.model.vocabulary().text(token).to_string();
        if let Some(names) = member.model.decode_info().emit_leaving.get(&token) {
            for name in names {
                chunk.push(machine.output_alphabet().require(name)?);
            }
        }
        current = member
            .config_of(&text)
            .expect("a member only generates its own configuration words")
            .clone();
        sentence.push(text.clone());
        if member.halts(&text) {
            let verdict = if current.state == machine.accept_state() {
                Verdict::Accept
            } else {
                Verdict::Reject
            };
            return Ok(LegEnd::Halted(verdict));
        }
        if member.ends_epoch(&text) {
            return Ok(LegEnd::Await(current));
        }
        if !seen.insert(text) {
            return Ok(LegEnd::Diverged);
        }
    }
}
