//! Deterministic multi-tape Turing machines.
//!
//! A machine has a read-only endmarked input tape, `tape_count` semi-infinite
//! work tapes, and optionally a read-only advice tape with a one-way head.
//! Every step consults the total transition table with the current state and
//! all scanned symbols, writes and moves on each work tape, moves the input
//! head, optionally advances the advice head, and may emit output symbols
//! (which makes the machine a transducer; acceptors simply never emit).
//!
//! Space is charged per work tape as the number of distinct cells the head
//! has visited; the input and advice tapes are free. Work tape heads that
//! move left from cell 0 stay on cell 0.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::advice::{AdviceError, AdviceFunction};
use crate::alphabet::{Alphabet, AlphabetError, Move, Symbol, TapeSymbol, scanned_at, valid_name};
use crate::fst::StateId;
use crate::run::{RunResult, Verdict, step_bound};

/// Movement of the one-way advice head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AdviceMove {
    #[default]
    Stay,
    Right,
}

/// Transition table key: state, scanned input cell, scanned work cells, and
/// scanned advice cell (`None` past the end of the advice string, and always
/// `None` on machines without an advice alphabet).
pub type TmKey = (StateId, TapeSymbol, Vec<Symbol>, Option<Symbol>);

/// One entry of the transition table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TmRule {
    pub next: StateId,
    /// `(write, move)` per work tape, in tape order.
    pub tape_ops: Vec<(Symbol, Move)>,
    pub input_move: Move,
    pub advice_move: AdviceMove,
    /// Output symbols appended by this step; empty for acceptors.
    pub emit: Vec<Symbol>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TmError {
    #[error(transparent)]
    Alphabet(#[from] AlphabetError),
    #[error(transparent)]
    Advice(#[from] AdviceError),
    #[error("state name {0:?} is empty or uses a reserved character")]
    BadStateName(String),
    #[error("duplicate state name {0:?}")]
    DuplicateState(String),
    #[error("unknown state {0:?}")]
    UnknownState(String),
    #[error("machine must have at least one work tape")]
    NoTapes,
    #[error("work alphabet must contain at least the blank symbol")]
    NoBlank,
    #[error("missing {0} declaration")]
    MissingDeclaration(&'static str),
    #[error("accept and reject states must differ")]
    AcceptEqualsReject,
    #[error("await state may not be the accept or reject state")]
    AwaitIsTerminal,
    #[error("rule for state {0:?} expects {1} work symbols, machine has {2} tapes")]
    WrongTapeArity(String, usize, usize),
    #[error("rule scans advice but the machine declares no advice alphabet")]
    AdviceNotDeclared,
    #[error("duplicate rule for state {state:?} scanning {scanned:?}")]
    DuplicateRule { state: String, scanned: String },
    #[error("rule from terminal state {0:?}")]
    RuleFromTerminal(String),
    #[error("missing rule for state {state:?} scanning {scanned:?}; the table must be total")]
    MissingRule { state: String, scanned: String },
    #[error("rule for state {0:?} moves the input head left off the left endmarker")]
    LeftOffTape(String),
    #[error("rule for state {0:?} moves the input head right off the right endmarker")]
    RightOffTape(String),
    #[error("output tape index {0} out of range for {1} tapes")]
    BadOutputTape(usize, usize),
    #[error("configuration is terminal; no successor exists")]
    TerminalConfig,
    #[error("configuration has {0} tapes, machine has {1}")]
    TapeMismatch(usize, usize),
    #[error("machine declares no advice alphabet but advice was supplied")]
    AdviceNotSupported,
}

/// A deterministic multi-tape acceptor-or-transducer.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTapeTm {
    states: Vec<String>,
    input_alphabet: Alphabet,
    work_alphabet: Alphabet,
    output_alphabet: Alphabet,
    advice_alphabet: Option<Alphabet>,
    tape_count: usize,
    initial: StateId,
    accept: StateId,
    reject: StateId,
    await_state: Option<StateId>,
    output_tape: usize,
    rules: HashMap<TmKey, TmRule>,
}

/// Incremental construction with validation deferred to [`TmBuilder::build`].
pub struct TmBuilder {
    states: Vec<String>,
    input_alphabet: Alphabet,
    work_alphabet: Alphabet,
    output_alphabet: Alphabet,
    advice_alphabet: Option<Alphabet>,
    tape_count: usize,
    initial: Option<String>,
    accept: Option<String>,
    reject: Option<String>,
    await_state: Option<String>,
    output_tape: Option<usize>,
    rules: Vec<RawRule>,
    fill_reject: bool,
}

struct RawRule {
    state: String,
    inscan: TapeSymbol,
    work: Vec<Symbol>,
    advscan: Option<Symbol>,
    next: String,
    ops: Vec<(Symbol, Move)>,
    input_move: Move,
    advice_move: AdviceMove,
    emit: Vec<Symbol>,
}

impl TmBuilder {
    /// `work_alphabet` must list the blank symbol first.
    pub fn new(input_alphabet: Alphabet, work_alphabet: Alphabet, tape_count: usize) -> Self {
        TmBuilder {
            states: Vec::new(),
            input_alphabet,
            work_alphabet,
            output_alphabet: Alphabet::new(Vec::<String>::new()).unwrap(),
            advice_alphabet: None,
            tape_count,
            initial: None,
            accept: None,
            reject: None,
            await_state: None,
            output_tape: None,
            rules: Vec::new(),
            fill_reject: false,
        }
    }

    pub fn output_alphabet(mut self, a: Alphabet) -> Self {
        self.output_alphabet = a;
        self
    }

    pub fn advice_alphabet(mut self, a: Alphabet) -> Self {
        self.advice_alphabet = Some(a);
        self
    }

    pub fn states<'a>(mut self, names: impl IntoIterator<Item = &'a str>) -> Self {
        self.states.extend(names.into_iter().map(String::from));
        self
    }

    pub fn initial(mut self, name: &str) -> Self {
        self.initial = Some(name.to_string());
        self
    }

    pub fn accept(mut self, name: &str) -> Self {
        self.accept = Some(name.to_string());
        self
    }

    pub fn reject(mut self, name: &str) -> Self {
        self.reject = Some(name.to_string());
        self
    }

    pub fn await_state(mut self, name: &str) -> Self {
        self.await_state = Some(name.to_string());
        self
    }

    pub fn output_tape(mut self, idx: usize) -> Self {
        self.output_tape = Some(idx);
        self
    }

    /// Sends every `(state, scanned...)` combination not covered by an
    /// explicit rule to the reject state without moving anything.
    pub fn fill_reject(mut self) -> Self {
        self.fill_reject = true;
        self
    }

    /// Adds a rule without advice or output. `writes` and `moves` are per
    /// work tape.
    #[allow(clippy::too_many_arguments)]
    pub fn rule(
        self,
        state: &str,
        inscan: &str,
        work: &[&str],
        next: &str,
        writes: &[&str],
        moves: &[Move],
        input_move: Move,
    ) -> Result<Self, TmError> {
        self.rule_full(state, inscan, work, None, next, writes, moves, input_move, AdviceMove::Stay, "")
    }

    /// Adds a rule with every field spelled out.
    #[allow(clippy::too_many_arguments)]
    pub fn rule_full(
        mut self,
        state: &str,
        inscan: &str,
        work: &[&str],
        advscan: Option<&str>,
        next: &str,
        writes: &[&str],
        moves: &[Move],
        input_move: Move,
        advice_move: AdviceMove,
        emit: &str,
    ) -> Result<Self, TmError> {
        let inscan = TapeSymbol::parse(inscan, &self.input_alphabet)?;
        let work = work
            .iter()
            .map(|w| self.work_alphabet.require(w))
            .collect::<Result<Vec<_>, _>>()?;
        let advscan = match advscan {
            None => None,
            Some(name) => {
                let a = self.advice_alphabet.as_ref().ok_or(TmError::AdviceNotDeclared)?;
                Some(a.require(name)?)
            }
        };
        let writes = writes
            .iter()
            .map(|w| self.work_alphabet.require(w))
            .collect::<Result<Vec<_>, _>>()?;
        let emit = self.output_alphabet.parse_string(emit)?;
        if work.len() != self.tape_count || writes.len() != self.tape_count || moves.len() != self.tape_count {
            return Err(TmError::WrongTapeArity(state.to_string(), work.len(), self.tape_count));
        }
        self.rules.push(RawRule {
            state: state.to_string(),
            inscan,
            work,
            advscan,
            next: next.to_string(),
            ops: writes.into_iter().zip(moves.iter().copied()).collect(),
            input_move,
            advice_move,
            emit,
        });
        Ok(self)
    }

    pub fn build(self) -> Result<MultiTapeTm, TmError> {
        if self.tape_count == 0 {
            return Err(TmError::NoTapes);
        }
        if self.work_alphabet.is_empty() {
            return Err(TmError::NoBlank);
        }
        let mut index = HashMap::new();
        for (i, name) in self.states.iter().enumerate() {
            if !valid_name(name) {
                return Err(TmError::BadStateName(name.clone()));
            }
            if index.insert(name.clone(), StateId(i as u16)).is_some() {
                return Err(TmError::DuplicateState(name.clone()));
            }
        }
        let lookup = |name: &Option<String>, what: &'static str| -> Result<StateId, TmError> {
            let name = name.as_deref().ok_or(TmError::MissingDeclaration(what))?;
            index.get(name).copied().ok_or_else(|| TmError::UnknownState(name.to_string()))
        };
        let initial = lookup(&self.initial, "initial")?;
        let accept = lookup(&self.accept, "accept")?;
        let reject = lookup(&self.reject, "reject")?;
        if accept == reject {
            return Err(TmError::AcceptEqualsReject);
        }
        let await_state = match &self.await_state {
            None => None,
            Some(_) => {
                let s = lookup(&self.await_state, "await")?;
                if s == accept || s == reject {
                    return Err(TmError::AwaitIsTerminal);
                }
                Some(s)
            }
        };
        let output_tape = self.output_tape.unwrap_or(self.tape_count - 1);
        if output_tape >= self.tape_count {
            return Err(TmError::BadOutputTape(output_tape, self.tape_count));
        }

        let mut rules: HashMap<TmKey, TmRule> = HashMap::new();
        for raw in self.rules {
            let sid = *index.get(&raw.state).ok_or_else(|| TmError::UnknownState(raw.state.clone()))?;
            let next = *index.get(&raw.next).ok_or_else(|| TmError::UnknownState(raw.next.clone()))?;
            if sid == accept || sid == reject {
                return Err(TmError::RuleFromTerminal(raw.state));
            }
            match (raw.inscan, raw.input_move) {
                (TapeSymbol::LeftEnd, Move::Left) => return Err(TmError::LeftOffTape(raw.state)),
                (TapeSymbol::RightEnd, Move::Right) => return Err(TmError::RightOffTape(raw.state)),
                _ => {}
            }
            let key = (sid, raw.inscan, raw.work.clone(), raw.advscan);
            let rule = TmRule {
                next,
                tape_ops: raw.ops,
                input_move: raw.input_move,
                advice_move: raw.advice_move,
                emit: raw.emit,
            };
            if rules.insert(key, rule).is_some() {
                return Err(TmError::DuplicateRule {
                    state: raw.state,
                    scanned: raw.inscan.display(&self.input_alphabet).to_string(),
                });
            }
        }

        let mut machine = MultiTapeTm {
            states: self.states,
            input_alphabet: self.input_alphabet,
            work_alphabet: self.work_alphabet,
            output_alphabet: self.output_alphabet,
            advice_alphabet: self.advice_alphabet,
            tape_count: self.tape_count,
            initial,
            accept,
            reject,
            await_state,
            output_tape,
            rules,
        };
        if self.fill_reject {
            machine.complete_with_reject();
        }
        machine.check_total()?;
        Ok(machine)
    }
}

impl MultiTapeTm {
    /// Every transition table key the machine can be asked about.
    fn all_keys(&self) -> Vec<TmKey> {
        let mut advice_scans: Vec<Option<Symbol>> = vec![None];
        if let Some(a) = &self.advice_alphabet {
            advice_scans.extend(a.symbols().map(Some));
        }
        let mut work_combos: Vec<Vec<Symbol>> = vec![Vec::new()];
        for _ in 0..self.tape_count {
            let mut next = Vec::new();
            for combo in &work_combos {
                for s in self.work_alphabet.symbols() {
                    let mut c = combo.clone();
                    c.push(s);
                    next.push(c);
                }
            }
            work_combos = next;
        }
        let mut keys = Vec::new();
        for state in self.state_ids() {
            if self.is_terminal(state) {
                continue;
            }
            for inscan in TapeSymbol::enumerate(&self.input_alphabet) {
                for combo in &work_combos {
                    for adv in &advice_scans {
                        keys.push((state, inscan, combo.clone(), *adv));
                    }
                }
            }
        }
        keys
    }

    fn complete_with_reject(&mut self) {
        for key in self.all_keys() {
            if self.rules.contains_key(&key) {
                continue;
            }
            // Write back what was scanned, so the filler is a pure state change.
            let rule = TmRule {
                next: self.reject,
                tape_ops: key.2.iter().map(|&s| (s, Move::Stay)).collect(),
                input_move: Move::Stay,
                advice_move: AdviceMove::Stay,
                emit: Vec::new(),
            };
            self.rules.insert(key, rule);
        }
    }

    fn check_total(&self) -> Result<(), TmError> {
        for key in self.all_keys() {
            if !self.rules.contains_key(&key) {
                return Err(TmError::MissingRule {
                    state: self.states[key.0 .0 as usize].clone(),
                    scanned: key.1.display(&self.input_alphabet).to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn state_ids(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len() as u16).map(StateId)
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, id: StateId) -> &str {
        &self.states[id.0 as usize]
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(|i| StateId(i as u16))
    }

    pub fn input_alphabet(&self) -> &Alphabet {
        &self.input_alphabet
    }

    pub fn work_alphabet(&self) -> &Alphabet {
        &self.work_alphabet
    }

    pub fn output_alphabet(&self) -> &Alphabet {
        &self.output_alphabet
    }

    pub fn advice_alphabet(&self) -> Option<&Alphabet> {
        self.advice_alphabet.as_ref()
    }

    pub fn uses_advice(&self) -> bool {
        self.advice_alphabet.is_some()
    }

    pub fn tape_count(&self) -> usize {
        self.tape_count
    }

    /// The blank is always the first symbol of the work alphabet.
    pub fn blank(&self) -> Symbol {
        Symbol(0)
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn accept_state(&self) -> StateId {
        self.accept
    }

    pub fn reject_state(&self) -> StateId {
        self.reject
    }

    pub fn await_state(&self) -> Option<StateId> {
        self.await_state
    }

    pub fn output_tape(&self) -> usize {
        self.output_tape
    }

    pub fn is_terminal(&self, id: StateId) -> bool {
        id == self.accept || id == self.reject
    }

    pub fn rule(&self, key: &TmKey) -> Option<&TmRule> {
        self.rules.get(key)
    }

    pub fn rules(&self) -> impl Iterator<Item = (&TmKey, &TmRule)> {
        self.rules.iter()
    }

    /// Default base for the step budget: `max(|work alphabet|, |states|, 2)`.
    pub fn default_step_base(&self) -> u32 {
        self.work_alphabet.len().max(self.states.len()).max(2) as u32
    }

    /// The initial configuration for a batch run on an input of any length.
    pub fn initial_config(&self, advice: &[Symbol]) -> TmConfiguration {
        TmConfiguration {
            state: self.initial,
            input_pos: 0,
            scanned_input: TapeSymbol::LeftEnd,
            tapes: (0..self.tape_count).map(|_| TapeState::default()).collect(),
            advice_cursor: 0,
            scanned_advice: advice.first().copied(),
        }
    }

    /// Contents of the designated output tape with surrounding blanks
    /// stripped, for function-mode decoding.
    pub fn decode_output_tape(&self, config: &TmConfiguration) -> Vec<Symbol> {
        let blank = self.blank();
        let cells = &config.tapes[self.output_tape].cells;
        let start = cells.iter().position(|&c| c != blank).unwrap_or(cells.len());
        cells[start..].to_vec()
    }
}

/// One work tape: trailing-blank-trimmed contents plus the head position.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TapeState {
    pub cells: Vec<Symbol>,
    pub head: usize,
}

impl TapeState {
    /// Cells needed to store this tape: contents plus the head's cell.
    pub fn extent(&self) -> usize {
        self.cells.len().max(self.head + 1)
    }
}

/// A full machine configuration. `input_pos` indexes the endmarked input in
/// batch runs and counts consumed stream symbols in interactive runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TmConfiguration {
    pub state: StateId,
    pub input_pos: usize,
    pub scanned_input: TapeSymbol,
    pub tapes: Vec<TapeState>,
    pub advice_cursor: usize,
    pub scanned_advice: Option<Symbol>,
}

impl TmConfiguration {
    /// The space this configuration needs: the widest work tape extent.
    pub fn size(&self) -> usize {
        self.tapes.iter().map(TapeState::extent).max().unwrap_or(0)
    }
}

/// How the input is presented to a step: a whole endmarked tape, or a port
/// holding one stream symbol at a time (the head never moves off a port).
#[derive(Debug, Clone, Copy)]
pub enum InputView<'a> {
    Endmarked(&'a [Symbol]),
    Port,
}

/// Computes the unique successor configuration. Fails on terminal
/// configurations, which have no successor.
pub fn tm_step(
    machine: &MultiTapeTm,
    config: &TmConfiguration,
    input: &[Symbol],
) -> Result<TmConfiguration, TmError> {
    step_view(machine, config, InputView::Endmarked(input), &[])
}

/// [`tm_step`] generalized over the input view and an advice string.
pub fn step_view(
    machine: &MultiTapeTm,
    config: &TmConfiguration,
    input: InputView<'_>,
    advice: &[Symbol],
) -> Result<TmConfiguration, TmError> {
    if machine.is_terminal(config.state) {
        return Err(TmError::TerminalConfig);
    }
    if config.tapes.len() != machine.tape_count {
        return Err(TmError::TapeMismatch(config.tapes.len(), machine.tape_count));
    }
    Ok(apply_step(machine, config, input, advice).0)
}

/// Core step: returns the successor and the rule applied. Assumes a valid,
/// non-terminal configuration.
pub(crate) fn apply_step<'m>(
    machine: &'m MultiTapeTm,
    config: &TmConfiguration,
    input: InputView<'_>,
    advice: &[Symbol],
) -> (TmConfiguration, &'m TmRule) {
    let blank = machine.blank();
    let scanned_work: Vec<Symbol> = config
        .tapes
        .iter()
        .map(|t| t.cells.get(t.head).copied().unwrap_or(blank))
        .collect();
    let key = (config.state, config.scanned_input, scanned_work, config.scanned_advice);
    let rule = machine.rule(&key).expect("transition table is total by construction");

    let mut tapes = config.tapes.clone();
    for (tape, &(write, movement)) in tapes.iter_mut().zip(&rule.tape_ops) {
        if write != blank || tape.head < tape.cells.len() {
            if tape.head >= tape.cells.len() {
                tape.cells.resize(tape.head + 1, blank);
            }
            tape.cells[tape.head] = write;
            while tape.cells.last() == Some(&blank) {
                tape.cells.pop();
            }
        }
        tape.head = match movement {
            Move::Left => tape.head.saturating_sub(1),
            Move::Stay => tape.head,
            Move::Right => tape.head + 1,
        };
    }

    let (input_pos, scanned_input) = match input {
        InputView::Endmarked(word) => {
            let pos = (config.input_pos as isize + rule.input_move.offset()) as usize;
            (pos, scanned_at(word, pos))
        }
        InputView::Port => (config.input_pos, config.scanned_input),
    };

    let advice_cursor = match rule.advice_move {
        AdviceMove::Stay => config.advice_cursor,
        AdviceMove::Right => config.advice_cursor + 1,
    };

    let next = TmConfiguration {
        state: rule.next,
        input_pos,
        scanned_input,
        tapes,
        advice_cursor,
        scanned_advice: advice.get(advice_cursor).copied(),
    };
    (next, rule)
}

pub type TmRunResult = RunResult<TmConfiguration>;

/// Runs the machine on `input` with space bound `k` and step budget
/// `c^(ceil(log2(max(n, 2))) + k)`, where `c` defaults to
/// [`MultiTapeTm::default_step_base`]. The advice tape is empty.
pub fn tm_run(
    machine: &MultiTapeTm,
    input: &[Symbol],
    k: usize,
    c: Option<u32>,
) -> Result<TmRunResult, TmError> {
    run_batch(machine, input, &[], k, c)
}

/// Runs the machine with the advice string for the input's length.
pub fn tma_run(
    machine: &MultiTapeTm,
    advice: &AdviceFunction,
    input: &[Symbol],
    k: usize,
    c: Option<u32>,
) -> Result<TmRunResult, TmError> {
    let advice = advice.string_for(input.len())?;
    run_batch(machine, input, advice, k, c)
}

fn run_batch(
    machine: &MultiTapeTm,
    input: &[Symbol],
    advice: &[Symbol],
    k: usize,
    c: Option<u32>,
) -> Result<TmRunResult, TmError> {
    for &s in input {
        machine.input_alphabet.check(s)?;
    }
    if !advice.is_empty() {
        let a = machine.advice_alphabet.as_ref().ok_or(TmError::AdviceNotSupported)?;
        for &s in advice {
            a.check(s)?;
        }
    }
    let c = c.unwrap_or_else(|| machine.default_step_base());
    let bound = step_bound(c, input.len(), k);

    let mut config = machine.initial_config(advice);
    let mut trace = Vec::new();
    let mut output = Vec::new();
    let mut steps = 0u64;
    let mut space = 0usize;
    let mut seen: HashSet<TmConfiguration> = HashSet::new();

    loop {
        trace.push(config.clone());
        space = space.max(config.size());
        let finish = |verdict| {
            Ok(RunResult { verdict, trace: trace.clone(), output: output.clone(), steps, space })
        };
        if space > k {
            return finish(Verdict::SpaceExceeded);
        }
        if config.state == machine.accept {
            return finish(Verdict::Accept);
        }
        if config.state == machine.reject {
            return finish(Verdict::Reject);
        }
        if !seen.insert(config.clone()) {
            return finish(Verdict::Diverged);
        }
        if steps >= bound {
            return finish(Verdict::StepBoundExceeded);
        }
        let (next, rule) = apply_step(machine, &config, InputView::Endmarked(input), advice);
        output.extend_from_slice(&rule.emit);
        config = next;
        steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary() -> Alphabet {
        Alphabet::new(["0", "1"]).unwrap()
    }

    /// Walks the input left to right, toggling a mark on work cell 0 for
    /// every 1, and accepts iff the mark ends up absent (even count).
    fn ones_parity_tm() -> MultiTapeTm {
        let work = Alphabet::new(["_", "x"]).unwrap();
        TmBuilder::new(binary(), work, 1)
            .states(["scan", "acc", "rej"])
            .initial("scan")
            .accept("acc")
            .reject("rej")
            .fill_reject()
            .rule("scan", "^", &["_"], "scan", &["_"], &[Move::Stay], Move::Right).unwrap()
            .rule("scan", "0", &["_"], "scan", &["_"], &[Move::Stay], Move::Right).unwrap()
            .rule("scan", "0", &["x"], "scan", &["x"], &[Move::Stay], Move::Right).unwrap()
            .rule("scan", "1", &["_"], "scan", &["x"], &[Move::Stay], Move::Right).unwrap()
            .rule("scan", "1", &["x"], "scan", &["_"], &[Move::Stay], Move::Right).unwrap()
            .rule("scan", "$", &["_"], "acc", &["_"], &[Move::Stay], Move::Stay).unwrap()
            .rule("scan", "$", &["x"], "rej", &["x"], &[Move::Stay], Move::Stay).unwrap()
            .build()
            .unwrap()
    }

    fn run_on(m: &MultiTapeTm, input: &str, k: usize) -> TmRunResult {
        let syms = m.input_alphabet().parse_string(input).unwrap();
        tm_run(m, &syms, k, None).unwrap()
    }

    #[test]
    fn parity_accepts_even_ones() {
        let m = ones_parity_tm();
        // Independent oracle: count the 1s directly.
        for input in ["", "0", "1", "1101", "1111", "010010", "111"] {
            let ones = input.chars().filter(|&c| c == '1').count();
            let expected = if ones % 2 == 0 { Verdict::Accept } else { Verdict::Reject };
            assert_eq!(run_on(&m, input, 1).verdict, expected, "input {input:?}");
        }
    }

    #[test]
    fn parity_uses_constant_space() {
        let m = ones_parity_tm();
        for input in ["", "1", "110100", "111111"] {
            assert_eq!(run_on(&m, input, 1).space, 1, "input {input:?}");
        }
    }

    #[test]
    fn zero_space_bound_fails_immediately() {
        let m = ones_parity_tm();
        let result = run_on(&m, "101", 0);
        assert_eq!(result.verdict, Verdict::SpaceExceeded);
        assert_eq!(result.steps, 0);
    }

    #[test]
    fn step_bound_exceeded_on_a_loop() {
        // Stays on the left endmarker forever; divergence detection is
        // disabled by making the machine consume advice cells so no
        // configuration ever repeats within the budget.
        let work = Alphabet::new(["_"]).unwrap();
        let adv = Alphabet::new(["z"]).unwrap();
        let m = TmBuilder::new(binary(), work, 1)
            .advice_alphabet(adv)
            .states(["spin", "acc", "rej"])
            .initial("spin")
            .accept("acc")
            .reject("rej")
            .fill_reject()
            .rule_full(
                "spin", "^", &["_"], None, "spin", &["_"], &[Move::Stay], Move::Stay,
                AdviceMove::Right, "",
            )
            .unwrap()
            .build()
            .unwrap();
        let result = tm_run(&m, &[], 1, Some(2)).unwrap();
        assert_eq!(result.verdict, Verdict::StepBoundExceeded);
        assert_eq!(result.steps, step_bound(2, 0, 1));
    }

    #[test]
    fn repeating_configuration_diverges() {
        let work = Alphabet::new(["_"]).unwrap();
        let m = TmBuilder::new(binary(), work, 1)
            .states(["spin", "acc", "rej"])
            .initial("spin")
            .accept("acc")
            .reject("rej")
            .fill_reject()
            .rule("spin", "^", &["_"], "spin", &["_"], &[Move::Stay], Move::Stay)
            .unwrap()
            .build()
            .unwrap();
        let result = tm_run(&m, &[], 4, None).unwrap();
        assert_eq!(result.verdict, Verdict::Diverged);
    }

    #[test]
    fn advice_selects_the_verdict() {
        // Accepts iff the first advice symbol is E.
        let work = Alphabet::new(["_"]).unwrap();
        let adv = Alphabet::new(["E", "O"]).unwrap();
        let m = TmBuilder::new(binary(), work, 1)
            .advice_alphabet(adv.clone())
            .states(["look", "acc", "rej"])
            .initial("look")
            .accept("acc")
            .reject("rej")
            .fill_reject()
            .rule_full("look", "^", &["_"], Some("E"), "acc", &["_"], &[Move::Stay], Move::Stay, AdviceMove::Stay, "").unwrap()
            .rule_full("look", "^", &["_"], Some("O"), "rej", &["_"], &[Move::Stay], Move::Stay, AdviceMove::Stay, "").unwrap()
            .build()
            .unwrap();
        let e = adv.get("E").unwrap();
        let o = adv.get("O").unwrap();
        let advice = AdviceFunction::new().with(0, vec![e]).with(1, vec![o]);
        assert_eq!(tma_run(&m, &advice, &[], 1, None).unwrap().verdict, Verdict::Accept);
        let one = binary().parse_string("1").unwrap();
        assert_eq!(tma_run(&m, &advice, &one, 1, None).unwrap().verdict, Verdict::Reject);
        // Without advice the scanned advice cell is blank and the filler
        // rejects.
        assert_eq!(tm_run(&m, &[], 1, None).unwrap().verdict, Verdict::Reject);
        // Missing advice for an uncovered length is an error.
        let two = binary().parse_string("11").unwrap();
        assert!(matches!(
            tma_run(&m, &advice, &two, 1, None),
            Err(TmError::Advice(AdviceError::MissingAdvice(2)))
        ));
    }

    #[test]
    fn emits_accumulate_in_output() {
        // Echoes every input bit via emit.
        let work = Alphabet::new(["_"]).unwrap();
        let m = TmBuilder::new(binary(), work, 1)
            .output_alphabet(binary())
            .states(["scan", "acc", "rej"])
            .initial("scan")
            .accept("acc")
            .reject("rej")
            .fill_reject()
            .rule("scan", "^", &["_"], "scan", &["_"], &[Move::Stay], Move::Right).unwrap()
            .rule_full("scan", "0", &["_"], None, "scan", &["_"], &[Move::Stay], Move::Right, AdviceMove::Stay, "0").unwrap()
            .rule_full("scan", "1", &["_"], None, "scan", &["_"], &[Move::Stay], Move::Right, AdviceMove::Stay, "1").unwrap()
            .rule("scan", "$", &["_"], "acc", &["_"], &[Move::Stay], Move::Stay).unwrap()
            .build()
            .unwrap();
        let input = binary().parse_string("1011").unwrap();
        let result = tm_run(&m, &input, 1, None).unwrap();
        assert_eq!(result.verdict, Verdict::Accept);
        assert_eq!(m.output_alphabet().format_string(&result.output), "1011");
    }

    #[test]
    fn tm_step_rejects_terminal_configurations() {
        let m = ones_parity_tm();
        let result = run_on(&m, "", 1);
        let last = result.trace.last().unwrap();
        assert_eq!(tm_step(&m, last, &[]).unwrap_err(), TmError::TerminalConfig);
    }

    #[test]
    fn space_counts_visited_cells_per_tape() {
        // Writes two cells on tape 0 and nothing on tape 1.
        let work = Alphabet::new(["_", "m"]).unwrap();
        let m = TmBuilder::new(binary(), work, 2)
            .states(["a", "b", "acc", "rej"])
            .initial("a")
            .accept("acc")
            .reject("rej")
            .fill_reject()
            .rule("a", "^", &["_", "_"], "b", &["m", "_"], &[Move::Right, Move::Stay], Move::Stay).unwrap()
            .rule("b", "^", &["_", "_"], "acc", &["m", "_"], &[Move::Stay, Move::Stay], Move::Stay).unwrap()
            .build()
            .unwrap();
        let result = tm_run(&m, &[], 3, None).unwrap();
        assert_eq!(result.verdict, Verdict::Accept);
        assert_eq!(result.space, 2);
        let last = result.trace.last().unwrap();
        assert_eq!(last.tapes[0].cells, vec![Symbol(1), Symbol(1)]);
        assert!(last.tapes[1].cells.is_empty());
    }

    #[test]
    fn space_is_monotone_along_traces() {
        let m = ones_parity_tm();
        for input in ["", "101", "111111"] {
            let result = run_on(&m, input, 2);
            let mut high = 0;
            let mut profile = Vec::new();
            for config in &result.trace {
                high = high.max(config.size());
                profile.push(high);
            }
            let mut sorted = profile.clone();
            sorted.sort_unstable();
            assert_eq!(profile, sorted);
            assert_eq!(*profile.last().unwrap(), result.space);
        }
    }

    #[test]
    fn left_moves_clamp_at_cell_zero() {
        let work = Alphabet::new(["_", "m"]).unwrap();
        let m = TmBuilder::new(binary(), work, 1)
            .states(["a", "acc", "rej"])
            .initial("a")
            .accept("acc")
            .reject("rej")
            .fill_reject()
            .rule("a", "^", &["_"], "acc", &["m"], &[Move::Left], Move::Stay).unwrap()
            .build()
            .unwrap();
        let result = tm_run(&m, &[], 1, None).unwrap();
        assert_eq!(result.verdict, Verdict::Accept);
        assert_eq!(result.trace.last().unwrap().tapes[0].head, 0);
    }
}
