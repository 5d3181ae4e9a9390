//! Deterministic two-way finite-state transducers.
//!
//! The input tape holds `^ w $` (endmarkers are added implicitly); the head
//! starts on the left endmarker. Each step consults the total transition
//! table with the current state and scanned cell, appends the rule's output
//! to a write-only output string, moves the head one cell or stays, and
//! switches state. A run ends when a halting state is entered. Because the
//! machine is deterministic and the output tape is write-only, revisiting a
//! `(state, head)` pair can never lead anywhere new, so it is reported as
//! divergence.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::alphabet::{Alphabet, AlphabetError, Move, Symbol, TapeSymbol, scanned_at, valid_name};
use crate::run::{RunResult, Verdict};

/// Index of a machine state. Dense per machine, like [`Symbol`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub u16);

/// One entry of the transition table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FstRule {
    pub movement: Move,
    pub next: StateId,
    pub output: Vec<Symbol>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FstError {
    #[error(transparent)]
    Alphabet(#[from] AlphabetError),
    #[error("state name {0:?} is empty or uses a reserved character")]
    BadStateName(String),
    #[error("duplicate state name {0:?}")]
    DuplicateState(String),
    #[error("unknown state {0:?}")]
    UnknownState(String),
    #[error("machine has no states")]
    NoStates,
    #[error("no halting state declared")]
    NoHaltingState,
    #[error("duplicate rule for state {state:?} scanning {scanned:?}")]
    DuplicateRule { state: String, scanned: String },
    #[error("rule for halting state {0:?}; halting states have no outgoing rules")]
    RuleFromHalting(String),
    #[error("missing rule for state {state:?} scanning {scanned:?}; the table must be total")]
    MissingRule { state: String, scanned: String },
    #[error("rule for state {0:?} moves left off the left endmarker")]
    LeftOffTape(String),
    #[error("rule for state {0:?} moves right off the right endmarker")]
    RightOffTape(String),
}

/// A deterministic two-way finite-state transducer with a total transition
/// table over `states x (input alphabet + endmarkers)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dfst {
    states: Vec<String>,
    input_alphabet: Alphabet,
    output_alphabet: Alphabet,
    initial: StateId,
    halting: BTreeSet<StateId>,
    rules: HashMap<(StateId, TapeSymbol), FstRule>,
}

/// Incremental construction with validation deferred to [`DfstBuilder::build`].
pub struct DfstBuilder {
    states: Vec<String>,
    input_alphabet: Alphabet,
    output_alphabet: Alphabet,
    initial: Option<String>,
    halting: Vec<String>,
    rules: Vec<(String, TapeSymbol, Move, String, Vec<Symbol>)>,
}

impl DfstBuilder {
    pub fn new(input_alphabet: Alphabet, output_alphabet: Alphabet) -> Self {
        DfstBuilder {
            states: Vec::new(),
            input_alphabet,
            output_alphabet,
            initial: None,
            halting: Vec::new(),
            rules: Vec::new(),
        }
    }

    pub fn state(mut self, name: &str) -> Self {
        self.states.push(name.to_string());
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

    pub fn halting(mut self, name: &str) -> Self {
        self.halting.push(name.to_string());
        self
    }

    /// Adds a rule. `scanned` uses the text-format names, so `"^"` and `"$"`
    /// address the endmarkers; `output` is a symbol string over the output
    /// alphabet.
    pub fn rule(
        mut self,
        state: &str,
        scanned: &str,
        movement: Move,
        next: &str,
        output: &str,
    ) -> Result<Self, FstError> {
        let scanned = TapeSymbol::parse(scanned, &self.input_alphabet)?;
        let output = self.output_alphabet.parse_string(output)?;
        self.rules.push((state.to_string(), scanned, movement, next.to_string(), output));
        Ok(self)
    }

    pub fn build(self) -> Result<Dfst, FstError> {
        if self.states.is_empty() {
            return Err(FstError::NoStates);
        }
        let mut index = HashMap::new();
        for (i, name) in self.states.iter().enumerate() {
            if !valid_name(name) {
                return Err(FstError::BadStateName(name.clone()));
            }
            if index.insert(name.clone(), StateId(i as u16)).is_some() {
                return Err(FstError::DuplicateState(name.clone()));
            }
        }
        let lookup = |name: &str| -> Result<StateId, FstError> {
            index.get(name).copied().ok_or_else(|| FstError::UnknownState(name.to_string()))
        };
        let initial = lookup(self.initial.as_deref().ok_or(FstError::NoStates)?)?;
        let mut halting = BTreeSet::new();
        for h in &self.halting {
            halting.insert(lookup(h)?);
        }
        if halting.is_empty() {
            return Err(FstError::NoHaltingState);
        }

        let mut rules = HashMap::new();
        for (state, scanned, movement, next, output) in self.rules {
            let sid = lookup(&state)?;
            let next = lookup(&next)?;
            if halting.contains(&sid) {
                return Err(FstError::RuleFromHalting(state));
            }
            match (scanned, movement) {
                (TapeSymbol::LeftEnd, Move::Left) => return Err(FstError::LeftOffTape(state)),
                (TapeSymbol::RightEnd, Move::Right) => return Err(FstError::RightOffTape(state)),
                _ => {}
            }
            let prev = rules.insert((sid, scanned), FstRule { movement, next, output });
            if prev.is_some() {
                return Err(FstError::DuplicateRule {
                    state,
                    scanned: scanned.display(&self.input_alphabet).to_string(),
                });
            }
        }

        let machine = Dfst {
            states: self.states,
            input_alphabet: self.input_alphabet,
            output_alphabet: self.output_alphabet,
            initial,
            halting,
            rules,
        };
        machine.check_total()?;
        Ok(machine)
    }
}

impl Dfst {
    fn check_total(&self) -> Result<(), FstError> {
        for state in self.state_ids() {
            if self.halting.contains(&state) {
                continue;
            }
            for scanned in TapeSymbol::enumerate(&self.input_alphabet) {
                if !self.rules.contains_key(&(state, scanned)) {
                    return Err(FstError::MissingRule {
                        state: self.states[state.0 as usize].clone(),
                        scanned: scanned.display(&self.input_alphabet).to_string(),
                    });
                }
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

    pub fn output_alphabet(&self) -> &Alphabet {
        &self.output_alphabet
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn halting(&self) -> &BTreeSet<StateId> {
        &self.halting
    }

    pub fn is_halting(&self, id: StateId) -> bool {
        self.halting.contains(&id)
    }

    pub fn rule(&self, state: StateId, scanned: TapeSymbol) -> Option<&FstRule> {
        self.rules.get(&(state, scanned))
    }
}

/// Snapshot of a transducer run: state, head position on `^ w $`, and the
/// output written so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FstConfiguration {
    pub state: StateId,
    pub head: usize,
    pub output_so_far: Vec<Symbol>,
}

pub type FstRunResult = RunResult<FstConfiguration>;

/// Runs the transducer on `input`. Terminates with [`Verdict::Accept`] when a
/// halting state is entered, or [`Verdict::Diverged`] as soon as a
/// `(state, head)` pair repeats.
pub fn fst_run(machine: &Dfst, input: &[Symbol]) -> Result<FstRunResult, FstError> {
    for &s in input {
        machine.input_alphabet.check(s)?;
    }
    let mut state = machine.initial;
    let mut head = 0usize;
    let mut output: Vec<Symbol> = Vec::new();
    let mut seen: HashSet<(StateId, usize)> = HashSet::new();
    let mut trace = vec![FstConfiguration { state, head, output_so_far: output.clone() }];
    let mut steps = 0u64;

    loop {
        if machine.is_halting(state) {
            return Ok(RunResult { verdict: Verdict::Accept, trace, output, steps, space: 0 });
        }
        if !seen.insert((state, head)) {
            return Ok(RunResult { verdict: Verdict::Diverged, trace, output, steps, space: 0 });
        }
        let scanned = scanned_at(input, head);
        let rule = machine
            .rule(state, scanned)
            .expect("transition table is total by construction");
        output.extend_from_slice(&rule.output);
        head = (head as isize + rule.movement.offset()) as usize;
        state = rule.next;
        steps += 1;
        trace.push(FstConfiguration { state, head, output_so_far: output.clone() });
    }
}

/// Convenience wrapper: parse `input` over the machine's input alphabet, run,
/// and format the output string.
pub fn fst_run_str(machine: &Dfst, input: &str) -> Result<(FstRunResult, String), FstError> {
    let syms = machine.input_alphabet.parse_string(input)?;
    let result = fst_run(machine, &syms)?;
    let text = machine.output_alphabet.format_string(&result.output);
    Ok((result, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary() -> Alphabet {
        Alphabet::new(["0", "1"]).unwrap()
    }

    /// Two-state transducer: remembers the previous bit and outputs
    /// `previous XOR current` for each input bit.
    fn parity_fst() -> Dfst {
        DfstBuilder::new(binary(), binary())
            .states(["last0", "last1", "done"])
            .initial("last0")
            .halting("done")
            .rule("last0", "^", Move::Right, "last0", "").unwrap()
            .rule("last0", "0", Move::Right, "last0", "0").unwrap()
            .rule("last0", "1", Move::Right, "last1", "1").unwrap()
            .rule("last0", "$", Move::Stay, "done", "").unwrap()
            .rule("last1", "^", Move::Right, "last0", "").unwrap()
            .rule("last1", "0", Move::Right, "last0", "1").unwrap()
            .rule("last1", "1", Move::Right, "last1", "0").unwrap()
            .rule("last1", "$", Move::Stay, "done", "").unwrap()
            .build()
            .unwrap()
    }

    #[test]
    fn parity_golden_value() {
        // Hand-simulated before implementation: from last0, reading 1101
        // emits 1 (0^1), 0 (1^1), 1 (1^0), 1 (0^1).
        let m = parity_fst();
        let (result, text) = fst_run_str(&m, "1101").unwrap();
        assert_eq!(text, "1011");
        assert_eq!(result.verdict, Verdict::Accept);
        assert_eq!(result.steps, 6); // ^ + four bits + the $ step
    }

    #[test]
    fn parity_empty_input() {
        let m = parity_fst();
        let (result, text) = fst_run_str(&m, "").unwrap();
        assert_eq!(text, "");
        assert_eq!(result.verdict, Verdict::Accept);
    }

    #[test]
    fn stay_loop_diverges() {
        let m = DfstBuilder::new(binary(), binary())
            .states(["q0", "h"])
            .initial("q0")
            .halting("h")
            .rule("q0", "^", Move::Stay, "q0", "").unwrap()
            .rule("q0", "0", Move::Stay, "q0", "").unwrap()
            .rule("q0", "1", Move::Stay, "q0", "").unwrap()
            .rule("q0", "$", Move::Stay, "q0", "").unwrap()
            .build()
            .unwrap();
        let (result, _) = fst_run_str(&m, "").unwrap();
        assert_eq!(result.verdict, Verdict::Diverged);
        assert_eq!(result.steps, 1);
    }

    #[test]
    fn two_way_loop_diverges() {
        // Bounces between the endmarkers forever on the empty input.
        let m = DfstBuilder::new(binary(), binary())
            .states(["r", "l", "h"])
            .initial("r")
            .halting("h")
            .rule("r", "^", Move::Right, "r", "").unwrap()
            .rule("r", "0", Move::Right, "r", "").unwrap()
            .rule("r", "1", Move::Right, "r", "").unwrap()
            .rule("r", "$", Move::Left, "l", "").unwrap()
            .rule("l", "^", Move::Right, "r", "").unwrap()
            .rule("l", "0", Move::Left, "l", "").unwrap()
            .rule("l", "1", Move::Left, "l", "").unwrap()
            .rule("l", "$", Move::Left, "l", "").unwrap()
            .build()
            .unwrap();
        let (result, _) = fst_run_str(&m, "01").unwrap();
        assert_eq!(result.verdict, Verdict::Diverged);
    }

    #[test]
    fn construction_rejects_partial_tables() {
        let err = DfstBuilder::new(binary(), binary())
            .states(["q0", "h"])
            .initial("q0")
            .halting("h")
            .rule("q0", "^", Move::Right, "q0", "").unwrap()
            .build()
            .unwrap_err();
        assert!(matches!(err, FstError::MissingRule { .. }));
    }

    #[test]
    fn construction_rejects_endmarker_escapes() {
        let err = DfstBuilder::new(binary(), binary())
            .states(["q0", "h"])
            .initial("q0")
            .halting("h")
            .rule("q0", "^", Move::Left, "q0", "")
            .unwrap()
            .build()
            .unwrap_err();
        assert_eq!(err, FstError::LeftOffTape("q0".into()));

        let err = DfstBuilder::new(binary(), binary())
            .states(["q0", "h"])
            .initial("q0")
            .halting("h")
            .rule("q0", "$", Move::Right, "q0", "")
            .unwrap()
            .build()
            .unwrap_err();
        assert_eq!(err, FstError::RightOffTape("q0".into()));
    }

    #[test]
    fn construction_rejects_rules_from_halting_states() {
        let err = DfstBuilder::new(binary(), binary())
            .states(["q0", "h"])
            .initial("q0")
            .halting("h")
            .rule("h", "^", Move::Stay, "h", "")
            .unwrap()
            .build()
            .unwrap_err();
        assert_eq!(err, FstError::RuleFromHalting("h".into()));
    }

    #[test]
    fn trace_records_every_configuration() {
        let m = parity_fst();
        let (result, _) = fst_run_str(&m, "10").unwrap();
        assert_eq!(result.trace.len() as u64, result.steps + 1);
        assert_eq!(result.trace[0].state, m.initial());
        assert_eq!(result.trace[0].head, 0);
        let last = result.trace.last().unwrap();
        assert!(m.is_halting(last.state));
        assert_eq!(last.output_so_far, result.output);
    }

    #[test]
    fn determinism_repeated_runs_identical() {
        let m = parity_fst();
        let a = fst_run_str(&m, "011011").unwrap();
        let b = fst_run_str(&m, "011011").unwrap();
        assert_eq!(a, b);
    }
}
