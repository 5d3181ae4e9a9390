//! Interactive stream processing for machines with an await state.
//!
//! A stream is a finite sequence of input symbols. Delivering symbol `t`
//! (1-based) extends the advice tape to the string for length `t`, places the
//! symbol on the input port, and lets the machine step until it re-enters its
//! designated await state; the output symbols emitted along the way form the
//! epoch's chunk. Work tapes, heads, and the advice cursor persist across
//! epochs. The input head is a port here: it always scans the current stream
//! symbol and never moves.
//!
//! Epochs are bounded: a configuration repeat within an epoch is divergence
//! (the port and advice are fixed, so the run can never leave the cycle), and
//! each epoch also gets the step budget `c^(ceil(log2(max(t, 2))) + k_t)`
//! from its space allowance, or [`EPOCH_STEP_CAP`] when the schedule is
//! unbounded.

use std::collections::HashSet;

use crate::advice::AdviceFunction;
use crate::alphabet::{Symbol, TapeSymbol};
use crate::run::{Verdict, step_bound};
use crate::tm::{InputView, MultiTapeTm, TmConfiguration, TmError, apply_step};

/// Divergence guard for epochs run without a space bound.
pub const EPOCH_STEP_CAP: u64 = 1 << 20;

/// What the harness observes on the stream boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamEvent {
    InputSymbol(Symbol),
    OutputChunk(Vec<Symbol>),
    /// An epoch that emitted nothing.
    Silence,
}

/// Space allowance per epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KSchedule {
    Unbounded,
    Fixed(usize),
    /// One allowance per epoch; the last entry repeats for longer streams.
    PerEpoch(Vec<usize>),
}

impl KSchedule {
    pub fn at(&self, epoch: usize) -> Option<usize> {
        match self {
            KSchedule::Unbounded => None,
            KSchedule::Fixed(k) => Some(*k),
            KSchedule::PerEpoch(v) => {
                if v.is_empty() {
                    None
                } else {
                    Some(v[(epoch - 1).min(v.len() - 1)])
                }
            }
        }
    }
}

/// One epoch of an interactive run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochRecord {
    /// Configuration the epoch starts from, with the port already holding the
    /// new symbol and the advice tape already extended.
    pub resume: TmConfiguration,
    /// Configurations after each internal step, ending on the await state
    /// unless the epoch ended the run.
    pub steps: Vec<TmConfiguration>,
    pub chunk: Vec<Symbol>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamOutcome {
    /// Every stream symbol was processed.
    Completed,
    /// The machine halted mid-stream.
    Halted { verdict: Verdict, epoch: usize },
    SpaceExceeded { epoch: usize },
    Diverged { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamRunResult {
    pub events: Vec<StreamEvent>,
    pub epochs: Vec<EpochRecord>,
    pub chunks: Vec<Vec<Symbol>>,
    pub outcome: StreamOutcome,
    pub final_config: TmConfiguration,
    pub space: usize,
}

/// Runs the machine interactively over `stream`. The advice function must be
/// defined for every prefix length and append-only across lengths.
pub fn itma_run_stream(
    machine: &MultiTapeTm,
    advice: &AdviceFunction,
    stream: &[Symbol],
    k_schedule: &KSchedule,
    c: Option<u32>,
) -> Result<StreamRunResult, TmError> {
    let await_state = machine.await_state().ok_or(TmError::MissingDeclaration("await"))?;
    for &s in stream {
        machine.input_alphabet().check(s)?;
    }
    if machine.advice_alphabet().is_none() && !advice.is_empty_everywhere() {
        return Err(TmError::AdviceNotSupported);
    }
    advice.validate_interactive(stream.len())?;
    let c = c.unwrap_or_else(|| machine.default_step_base());

    let mut config = machine.initial_config(advice.string_for(0)?);
    let mut events = Vec::new();
    let mut epochs = Vec::new();
    let mut chunks = Vec::new();
    let mut space = config.size();
    let mut outcome = StreamOutcome::Completed;

    'stream: for (idx, &symbol) in stream.iter().enumerate() {
        let epoch = idx + 1;
        let advice_now = advice.string_for(epoch)?;
        config.input_pos = epoch;
        config.scanned_input = TapeSymbol::Plain(symbol);
        config.scanned_advice = advice_now.get(config.advice_cursor).copied();
        events.push(StreamEvent::InputSymbol(symbol));

        let k = k_schedule.at(epoch);
        let budget = match k {
            Some(k) => step_bound(c, epoch, k),
            None => EPOCH_STEP_CAP,
        };
        let mut record = EpochRecord { resume: config.clone(), steps: Vec::new(), chunk: Vec::new() };
        let mut seen: HashSet<TmConfiguration> = HashSet::new();
        seen.insert(config.clone());
        let mut steps = 0u64;

        let end = loop {
            if steps >= budget {
                break Some(StreamOutcome::Diverged { epoch });
            }
            let (next, rule) = apply_step(machine, &config, InputView::Port, advice_now);
            record.chunk.extend_from_slice(&rule.emit);
            config = next;
            steps += 1;
            space = space.max(config.size());
            record.steps.push(config.clone());
            if let Some(k) = k {
                if space > k {
                    break Some(StreamOutcome::SpaceExceeded { epoch });
                }
            }
            if machine.is_terminal(config.state) {
                let verdict = if config.state == machine.accept_state() {
                    Verdict::Accept
                } else {
                    Verdict::Reject
                };
                break Some(StreamOutcome::Halted { verdict, epoch });
            }
            if config.state == await_state {
                break None;
            }
            if !seen.insert(config.clone()) {
                break Some(StreamOutcome::Diverged { epoch });
            }
        };

        events.push(if record.chunk.is_empty() {
            StreamEvent::Silence
        } else {
            StreamEvent::OutputChunk(record.chunk.clone())
        });
        chunks.push(record.chunk.clone());
        epochs.push(record);
        if let Some(end) = end {
            outcome = end;
            break 'stream;
        }
    }

    Ok(StreamRunResult { events, epochs, chunks, outcome, final_config: config, space })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{Alphabet, Move};
    use crate::tm::{AdviceMove, TmBuilder};

    fn binary() -> Alphabet {
        Alphabet::new(["0", "1"]).unwrap()
    }

    /// Emits each stream symbol back, using no work tape cells beyond cell 0.
    fn echo_machine() -> MultiTapeTm {
        let work = Alphabet::new(["_"]).unwrap();
        TmBuilder::new(binary(), work, 1)
            .output_alphabet(binary())
            .states(["idle", "acc", "rej"])
            .initial("idle")
            .accept("acc")
            .reject("rej")
            .await_state("idle")
            .fill_reject()
            .rule_full("idle", "0", &["_"], None, "idle", &["_"], &[Move::Stay], Move::Stay, AdviceMove::Stay, "0").unwrap()
            .rule_full("idle", "1", &["_"], None, "idle", &["_"], &[Move::Stay], Move::Stay, AdviceMove::Stay, "1").unwrap()
            .build()
            .unwrap()
    }

    /// Tracks the running XOR of all bits in work cell 0 and emits it after
    /// every input.
    fn running_sum_machine() -> MultiTapeTm {
        let work = Alphabet::new(["_", "x"]).unwrap();
        TmBuilder::new(binary(), work, 1)
            .output_alphabet(binary())
            .states(["idle", "acc", "rej"])
            .initial("idle")
            .accept("acc")
            .reject("rej")
            .await_state("idle")
            .fill_reject()
            .rule_full("idle", "0", &["_"], None, "idle", &["_"], &[Move::Stay], Move::Stay, AdviceMove::Stay, "0").unwrap()
            .rule_full("idle", "0", &["x"], None, "idle", &["x"], &[Move::Stay], Move::Stay, AdviceMove::Stay, "1").unwrap()
            .rule_full("idle", "1", &["_"], None, "idle", &["x"], &[Move::Stay], Move::Stay, AdviceMove::Stay, "1").unwrap()
            .rule_full("idle", "1", &["x"], None, "idle", &["_"], &[Move::Stay], Move::Stay, AdviceMove::Stay, "0").unwrap()
            .build()
            .unwrap()
    }

    /// Appends one mark to the work tape per input and echoes the input.
    fn counter_machine() -> MultiTapeTm {
        let work = Alphabet::new(["_", "m"]).unwrap();
        TmBuilder::new(binary(), work, 1)
            .output_alphabet(binary())
            .states(["idle", "acc", "rej"])
            .initial("idle")
            .accept("acc")
            .reject("rej")
            .await_state("idle")
            .fill_reject()
            .rule_full("idle", "0", &["_"], None, "idle", &["m"], &[Move::Right], Move::Stay, AdviceMove::Stay, "0").unwrap()
            .rule_full("idle", "1", &["_"], None, "idle", &["m"], &[Move::Right], Move::Stay, AdviceMove::Stay, "1").unwrap()
            .build()
            .unwrap()
    }

    fn stream_of(text: &str) -> Vec<Symbol> {
        binary().parse_string(text).unwrap()
    }

    fn chunk_strings(machine: &MultiTapeTm, result: &StreamRunResult) -> Vec<String> {
        result
            .chunks
            .iter()
            .map(|c| machine.output_alphabet().format_string(c))
            .collect()
    }

    #[test]
    fn echo_reproduces_the_stream() {
        let m = echo_machine();
        let advice = AdviceFunction::always_empty();
        let result =
            itma_run_stream(&m, &advice, &stream_of("10110"), &KSchedule::Unbounded, None).unwrap();
        assert_eq!(result.outcome, StreamOutcome::Completed);
        assert_eq!(chunk_strings(&m, &result), vec!["1", "0", "1", "1", "0"]);
        assert_eq!(result.space, 1);
    }

    #[test]
    fn running_sum_golden_value() {
        // Frozen from the fold-with-xor oracle: prefixes of 1101 have parities
        // 1, 0, 0, 1.
        let m = running_sum_machine();
        let advice = AdviceFunction::always_empty();
        let result =
            itma_run_stream(&m, &advice, &stream_of("1101"), &KSchedule::Unbounded, None).unwrap();
        assert_eq!(chunk_strings(&m, &result), vec!["1", "0", "0", "1"]);

        // Cross-check against the oracle on a longer stream.
        let long = "100110101110";
        let result =
            itma_run_stream(&m, &advice, &stream_of(long), &KSchedule::Unbounded, None).unwrap();
        let mut acc = 0u32;
        let expected: Vec<String> = long
            .chars()
            .map(|c| {
                acc ^= c.to_digit(2).unwrap();
                acc.to_string()
            })
            .collect();
        assert_eq!(chunk_strings(&m, &result), expected);
    }

    #[test]
    fn exactly_one_chunk_per_input() {
        let m = running_sum_machine();
        let advice = AdviceFunction::always_empty();
        let stream = stream_of("110100");
        let result = itma_run_stream(&m, &advice, &stream, &KSchedule::Unbounded, None).unwrap();
        assert_eq!(result.chunks.len(), stream.len());
        assert_eq!(result.events.len(), 2 * stream.len());
        for pair in result.events.chunks(2) {
            assert!(matches!(pair[0], StreamEvent::InputSymbol(_)));
            assert!(matches!(pair[1], StreamEvent::OutputChunk(_) | StreamEvent::Silence));
        }
    }

    #[test]
    fn counter_space_grows_with_the_prefix() {
        let m = counter_machine();
        let advice = AdviceFunction::always_empty();
        let result =
            itma_run_stream(&m, &advice, &stream_of("1111"), &KSchedule::Unbounded, None).unwrap();
        assert_eq!(result.outcome, StreamOutcome::Completed);
        // After t inputs the head rests on cell t, so t+1 cells are visited.
        assert_eq!(result.space, 5);
        assert_eq!(result.final_config.tapes[0].cells.len(), 4);
    }

    #[test]
    fn small_schedule_reports_the_failing_epoch() {
        let m = counter_machine();
        let advice = AdviceFunction::always_empty();
        let result =
            itma_run_stream(&m, &advice, &stream_of("11111"), &KSchedule::Fixed(3), None).unwrap();
        // Epoch t leaves the head on cell t, so the fixed bound of 3 breaks
        // when the third input pushes the head to cell 3.
        assert_eq!(result.outcome, StreamOutcome::SpaceExceeded { epoch: 3 });
        assert_eq!(result.chunks.len(), 3);
    }

    #[test]
    fn work_tape_persists_across_inputs() {
        // Streaming is prefix-stable: running on a prefix gives a prefix of
        // the events, and the final configuration matches the longer run's
        // intermediate state.
        let m = running_sum_machine();
        let advice = AdviceFunction::always_empty();
        let full = stream_of("110101");
        let prefix = &full[..3];
        let full_run =
            itma_run_stream(&m, &advice, &full, &KSchedule::Unbounded, None).unwrap();
        let prefix_run =
            itma_run_stream(&m, &advice, prefix, &KSchedule::Unbounded, None).unwrap();
        assert_eq!(full_run.events[..prefix_run.events.len()], prefix_run.events[..]);
        assert_eq!(prefix_run.final_config.tapes, full_run.epochs[2].steps.last().unwrap().tapes);
    }

    #[test]
    fn advice_extension_is_visible_to_later_epochs() {
        // Emits 1 iff the advice cell under the cursor is present.
        let work = Alphabet::new(["_"]).unwrap();
        let adv = Alphabet::new(["N"]).unwrap();
        let m = TmBuilder::new(binary(), work, 1)
            .output_alphabet(binary())
            .advice_alphabet(adv.clone())
            .states(["idle", "acc", "rej"])
            .initial("idle")
            .accept("acc")
            .reject("rej")
            .await_state("idle")
            .fill_reject()
            .rule_full("idle", "0", &["_"], None, "idle", &["_"], &[Move::Stay], Move::Stay, AdviceMove::Stay, "0").unwrap()
            .rule_full("idle", "1", &["_"], None, "idle", &["_"], &[Move::Stay], Move::Stay, AdviceMove::Stay, "0").unwrap()
            .rule_full("idle", "0", &["_"], Some("N"), "idle", &["_"], &[Move::Stay], Move::Stay, AdviceMove::Stay, "1").unwrap()
            .rule_full("idle", "1", &["_"], Some("N"), "idle", &["_"], &[Move::Stay], Move::Stay, AdviceMove::Stay, "1").unwrap()
            .build()
            .unwrap();
        let n = adv.get("N").unwrap();
        let mut advice = AdviceFunction::new();
        for t in 0..=6 {
            advice.set(t, if t >= 4 { vec![n] } else { vec![] });
        }
        let result =
            itma_run_stream(&m, &advice, &stream_of("000000"), &KSchedule::Unbounded, None).unwrap();
        let strings = chunk_strings(&m, &result);
        assert_eq!(strings, vec!["0", "0", "0", "1", "1", "1"]);
    }

    #[test]
    fn stuck_epoch_diverges() {
        // Never reaches await again: ping-pongs between two states.
        let work = Alphabet::new(["_"]).unwrap();
        let m = TmBuilder::new(binary(), work, 1)
            .states(["idle", "spin", "acc", "rej"])
            .initial("idle")
            .accept("acc")
            .reject("rej")
            .await_state("idle")
            .fill_reject()
            .rule("idle", "0", &["_"], "spin", &["_"], &[Move::Stay], Move::Stay).unwrap()
            .rule("spin", "0", &["_"], "spin", &["_"], &[Move::Stay], Move::Stay).unwrap()
            .build()
            .unwrap();
        let advice = AdviceFunction::always_empty();
        let result =
            itma_run_stream(&m, &advice, &stream_of("0"), &KSchedule::Unbounded, None).unwrap();
        assert_eq!(result.outcome, StreamOutcome::Diverged { epoch: 1 });
    }

    #[test]
    fn machines_without_await_are_rejected() {
        let m = {
            let work = Alphabet::new(["_"]).unwrap();
            TmBuilder::new(binary(), work, 1)
                .states(["q", "acc", "rej"])
                .initial("q")
                .accept("acc")
                .reject("rej")
                .fill_reject()
                .build()
                .unwrap()
        };
        let advice = AdviceFunction::always_empty();
        let err = itma_run_stream(&m, &advice, &stream_of("0"), &KSchedule::Unbounded, None)
            .unwrap_err();
        assert_eq!(err, TmError::MissingDeclaration("await"));
    }
}
