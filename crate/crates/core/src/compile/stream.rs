//! Compiles one lineage member: a predictor that carries an interactive
//! machine across stream epochs within a fixed space allowance.
//!
//! A member is compiled from a resume configuration rather than an input
//! length. Its vocabulary is the descendant closure of that configuration:
//! stepping under the port view, fanning out to every port symbol wherever
//! an epoch can begin (the await state, and the resume point itself while it
//! has not yet read a port symbol), and dropping any successor whose work
//! tapes outgrow the allowance. That hole is deliberate — running into it is
//! the signal that a larger member must take over from the last word.
//!
//! An epoch is driven by the prompt `[port token, resume word]`. Every word
//! fetches the port at position 0, so the successor table keys on (port
//! symbol, current configuration); generation stops on await-state and
//! terminal words, and the symbols a step emits hang off the word it
//! produces.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use crate::alphabet::{Symbol, TapeSymbol};
use crate::llm::{FixedLlm, ModelMode, TokenId, position_code, position_code_bits};
use crate::run::ceil_log2;
use crate::tm::{InputView, MultiTapeTm, TmConfiguration, apply_step};
use crate::words::{END_TOKEN, port_token, tm_word};

use super::assemble::{Assembly, assemble, insert_relation};
use super::layout::{
    ADVICE_CURSOR_BITS, FieldMap, KIND_END, KIND_PROMPT, KIND_WIDTH, KIND_WORD, RowWriter,
    TM_DIM_C,
};
use super::tm::tape_combination_count;
use super::{CompileError, CompileReport};

/// One member of a lineage: the predictor plus the bookkeeping the stream
/// driver needs to resume epochs, recognize their ends, and hand over.
#[derive(Debug, Clone)]
pub struct StreamMember {
    pub model: FixedLlm,
    pub report: CompileReport,
    /// Space allowance the member was compiled for.
    pub space_bound: usize,
    /// Advice string baked into the member's words.
    pub advice: Vec<Symbol>,
    /// Configuration the member was compiled from, port view.
    pub start: TmConfiguration,
    configs: BTreeMap<String, TmConfiguration>,
    await_texts: BTreeSet<String>,
    halt_texts: BTreeSet<String>,
}

impl StreamMember {
    /// The configuration behind a word text. Its input position is zeroed —
    /// a port machine never reads it, and the driver overwrites the port
    /// fields on every resume anyway.
    pub fn config_of(&self, text: &str) -> Option<&TmConfiguration> {
        self.configs.get(text)
    }

    /// True for await-state words: generating one ends the epoch normally.
    pub fn ends_epoch(&self, text: &str) -> bool {
        self.await_texts.contains(text)
    }

    /// True for accept- or reject-state words: the machine halted for good.
    pub fn halts(&self, text: &str) -> bool {
        self.halt_texts.contains(text)
    }

    /// The configuration words in the vocabulary, in text order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.configs.keys().map(String::as_str)
    }

    /// The two-token prompt that starts or resumes an epoch: the port token
    /// for the symbol being delivered, then the resume configuration's word.
    pub fn epoch_prompt(
        &self,
        machine: &MultiTapeTm,
        resume: &TmConfiguration,
    ) -> Result<Vec<TokenId>, CompileError> {
        let TapeSymbol::Plain(s) = resume.scanned_input else {
            return Err(CompileError::InvalidParams(
                "a resume configuration must hold a port symbol".into(),
            ));
        };
        let port = self.model.vocabulary().require(&port_token(machine.input_alphabet(), s))?;
        let word = self.model.vocabulary().require(&tm_word(machine, resume, true))?;
        Ok(vec![port, word])
    }
}

/// Compiles the member that simulates `machine` from `start` onward while
/// its work tapes fit in `space_bound` cells, under a fixed advice string.
/// The start configuration and its immediate successor must already fit —
/// a member that could not take a single step is a schedule bug, not a
/// model.
pub fn compile_stream_member(
    machine: &MultiTapeTm,
    advice: &[Symbol],
    space_bound: usize,
    start: &TmConfiguration,
) -> Result<StreamMember, CompileError> {
    let k = space_bound;
    if k == 0 {
        return Err(CompileError::InvalidParams("space bound must be ≥ 1".into()));
    }
    let await_state = machine
        .await_state()
        .ok_or_else(|| CompileError::InvalidParams("the machine declares no await state".into()))?;
    if !advice.is_empty() && !machine.uses_advice() {
        return Err(CompileError::InvalidParams(
            "advice supplied for a machine without an advice alphabet".into(),
        ));
    }
    let alphabet = machine.input_alphabet();

    let mut start = start.clone();
    start.input_pos = 0;
    start.scanned_advice = advice.get(start.advice_cursor).copied();
    let start_text = tm_word(machine, &start, true);
    if start.size() > k {
        return Err(CompileError::SpaceBoundViolated {
            input: start_text,
            used: start.size(),
            bound: k,
        });
    }
    if !machine.is_terminal(start.state) && start.scanned_input != TapeSymbol::LeftEnd {
        let (next, _) = apply_step(machine, &start, InputView::Port, advice);
        if next.size() > k {
            return Err(CompileError::SpaceBoundViolated {
                input: start_text,
                used: next.size(),
                bound: k,
            });
        }
    }

    // Descendant closure. The cap is the count of distinct port-view
    // configurations with a well-behaved advice cursor; a machine that blows
    // past it is running its cursor away from the advice string.
    let cursors = if machine.uses_advice() { advice.len() + 2 } else { 1 };
    let cap = machine
        .state_count()
        .saturating_mul(alphabet.len() + 2)
        .saturating_mul(tape_combination_count(machine, k))
        .saturating_mul(cursors);
    let mut configs: BTreeMap<String, TmConfiguration> = BTreeMap::new();
    let mut relation: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut emissions: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut seen: HashSet<TmConfiguration> = HashSet::new();
    let mut queue: VecDeque<TmConfiguration> = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back(start.clone());
    while let Some(node) = queue.pop_front() {
        if seen.len() > cap {
            return Err(CompileError::VocabularyBudgetExceeded { size: seen.len(), cap });
        }
        let text = tm_word(machine, &node, true);
        configs.insert(text.clone(), node.clone());
        if machine.is_terminal(node.state) {
            continue;
        }
        if let TapeSymbol::Plain(s) = node.scanned_input {
            let (next, rule) = apply_step(machine, &node, InputView::Port, advice);
            if next.size() <= k {
                let next_text = tm_word(machine, &next, true);
                insert_relation(&mut relation, port_token(alphabet, s), text.clone(), &next_text)?;
                let names: Vec<String> = rule
                    .emit
                    .iter()
                    .map(|&o| machine.output_alphabet().name(o).to_string())
                    .collect();
                match emissions.get(&next_text) {
                    None => {
                        emissions.insert(next_text, names);
                    }
                    Some(previous) if *previous == names => {}
                    Some(_) => {
                        return Err(CompileError::InvalidParams(format!(
                            "word {next_text} is produced by rules with different outputs",
                        )));
                    }
                }
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        if node.state == await_state || node.scanned_input == TapeSymbol::LeftEnd {
            for s in alphabet.symbols() {
                let mut refreshed = node.clone();
                refreshed.scanned_input = TapeSymbol::Plain(s);
                refreshed.scanned_advice = advice.get(refreshed.advice_cursor).copied();
                if seen.insert(refreshed.clone()) {
                    queue.push_back(refreshed);
                }
            }
        }
    }

    for cfg in configs.values() {
        if cfg.advice_cursor >= 1 << ADVICE_CURSOR_BITS {
            return Err(CompileError::InvalidParams(format!(
                "advice cursor {} does not fit the {ADVICE_CURSOR_BITS}-bit cursor code",
                cfg.advice_cursor
            )));
        }
    }

    let window = configs.len() + 3;
    let map = stream_field_map(machine, k, window);
    let dimension_bound = TM_DIM_C * k;
    if map.dimension() > dimension_bound {
        return Err(CompileError::DimensionBound {
            dimension: map.dimension(),
            bound: dimension_bound,
        });
    }

    let bits_w = map.width("target");
    let mut texts = vec![END_TOKEN.to_string()];
    let mut embeddings = vec![
        RowWriter::new(&map)
            .set("bias", 0, 1)
            .one_hot("kind", KIND_END)
            .code("target", &position_code(0, bits_w))
            .finish(),
    ];
    for s in alphabet.symbols() {
        texts.push(port_token(alphabet, s));
        embeddings.push(
            RowWriter::new(&map)
                .set("bias", 0, 1)
                .one_hot("kind", KIND_PROMPT)
                .set("fetchable", 0, 1)
                .one_hot("symbol", TapeSymbol::Plain(s).ordinal())
                .code("target", &position_code(0, bits_w))
                .finish(),
        );
    }
    for (text, cfg) in &configs {
        texts.push(text.clone());
        embeddings.push(stream_word_row(machine, &map, k, cfg));
    }

    let texts_where = |pred: &dyn Fn(&TmConfiguration) -> bool| -> BTreeSet<String> {
        configs.iter().filter(|(_, c)| pred(c)).map(|(t, _)| t.clone()).collect()
    };
    let await_texts = texts_where(&|c| c.state == await_state);
    let halt_texts = texts_where(&|c| machine.is_terminal(c.state));
    let accept_texts = texts_where(&|c| c.state == machine.accept_state());
    let reject_texts = texts_where(&|c| c.state == machine.reject_state());
    let token_count = texts.len();
    let (model, successor_entries) = assemble(Assembly {
        map: &map,
        texts,
        embeddings,
        window,
        relation: &relation,
        terminal_texts: halt_texts.clone(),
        pausing_texts: await_texts.clone(),
        residual_fields: stream_residual_fields(machine),
        mode: ModelMode::Emitting,
        accept_texts,
        reject_texts,
        emit_leaving: emissions,
    })?;
    let report = CompileReport {
        token_count,
        word_count: configs.len(),
        prompt_token_count: alphabet.len(),
        window,
        dimension: map.dimension(),
        dimension_bound,
        successor_entries,
        inputs_covered: 0,
        max_sentence_len: 0,
    };
    Ok(StreamMember {
        model,
        report,
        space_bound: k,
        advice: advice.to_vec(),
        start,
        configs,
        await_texts,
        halt_texts,
    })
}

/// The embedding layout for stream words: the shared `bias`/`fetchable`/
/// `kind`/`symbol` block, then the state one-hot, the port cell one-hot,
/// per work tape `t` the cell one-hots `w{t}` and head code `h{t}`, the
/// advice cursor and scanned-cell fields, and the fetch `target` (always
/// position 0, where the prompt holds the port token).
pub fn stream_field_map(machine: &MultiTapeTm, k: usize, window: usize) -> FieldMap {
    let sym_width = machine.input_alphabet().len() + 2;
    let gamma = machine.work_alphabet().len();
    let mut b = FieldMap::builder()
        .field("bias", 1)
        .field("fetchable", 1)
        .field("kind", KIND_WIDTH)
        .field("symbol", sym_width)
        .field("state", machine.state_count())
        .field("port", sym_width);
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

fn stream_residual_fields(machine: &MultiTapeTm) -> Vec<String> {
    let mut names: Vec<String> = ["kind", "state", "port"].map(String::from).into();
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

fn stream_word_row(
    machine: &MultiTapeTm,
    map: &FieldMap,
    k: usize,
    cfg: &TmConfiguration,
) -> Vec<i64> {
    let blank = machine.blank();
    let gamma = machine.work_alphabet().len();
    let mut row = RowWriter::new(map)
        .set("bias", 0, 1)
        .one_hot("kind", KIND_WORD)
        .one_hot("state", cfg.state.0 as usize)
        .one_hot("port", cfg.scanned_input.ordinal());
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
    row.code("target", &position_code(0, map.width("target"))).finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advice::AdviceFunction;
    use crate::alphabet::{Alphabet, Move};
    use crate::llm::{Answer, LlmError, StopReason};
    use crate::stream::{KSchedule, itma_run_stream};
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

    fn resume_from(
        member: &StreamMember,
        config: &TmConfiguration,
        symbol: Symbol,
    ) -> TmConfiguration {
        let mut resume = config.clone();
        resume.input_pos = 0;
        resume.scanned_input = TapeSymbol::Plain(symbol);
        resume.scanned_advice = member.advice.get(resume.advice_cursor).copied();
        resume
    }

    /// Drives `member` over the stream one epoch at a time, returning the
    /// decoded chunks and generated sentences.
    fn drive(
        machine: &MultiTapeTm,
        member: &StreamMember,
        stream: &[Symbol],
    ) -> (Vec<String>, Vec<Vec<String>>) {
        let mut config = member.start.clone();
        let mut chunks = Vec::new();
        let mut sentences = Vec::new();
        for &s in stream {
            let resume = resume_from(member, &config, s);
            let prompt = member.epoch_prompt(machine, &resume).unwrap();
            let trace = member.model.generate(&prompt, member.report.word_count + 1).unwrap();
            assert_eq!(trace.stopped, StopReason::StopToken, "epoch did not finish");
            assert!(trace.min_margin().unwrap_or(i64::MAX) >= 1);
            let words: Vec<String> = trace
                .generated
                .iter()
                .map(|&t| member.model.vocabulary().text(t).to_string())
                .collect();
            match member.model.decode_answer(&trace) {
                Answer::Output(chunk) => chunks.push(chunk),
                other => panic!("expected a chunk, got {other:?}"),
            }
            let last = words.last().unwrap();
            assert!(member.ends_epoch(last), "machine halted mid-stream");
            config = member.config_of(last).unwrap().clone();
            sentences.push(words);
        }
        (chunks, sentences)
    }

    fn oracle_sentences(machine: &MultiTapeTm, stream: &[Symbol]) -> (Vec<String>, Vec<Vec<String>>) {
        let advice = AdviceFunction::always_empty();
        let run =
            itma_run_stream(machine, &advice, stream, &KSchedule::Unbounded, None).unwrap();
        let chunks = run
            .chunks
            .iter()
            .map(|c| machine.output_alphabet().format_string(c))
            .collect();
        let sentences = run
            .epochs
            .iter()
            .map(|e| e.steps.iter().map(|c| tm_word(machine, c, true)).collect())
            .collect();
        (chunks, sentences)
    }

    #[test]
    fn echo_member_replays_the_oracle_epochs() {
        let m = echo_machine();
        let member = compile_stream_member(&m, &[], 1, &m.initial_config(&[])).unwrap();
        let stream = binary().parse_string("10110").unwrap();
        let (chunks, sentences) = drive(&m, &member, &stream);
        let (oracle_chunks, oracle_sents) = oracle_sentences(&m, &stream);
        assert_eq!(chunks, oracle_chunks);
        assert_eq!(sentences, oracle_sents);
    }

    #[test]
    fn running_sum_member_tracks_work_state_across_epochs() {
        let m = running_sum_machine();
        let member = compile_stream_member(&m, &[], 1, &m.initial_config(&[])).unwrap();
        let stream = binary().parse_string("100110101110").unwrap();
        let (chunks, sentences) = drive(&m, &member, &stream);
        let (oracle_chunks, oracle_sents) = oracle_sentences(&m, &stream);
        assert_eq!(chunks, oracle_chunks);
        assert_eq!(sentences, oracle_sents);
    }

    #[test]
    fn outgrowing_the_allowance_means_a_missing_successor() {
        let m = counter_machine();
        let one = binary().get("1").unwrap();
        let member = compile_stream_member(&m, &[], 2, &m.initial_config(&[])).unwrap();

        // Epoch 1 fits: the head ends on cell 1 and extent 2 ≤ 2.
        let resume1 = resume_from(&member, &member.start, one);
        let prompt = member.epoch_prompt(&m, &resume1).unwrap();
        let trace = member.model.generate(&prompt, 8).unwrap();
        assert_eq!(trace.stopped, StopReason::StopToken);
        let after1 =
            member.config_of(member.model.vocabulary().text(*trace.generated.last().unwrap())).unwrap().clone();

        // Epoch 2 would push the extent to 3: the edge is deliberately
        // absent, so the model reports the missing successor.
        let resume2 = resume_from(&member, &after1, one);
        let prompt = member.epoch_prompt(&m, &resume2).unwrap();
        let err = member.model.generate(&prompt, 8).unwrap_err();
        assert!(matches!(err, LlmError::MissingSuccessor { .. }), "got {err:?}");

        // A larger member compiled from the stuck configuration carries the
        // stream on, and the stitched chunks equal the oracle's.
        let bigger = compile_stream_member(&m, &[], 4, &resume2).unwrap();
        let stream = binary().parse_string("11").unwrap();
        let (chunks, _) = drive(&m, &bigger, &stream);
        let (oracle_chunks, _) = oracle_sentences(&m, &binary().parse_string("111").unwrap());
        assert_eq!(oracle_chunks[0], "1");
        assert_eq!(chunks, oracle_chunks[1..]);
    }

    #[test]
    fn a_start_whose_next_step_does_not_fit_is_rejected() {
        let m = counter_machine();
        let one = binary().get("1").unwrap();
        let member = compile_stream_member(&m, &[], 2, &m.initial_config(&[])).unwrap();
        let resume1 = resume_from(&member, &member.start, one);
        let (after1, _) = apply_step(&m, &resume1, InputView::Port, &[]);
        let resume2 = resume_from(&member, &after1, one);
        let err = compile_stream_member(&m, &[], 2, &resume2).unwrap_err();
        assert!(matches!(err, CompileError::SpaceBoundViolated { used: 3, bound: 2, .. }), "got {err:?}");
    }
}
