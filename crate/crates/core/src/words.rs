//! Canonical token texts for configurations.
//!
//! Predictors built from machines use a vocabulary whose tokens are surface
//! configurations rendered as text. The rendering here is canonical: one
//! string per configuration, stable across runs, and parseable back given the
//! machine it was rendered against.
//!
//! * transducer words: `[q=last1|at=2|rd=0]` — state, input head, scanned
//!   cell;
//! * batch machine words: `[w0:a.b@1|in@3=b|q=cmp]` — each work tape as
//!   `cells@head` (symbol names joined by `.`, empty string for an empty
//!   tape), then the input head and its cell, then the state;
//! * stream machine words: `[w0:m@1|port=1|q=idle]` — the port replaces the
//!   input head, since interactive runs never move it;
//! * machines with an advice alphabet insert `adv@cursor=cell` before the
//!   state, with an empty cell text for a blank or exhausted advice tape;
//! * prompt tokens `in:^`, `in:0`, `in:$` spell the endmarked input; port
//!   tokens `port:1` carry one stream symbol;
//! * [`BEGIN_TOKEN`] opens every prompt and [`END_TOKEN`] is the fixed point
//!   generated forever after a run halts.

use thiserror::Error;

use crate::alphabet::{Alphabet, Move, Symbol, TapeSymbol};
use crate::fst::{Dfst, StateId};
use crate::tm::{MultiTapeTm, TapeState, TmConfiguration};

pub const BEGIN_TOKEN: &str = "<go>";
pub const END_TOKEN: &str = "<end>";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("word {text:?}: {reason}")]
pub struct WordError {
    pub text: String,
    pub reason: String,
}

fn malformed(text: &str, reason: impl Into<String>) -> WordError {
    WordError { text: text.to_string(), reason: reason.into() }
}

/// `in:^`, `in:0`, ... — one token per cell of the endmarked input.
pub fn prompt_token(alphabet: &Alphabet, cell: TapeSymbol) -> String {
    format!("in:{}", cell.display(alphabet))
}

/// `port:0`, `port:1` — one token per stream symbol.
pub fn port_token(alphabet: &Alphabet, symbol: Symbol) -> String {
    port_token_for(alphabet.name(symbol))
}

/// [`port_token`] from the symbol's name alone.
pub fn port_token_for(name: &str) -> String {
    format!("port:{name}")
}

pub fn parse_prompt_token(alphabet: &Alphabet, text: &str) -> Result<TapeSymbol, WordError> {
    let rest = text
        .strip_prefix("in:")
        .ok_or_else(|| malformed(text, "expected an in: prompt token"))?;
    TapeSymbol::parse(rest, alphabet).map_err(|e| malformed(text, e.to_string()))
}

pub fn parse_port_token(alphabet: &Alphabet, text: &str) -> Result<Symbol, WordError> {
    let rest = text
        .strip_prefix("port:")
        .ok_or_else(|| malformed(text, "expected a port: token"))?;
    alphabet.require(rest).map_err(|e| malformed(text, e.to_string()))
}

/// Renders a transducer surface configuration together with the rule it
/// fires: state, head, scanned cell, then move, next state, and output for
/// non-halting states, or a `halt` marker.
pub fn fst_word(machine: &Dfst, state: StateId, head: usize, scanned: TapeSymbol) -> String {
    let prefix = format!(
        "[q={}|at={}|rd={}",
        machine.state_name(state),
        head,
        scanned.display(machine.input_alphabet())
    );
    match machine.rule(state, scanned) {
        None => format!("{prefix}|halt]"),
        Some(rule) => format!(
            "{prefix}|mv={}|to={}|out={}]",
            rule.movement.letter(),
            machine.state_name(rule.next),
            cells_text(machine.output_alphabet(), &rule.output),
        ),
    }
}

/// Parses a transducer word, checking the rule fields against the machine's
/// table.
pub fn parse_fst_word(
    machine: &Dfst,
    text: &str,
) -> Result<(StateId, usize, TapeSymbol), WordError> {
    let fields = split_fields(text)?;
    let (q, at, rd, rule_fields) = match fields.as_slice() {
        [q, at, rd, rest @ ..] => (q, at, rd, rest),
        _ => return Err(malformed(text, "expected fields q, at, rd and a rule or halt")),
    };
    let q = field_value(text, q, "q=")?;
    let at = field_value(text, at, "at=")?;
    let rd = field_value(text, rd, "rd=")?;
    let state = machine
        .state_by_name(q)
        .ok_or_else(|| malformed(text, format!("unknown state {q:?}")))?;
    let head: usize =
        at.parse().map_err(|_| malformed(text, format!("bad head position {at:?}")))?;
    let scanned = TapeSymbol::parse(rd, machine.input_alphabet())
        .map_err(|e| malformed(text, e.to_string()))?;
    match (machine.rule(state, scanned), rule_fields) {
        (None, [halt]) if *halt == "halt" => {}
        (None, _) => return Err(malformed(text, "halting state must carry a lone halt field")),
        (Some(rule), [mv, to, out]) => {
            let mv = field_value(text, mv, "mv=")?;
            let to = field_value(text, to, "to=")?;
            let out = field_value(text, out, "out=")?;
            let movement =
                Move::parse(mv).ok_or_else(|| malformed(text, format!("bad move {mv:?}")))?;
            let next = machine
                .state_by_name(to)
                .ok_or_else(|| malformed(text, format!("unknown state {to:?}")))?;
            let output = parse_cells(machine.output_alphabet(), out)
                .map_err(|e| malformed(text, e))?;
            if movement != rule.movement || next != rule.next || output != rule.output {
                return Err(malformed(text, "rule fields disagree with the machine's table"));
            }
        }
        (Some(_), _) => return Err(malformed(text, "expected fields mv, to, out")),
    }
    Ok((state, head, scanned))
}

/// Renders a machine surface configuration. Streaming words carry the port
/// cell; batch words carry the input head position and its cell.
pub fn tm_word(machine: &MultiTapeTm, config: &TmConfiguration, stream: bool) -> String {
    let mut fields = Vec::new();
    for (i, tape) in config.tapes.iter().enumerate() {
        fields.push(format!("w{}:{}@{}", i, cells_text(machine.work_alphabet(), &tape.cells), tape.head));
    }
    let input_text = config.scanned_input.display(machine.input_alphabet());
    if stream {
        fields.push(format!("port={input_text}"));
    } else {
        fields.push(format!("in@{}={}", config.input_pos, input_text));
    }
    if machine.advice_alphabet().is_some() {
        let cell = match config.scanned_advice {
            Some(s) => machine.advice_alphabet().unwrap().name(s).to_string(),
            None => String::new(),
        };
        fields.push(format!("adv@{}={}", config.advice_cursor, cell));
    }
    fields.push(format!("q={}", machine.state_name(config.state)));
    format!("[{}]", fields.join("|"))
}

pub fn parse_tm_word(
    machine: &MultiTapeTm,
    text: &str,
    stream: bool,
) -> Result<TmConfiguration, WordError> {
    let fields = split_fields(text)?;
    let expected = machine.tape_count()
        + 1
        + usize::from(machine.advice_alphabet().is_some())
        + 1;
    if fields.len() != expected {
        return Err(malformed(text, format!("expected {expected} fields, found {}", fields.len())));
    }
    let mut fields = fields.into_iter();

    let mut tapes = Vec::with_capacity(machine.tape_count());
    for i in 0..machine.tape_count() {
        let field = fields.next().unwrap();
        let body = field_value(text, &field, &format!("w{i}:"))?;
        let (cells_part, head_part) = body
            .rsplit_once('@')
            .ok_or_else(|| malformed(text, format!("tape field {field:?} lacks a head marker")))?;
        let head: usize = head_part
            .parse()
            .map_err(|_| malformed(text, format!("bad head position {head_part:?}")))?;
        let cells = parse_cells(machine.work_alphabet(), cells_part)
            .map_err(|e| malformed(text, e))?;
        tapes.push(TapeState { cells, head });
    }

    let input_field = fields.next().unwrap();
    let (input_pos, scanned_input) = if stream {
        let body = field_value(text, &input_field, "port=")?;
        let cell = TapeSymbol::parse(body, machine.input_alphabet())
            .map_err(|e| malformed(text, e.to_string()))?;
        (0, cell)
    } else {
        let body = field_value(text, &input_field, "in@")?;
        let (pos_part, cell_part) = body
            .split_once('=')
            .ok_or_else(|| malformed(text, "input field lacks a scanned cell"))?;
        let pos: usize = pos_part
            .parse()
            .map_err(|_| malformed(text, format!("bad input position {pos_part:?}")))?;
        let cell = TapeSymbol::parse(cell_part, machine.input_alphabet())
            .map_err(|e| malformed(text, e.to_string()))?;
        (pos, cell)
    };

    let (advice_cursor, scanned_advice) = match machine.advice_alphabet() {
        None => (0, None),
        Some(alphabet) => {
            let field = fields.next().unwrap();
            let body = field_value(text, &field, "adv@")?;
            let (cursor_part, cell_part) = body
                .split_once('=')
                .ok_or_else(|| malformed(text, "advice field lacks a cell"))?;
            let cursor: usize = cursor_part
                .parse()
                .map_err(|_| malformed(text, format!("bad advice cursor {cursor_part:?}")))?;
            let cell = if cell_part.is_empty() {
                None
            } else {
                Some(alphabet.require(cell_part).map_err(|e| malformed(text, e.to_string()))?)
            };
            (cursor, cell)
        }
    };

    let state_field = fields.next().unwrap();
    let name = field_value(text, &state_field, "q=")?;
    let state = machine
        .state_by_name(name)
        .ok_or_else(|| malformed(text, format!("unknown state {name:?}")))?;

    Ok(TmConfiguration { state, input_pos, scanned_input, tapes, advice_cursor, scanned_advice })
}

/// Swaps the port cell of a stream word's configuration, leaving everything
/// else untouched. Interactive runs do exactly this at each epoch boundary.
pub fn rekey_port(config: &TmConfiguration, symbol: Symbol) -> TmConfiguration {
    let mut next = config.clone();
    next.scanned_input = TapeSymbol::Plain(symbol);
    next
}

fn cells_text(alphabet: &Alphabet, cells: &[Symbol]) -> String {
    cells.iter().map(|&s| alphabet.name(s)).collect::<Vec<_>>().join(".")
}

fn parse_cells(alphabet: &Alphabet, text: &str) -> Result<Vec<Symbol>, String> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split('.')
        .map(|name| alphabet.require(name).map_err(|e| e.to_string()))
        .collect()
}

fn split_fields(text: &str) -> Result<Vec<String>, WordError> {
    let inner = text
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| malformed(text, "expected [ ... ]"))?;
    if inner.is_empty() {
        return Err(malformed(text, "empty word"));
    }
    Ok(inner.split('|').map(String::from).collect())
}

fn field_value<'a>(word: &str, field: &'a str, tag: &str) -> Result<&'a str, WordError> {
    field
        .strip_prefix(tag)
        .ok_or_else(|| malformed(word, format!("expected field {tag:?}, found {field:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Move;
    use crate::fst::DfstBuilder;
    use crate::tm::TmBuilder;

    fn binary() -> Alphabet {
        Alphabet::new(["0", "1"]).unwrap()
    }

    fn sample_fst() -> Dfst {
        let mut b = DfstBuilder::new(binary(), binary());
        b = b.states(["go", "halt"]).initial("go").halting("halt");
        for scanned in ["^", "0", "1"] {
            b = b.rule("go", scanned, Move::Right, "go", "").unwrap();
        }
        b = b.rule("go", "$", Move::Stay, "halt", "").unwrap();
        b.build().unwrap()
    }

    fn sample_tm(advice: bool) -> MultiTapeTm {
        let work = Alphabet::new(["_", "a", "b"]).unwrap();
        let mut b = TmBuilder::new(binary(), work, 2)
            .output_alphabet(binary())
            .states(["scan", "cmp", "acc", "rej"])
            .initial("scan")
            .accept("acc")
            .reject("rej")
            .fill_reject();
        if advice {
            b = b.advice_alphabet(Alphabet::new(["E", "O"]).unwrap());
        }
        b.build().unwrap()
    }

    #[test]
    fn fst_words_round_trip() {
        let m = sample_fst();
        let go = m.state_by_name("go").unwrap();
        let halt = m.state_by_name("halt").unwrap();
        let cases = [
            (go, 0, TapeSymbol::LeftEnd),
            (go, 3, TapeSymbol::Plain(Symbol(1))),
            (halt, 5, TapeSymbol::RightEnd),
        ];
        for (state, head, scanned) in cases {
            let text = fst_word(&m, state, head, scanned);
            assert_eq!(parse_fst_word(&m, &text).unwrap(), (state, head, scanned));
        }
        assert_eq!(
            fst_word(&m, go, 2, TapeSymbol::Plain(Symbol(0))),
            "[q=go|at=2|rd=0|mv=R|to=go|out=]"
        );
        assert_eq!(
            fst_word(&m, halt, 5, TapeSymbol::RightEnd),
            "[q=halt|at=5|rd=$|halt]"
        );
    }

    #[test]
    fn fst_words_with_stale_rule_fields_are_rejected() {
        let m = sample_fst();
        assert!(parse_fst_word(&m, "[q=go|at=2|rd=0|mv=L|to=go|out=]").is_err());
        assert!(parse_fst_word(&m, "[q=go|at=2|rd=0|halt]").is_err());
        assert!(parse_fst_word(&m, "[q=halt|at=5|rd=$|mv=S|to=go|out=]").is_err());
    }

    #[test]
    fn tm_words_round_trip_batch_and_stream() {
        let m = sample_tm(false);
        let config = TmConfiguration {
            state: m.state_by_name("cmp").unwrap(),
            input_pos: 3,
            scanned_input: TapeSymbol::Plain(Symbol(1)),
            tapes: vec![
                TapeState { cells: vec![Symbol(1), Symbol(2)], head: 1 },
                TapeState { cells: vec![], head: 0 },
            ],
            advice_cursor: 0,
            scanned_advice: None,
        };
        let batch = tm_word(&m, &config, false);
        assert_eq!(batch, "[w0:a.b@1|w1:@0|in@3=1|q=cmp]");
        assert_eq!(parse_tm_word(&m, &batch, false).unwrap(), config);

        let mut port_config = config.clone();
        port_config.input_pos = 0;
        let streamed = tm_word(&m, &port_config, true);
        assert_eq!(streamed, "[w0:a.b@1|w1:@0|port=1|q=cmp]");
        assert_eq!(parse_tm_word(&m, &streamed, true).unwrap(), port_config);
    }

    #[test]
    fn advice_fields_appear_only_on_advice_machines() {
        let m = sample_tm(true);
        let mut config = m.initial_config(&[]);
        config.advice_cursor = 2;
        config.scanned_advice = Some(Symbol(1));
        let text = tm_word(&m, &config, false);
        assert_eq!(text, "[w0:@0|w1:@0|in@0=^|adv@2=O|q=scan]");
        assert_eq!(parse_tm_word(&m, &text, false).unwrap(), config);

        config.scanned_advice = None;
        let text = tm_word(&m, &config, false);
        assert_eq!(text, "[w0:@0|w1:@0|in@0=^|adv@2=|q=scan]");
        assert_eq!(parse_tm_word(&m, &text, false).unwrap(), config);

        let plain = sample_tm(false);
        let text = tm_word(&plain, &plain.initial_config(&[]), false);
        assert!(!text.contains("adv@"));
    }

    #[test]
    fn rekeying_replaces_only_the_port() {
        let m = sample_tm(false);
        let config = parse_tm_word(&m, "[w0:a@0|w1:b.b@2|port=0|q=cmp]", true).unwrap();
        let rekeyed = rekey_port(&config, Symbol(1));
        assert_eq!(tm_word(&m, &rekeyed, true), "[w0:a@0|w1:b.b@2|port=1|q=cmp]");
        assert_eq!(rekeyed.tapes, config.tapes);
        assert_eq!(rekeyed.state, config.state);
    }

    #[test]
    fn prompt_and_port_tokens_round_trip() {
        let a = binary();
        for cell in TapeSymbol::enumerate(&a) {
            let text = prompt_token(&a, cell);
            assert_eq!(parse_prompt_token(&a, &text).unwrap(), cell);
        }
        assert_eq!(prompt_token(&a, TapeSymbol::LeftEnd), "in:^");
        assert_eq!(port_token(&a, Symbol(1)), "port:1");
        assert_eq!(parse_port_token(&a, "port:1").unwrap(), Symbol(1));
        assert!(parse_port_token(&a, "port:^").is_err());
    }

    #[test]
    fn malformed_words_are_rejected() {
        let m = sample_tm(false);
        for bad in [
            "[w0:a@1|w1:@0|in@3=1|q=cmp",
            "[w0:a@1|in@3=1|q=cmp]",
            "[w0:a@1|w1:@0|in@3=1|q=nope]",
            "[w0:z@1|w1:@0|in@3=1|q=cmp]",
            "[w0:a@x|w1:@0|in@3=1|q=cmp]",
            "[w0:a@1|w1:@0|in@3=1|adv@0=|q=cmp]",
            "<go>",
        ] {
            assert!(parse_tm_word(&m, bad, false).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn multi_character_symbol_names_stay_unambiguous() {
        let input = Alphabet::new(["tick", "tock"]).unwrap();
        let work = Alphabet::new(["blank-0", "mark+1", "mark+2"]).unwrap();
        let m = TmBuilder::new(input, work, 1)
            .states(["s", "acc", "rej"])
            .initial("s")
            .accept("acc")
            .reject("rej")
            .fill_reject()
            .build()
            .unwrap();
        let config = TmConfiguration {
            state: m.state_by_name("s").unwrap(),
            input_pos: 1,
            scanned_input: TapeSymbol::Plain(Symbol(0)),
            tapes: vec![TapeState { cells: vec![Symbol(2), Symbol(1)], head: 4 }],
            advice_cursor: 0,
            scanned_advice: None,
        };
        let text = tm_word(&m, &config, false);
        assert_eq!(text, "[w0:mark+2.mark+1@4|in@1=tick|q=s]");
        assert_eq!(parse_tm_word(&m, &text, false).unwrap(), config);
    }
}
