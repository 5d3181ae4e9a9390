//! Replaying an interactive run from serialized member descriptions alone.
//!
//! [`describe`] renders a member's predictor into its canonical byte form,
//! and [`BridgeAdvice`] collects one description per lineage member, keyed by
//! the stream position where that member takes over and tagged with the
//! trigger that retired its predecessor. [`bridge_run`] is an interpreter
//! over such a table: it parses each description as its position arrives and
//! drives the parsed predictor word for word, so the machine the members
//! were compiled from never has to exist on the serving side. A description
//! depends only on the member's space bound and advice value — two streams
//! whose reconstruction progressions agree receive byte-identical
//! descriptions at every index.
//!
//! [`roundtrip_check`] ties the representations together: the same stream
//! runs through the machine directly, through [`process_stream`], and
//! through [`bridge_run`] over the harvested table, and the report states
//! whether all three produced the same chunks and outcome. A disagreement is
//! data the report localizes, not an error.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::advice::AdviceFunction;
use crate::alphabet::{LEFT_END_NAME, Symbol};
use crate::lineage::{
    Lineage, LineageError, ReconstructionEvent, Trigger, process_stream,
};
use crate::llm::{DescriptionError, FixedLlm, LlmError, TokenId, parse_description, serialize_description};
use crate::run::Verdict;
use crate::stream::{KSchedule, StreamOutcome, itma_run_stream};
use crate::tm::MultiTapeTm;
use crate::words::port_token_for;

/// A predictor's full serialized form. The bytes are canonical: parsing a
/// valid description and serializing the result reproduces them exactly, and
/// structurally identical predictors describe to identical bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDescription {
    bytes: String,
}

impl ModelDescription {
    /// Wraps raw bytes; validity surfaces when the description is parsed.
    pub fn from_bytes(bytes: String) -> Self {
        ModelDescription { bytes }
    }

    pub fn bytes(&self) -> &str {
        &self.bytes
    }

    pub fn parse(&self) -> Result<FixedLlm, DescriptionError> {
        parse_description(&self.bytes)
    }
}

/// Serializes a predictor into its canonical description.
pub fn describe(model: &FixedLlm) -> ModelDescription {
    ModelDescription { bytes: serialize_description(model) }
}

/// One advice value: the description of the member that takes over at
/// `position`, and the trigger that retired its predecessor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeEntry {
    /// 1-based stream position of the first epoch the member serves.
    pub position: usize,
    /// Why the previous member stopped; `None` on the first entry.
    pub trigger: Option<Trigger>,
    pub description: ModelDescription,
}

/// The advice table for a whole stream: one entry per member, in takeover
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeAdvice {
    entries: Vec<BridgeEntry>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BridgeError {
    #[error("bad advice table: {0}")]
    InvalidTable(String),
    #[error("description of member {member} does not parse: {source}")]
    Description { member: usize, source: DescriptionError },
    #[error("no advice entry covers the switch at stream position {position}")]
    MissingAdvice { position: usize },
    #[error("stream position {position}: no port token for symbol {symbol:?}")]
    UnknownPort { position: usize, symbol: String },
    #[error("stream position {position}: no word resumes {from:?} under port {port:?}")]
    NoResume { position: usize, from: String, port: String },
    #[error("stream position {position}: several words resume {from:?} under port {port:?}")]
    AmbiguousResume { position: usize, from: String, port: String },
    #[error("stream position {position}: {source}")]
    Run { position: usize, source: LlmError },
    #[error("{path}: {message}")]
    Storage { path: String, message: String },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error(transparent)]
    Lineage(#[from] LineageError),
}

const MANIFEST_HEADER: &str = "bridge-advice v1";
const MANIFEST_FILE: &str = "manifest";

fn member_file(member: usize) -> String {
    format!("member-{member}.model")
}

fn trigger_name(trigger: Trigger) -> &'static str {
    match trigger {
        Trigger::SpaceExceeded => "space",
        Trigger::AdviceChanged => "advice",
        Trigger::Both => "both",
    }
}

fn trigger_by_name(name: &str) -> Option<Trigger> {
    match name {
        "space" => Some(Trigger::SpaceExceeded),
        "advice" => Some(Trigger::AdviceChanged),
        "both" => Some(Trigger::Both),
        _ => None,
    }
}

impl BridgeAdvice {
    /// Checks the takeover order: the first entry opens the stream at
    /// position 1 with no trigger, every later entry carries the trigger
    /// that retired its predecessor, and positions never decrease.
    pub fn new(entries: Vec<BridgeEntry>) -> Result<Self, BridgeError> {
        let bad = |msg: String| Err(BridgeError::InvalidTable(msg));
        let Some(first) = entries.first() else {
            return bad("the table needs at least the first member".into());
        };
        if first.position != 1 || first.trigger.is_some() {
            return bad("the first member must open the stream at position 1, untriggered".into());
        }
        for (pair, window) in entries.windows(2).enumerate() {
            let (prev, next) = (&window[0], &window[1]);
            if next.trigger.is_none() {
                return bad(format!("member {} lacks a trigger", pair + 2));
            }
            if next.position < prev.position {
                return bad(format!(
                    "member {} takes over at position {}, before its predecessor's {}",
                    pair + 2,
                    next.position,
                    prev.position
                ));
            }
        }
        Ok(BridgeAdvice { entries })
    }

    /// Reads the whole table off a finished lineage: the first member opens
    /// at position 1 and each reconstruction event donates the position and
    /// trigger for the member it created.
    pub fn harvest(lineage: &Lineage) -> Self {
        let mut entries = vec![BridgeEntry {
            position: 1,
            trigger: None,
            description: describe(&lineage.members[0].model),
        }];
        for (event, member) in lineage.log.iter().zip(&lineage.members[1..]) {
            entries.push(BridgeEntry {
                position: event.stream_position,
                trigger: Some(event.trigger),
                description: describe(&member.model),
            });
        }
        Self::new(entries).expect("a lineage's log lines up with its members")
    }

    pub fn entries(&self) -> &[BridgeEntry] {
        &self.entries
    }

    /// The description serving member `member` (1-based).
    pub fn description(&self, member: usize) -> Option<&ModelDescription> {
        self.entries.get(member.checked_sub(1)?).map(|e| &e.description)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes the table as one description file per member plus a manifest
    /// recording takeover positions and triggers.
    pub fn save_dir(&self, dir: &Path) -> Result<(), BridgeError> {
        let storage = |path: &Path, message: String| BridgeError::Storage {
            path: path.display().to_string(),
            message,
        };
        std::fs::create_dir_all(dir).map_err(|e| storage(dir, e.to_string()))?;
        let mut manifest = String::new();
        let _ = writeln!(manifest, "{MANIFEST_HEADER}");
        let _ = writeln!(manifest, "members {}", self.entries.len());
        for (i, entry) in self.entries.iter().enumerate() {
            let member = i + 1;
            let path = dir.join(member_file(member));
            std::fs::write(&path, entry.description.bytes())
                .map_err(|e| storage(&path, e.to_string()))?;
            match entry.trigger {
                None => {
                    let _ = writeln!(manifest, "member {member} at {}", entry.position);
                }
                Some(t) => {
                    let _ = writeln!(
                        manifest,
                        "member {member} at {} after {}",
                        entry.position,
                        trigger_name(t)
                    );
                }
            }
        }
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, manifest).map_err(|e| storage(&path, e.to_string()))
    }

    /// Reads a table written by [`BridgeAdvice::save_dir`].
    pub fn load_dir(dir: &Path) -> Result<Self, BridgeError> {
        let read = |path: &Path| -> Result<String, BridgeError> {
            std::fs::read_to_string(path).map_err(|e| BridgeError::Storage {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        };
        let manifest = read(&dir.join(MANIFEST_FILE))?;
        let lines: Vec<&str> = manifest.lines().collect();
        let line = |i: usize| -> Result<&str, BridgeError> {
            lines.get(i).copied().ok_or(BridgeError::Manifest {
                line: i + 1,
                message: "unexpected end of manifest".into(),
            })
        };
        if line(0)? != MANIFEST_HEADER {
            return Err(BridgeError::Manifest {
                line: 1,
                message: format!("expected header {MANIFEST_HEADER:?}"),
            });
        }
        let count: usize = line(1)?
            .strip_prefix("members ")
            .and_then(|c| c.parse().ok())
            .ok_or(BridgeError::Manifest { line: 2, message: "expected a members count".into() })?;
        let mut entries = Vec::with_capacity(count);
        for i in 0..count {
            let text = line(2 + i)?;
            let bad = |message: String| BridgeError::Manifest { line: 3 + i, message };
            let (member, position, trigger) = match text.split(' ').collect::<Vec<_>>().as_slice()
            {
                ["member", m, "at", p] => (*m, *p, None),
                ["member", m, "at", p, "after", t] => {
                    let t =
                        trigger_by_name(t).ok_or_else(|| bad(format!("unknown trigger {t:?}")))?;
                    (*m, *p, Some(t))
                }
                _ => return Err(bad(format!("unrecognized entry {text:?}"))),
            };
            let member: usize =
                member.parse().map_err(|_| bad(format!("bad member number {member:?}")))?;
            if member != i + 1 {
                return Err(bad(format!("expected member {}, found {member}", i + 1)));
            }
            let position: usize =
                position.parse().map_err(|_| bad(format!("bad position {position:?}")))?;
            let description = ModelDescription::from_bytes(read(&dir.join(member_file(member)))?);
            entries.push(BridgeEntry { position, trigger, description });
        }
        if lines.len() > 2 + count {
            return Err(BridgeError::Manifest {
                line: 3 + count,
                message: "trailing content after the last member".into(),
            });
        }
        Self::new(entries)
    }
}

/// What a description-driven stream run produced. Chunks hold output symbol
/// names and sentences hold word texts — the interpreter works on the
/// descriptions' own surface and never consults a machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeRun {
    pub chunks: Vec<Vec<String>>,
    pub sentences: Vec<Vec<String>>,
    pub outcome: StreamOutcome,
    /// 1-based index of the member that served the final epoch.
    pub final_member: usize,
}

enum EpochEnd {
    Await(String),
    Halted(Verdict),
    Diverged,
}

fn segments(text: &str) -> Option<Vec<&str>> {
    let inner = text.strip_prefix('[')?.strip_suffix(']')?;
    (!inner.is_empty()).then(|| inner.split('|').collect())
}

/// Whether `candidate` resumes `from` under `port_name`: all fields equal
/// except the port, which must carry the new symbol, and the advice cell,
/// which the serving description fixes on its own (the cursor must agree).
fn is_resume(candidate: &str, from: &str, port_name: &str) -> bool {
    let (Some(c), Some(f)) = (segments(candidate), segments(from)) else {
        return false;
    };
    c.len() == f.len()
        && c.iter().zip(&f).all(|(c, f)| match f.split_once('=') {
            Some(("port", _)) => c.strip_prefix("port=") == Some(port_name),
            Some((head, _)) if head.starts_with("adv@") => {
                c.split_once('=').is_some_and(|(ch, _)| ch == head)
            }
            _ => c == f,
        })
}

/// The unique vocabulary word resuming `from` under `symbol`.
fn resume_word(
    model: &FixedLlm,
    from: &str,
    symbol: &str,
    position: usize,
) -> Result<(TokenId, String), BridgeError> {
    let mut found = None;
    for (id, text) in model.vocabulary().tokens() {
        if !is_resume(text, from, symbol) {
            continue;
        }
        if found.replace((id, text.to_string())).is_some() {
            return Err(BridgeError::AmbiguousResume {
                position,
                from: from.to_string(),
                port: symbol.to_string(),
            });
        }
    }
    found.ok_or_else(|| BridgeError::NoResume {
        position,
        from: from.to_string(),
        port: symbol.to_string(),
    })
}

/// The unique word scanning the left endmarker: the configuration the first
/// member opens the stream from.
fn initial_word(model: &FixedLlm) -> Result<String, BridgeError> {
    let tag = format!("port={LEFT_END_NAME}");
    let mut roots = model
        .vocabulary()
        .tokens()
        .filter(|(_, text)| segments(text).is_some_and(|s| s.contains(&tag.as_str())));
    match (roots.next(), roots.next()) {
        (Some((_, text)), None) => Ok(text.to_string()),
        _ => Err(BridgeError::InvalidTable(
            "the first description must contain exactly one left-end word".into(),
        )),
    }
}

fn parse_member(entry: &BridgeEntry, member: usize) -> Result<FixedLlm, BridgeError> {
    entry.description.parse().map_err(|source| BridgeError::Description { member, source })
}

fn port_id(
    model: &FixedLlm,
    port: &str,
    symbol: &str,
    position: usize,
) -> Result<TokenId, BridgeError> {
    model
        .vocabulary()
        .id(port)
        .ok_or_else(|| BridgeError::UnknownPort { position, symbol: symbol.to_string() })
}

/// Serves `stream` from the advice table alone.
///
/// The first description opens at its left-end word. Each epoch splices the
/// incoming symbol into the previous await word — the resume word is the
/// unique vocabulary entry agreeing with it everywhere but the port field
/// and advice cell — and generates until the member pauses, halts, or
/// repeats a word. A missing successor means the serving member ran out of
/// room there: the table must announce a space handoff at that position, and
/// generation re-resumes from the last word inside the incoming member.
/// Advice handoffs are installed up front at their announced positions.
pub fn bridge_run(advice: &BridgeAdvice, stream: &[&str]) -> Result<BridgeRun, BridgeError> {
    let mut pending = advice.entries[1..].iter().peekable();
    let mut member = 1usize;
    let mut model = parse_member(&advice.entries[0], 1)?;
    let mut prev_text = initial_word(&model)?;

    let mut chunks = Vec::new();
    let mut sentences = Vec::new();
    let mut outcome = StreamOutcome::Completed;

    'stream: for (idx, &symbol) in stream.iter().enumerate() {
        let position = idx + 1;
        if let Some(entry) = pending.next_if(|e| {
            e.position == position
                && matches!(e.trigger, Some(Trigger::AdviceChanged | Trigger::Both))
        }) {
            member += 1;
            model = parse_member(entry, member)?;
        }

        let port = port_token_for(symbol);
        let (resume_id, resume_text) = resume_word(&model, &prev_text, symbol, position)?;
        let mut context = vec![port_id(&model, &port, symbol, position)?, resume_id];
        let mut last_word = resume_text.clone();
        let mut seen: HashSet<String> = HashSet::from([resume_text]);
        let mut chunk = Vec::new();
        let mut sentence: Vec<String> = Vec::new();

        let end = loop {
            let token = match model.next_token(&context) {
                Ok((token, _)) => token,
                Err(LlmError::MissingSuccessor { .. }) => {
                    let entry = pending
                        .next_if(|e| {
                            e.position == position && e.trigger == Some(Trigger::SpaceExceeded)
                        })
                        .ok_or(BridgeError::MissingAdvice { position })?;
                    member += 1;
                    model = parse_member(entry, member)?;
                    let (id, text) = resume_word(&model, &last_word, symbol, position)?;
                    context = vec![port_id(&model, &port, symbol, position)?, id];
                    last_word = text;
                    continue;
                }
                Err(source) => return Err(BridgeError::Run { position, source }),
            };
            context.push(token);
            let text = model.vocabulary().text(token).to_string();
            if let Some(names) = model.decode_info().emit_leaving.get(&token) {
                chunk.extend(names.iter().cloned());
            }
            sentence.push(text.clone());
            last_word = text.clone();
            if model.decode_info().accept_tokens.contains(&token) {
                break EpochEnd::Halted(Verdict::Accept);
            }
            if model.decode_info().reject_tokens.contains(&token) {
                break EpochEnd::Halted(Verdict::Reject);
            }
            if model.stop_tokens().contains(&token) {
                break EpochEnd::Await(text);
            }
            if !seen.insert(text) {
                break EpochEnd::Diverged;
            }
        };

        chunks.push(chunk);
        sentences.push(sentence);
        match end {
            EpochEnd::Await(text) => prev_text = text,
            EpochEnd::Halted(verdict) => {
                outcome = StreamOutcome::Halted { verdict, epoch: position };
                break 'stream;
            }
            EpochEnd::Diverged => {
                outcome = StreamOutcome::Diverged { epoch: position };
                break 'stream;
            }
        }
    }

    Ok(BridgeRun { chunks, sentences, outcome, final_member: member })
}

/// Three runs of one stream laid side by side: the machine driven directly,
/// the lineage of compiled members, and the interpreter over the harvested
/// descriptions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundtripReport {
    pub oracle_chunks: Vec<Vec<String>>,
    pub lineage_chunks: Vec<Vec<String>>,
    pub bridge_chunks: Vec<Vec<String>>,
    pub oracle_outcome: StreamOutcome,
    pub lineage_outcome: StreamOutcome,
    pub bridge_outcome: StreamOutcome,
    /// The lineage's handoffs, tying member indices to stream positions.
    pub reconstructions: Vec<ReconstructionEvent>,
    /// All three chunk sequences and outcomes coincide.
    pub agreement: bool,
    /// 1-based epoch of the first differing chunk, if any.
    pub first_divergence: Option<usize>,
}

/// Runs `stream` three ways — machine, lineage, description interpreter —
/// and compares the outputs epoch by epoch.
pub fn roundtrip_check(
    machine: &MultiTapeTm,
    advice: &AdviceFunction,
    stream: &[Symbol],
    schedule: &[usize],
) -> Result<RoundtripReport, BridgeError> {
    three_way(machine, advice, stream, schedule, None)
}

/// [`roundtrip_check`] with a caller-supplied table: the lineage still runs
/// under `schedule`, but the interpreter serves the stream from `table`, so
/// stored — or tampered — tables can be put side by side with the machine.
pub fn roundtrip_check_with(
    machine: &MultiTapeTm,
    advice: &AdviceFunction,
    stream: &[Symbol],
    schedule: &[usize],
    table: &BridgeAdvice,
) -> Result<RoundtripReport, BridgeError> {
    three_way(machine, advice, stream, schedule, Some(table))
}

fn three_way(
    machine: &MultiTapeTm,
    advice: &AdviceFunction,
    stream: &[Symbol],
    schedule: &[usize],
    table: Option<&BridgeAdvice>,
) -> Result<RoundtripReport, BridgeError> {
    let oracle = itma_run_stream(machine, advice, stream, &KSchedule::Unbounded, None)
        .map_err(LineageError::from)?;
    let lineage = process_stream(machine, advice, stream, schedule)?;
    let harvested;
    let table = match table {
        Some(t) => t,
        None => {
            harvested = BridgeAdvice::harvest(&lineage.lineage);
            &harvested
        }
    };
    let names: Vec<&str> = stream.iter().map(|&s| machine.input_alphabet().name(s)).collect();
    let bridge = bridge_run(table, &names)?;

    let out = machine.output_alphabet();
    let to_names = |chunks: &[Vec<Symbol>]| -> Vec<Vec<String>> {
        chunks.iter().map(|c| c.iter().map(|&s| out.name(s).to_string()).collect()).collect()
    };
    let oracle_chunks = to_names(&oracle.chunks);
    let lineage_chunks = to_names(&lineage.chunks);
    let bridge_chunks = bridge.chunks;

    let epochs = oracle_chunks.len().max(lineage_chunks.len()).max(bridge_chunks.len());
    let first_divergence = (1..=epochs).find(|&epoch| {
        let at = |v: &Vec<Vec<String>>| v.get(epoch - 1).cloned();
        at(&oracle_chunks) != at(&lineage_chunks) || at(&lineage_chunks) != at(&bridge_chunks)
    });
    let agreement = first_divergence.is_none()
        && oracle.outcome == lineage.outcome
        && lineage.outcome == bridge.outcome;
    Ok(RoundtripReport {
        oracle_chunks,
        lineage_chunks,
        bridge_chunks,
        oracle_outcome: oracle.outcome,
        lineage_outcome: lineage.outcome,
        bridge_outcome: bridge.outcome,
        reconstructions: lineage.lineage.log,
        agreement,
        first_divergence,
    })
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::alphabet::{Alphabet, Move};
    use crate::tm::{AdviceMove, TmBuilder};
    use proptest::prelude::*;

    fn counter_machine() -> MultiTapeTm {
        let binary = Alphabet::new(["0", "1"]).unwrap();
        let work = Alphabet::new(["_", "m"]).unwrap();
        TmBuilder::new(binary.clone(), work, 1)
            .output_alphabet(binary)
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

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        /// Descriptions depend on the reconstruction progression, never on
        /// which symbols arrived.
        #[test]
        fn descriptions_ignore_the_stream_symbols(
            a in proptest::collection::vec(0u16..2, 9),
            b in proptest::collection::vec(0u16..2, 9),
        ) {
            let m = counter_machine();
            let advice = AdviceFunction::always_empty();
            let sa: Vec<Symbol> = a.into_iter().map(Symbol).collect();
            let sb: Vec<Symbol> = b.into_iter().map(Symbol).collect();
            let ra = process_stream(&m, &advice, &sa, &[2, 4, 8, 16]).unwrap();
            let rb = process_stream(&m, &advice, &sb, &[2, 4, 8, 16]).unwrap();
            let ta = BridgeAdvice::harvest(&ra.lineage);
            let tb = BridgeAdvice::harvest(&rb.lineage);
            prop_assert_eq!(ta.len(), tb.len());
            for (ea, eb) in ta.entries().iter().zip(tb.entries()) {
                prop_assert_eq!(ea.position, eb.position);
                prop_assert_eq!(ea.description.bytes(), eb.description.bytes());
            }
        }
    }
}
