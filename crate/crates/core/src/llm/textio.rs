//! Text form of a predictor.
//!
//! A description is a versioned, line-based rendering of every field of a
//! [`FixedLlm`]. The rendering is canonical — successor entries sorted by
//! key, token sets sorted by id — so serializing, parsing, and serializing
//! again reproduces the bytes exactly. The trailing `provisions` section is
//! reserved for environment-supplied extras and is always empty here.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use super::{AttentionSpec, DecodeInfo, FixedLlm, IntMatrix, LlmError, ModelMode, TokenId, Vocabulary};

pub const FORMAT_HEADER: &str = "tokensim-model v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DescriptionError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("description parsed but does not form a model: {0}")]
    Model(#[from] LlmError),
}

fn bad(line: usize, reason: impl Into<String>) -> DescriptionError {
    DescriptionError::Parse { line, reason: reason.into() }
}

/// Renders every field of the model in canonical order.
pub fn serialize_description(model: &FixedLlm) -> String {
    let mut out = String::new();
    let push_ids = |out: &mut String, tag: &str, ids: &BTreeSet<TokenId>| {
        out.push_str(tag);
        for id in ids {
            let _ = write!(out, " {}", id.0);
        }
        out.push('\n');
    };

    let _ = writeln!(out, "{FORMAT_HEADER}");
    let _ = writeln!(out, "window {}", model.window());
    let _ = writeln!(out, "dimension {}", model.dimension());
    let _ = writeln!(out, "tokens {}", model.vocabulary().len());
    for (id, text) in model.vocabulary().tokens() {
        let _ = writeln!(out, "token {} {}", id.0, text);
    }
    for (id, _) in model.vocabulary().tokens() {
        out.push_str("embedding");
        for v in model.embedding(id).expect("vocabulary ids are in range") {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    let a = model.attention();
    for (name, m) in
        [("query", &a.query), ("key", &a.key), ("value", &a.value), ("residual", &a.residual)]
    {
        let _ = writeln!(out, "attention {name} {} {}", m.rows(), m.cols());
        for r in 0..m.rows() {
            out.push_str("row");
            for v in m.row(r) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
    }
    let mut entries: Vec<(&[i64], TokenId)> = model.successor_entries().collect();
    entries.sort();
    let _ = writeln!(out, "successors {}", entries.len());
    for (key, token) in entries {
        out.push_str("successor");
        for v in key {
            let _ = write!(out, " {v}");
        }
        let _ = writeln!(out, " -> {}", token.0);
    }
    push_ids(&mut out, "stop", model.stop_tokens());
    let _ = writeln!(out, "end {}", model.end_token().0);
    match model.mode() {
        ModelMode::Acceptor => out.push_str("mode acceptor\n"),
        ModelMode::Emitting => out.push_str("mode emitting\n"),
        ModelMode::Function { tape, blank } => {
            let _ = writeln!(out, "mode function {tape} {blank}");
        }
    }
    let decode = model.decode_info();
    push_ids(&mut out, "accept", &decode.accept_tokens);
    push_ids(&mut out, "reject", &decode.reject_tokens);
    let _ = writeln!(out, "emissions {}", decode.emit_leaving.len());
    for (id, names) in &decode.emit_leaving {
        let _ = write!(out, "emit {}", id.0);
        for name in names {
            let _ = write!(out, " {name}");
        }
        out.push('\n');
    }
    out.push_str("provisions 0\n");
    out
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    at: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), DescriptionError> {
        let number = self.at + 1;
        let line = self
            .lines
            .get(self.at)
            .copied()
            .ok_or_else(|| bad(number, "unexpected end of description"))?;
        self.at += 1;
        Ok((number, line))
    }

    /// Consumes a line of the form `<tag> <fields...>`.
    fn tagged(&mut self, tag: &str) -> Result<(usize, Vec<&'a str>), DescriptionError> {
        let (number, line) = self.next()?;
        let mut parts = line.split(' ');
        let found = parts.next().unwrap_or("");
        if found != tag {
            return Err(bad(number, format!("expected a {tag:?} line, found {line:?}")));
        }
        Ok((number, parts.collect()))
    }
}

fn parse_number<T: std::str::FromStr>(line: usize, text: &str, what: &str) -> Result<T, DescriptionError> {
    text.parse().map_err(|_| bad(line, format!("bad {what} {text:?}")))
}

fn parse_counted(tag: &str, count_line: usize, fields: &[&str]) -> Result<usize, DescriptionError> {
    let [count] = fields else {
        return Err(bad(count_line, format!("expected one {tag} count")));
    };
    parse_number(count_line, count, &format!("{tag} count"))
}

fn parse_id_set(line: usize, fields: &[&str]) -> Result<BTreeSet<TokenId>, DescriptionError> {
    fields
        .iter()
        .map(|f| parse_number::<u32>(line, f, "token id").map(TokenId))
        .collect()
}

fn parse_matrix(lines: &mut Lines<'_>, name: &str) -> Result<IntMatrix, DescriptionError> {
    let (number, fields) = lines.tagged("attention")?;
    let [found, rows, cols] = fields.as_slice() else {
        return Err(bad(number, "expected attention <name> <rows> <cols>"));
    };
    if *found != name {
        return Err(bad(number, format!("expected the {name} projection, found {found}")));
    }
    let rows: usize = parse_number(number, rows, "row count")?;
    let cols: usize = parse_number(number, cols, "column count")?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (number, fields) = lines.tagged("row")?;
        if fields.len() != cols {
            return Err(bad(number, format!("row has {} entries, expected {cols}", fields.len())));
        }
        for f in fields {
            data.push(parse_number(number, f, "matrix entry")?);
        }
    }
    IntMatrix::new(rows, cols, data).map_err(DescriptionError::Model)
}

/// Parses a description produced by [`serialize_description`].
pub fn parse_description(text: &str) -> Result<FixedLlm, DescriptionError> {
    let mut lines = Lines { lines: text.lines().collect(), at: 0 };

    let (number, header) = lines.next()?;
    if header != FORMAT_HEADER {
        return Err(bad(number, format!("expected header {FORMAT_HEADER:?}, found {header:?}")));
    }
    let (number, fields) = lines.tagged("window")?;
    let window = parse_counted("window", number, &fields)?;
    let (number, fields) = lines.tagged("dimension")?;
    let dimension = parse_counted("dimension", number, &fields)?;
    let (number, fields) = lines.tagged("tokens")?;
    let token_count = parse_counted("tokens", number, &fields)?;

    let mut texts = Vec::with_capacity(token_count);
    for expected in 0..token_count {
        let (number, line) = lines.next()?;
        let rest = line
            .strip_prefix("token ")
            .ok_or_else(|| bad(number, format!("expected a token line, found {line:?}")))?;
        let (id, text) = rest
            .split_once(' ')
            .ok_or_else(|| bad(number, "token line needs an id and a text"))?;
        let id: usize = parse_number(number, id, "token id")?;
        if id != expected {
            return Err(bad(number, format!("token ids must be dense; expected {expected}, found {id}")));
        }
        if text.is_empty() {
            return Err(bad(number, "empty token text"));
        }
        texts.push(text.to_string());
    }
    let vocabulary = Vocabulary::new(texts)?;

    let mut embeddings = Vec::with_capacity(token_count);
    for _ in 0..token_count {
        let (number, fields) = lines.tagged("embedding")?;
        if fields.len() != dimension {
            return Err(bad(
                number,
                format!("embedding has {} entries, expected {dimension}", fields.len()),
            ));
        }
        let row = fields
            .iter()
            .map(|f| parse_number(number, f, "embedding entry"))
            .collect::<Result<Vec<i64>, _>>()?;
        embeddings.push(row);
    }

    let attention = AttentionSpec {
        query: parse_matrix(&mut lines, "query")?,
        key: parse_matrix(&mut lines, "key")?,
        value: parse_matrix(&mut lines, "value")?,
        residual: parse_matrix(&mut lines, "residual")?,
    };

    let (number, fields) = lines.tagged("successors")?;
    let successor_count = parse_counted("successors", number, &fields)?;
    let mut successor = HashMap::with_capacity(successor_count);
    for _ in 0..successor_count {
        let (number, fields) = lines.tagged("successor")?;
        let arrow = fields
            .iter()
            .position(|f| *f == "->")
            .ok_or_else(|| bad(number, "successor line lacks ->"))?;
        if arrow + 2 != fields.len() {
            return Err(bad(number, "successor line needs exactly one token id after ->"));
        }
        let key = fields[..arrow]
            .iter()
            .map(|f| parse_number(number, f, "successor key entry"))
            .collect::<Result<Vec<i64>, _>>()?;
        let id: u32 = parse_number(number, fields[arrow + 1], "token id")?;
        if successor.insert(key, TokenId(id)).is_some() {
            return Err(bad(number, "duplicate successor key"));
        }
    }

    let (number, fields) = lines.tagged("stop")?;
    let stop_tokens = parse_id_set(number, &fields)?;
    let (number, fields) = lines.tagged("end")?;
    let [end] = fields.as_slice() else {
        return Err(bad(number, "expected one end token id"));
    };
    let end_token = TokenId(parse_number(number, end, "token id")?);

    let (number, fields) = lines.tagged("mode")?;
    let mode = match fields.as_slice() {
        ["acceptor"] => ModelMode::Acceptor,
        ["emitting"] => ModelMode::Emitting,
        ["function", tape, blank] => ModelMode::Function {
            tape: parse_number(number, tape, "tape index")?,
            blank: (*blank).to_string(),
        },
        _ => return Err(bad(number, format!("unrecognized mode {:?}", fields.join(" ")))),
    };

    let (number, fields) = lines.tagged("accept")?;
    let accept_tokens = parse_id_set(number, &fields)?;
    let (number, fields) = lines.tagged("reject")?;
    let reject_tokens = parse_id_set(number, &fields)?;

    let (number, fields) = lines.tagged("emissions")?;
    let emission_count = parse_counted("emissions", number, &fields)?;
    let mut emit_leaving = BTreeMap::new();
    for _ in 0..emission_count {
        let (number, fields) = lines.tagged("emit")?;
        let [id, names @ ..] = fields.as_slice() else {
            return Err(bad(number, "emit line needs a token id"));
        };
        let id: u32 = parse_number(number, id, "token id")?;
        let names: Vec<String> = names.iter().map(|n| n.to_string()).collect();
        if names.iter().any(String::is_empty) {
            return Err(bad(number, "empty emitted symbol name"));
        }
        if emit_leaving.insert(TokenId(id), names).is_some() {
            return Err(bad(number, "duplicate emit entry"));
        }
    }

    let (number, fields) = lines.tagged("provisions")?;
    if fields != ["0"] {
        return Err(bad(number, "provisions are reserved and must be 0"));
    }
    if let Ok((number, line)) = lines.next() {
        return Err(bad(number, format!("trailing content {line:?}")));
    }

    let decode = DecodeInfo { accept_tokens, reject_tokens, emit_leaving };
    FixedLlm::new(
        vocabulary,
        embeddings,
        window,
        attention,
        successor,
        stop_tokens,
        end_token,
        mode,
        decode,
    )
    .map_err(DescriptionError::Model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn sample_model() -> FixedLlm {
        let vocabulary =
            Vocabulary::new(["<go>", "in:1", "[q=s|at=0|rd=^]"].map(String::from)).unwrap();
        let bits = super::super::position_code_bits(6);
        let d = 2;
        let mut query = IntMatrix::zero(bits, d + bits);
        let mut key = IntMatrix::zero(bits, d + bits);
        for b in 0..bits {
            query.set(b, d + b, 1);
            key.set(b, d + b, 1);
        }
        let mut value = IntMatrix::zero(d, d + bits);
        value.set(0, 0, 1);
        value.set(1, 1, -3);
        let attention =
            AttentionSpec { query, key, value, residual: IntMatrix::zero(0, d + bits) };
        let successor = HashMap::from([
            (vec![1, 0], TokenId(1)),
            (vec![0, -3], TokenId(2)),
            (vec![1, -3], TokenId(2)),
        ]);
        FixedLlm::new(
            vocabulary,
            vec![vec![1, 0], vec![0, 1], vec![1, 1]],
            6,
            attention,
            successor,
            BTreeSet::from([TokenId(2)]),
            TokenId(2),
            ModelMode::Emitting,
            DecodeInfo {
                emit_leaving: BTreeMap::from([(TokenId(2), vec!["1".to_string()])]),
                ..DecodeInfo::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_structural_and_byte_identical() {
        let model = sample_model();
        let text = serialize_description(&model);
        let parsed = parse_description(&text).unwrap();
        assert_eq!(parsed, model);
        assert_eq!(serialize_description(&parsed), text);
    }

    #[test]
    fn sections_appear_in_order() {
        let text = serialize_description(&sample_model());
        let tags: Vec<&str> =
            text.lines().map(|l| l.split(' ').next().unwrap()).collect();
        let mut seen = Vec::new();
        for tag in tags {
            if seen.last() != Some(&tag) {
                seen.push(tag);
            }
        }
        assert_eq!(
            seen,
            vec![
                "tokensim-model", "window", "dimension", "tokens", "token", "embedding",
                "attention", "row", "attention", "row", "attention", "row", "attention",
                "successors", "successor", "stop", "end", "mode", "accept", "reject",
                "emissions", "emit", "provisions",
            ]
        );
    }

    #[test]
    fn corrupt_descriptions_are_rejected() {
        let model = sample_model();
        let text = serialize_description(&model);
        assert!(parse_description("").is_err());
        assert!(parse_description(&text.replace("tokensim-model v1", "model v2")).is_err());
        assert!(parse_description(&text.replace("dimension 2", "dimension 3")).is_err());
        assert!(parse_description(&text.replace("successors 3", "successors 4")).is_err());
        assert!(parse_description(&(text.clone() + "extra\n")).is_err());
        // Duplicate token text.
        assert!(parse_description(&text.replace("token 1 in:1", "token 1 <go>")).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let model = sample_model();
        let text = serialize_description(&model);
        let corrupted = text.replace("window 6", "window six");
        match parse_description(&corrupted) {
            Err(DescriptionError::Parse { line: 2, .. }) => {}
            other => panic!("expected a parse error on line 2, got {other:?}"),
        }
    }
}
