//! A fixed next-token predictor over exact integer arithmetic.
//!
//! The model is one attention step and a finite successor table. A context is
//! a token sequence; only the last `window` tokens matter. Each position gets
//! the vector `embedding(token) ++ position_code(index within the window)`.
//! The last position queries every window position, the unique score argmax
//! selects one, and the concatenation of the selected position's value
//! projection with the current position's residual projection is looked up in
//! the successor table to produce the next token.
//!
//! Everything is integer-exact and deterministic: scores are dot products of
//! integer vectors, argmax ties are errors rather than choices, and the
//! successor table is a finite map. Models are built by the compilers in
//! [`crate::compile`], which arrange embeddings and projections so that every
//! context arising in a run scores with margin at least 1 and hits a table
//! entry.

mod textio;

pub use textio::{DescriptionError, parse_description, serialize_description};

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::run::ceil_log2;

/// Index into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LlmError {
    #[error("duplicate token text {0:?}")]
    DuplicateToken(String),
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("token id {0} out of range for vocabulary of {1}")]
    TokenOutOfRange(u32, usize),
    #[error("inconsistent model shape: {0}")]
    BadShape(String),
    #[error("context is empty")]
    EmptyContext,
    #[error("prompt of {length} tokens exceeds the context window of {window}")]
    PromptTooLong { length: usize, window: usize },
    #[error("attention scores tie at context length {at}; no unique argmax")]
    AmbiguousArgmax { at: usize },
    #[error("no successor entry for token {current:?} with fetched token {fetched:?}")]
    MissingSuccessor { current: String, fetched: String },
    #[error("reachable state enumeration exceeded the cap of {cap}")]
    StateBudgetExceeded { cap: usize },
}

/// Token id ↔ token text bijection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    texts: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(texts: impl IntoIterator<Item = String>) -> Result<Self, LlmError> {
        let texts: Vec<String> = texts.into_iter().collect();
        let mut index = HashMap::with_capacity(texts.len());
        for (i, text) in texts.iter().enumerate() {
            if index.insert(text.clone(), i as u32).is_some() {
                return Err(LlmError::DuplicateToken(text.clone()));
            }
        }
        Ok(Vocabulary { texts, index })
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn id(&self, text: &str) -> Option<TokenId> {
        self.index.get(text).copied().map(TokenId)
    }

    pub fn require(&self, text: &str) -> Result<TokenId, LlmError> {
        self.id(text).ok_or_else(|| LlmError::UnknownToken(text.to_string()))
    }

    pub fn text(&self, id: TokenId) -> &str {
        &self.texts[id.index()]
    }

    pub fn tokens(&self) -> impl Iterator<Item = (TokenId, &str)> {
        self.texts.iter().enumerate().map(|(i, t)| (TokenId(i as u32), t.as_str()))
    }
}

/// Row-major integer matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl IntMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i64>) -> Result<Self, LlmError> {
        if data.len() != rows * cols {
            return Err(LlmError::BadShape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(IntMatrix { rows, cols, data })
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<i64>>, cols: usize) -> Result<Self, LlmError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for row in rows {
            if row.len() != cols {
                return Err(LlmError::BadShape(format!(
                    "matrix row has {} entries, expected {cols}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Ok(IntMatrix { rows: n, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[i64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn set(&mut self, r: usize, c: usize, v: i64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn apply(&self, x: &[i64]) -> Vec<i64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }
}

/// The four projections of the attention step. All take the full position
/// vector (embedding followed by position code). The score of window position
/// `i` from current position `j` is `dot(query·x_j, key·x_i)`; the successor
/// key is `value·x_selected ++ residual·x_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionSpec {
    pub query: IntMatrix,
    pub key: IntMatrix,
    pub value: IntMatrix,
    pub residual: IntMatrix,
}

/// How a finished generation is read back as an answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelMode {
    /// The final token's membership in the accept or reject set decides.
    Acceptor,
    /// The answer is the concatenation of per-token emissions.
    Emitting,
    /// The answer is decoded from one work-tape field of the final token's
    /// text, with leading blanks stripped.
    Function { tape: usize, blank: String },
}

/// Decoding tables carried alongside the predictor: verdict token sets, and
/// the symbols a run emits when generation leaves each token.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodeInfo {
    pub accept_tokens: BTreeSet<TokenId>,
    pub reject_tokens: BTreeSet<TokenId>,
    pub emit_leaving: BTreeMap<TokenId, Vec<String>>,
}

impl DecodeInfo {
    fn check(&self, vocabulary: &Vocabulary) -> Result<(), LlmError> {
        let ids = self
            .accept_tokens
            .iter()
            .chain(&self.reject_tokens)
            .chain(self.emit_leaving.keys());
        for &TokenId(id) in ids {
            if id as usize >= vocabulary.len() {
                return Err(LlmError::TokenOutOfRange(id, vocabulary.len()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    StopToken,
    MaxTokens,
}

/// One generated token with the attention evidence behind it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub token: TokenId,
    /// Absolute context index of the selected position.
    pub fetched: usize,
    pub score: i64,
    /// Best score minus second best; [`i64::MAX`] when only one position was
    /// in the window.
    pub margin: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationTrace {
    pub prompt: Vec<TokenId>,
    pub generated: Vec<TokenId>,
    pub steps: Vec<StepRecord>,
    pub stopped: StopReason,
}

impl GenerationTrace {
    /// The final generated token, or the final prompt token if nothing was
    /// generated.
    pub fn final_token(&self) -> Option<TokenId> {
        self.generated.last().or(self.prompt.last()).copied()
    }

    pub fn min_margin(&self) -> Option<i64> {
        self.steps.iter().map(|s| s.margin).min()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    Accept,
    Reject,
    Output(String),
    Truncated,
}

/// A deterministic bounded-context next-token predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedLlm {
    vocabulary: Vocabulary,
    dimension: usize,
    embeddings: Vec<Vec<i64>>,
    window: usize,
    code_bits: usize,
    attention: AttentionSpec,
    successor: HashMap<Vec<i64>, TokenId>,
    stop_tokens: BTreeSet<TokenId>,
    /// Fixed point generated forever once a run is over; keeps the next-token
    /// function total.
    end_token: TokenId,
    mode: ModelMode,
    decode: DecodeInfo,
}

impl FixedLlm {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        vocabulary: Vocabulary,
        embeddings: Vec<Vec<i64>>,
        window: usize,
        attention: AttentionSpec,
        successor: HashMap<Vec<i64>, TokenId>,
        stop_tokens: BTreeSet<TokenId>,
        end_token: TokenId,
        mode: ModelMode,
        decode: DecodeInfo,
    ) -> Result<Self, LlmError> {
        if vocabulary.is_empty() {
            return Err(LlmError::BadShape("vocabulary is empty".into()));
        }
        if window == 0 {
            return Err(LlmError::BadShape("context window must be positive".into()));
        }
        if embeddings.len() != vocabulary.len() {
            return Err(LlmError::BadShape(format!(
                "{} embeddings for {} tokens",
                embeddings.len(),
                vocabulary.len()
            )));
        }
        let dimension = embeddings.first().map_or(0, Vec::len);
        if dimension == 0 || embeddings.iter().any(|e| e.len() != dimension) {
            return Err(LlmError::BadShape("embedding rows must share one positive length".into()));
        }
        let code_bits = position_code_bits(window);
        let full = dimension + code_bits;
        let a = &attention;
        for (name, m) in
            [("query", &a.query), ("key", &a.key), ("value", &a.value), ("residual", &a.residual)]
        {
            if m.cols() != full {
                return Err(LlmError::BadShape(format!(
                    "{name} projection takes {} columns, position vectors have {full}",
                    m.cols()
                )));
            }
        }
        if a.query.rows() != a.key.rows() {
            return Err(LlmError::BadShape(format!(
                "query and key project to different score spaces ({} vs {})",
                a.query.rows(),
                a.key.rows()
            )));
        }
        let key_len = a.value.rows() + a.residual.rows();
        for (key, &TokenId(id)) in &successor {
            if key.len() != key_len {
                return Err(LlmError::BadShape(format!(
                    "successor key of length {}, projections produce {key_len}",
                    key.len()
                )));
            }
            if id as usize >= vocabulary.len() {
                return Err(LlmError::TokenOutOfRange(id, vocabulary.len()));
            }
        }
        for &TokenId(id) in stop_tokens.iter().chain([&end_token]) {
            if id as usize >= vocabulary.len() {
                return Err(LlmError::TokenOutOfRange(id, vocabulary.len()));
            }
        }
        if let ModelMode::Function { tape: _, blank } = &mode {
            if blank.is_empty() {
                return Err(LlmError::BadShape("function mode needs a blank symbol name".into()));
            }
        }
        decode.check(&vocabulary)?;
        Ok(FixedLlm {
            vocabulary,
            dimension,
            embeddings,
            window,
            code_bits,
            attention,
            successor,
            stop_tokens,
            end_token,
            mode,
            decode,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn code_bits(&self) -> usize {
        self.code_bits
    }

    pub fn attention(&self) -> &AttentionSpec {
        &self.attention
    }

    pub fn successor_entries(&self) -> impl Iterator<Item = (&[i64], TokenId)> {
        self.successor.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn stop_tokens(&self) -> &BTreeSet<TokenId> {
        &self.stop_tokens
    }

    pub fn end_token(&self) -> TokenId {
        self.end_token
    }

    pub fn mode(&self) -> &ModelMode {
        &self.mode
    }

    pub fn decode_info(&self) -> &DecodeInfo {
        &self.decode
    }

    pub fn embedding(&self, token: TokenId) -> Result<&[i64], LlmError> {
        self.embeddings
            .get(token.index())
            .map(Vec::as_slice)
            .ok_or(LlmError::TokenOutOfRange(token.0, self.vocabulary.len()))
    }

    /// The ±1 binary code distinguishing window positions.
    pub fn position_code(&self, index: usize) -> Vec<i64> {
        position_code(index, self.code_bits)
    }

    /// Embedding followed by the position code: the vector a window position
    /// presents to the attention projections.
    pub fn position_vector(&self, token: TokenId, index: usize) -> Result<Vec<i64>, LlmError> {
        let mut x = self.embedding(token)?.to_vec();
        x.extend(self.position_code(index));
        Ok(x)
    }

    /// Computes the next token after `context`. Only the last
    /// `min(window, len)` tokens participate. Returns the token with the
    /// attention evidence ([`StepRecord`]) that produced it.
    pub fn next_token(&self, context: &[TokenId]) -> Result<(TokenId, StepRecord), LlmError> {
        if context.is_empty() {
            return Err(LlmError::EmptyContext);
        }
        let start = context.len().saturating_sub(self.window);
        let window = &context[start..];
        let last = window.len() - 1;

        let x_last = self.position_vector(window[last], last)?;
        let q = self.attention.query.apply(&x_last);

        let mut best: Option<(usize, i64, Vec<i64>)> = None;
        let mut second: Option<i64> = None;
        for (i, &token) in window.iter().enumerate() {
            let x = if i == last { x_last.clone() } else { self.position_vector(token, i)? };
            let score: i64 = self.attention.key.apply(&x).iter().zip(&q).map(|(&a, &b)| a * b).sum();
            match &best {
                None => best = Some((i, score, x)),
                Some((_, top, _)) if score > *top => {
                    second = Some(*top);
                    best = Some((i, score, x));
                }
                Some(_) => {
                    if second.is_none_or(|s| score > s) {
                        second = Some(score);
                    }
                }
            }
        }
        let (sel, score, x_sel) = best.expect("window is non-empty");
        let margin = match second {
            Some(s) => score - s,
            None => i64::MAX,
        };
        if margin < 1 {
            return Err(LlmError::AmbiguousArgmax { at: context.len() });
        }

        let mut key = self.attention.value.apply(&x_sel);
        key.extend(self.attention.residual.apply(&x_last));
        let token = *self.successor.get(&key).ok_or_else(|| LlmError::MissingSuccessor {
            current: self.vocabulary.text(window[last]).to_string(),
            fetched: self.vocabulary.text(window[sel]).to_string(),
        })?;
        Ok((token, StepRecord { token, fetched: start + sel, score, margin }))
    }

    /// Generates from `prompt` until a stop token is produced or `max_tokens`
    /// tokens have been generated. The stop token, when reached, is the last
    /// entry of the trace.
    pub fn generate(
        &self,
        prompt: &[TokenId],
        max_tokens: usize,
    ) -> Result<GenerationTrace, LlmError> {
        if prompt.len() > self.window {
            return Err(LlmError::PromptTooLong { length: prompt.len(), window: self.window });
        }
        let mut context = prompt.to_vec();
        let mut generated = Vec::new();
        let mut steps = Vec::new();
        let mut stopped = StopReason::MaxTokens;
        while generated.len() < max_tokens {
            let (token, step) = self.next_token(&context)?;
            context.push(token);
            generated.push(token);
            steps.push(step);
            if self.stop_tokens.contains(&token) {
                stopped = StopReason::StopToken;
                break;
            }
        }
        Ok(GenerationTrace { prompt: prompt.to_vec(), generated, steps, stopped })
    }

    /// Reads the answer off a finished trace according to the model's mode.
    pub fn decode_answer(&self, trace: &GenerationTrace) -> Answer {
        if trace.stopped == StopReason::MaxTokens {
            return Answer::Truncated;
        }
        let Some(last) = trace.final_token() else {
            return Answer::Truncated;
        };
        match &self.mode {
            ModelMode::Acceptor => {
                if self.decode.accept_tokens.contains(&last) {
                    Answer::Accept
                } else if self.decode.reject_tokens.contains(&last) {
                    Answer::Reject
                } else {
                    Answer::Truncated
                }
            }
            ModelMode::Emitting => {
                let mut names = Vec::new();
                for token in &trace.generated {
                    if let Some(emitted) = self.decode.emit_leaving.get(token) {
                        names.extend(emitted.iter().cloned());
                    }
                }
                Answer::Output(join_names(&names))
            }
            ModelMode::Function { tape, blank } => {
                match tape_field(self.vocabulary.text(last), *tape) {
                    Some(cells) => {
                        let names: Vec<String> = cells
                            .iter()
                            .skip_while(|n| *n == blank)
                            .cloned()
                            .collect();
                        Answer::Output(join_names(&names))
                    }
                    None => Answer::Truncated,
                }
            }
        }
    }
}

/// Position code length for a window of `w`: `ceil(log2(w + 2))`, so every
/// position in the window (and the slack just past it) has a distinct code.
pub fn position_code_bits(window: usize) -> usize {
    ceil_log2(window + 2) as usize
}

/// `index` written in binary over ±1, lowest bit first.
pub fn position_code(index: usize, bits: usize) -> Vec<i64> {
    (0..bits).map(|b| if index >> b & 1 == 1 { 1 } else { -1 }).collect()
}

/// Joins symbol names the way alphabets format strings: concatenated when
/// every name is a single character, space-separated otherwise.
pub(crate) fn join_names(names: &[String]) -> String {
    if names.iter().all(|n| n.chars().count() == 1) {
        names.concat()
    } else {
        names.join(" ")
    }
}

/// Extracts the cell names of the `w{tape}:cells@head` field of a token text.
fn tape_field(text: &str, tape: usize) -> Option<Vec<String>> {
    let inner = text.strip_prefix('[')?.strip_suffix(']')?;
    let tag = format!("w{tape}:");
    let body = inner.split('|').find_map(|f| f.strip_prefix(tag.as_str()))?;
    let (cells, _head) = body.rsplit_once('@')?;
    if cells.is_empty() {
        Some(Vec::new())
    } else {
        Some(cells.split('.').map(String::from).collect())
    }
}

/// Enumerates every window content reachable from the given prompts by
/// generation, stopping expansion at stop tokens. Fails once more than `cap`
/// distinct states have been found.
pub fn reachable_states(
    model: &FixedLlm,
    prompts: &[Vec<TokenId>],
    cap: usize,
) -> Result<BTreeSet<Vec<TokenId>>, LlmError> {
    let mut states: BTreeSet<Vec<TokenId>> = BTreeSet::new();
    let mut queue: VecDeque<Vec<TokenId>> = VecDeque::new();
    let mut add = |state: Vec<TokenId>,
                   queue: &mut VecDeque<Vec<TokenId>>,
                   expand: bool|
     -> Result<(), LlmError> {
        if states.insert(state.clone()) {
            if states.len() > cap {
                return Err(LlmError::StateBudgetExceeded { cap });
            }
            if expand {
                queue.push_back(state);
            }
        }
        Ok(())
    };
    for prompt in prompts {
        if prompt.is_empty() {
            continue;
        }
        let start = prompt.len().saturating_sub(model.window());
        add(prompt[start..].to_vec(), &mut queue, true)?;
    }
    while let Some(state) = queue.pop_front() {
        let (token, _) = model.next_token(&state)?;
        let mut next = state;
        next.push(token);
        if next.len() > model.window() {
            next.remove(0);
        }
        let expand = !model.stop_tokens().contains(&token);
        add(next, &mut queue, expand)?;
    }
    Ok(states)
}
