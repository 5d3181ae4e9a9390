//! Symbols, alphabets, and the shared tape vocabulary used by every machine
//! model in this crate.
//!
//! A [`Symbol`] is an index into an [`Alphabet`]. Alphabets own the printable
//! names; machines and runs work with the dense indices. Input tapes are
//! endmarked, so scanning code deals in [`TapeSymbol`], which extends a plain
//! symbol with the two endmarkers.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Index of a symbol within its [`Alphabet`]. Ids are dense: an alphabet of
/// size `m` uses exactly the ids `0..m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(pub u16);

/// Printable names for the endmarkers in text formats and configuration words.
pub const LEFT_END_NAME: &str = "^";
pub const RIGHT_END_NAME: &str = "$";

/// Characters allowed in a symbol or state name. Everything else is reserved
/// by the text formats.
fn name_char_ok(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '+')
}

pub(crate) fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(name_char_ok)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlphabetError {
    #[error("symbol name {0:?} is empty or uses a reserved character")]
    BadName(String),
    #[error("duplicate symbol name {0:?}")]
    Duplicate(String),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("symbol id {0} out of range for alphabet of size {1}")]
    OutOfRange(u16, usize),
}

/// An ordered set of named symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    names: Vec<String>,
    index: HashMap<String, Symbol>,
}

impl Alphabet {
    pub fn new<I, S>(names: I) -> Result<Self, AlphabetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Alphabet { names: Vec::new(), index: HashMap::new() };
        for name in names {
            let name = name.into();
            if !valid_name(&name) {
                return Err(AlphabetError::BadName(name));
            }
            if out.index.contains_key(&name) {
                return Err(AlphabetError::Duplicate(name));
            }
            let id = Symbol(out.names.len() as u16);
            out.index.insert(name.clone(), id);
            out.names.push(name);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<Symbol> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<Symbol, AlphabetError> {
        self.get(name).ok_or_else(|| AlphabetError::UnknownSymbol(name.to_string()))
    }

    pub fn name(&self, sym: Symbol) -> &str {
        &self.names[sym.0 as usize]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> {
        (0..self.names.len() as u16).map(Symbol)
    }

    pub fn contains(&self, sym: Symbol) -> bool {
        (sym.0 as usize) < self.names.len()
    }

    pub fn check(&self, sym: Symbol) -> Result<(), AlphabetError> {
        if self.contains(sym) {
            Ok(())
        } else {
            Err(AlphabetError::OutOfRange(sym.0, self.names.len()))
        }
    }

    /// True when every symbol name is a single character, so strings of
    /// symbols can be written without separators.
    pub fn single_char(&self) -> bool {
        self.names.iter().all(|n| n.chars().count() == 1)
    }

    /// Parse a string of symbols. Single-character alphabets read the string
    /// character by character; otherwise the input is whitespace-separated.
    pub fn parse_string(&self, text: &str) -> Result<Vec<Symbol>, AlphabetError> {
        if self.single_char() {
            text.chars()
                .filter(|c| !c.is_whitespace())
                .map(|c| self.require(&c.to_string()))
                .collect()
        } else {
            text.split_whitespace().map(|w| self.require(w)).collect()
        }
    }

    /// Inverse of [`Alphabet::parse_string`] on valid symbol sequences.
    pub fn format_string(&self, syms: &[Symbol]) -> String {
        let sep = if self.single_char() { "" } else { " " };
        syms.iter().map(|&s| self.name(s)).collect::<Vec<_>>().join(sep)
    }
}

/// A cell of an endmarked input tape: either an endmarker or a plain symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TapeSymbol {
    LeftEnd,
    RightEnd,
    Plain(Symbol),
}

impl TapeSymbol {
    pub fn display<'a>(&self, alphabet: &'a Alphabet) -> &'a str {
        match self {
            TapeSymbol::LeftEnd => LEFT_END_NAME,
            TapeSymbol::RightEnd => RIGHT_END_NAME,
            TapeSymbol::Plain(s) => alphabet.name(*s),
        }
    }

    /// Reads a scanned-cell name as written in the text formats.
    pub fn parse(name: &str, alphabet: &Alphabet) -> Result<Self, AlphabetError> {
        match name {
            LEFT_END_NAME => Ok(TapeSymbol::LeftEnd),
            RIGHT_END_NAME => Ok(TapeSymbol::RightEnd),
            other => Ok(TapeSymbol::Plain(alphabet.require(other)?)),
        }
    }

    /// All tape symbols over `alphabet`, endmarkers first. The ordering is the
    /// canonical one used by serializers and embedding layouts.
    pub fn enumerate(alphabet: &Alphabet) -> Vec<TapeSymbol> {
        let mut out = vec![TapeSymbol::LeftEnd, TapeSymbol::RightEnd];
        out.extend(alphabet.symbols().map(TapeSymbol::Plain));
        out
    }

    /// Position of this symbol within [`TapeSymbol::enumerate`].
    pub fn ordinal(&self) -> usize {
        match self {
            TapeSymbol::LeftEnd => 0,
            TapeSymbol::RightEnd => 1,
            TapeSymbol::Plain(s) => 2 + s.0 as usize,
        }
    }
}

/// Look up the symbol under an endmarked input head. Position `0` holds the
/// left endmarker and position `input.len() + 1` the right one.
pub fn scanned_at(input: &[Symbol], pos: usize) -> TapeSymbol {
    if pos == 0 {
        TapeSymbol::LeftEnd
    } else if pos == input.len() + 1 {
        TapeSymbol::RightEnd
    } else {
        TapeSymbol::Plain(input[pos - 1])
    }
}

/// Head movement for two-way tapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    Left,
    Stay,
    Right,
}

impl Move {
    pub fn offset(&self) -> isize {
        match self {
            Move::Left => -1,
            Move::Stay => 0,
            Move::Right => 1,
        }
    }

    pub fn letter(&self) -> &'static str {
        match self {
            Move::Left => "L",
            Move::Stay => "S",
            Move::Right => "R",
        }
    }

    pub fn parse(s: &str) -> Option<Move> {
        match s {
            "L" => Some(Move::Left),
            "S" => Some(Move::Stay),
            "R" => Some(Move::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_ids_and_lookup() {
        let a = Alphabet::new(["0", "1"]).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.get("0"), Some(Symbol(0)));
        assert_eq!(a.get("1"), Some(Symbol(1)));
        assert_eq!(a.name(Symbol(1)), "1");
        assert_eq!(a.get("2"), None);
    }

    #[test]
    fn rejects_duplicates_and_reserved_names() {
        assert_eq!(
            Alphabet::new(["a", "a"]).unwrap_err(),
            AlphabetError::Duplicate("a".into())
        );
        assert!(matches!(Alphabet::new(["a|b"]), Err(AlphabetError::BadName(_))));
        assert!(matches!(Alphabet::new(["^"]), Err(AlphabetError::BadName(_))));
        assert!(matches!(Alphabet::new([""]), Err(AlphabetError::BadName(_))));
    }

    #[test]
    fn string_round_trip_single_char() {
        let a = Alphabet::new(["0", "1"]).unwrap();
        let syms = a.parse_string("1101").unwrap();
        assert_eq!(syms, vec![Symbol(1), Symbol(1), Symbol(0), Symbol(1)]);
        assert_eq!(a.format_string(&syms), "1101");
    }

    #[test]
    fn string_round_trip_multi_char() {
        let a = Alphabet::new(["aa", "b"]).unwrap();
        let syms = a.parse_string("aa b aa").unwrap();
        assert_eq!(a.format_string(&syms), "aa b aa");
    }

    #[test]
    fn unknown_symbol_is_an_error() {
        let a = Alphabet::new(["0", "1"]).unwrap();
        assert_eq!(
            a.parse_string("102").unwrap_err(),
            AlphabetError::UnknownSymbol("2".into())
        );
    }

    #[test]
    fn endmarked_scanning() {
        let a = Alphabet::new(["x", "y"]).unwrap();
        let input = a.parse_string("xy").unwrap();
        assert_eq!(scanned_at(&input, 0), TapeSymbol::LeftEnd);
        assert_eq!(scanned_at(&input, 1), TapeSymbol::Plain(Symbol(0)));
        assert_eq!(scanned_at(&input, 2), TapeSymbol::Plain(Symbol(1)));
        assert_eq!(scanned_at(&input, 3), TapeSymbol::RightEnd);
    }

    #[test]
    fn tape_symbol_ordinals_match_enumeration() {
        let a = Alphabet::new(["x", "y"]).unwrap();
        for (i, t) in TapeSymbol::enumerate(&a).into_iter().enumerate() {
            assert_eq!(t.ordinal(), i);
        }
    }
}
