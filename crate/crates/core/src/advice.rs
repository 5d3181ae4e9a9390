//! Length-indexed advice tables.
//!
//! An advice function maps an input length to a string over the machine's
//! advice alphabet. Batch runs read the single entry for their input length;
//! interactive runs read the entry for the current stream prefix length, and
//! require that each entry extend the previous one, since new advice is
//! appended to the existing advice tape rather than replacing it.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::alphabet::Symbol;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdviceError {
    #[error("no advice defined for input length {0}")]
    MissingAdvice(usize),
    #[error("advice for length {0} does not extend the advice for length {1}")]
    NotPrefix(usize, usize),
}

/// A table from input length to advice string. Lengths without an entry have
/// no advice defined; length 0 defaults to the empty string.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdviceFunction {
    table: BTreeMap<usize, Vec<Symbol>>,
    /// Undefined lengths read as empty instead of erroring.
    default_empty: bool,
}

impl AdviceFunction {
    pub fn new() -> Self {
        Self::default()
    }

    /// An advice function that is empty at every length.
    pub fn always_empty() -> Self {
        AdviceFunction { table: BTreeMap::new(), default_empty: true }
    }

    pub fn set(&mut self, length: usize, advice: Vec<Symbol>) {
        self.table.insert(length, advice);
    }

    pub fn with(mut self, length: usize, advice: Vec<Symbol>) -> Self {
        self.set(length, advice);
        self
    }

    pub fn get(&self, length: usize) -> Option<&[Symbol]> {
        self.table.get(&length).map(Vec::as_slice)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &[Symbol])> {
        self.table.iter().map(|(&l, v)| (l, v.as_slice()))
    }

    pub fn is_empty_everywhere(&self) -> bool {
        self.table.values().all(Vec::is_empty)
    }

    /// The advice string for a batch run on an input of length `length`.
    /// Lengths never written into the table count as defined-and-empty only
    /// for length 0, or everywhere for [`AdviceFunction::always_empty`].
    pub fn string_for(&self, length: usize) -> Result<&[Symbol], AdviceError> {
        static EMPTY: [Symbol; 0] = [];
        match self.get(length) {
            Some(s) => Ok(s),
            None if length == 0 || self.default_empty => Ok(&EMPTY),
            None => Err(AdviceError::MissingAdvice(length)),
        }
    }

    /// Checks the append-only property needed by interactive runs: for every
    /// `t` in `1..=upto`, advice must be defined and extend the advice for
    /// `t - 1`.
    pub fn validate_interactive(&self, upto: usize) -> Result<(), AdviceError> {
        let mut prev: &[Symbol] = self.string_for(0)?;
        for t in 1..=upto {
            let cur = self.string_for(t)?;
            if cur.len() < prev.len() || &cur[..prev.len()] != prev {
                return Err(AdviceError::NotPrefix(t, t - 1));
            }
            prev = cur;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syms(ids: &[u16]) -> Vec<Symbol> {
        ids.iter().map(|&i| Symbol(i)).collect()
    }

    #[test]
    fn missing_lengths_error_except_zero() {
        let a = AdviceFunction::new().with(3, syms(&[1]));
        assert_eq!(a.string_for(3).unwrap(), &[Symbol(1)]);
        assert_eq!(a.string_for(0).unwrap(), &[]);
        assert_eq!(a.string_for(2), Err(AdviceError::MissingAdvice(2)));
    }

    #[test]
    fn interactive_requires_extension() {
        let good = AdviceFunction::new()
            .with(1, syms(&[]))
            .with(2, syms(&[0]))
            .with(3, syms(&[0, 1]));
        assert_eq!(good.validate_interactive(3), Ok(()));

        let bad = AdviceFunction::new()
            .with(1, syms(&[0]))
            .with(2, syms(&[1]));
        assert_eq!(bad.validate_interactive(2), Err(AdviceError::NotPrefix(2, 1)));

        let shrinking = AdviceFunction::new()
            .with(1, syms(&[0]))
            .with(2, syms(&[]));
        assert_eq!(shrinking.validate_interactive(2), Err(AdviceError::NotPrefix(2, 1)));
    }
}
