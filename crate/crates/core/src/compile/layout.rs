//! Embedding layouts for compiled models.
//!
//! Every compiled embedding is a concatenation of named fields, each a
//! contiguous dimension range. The field map is the documented contract
//! between a compiler and its tests: tests recompute slices (say, the state
//! one-hot of a configuration word) from the map instead of trusting the
//! compiler's arithmetic.
//!
//! Fields common to both compilers:
//!
//! * `bias` — a single always-1 dimension, giving score formulas a constant
//!   term;
//! * `fetchable` — 1 on tokens the attention step may select (prompt and port
//!   tokens), scaled by [`ATTEND_BONUS`] in the key projection so selectable
//!   tokens dominate;
//! * `kind` — one-hot over token classes;
//! * `target` — the ±1 position code of the context position this token
//!   fetches when it is current.
//!
//! Scores are `ATTEND_BONUS·fetchable(i) + dot(target(j), position_code(i))`,
//! so the position named by the current token wins by at least 2: a wrong
//! position loses ≥ 2 on the code dot product, and a non-fetchable token
//! loses the bonus.

use std::ops::Range;

use crate::llm::IntMatrix;

/// Weight on the fetchable flag in attention scores. Position-code dot
/// products differ by at least 2 per mismatched bit, so any value ≥ 3 keeps
/// the intended position's win strict; 4 leaves a margin of 2 everywhere.
pub const ATTEND_BONUS: i64 = 4;

/// Embedding dimension bound for transducer models:
/// `dimension ≤ FST_DIM_C · (states + input symbols + ceil(log2 n))`.
pub const FST_DIM_C: usize = 16;

/// Embedding dimension bound for machine models:
/// `dimension ≤ TM_DIM_C · k`.
pub const TM_DIM_C: usize = 96;

/// Advice cursor positions are coded in this many ±1 dimensions regardless of
/// whether the machine reads advice, so adding advice to a machine widens its
/// embeddings by exactly the advice-symbol field.
pub const ADVICE_CURSOR_BITS: usize = 8;

/// Token classes, in `kind` field order.
pub const KIND_PROMPT: usize = 0;
pub const KIND_GO: usize = 1;
pub const KIND_WORD: usize = 2;
pub const KIND_END: usize = 3;
pub const KIND_WIDTH: usize = 4;

/// Ordered named dimension ranges; the embedding dimension is their total
/// width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMap {
    fields: Vec<(String, Range<usize>)>,
}

impl FieldMap {
    pub fn builder() -> FieldMapBuilder {
        FieldMapBuilder { fields: Vec::new(), at: 0 }
    }

    pub fn dimension(&self) -> usize {
        self.fields.last().map_or(0, |(_, r)| r.end)
    }

    pub fn range(&self, name: &str) -> Range<usize> {
        self.fields
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, r)| r.clone())
            .unwrap_or_else(|| panic!("layout has no field {name:?}"))
    }

    pub fn width(&self, name: &str) -> usize {
        self.range(name).len()
    }

    pub fn has(&self, name: &str) -> bool {
        self.fields.iter().any(|(n, _)| *n == name)
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, Range<usize>)> + '_ {
        self.fields.iter().map(|(n, r)| (n.as_str(), r.clone()))
    }

    /// A matrix copying the named fields, in order, out of a position vector
    /// of `input_dim` columns (embedding plus position code).
    pub fn projection(&self, names: &[&str], input_dim: usize) -> IntMatrix {
        let rows: usize = names.iter().map(|n| self.width(n)).sum();
        let mut m = IntMatrix::zero(rows, input_dim);
        let mut row = 0;
        for name in names {
            for col in self.range(name) {
                m.set(row, col, 1);
                row += 1;
            }
        }
        m
    }
}

pub struct FieldMapBuilder {
    fields: Vec<(String, Range<usize>)>,
    at: usize,
}

impl FieldMapBuilder {
    pub fn field(mut self, name: impl Into<String>, width: usize) -> Self {
        let name = name.into();
        debug_assert!(
            !self.fields.iter().any(|(n, _)| *n == name),
            "duplicate field {name:?}"
        );
        self.fields.push((name, self.at..self.at + width));
        self.at += width;
        self
    }

    pub fn build(self) -> FieldMap {
        FieldMap { fields: self.fields }
    }
}

/// A writer placing field values into one embedding row.
pub struct RowWriter<'a> {
    map: &'a FieldMap,
    row: Vec<i64>,
}

impl<'a> RowWriter<'a> {
    pub fn new(map: &'a FieldMap) -> Self {
        RowWriter { map, row: vec![0; map.dimension()] }
    }

    pub fn set(mut self, name: &str, offset: usize, value: i64) -> Self {
        let range = self.map.range(name);
        debug_assert!(offset < range.len(), "offset {offset} outside field {name:?}");
        self.row[range.start + offset] = value;
        self
    }

    pub fn one_hot(self, name: &str, index: usize) -> Self {
        self.set(name, index, 1)
    }

    pub fn code(mut self, name: &str, bits: &[i64]) -> Self {
        let range = self.map.range(name);
        debug_assert_eq!(bits.len(), range.len(), "code width mismatch for {name:?}");
        self.row[range.clone()].copy_from_slice(bits);
        self
    }

    pub fn finish(self) -> Vec<i64> {
        self.row
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_tile_the_dimension() {
        let map = FieldMap::builder()
            .field("bias", 1)
            .field("kind", 3)
            .field("state", 4)
            .build();
        assert_eq!(map.dimension(), 8);
        assert_eq!(map.range("kind"), 1..4);
        assert_eq!(map.width("state"), 4);
        assert!(map.has("bias"));
        assert!(!map.has("advice"));
    }

    #[test]
    fn rows_land_in_their_fields() {
        let map = FieldMap::builder().field("a", 2).field("b", 3).build();
        let row = RowWriter::new(&map).one_hot("a", 1).code("b", &[1, -1, 1]).finish();
        assert_eq!(row, vec![0, 1, 1, -1, 1]);
    }

    #[test]
    fn projections_copy_fields_in_order() {
        let map = FieldMap::builder().field("a", 2).field("b", 1).build();
        let proj = map.projection(&["b", "a"], 5);
        assert_eq!(proj.rows(), 3);
        // Input: fields a = [7, 8], b = [9], then position code [1, -1].
        assert_eq!(proj.apply(&[7, 8, 9, 1, -1]), vec![9, 7, 8]);
    }
}
