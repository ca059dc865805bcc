//! δ-conditioned digit transition rules.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulator::{DigitState, DIGITS, NUM_DIGITS};

pub const MIN_DELTA: i64 = 1;
pub const MAX_DELTA: i64 = 10;

/// Row/column index of the "null" (no digit) state.
pub const NULL: usize = NUM_DIGITS;

/// Cells of the transition table, rows and columns ordered `0 6 8 3 9 null`.
/// Each cell lists the time lapses that allow the column at the next step;
/// `a:b` is an inclusive range and `-` means never.
const CELLS: [[&str; 6]; 6] = [
    ["7:10", "5", "3,7", "1,2,7", "-", "1:6"],
    ["1,2", "1:3,5:9", "3,6", "5", "-", "4,10"],
    ["1", "1,2,10", "2:7", "3,5", "-", "8:10"],
    ["-", "1:5", "6:10", "1,2,6:8", "-", "1:10"],
    ["-", "1:3", "5:7", "-", "1:9", "10"],
    ["3,4", "5", "10", "-", "6,7", "1:3,8,9"],
];

/// Digits (and possibly "no digit") permitted at the next step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize)]
pub struct AllowedSet {
    pub digits: DigitState,
    pub null: bool,
}

impl AllowedSet {
    /// Whether `next` can follow: only permitted digits, and empty only when
    /// "no digit" is permitted or nothing at all is.
    pub fn admits(&self, next: DigitState) -> bool {
        next.is_subset_of(self.digits) && (!next.is_empty() || self.null || self.digits.is_empty())
    }
}

/// For every row state and column, the bit set of permitting δ values
/// (bit `δ - 1`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionTable {
    cells: [[u16; 6]; 6],
}

impl Default for TransitionTable {
    fn default() -> Self {
        Self::standard()
    }
}

impl TransitionTable {
    pub fn standard() -> Self {
        let mut cells = [[0u16; 6]; 6];
        for (r, row) in CELLS.iter().enumerate() {
            for (c, text) in row.iter().enumerate() {
                cells[r][c] = parse_cell(text).expect("built-in table is well formed");
            }
        }
        TransitionTable { cells }
    }

    /// Builds a table from textual cells in the same notation as the
    /// built-in one.
    pub fn from_cells(text: &[[&str; 6]; 6]) -> Result<Self> {
        let mut cells = [[0u16; 6]; 6];
        for (r, row) in text.iter().enumerate() {
            for (c, t) in row.iter().enumerate() {
                cells[r][c] = parse_cell(t)?;
            }
        }
        Ok(TransitionTable { cells })
    }

    /// Whether a single row (label index, or [`NULL`]) permits column `col`
    /// after a lapse of `delta`.
    pub fn permits(&self, row: usize, col: usize, delta: i64) -> bool {
        (MIN_DELTA..=MAX_DELTA).contains(&delta) && self.cells[row][col] & (1 << (delta - 1)) != 0
    }

    /// Permitted next-step digits. An empty state reads the null row; a
    /// non-empty one takes the union of the rows of every present digit.
    pub fn allowed_digits(&self, state: DigitState, delta: i64) -> Result<AllowedSet> {
        if !(MIN_DELTA..=MAX_DELTA).contains(&delta) {
            return Err(Error::DeltaOutOfRange(delta));
        }
        let rows: Vec<usize> = if state.is_empty() {
            vec![NULL]
        } else {
            state.indices().collect()
        };
        let mut out = AllowedSet::default();
        for row in rows {
            for col in 0..NUM_DIGITS {
                if self.permits(row, col, delta) {
                    out.digits.insert_index(col);
                }
            }
            out.null |= self.permits(row, NULL, delta);
        }
        Ok(out)
    }

    /// Machine-readable dump: one entry per (row, column) with the sorted
    /// list of permitting δ values.
    pub fn dump(&self) -> serde_json::Value {
        let name = |i: usize| {
            if i == NULL {
                "null".to_string()
            } else {
                DIGITS[i].to_string()
            }
        };
        let mut rows = serde_json::Map::new();
        for r in 0..6 {
            let mut cols = serde_json::Map::new();
            for c in 0..6 {
                let deltas: Vec<i64> = (MIN_DELTA..=MAX_DELTA)
                    .filter(|&d| self.permits(r, c, d))
                    .collect();
                cols.insert(name(c), deltas.into());
            }
            rows.insert(name(r), cols.into());
        }
        rows.into()
    }
}

fn parse_cell(text: &str) -> Result<u16> {
    let bad = |why: &str| Error::format("transition cell", format!("{text:?}: {why}"));
    let text = text.trim();
    if text == "-" {
        return Ok(0);
    }
    let mut mask = 0u16;
    for part in text.split(',') {
        let (lo, hi) = match part.split_once(':') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part.trim(), part.trim()),
        };
        let lo: i64 = lo.parse().map_err(|_| bad("not an integer"))?;
        let hi: i64 = hi.parse().map_err(|_| bad("not an integer"))?;
        if lo < MIN_DELTA || hi > MAX_DELTA || lo > hi {
            return Err(bad("range outside [1, 10]"));
        }
        for d in lo..=hi {
            mask |= 1 << (d - 1);
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(digits: &[u8]) -> DigitState {
        DigitState::from_digits(digits).unwrap()
    }

    #[test]
    fn examples_from_the_table() {
        let t = TransitionTable::standard();
        let a = t.allowed_digits(state(&[0]), 7).unwrap();
        assert_eq!(a.digits, state(&[0, 8, 3]));
        assert!(!a.null);
        let a = t.allowed_digits(DigitState::empty(), 10).unwrap();
        assert_eq!(a.digits, state(&[8]));
        assert!(!a.null);
        let a = t.allowed_digits(state(&[9]), 5).unwrap();
        assert_eq!(a.digits, state(&[8, 9]));
    }

    #[test]
    fn union_over_present_digits() {
        let t = TransitionTable::standard();
        // row 9 at δ=10: null only; row 3 at δ=10: 8 and null.
        let a = t.allowed_digits(state(&[3, 9]), 10).unwrap();
        assert_eq!(a.digits, state(&[8]));
        assert!(a.null);
    }

    #[test]
    fn delta_out_of_range() {
        let t = TransitionTable::standard();
        assert!(matches!(t.allowed_digits(DigitState::empty(), 0), Err(Error::DeltaOutOfRange(0))));
        assert!(t.allowed_digits(DigitState::empty(), 11).is_err());
    }

    #[test]
    fn cell_parser() {
        assert_eq!(parse_cell("-").unwrap(), 0);
        assert_eq!(parse_cell("1:3,5:9").unwrap(), 0b1_1111_0111);
        assert_eq!(parse_cell("10").unwrap(), 1 << 9);
        assert!(parse_cell("0:3").is_err());
        assert!(parse_cell("x").is_err());
    }

    #[test]
    fn dump_lists_every_cell() {
        let dump = TransitionTable::standard().dump();
        assert_eq!(dump["0"]["0"], serde_json::json!([7, 8, 9, 10]));
        assert_eq!(dump["null"]["null"], serde_json::json!([1, 2, 3, 8, 9]));
        assert_eq!(dump["9"]["3"], serde_json::json!([]));
    }
}
