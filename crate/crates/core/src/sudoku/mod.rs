//! Generalized Sudoku: boards of order `n` (side `N = n²`), the row/column/block
//! group structure, and the exact violation count used as ground truth
//! everywhere else in the crate.

mod dataset;
mod generate;
mod solve;

pub use dataset::{load_dataset, save_dataset, Dataset, DatasetKind};
pub use generate::{generate_puzzle, random_solution};
pub use solve::{enumerate_solutions, is_unique};

use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Cell value for an unfilled cell.
pub const EMPTY: u8 = 0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SudokuError {
    #[error("board line has length {found}, expected 16 or 81")]
    BadLength { found: usize },
    #[error("illegal character {ch:?} at index {index}")]
    BadChar { index: usize, ch: char },
    #[error("digit {digit} at index {index} exceeds side {side}")]
    DigitOutOfRange { index: usize, digit: u8, side: usize },
    #[error("unsupported order {0}; expected 2 or 3")]
    BadOrder(usize),
    #[error("givens {givens} out of range 0..={cells}")]
    BadGivens { givens: usize, cells: usize },
    #[error("could not reach {givens} givens with a unique completion after {attempts} attempts")]
    GenerationFailed { givens: usize, attempts: usize },
    #[error("{path}:{line}: {reason}")]
    Dataset {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

/// A generalized Sudoku board, flattened row-wise.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Board {
    order: usize,
    cells: Vec<u8>,
}

impl Board {
    pub fn empty(order: usize) -> Result<Self, SudokuError> {
        check_order(order)?;
        let side = order * order;
        Ok(Self {
            order,
            cells: vec![EMPTY; side * side],
        })
    }

    pub fn from_cells(order: usize, cells: Vec<u8>) -> Result<Self, SudokuError> {
        check_order(order)?;
        let side = order * order;
        if cells.len() != side * side {
            return Err(SudokuError::BadLength { found: cells.len() });
        }
        if let Some((index, &digit)) = cells.iter().enumerate().find(|(_, &d)| d as usize > side) {
            return Err(SudokuError::DigitOutOfRange { index, digit, side });
        }
        Ok(Self { order, cells })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Side length `N = n²`, which is also the number of digits.
    pub fn side(&self) -> usize {
        self.order * self.order
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, index: usize) -> u8 {
        self.cells[index]
    }

    /// Panics if `digit` exceeds the side length.
    pub fn set(&mut self, index: usize, digit: u8) {
        assert!(digit as usize <= self.side(), "digit out of range");
        self.cells[index] = digit;
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|&c| c != EMPTY)
    }

    pub fn givens(&self) -> usize {
        self.cells.iter().filter(|&&c| c != EMPTY).count()
    }

    /// True when every non-empty cell of `self` matches `other`.
    pub fn agrees_with(&self, other: &Board) -> bool {
        self.order == other.order
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(&a, &b)| a == EMPTY || a == b)
    }

    /// A complete board with no violated group.
    pub fn is_solution(&self) -> bool {
        self.is_complete() && count_violations(self) == 0
    }

    /// The `'0'..'9'` line encoding.
    pub fn to_line(&self) -> String {
        self.cells.iter().map(|&d| char::from(b'0' + d)).collect()
    }
}

impl fmt::Debug for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Board({})", self.to_line())
    }
}

impl fmt::Display for Board {
    /// Grid rendering with block separators.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, side) = (self.order, self.side());
        for r in 0..side {
            if r > 0 && r % n == 0 {
                let bar = vec!["-".repeat(2 * n - 1); n].join("-+-");
                writeln!(f, "{bar}")?;
            }
            for c in 0..side {
                if c > 0 {
                    f.write_str(if c % n == 0 { " | " } else { " " })?;
                }
                match self.cells[r * side + c] {
                    EMPTY => f.write_str(".")?,
                    d => write!(f, "{d}")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for Board {
    type Err = SudokuError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_board(s)
    }
}

fn check_order(order: usize) -> Result<(), SudokuError> {
    match order {
        2 | 3 => Ok(()),
        _ => Err(SudokuError::BadOrder(order)),
    }
}

/// Parses a line of exactly `N²` characters, `'0'` meaning empty.
pub fn parse_board(text: &str) -> Result<Board, SudokuError> {
    let chars: Vec<char> = text.chars().collect();
    let order = match chars.len() {
        16 => 2,
        81 => 3,
        found => return Err(SudokuError::BadLength { found }),
    };
    let side = order * order;
    let mut cells = Vec::with_capacity(chars.len());
    for (index, &ch) in chars.iter().enumerate() {
        let digit = ch
            .to_digit(10)
            .ok_or(SudokuError::BadChar { index, ch })? as u8;
        if digit as usize > side {
            return Err(SudokuError::DigitOutOfRange { index, digit, side });
        }
        cells.push(digit);
    }
    Ok(Board { order, cells })
}

pub fn format_board(board: &Board) -> String {
    board.to_line()
}

/// The `3N` constraint groups of a board: rows, then columns, then blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTable {
    order: usize,
    groups: Vec<Vec<usize>>,
    cell_groups: Vec<[usize; 3]>,
}

impl GroupTable {
    pub fn new(order: usize) -> Self {
        let side = order * order;
        let mut groups = Vec::with_capacity(3 * side);
        for r in 0..side {
            groups.push((0..side).map(|c| r * side + c).collect());
        }
        for c in 0..side {
            groups.push((0..side).map(|r| r * side + c).collect());
        }
        for b in 0..side {
            let (br, bc) = ((b / order) * order, (b % order) * order);
            groups.push(
                (0..side)
                    .map(|k| (br + k / order) * side + bc + k % order)
                    .collect(),
            );
        }
        let cell_groups = (0..side * side)
            .map(|i| {
                let (r, c) = (i / side, i % side);
                [r, side + c, 2 * side + (r / order) * order + c / order]
            })
            .collect();
        Self {
            order,
            groups,
            cell_groups,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn side(&self) -> usize {
        self.order * self.order
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Row, column and block group indices of a cell.
    pub fn groups_of(&self, cell: usize) -> [usize; 3] {
        self.cell_groups[cell]
    }

    pub fn row_of(&self, cell: usize) -> usize {
        self.cell_groups[cell][0]
    }

    pub fn col_of(&self, cell: usize) -> usize {
        self.cell_groups[cell][1] - self.side()
    }

    pub fn block_of(&self, cell: usize) -> usize {
        self.cell_groups[cell][2] - 2 * self.side()
    }
}

/// Number of groups (out of `3N`) that contain a repeated digit.
pub fn count_violations(board: &Board) -> usize {
    let table = GroupTable::new(board.order);
    count_violations_with(board, &table)
}

pub fn count_violations_with(board: &Board, table: &GroupTable) -> usize {
    table
        .groups
        .iter()
        .filter(|group| {
            let mut seen = 0u32;
            group.iter().any(|&i| {
                let d = board.cells[i];
                if d == EMPTY {
                    return false;
                }
                let bit = 1u32 << d;
                let dup = seen & bit != 0;
                seen |= bit;
                dup
            })
        })
        .count()
}
