//! Exact backtracking over bitmask candidate sets, most-constrained cell first.

use super::{Board, GroupTable, EMPTY};
use rand::seq::SliceRandom;
use rand::Rng;

pub(crate) struct Search<'a> {
    table: &'a GroupTable,
    side: usize,
    cells: Vec<u8>,
    used: Vec<u32>,
}

impl<'a> Search<'a> {
    /// `None` when the givens already repeat a digit inside a group.
    pub(crate) fn new(board: &Board, table: &'a GroupTable) -> Option<Self> {
        let side = board.side();
        let mut search = Self {
            table,
            side,
            cells: board.cells().to_vec(),
            used: vec![0; 3 * side],
        };
        for (i, &d) in board.cells().iter().enumerate() {
            if d != EMPTY {
                let bit = 1u32 << d;
                for g in table.groups_of(i) {
                    if search.used[g] & bit != 0 {
                        return None;
                    }
                    search.used[g] |= bit;
                }
            }
        }
        Some(search)
    }

    fn candidates(&self, cell: usize) -> u32 {
        let full = ((1u32 << (self.side + 1)) - 1) & !1;
        let [a, b, c] = self.table.groups_of(cell);
        full & !(self.used[a] | self.used[b] | self.used[c])
    }

    /// Empty cell with the fewest candidates; lowest index on ties.
    fn pick_cell(&self) -> Option<(usize, u32)> {
        let mut best: Option<(usize, u32)> = None;
        for (i, &d) in self.cells.iter().enumerate() {
            if d != EMPTY {
                continue;
            }
            let cand = self.candidates(i);
            let better = match best {
                None => true,
                Some((_, b)) => cand.count_ones() < b.count_ones(),
            };
            if better {
                best = Some((i, cand));
                if cand.count_ones() <= 1 {
                    break;
                }
            }
        }
        best
    }

    fn place(&mut self, cell: usize, d: u8) {
        self.cells[cell] = d;
        for g in self.table.groups_of(cell) {
            self.used[g] |= 1 << d;
        }
    }

    fn unplace(&mut self, cell: usize, d: u8) {
        self.cells[cell] = EMPTY;
        for g in self.table.groups_of(cell) {
            self.used[g] &= !(1 << d);
        }
    }

    /// Depth-first search; `visit` returns false to stop. Returns false if stopped.
    pub(crate) fn run<R: Rng>(
        &mut self,
        rng: &mut Option<&mut R>,
        visit: &mut dyn FnMut(&[u8]) -> bool,
    ) -> bool {
        let Some((cell, cand)) = self.pick_cell() else {
            return visit(&self.cells);
        };
        let mut digits: Vec<u8> = (1..=self.side as u8)
            .filter(|&d| cand & (1 << d) != 0)
            .collect();
        if let Some(rng) = rng.as_deref_mut() {
            digits.shuffle(rng);
        }
        for d in digits {
            self.place(cell, d);
            let go_on = self.run(rng, visit);
            self.unplace(cell, d);
            if !go_on {
                return false;
            }
        }
        true
    }
}

/// All zero-violation completions of `board` agreeing with its givens, up to `limit`.
///
/// The returned list is sorted lexicographically by cell values.
pub fn enumerate_solutions(board: &Board, limit: usize) -> Vec<Board> {
    let table = GroupTable::new(board.order());
    let Some(mut search) = Search::new(board, &table) else {
        return Vec::new();
    };
    let mut found = Vec::new();
    if limit == 0 {
        return found;
    }
    let mut visit = |cells: &[u8]| {
        found.push(Board {
            order: board.order(),
            cells: cells.to_vec(),
        });
        found.len() < limit
    };
    search.run::<rand_chacha::ChaCha8Rng>(&mut None, &mut visit);
    found.sort();
    found
}

pub fn is_unique(board: &Board) -> bool {
    enumerate_solutions(board, 2).len() == 1
}
