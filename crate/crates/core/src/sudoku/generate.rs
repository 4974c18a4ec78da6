use super::solve::{enumerate_solutions, Search};
use super::{Board, GroupTable, SudokuError, EMPTY};
use rand::seq::SliceRandom;
use rand::Rng;

const MAX_ATTEMPTS: usize = 64;

/// A random complete solution, found by search with shuffled digit order.
pub fn random_solution<R: Rng>(order: usize, rng: &mut R) -> Result<Board, SudokuError> {
    let empty = Board::empty(order)?;
    let table = GroupTable::new(order);
    let mut search = Search::new(&empty, &table).expect("empty board is consistent");
    let mut out = None;
    search.run(&mut Some(rng), &mut |cells| {
        out = Some(cells.to_vec());
        false
    });
    Board::from_cells(order, out.expect("every order has a solution"))
}

/// Digs `N² − givens` cells out of a random solution.
///
/// With `unique`, a removal is only kept when the puzzle still has exactly one
/// completion; the whole construction is retried from a fresh solution when a
/// dig gets stuck above the requested count.
pub fn generate_puzzle<R: Rng>(
    rng: &mut R,
    order: usize,
    givens: usize,
    unique: bool,
) -> Result<(Board, Board), SudokuError> {
    let cells = Board::empty(order)?.len();
    if givens > cells {
        return Err(SudokuError::BadGivens { givens, cells });
    }
    for _ in 0..MAX_ATTEMPTS {
        let solution = random_solution(order, rng)?;
        let mut puzzle = solution.clone();
        let mut order_of_removal: Vec<usize> = (0..cells).collect();
        order_of_removal.shuffle(rng);
        let mut remaining = cells;
        for idx in order_of_removal {
            if remaining == givens {
                break;
            }
            let digit = puzzle.get(idx);
            puzzle.set(idx, EMPTY);
            if unique && enumerate_solutions(&puzzle, 2).len() != 1 {
                puzzle.set(idx, digit);
            } else {
                remaining -= 1;
            }
        }
        if remaining == givens {
            return Ok((puzzle, solution));
        }
    }
    Err(SudokuError::GenerationFailed {
        givens,
        attempts: MAX_ATTEMPTS,
    })
}
