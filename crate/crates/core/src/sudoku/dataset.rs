use super::{parse_board, Board, SudokuError};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// One complete, valid board per line.
    Solutions,
    /// Alternating puzzle and solution lines.
    Pairs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dataset {
    Solutions(Vec<Board>),
    Pairs(Vec<(Board, Board)>),
}

impl Dataset {
    pub fn kind(&self) -> DatasetKind {
        match self {
            Dataset::Solutions(_) => DatasetKind::Solutions,
            Dataset::Pairs(_) => DatasetKind::Pairs,
        }
    }

    /// Number of entries (pairs count once).
    pub fn len(&self) -> usize {
        match self {
            Dataset::Solutions(b) => b.len(),
            Dataset::Pairs(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Solution boards of either kind.
    pub fn solutions(&self) -> Vec<&Board> {
        match self {
            Dataset::Solutions(b) => b.iter().collect(),
            Dataset::Pairs(p) => p.iter().map(|(_, s)| s).collect(),
        }
    }

    pub fn order(&self) -> Option<usize> {
        self.solutions().first().map(|b| b.order())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |b: &Board| {
            let _ = writeln!(out, "{}", b.to_line());
        };
        match self {
            Dataset::Solutions(boards) => boards.iter().for_each(&mut line),
            Dataset::Pairs(pairs) => pairs.iter().for_each(|(p, s)| {
                line(p);
                line(s);
            }),
        }
        out
    }

    /// Parses dataset text; `origin` labels errors.
    pub fn from_text(text: &str, kind: DatasetKind, origin: &str) -> Result<Self, SudokuError> {
        let err = |line: usize, reason: String| SudokuError::Dataset {
            path: origin.to_string(),
            line,
            reason,
        };
        let mut boards = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.is_empty() {
                continue;
            }
            let board = parse_board(raw).map_err(|e| err(lineno, e.to_string()))?;
            if let Some((_, first)) = boards.first() {
                let first: &Board = first;
                if first.order() != board.order() {
                    return Err(err(lineno, "board order differs from first line".into()));
                }
            }
            boards.push((lineno, board));
        }
        let check_solution = |lineno: usize, b: &Board| {
            if !b.is_complete() {
                return Err(err(lineno, "solution board has empty cells".into()));
            }
            let v = super::count_violations(b);
            if v != 0 {
                return Err(err(lineno, format!("solution board violates {v} groups")));
            }
            Ok(())
        };
        match kind {
            DatasetKind::Solutions => {
                for (lineno, b) in &boards {
                    check_solution(*lineno, b)?;
                }
                Ok(Dataset::Solutions(boards.into_iter().map(|(_, b)| b).collect()))
            }
            DatasetKind::Pairs => {
                if boards.len() % 2 != 0 {
                    let last = boards.last().map_or(0, |(l, _)| *l);
                    return Err(err(last, "puzzle line without a solution line".into()));
                }
                let mut pairs = Vec::with_capacity(boards.len() / 2);
                let mut it = boards.into_iter();
                while let (Some((_, puzzle)), Some((sl, solution))) = (it.next(), it.next()) {
                    check_solution(sl, &solution)?;
                    if !puzzle.agrees_with(&solution) {
                        return Err(err(sl, "solution disagrees with puzzle givens".into()));
                    }
                    pairs.push((puzzle, solution));
                }
                Ok(Dataset::Pairs(pairs))
            }
        }
    }
}

pub fn load_dataset(path: &Path, kind: DatasetKind) -> Result<Dataset, SudokuError> {
    let text = std::fs::read_to_string(path).map_err(|e| SudokuError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Dataset::from_text(&text, kind, &path.display().to_string())
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), SudokuError> {
    std::fs::write(path, dataset.to_text()).map_err(|e| SudokuError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
