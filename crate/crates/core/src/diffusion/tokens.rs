use super::DiffusionError;
use crate::grad::{argmax, softmax_rows, Tensor};
use crate::scalar::Scalar;
use crate::sudoku::{Board, EMPTY};

/// Absorbing token value inside a [`TokenSeq`].
pub const MASK: u8 = u8::MAX;

/// A diffusion state: per position either [`MASK`] or a class index `0..K`.
///
/// Sudoku digit `d` maps to class `d − 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenSeq {
    num_classes: usize,
    tokens: Vec<u8>,
}

impl TokenSeq {
    pub fn new(num_classes: usize, tokens: Vec<u8>) -> Result<Self, DiffusionError> {
        if let Some(&bad) = tokens
            .iter()
            .find(|&&t| t != MASK && t as usize >= num_classes)
        {
            return Err(DiffusionError::BadToken {
                token: bad,
                num_classes,
            });
        }
        Ok(Self {
            num_classes,
            tokens,
        })
    }

    pub fn all_masked(num_classes: usize, len: usize) -> Self {
        Self {
            num_classes,
            tokens: vec![MASK; len],
        }
    }

    /// Empty cells become [`MASK`].
    pub fn from_board(board: &Board) -> Self {
        Self {
            num_classes: board.side(),
            tokens: board
                .cells()
                .iter()
                .map(|&d| if d == EMPTY { MASK } else { d - 1 })
                .collect(),
        }
    }

    /// [`MASK`] becomes an empty cell.
    pub fn to_board(&self, order: usize) -> Result<Board, DiffusionError> {
        let side = order * order;
        if self.num_classes != side || self.tokens.len() != side * side {
            return Err(DiffusionError::OrderMismatch {
                expected: side * side,
                found: self.tokens.len(),
            });
        }
        let cells = self
            .tokens
            .iter()
            .map(|&t| if t == MASK { EMPTY } else { t + 1 })
            .collect();
        Board::from_cells(order, cells).map_err(|e| DiffusionError::Board(e.to_string()))
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[u8] {
        &self.tokens
    }

    pub fn get(&self, i: usize) -> u8 {
        self.tokens[i]
    }

    pub fn is_masked(&self, i: usize) -> bool {
        self.tokens[i] == MASK
    }

    /// Panics on a class outside `0..K` other than [`MASK`].
    pub fn set(&mut self, i: usize, token: u8) {
        assert!(token == MASK || (token as usize) < self.num_classes);
        self.tokens[i] = token;
    }

    /// The masked index set `I`.
    pub fn masked_set(&self) -> Vec<usize> {
        (0..self.tokens.len())
            .filter(|&i| self.tokens[i] == MASK)
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.tokens.iter().all(|&t| t != MASK)
    }
}

/// Per-position unnormalized log-probabilities over the `K` digit classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGrid<T>(Tensor<T>);

impl<T: Scalar> LogitGrid<T> {
    pub fn new(rows: usize, classes: usize, values: Vec<T>) -> Result<Self, DiffusionError> {
        let t = Tensor::new(&[rows, classes], values)
            .map_err(|e| DiffusionError::Shape(e.to_string()))?;
        Self::from_tensor(t)
    }

    pub fn from_tensor(t: Tensor<T>) -> Result<Self, DiffusionError> {
        if t.rank() != 2 {
            return Err(DiffusionError::Shape(format!(
                "logit grid needs rank 2, got {:?}",
                t.shape()
            )));
        }
        if !t.is_finite() {
            return Err(DiffusionError::NonFinite("logit grid"));
        }
        Ok(Self(t))
    }

    pub fn zeros(rows: usize, classes: usize) -> Self {
        Self(Tensor::zeros(&[rows, classes]))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn classes(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.0.row(i)
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }

    /// Position-wise softmax.
    pub fn probs(&self) -> DenoiserDist<T> {
        let mut t = self.0.clone();
        let c = t.cols();
        softmax_rows(t.data_mut(), c);
        DenoiserDist(t)
    }

    pub fn argmax_row(&self, i: usize) -> usize {
        argmax(self.row(i))
    }
}

/// Per-position categorical distributions over digit classes.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserDist<T>(Tensor<T>);

impl<T: Scalar> DenoiserDist<T> {
    /// Rows must be non-negative and sum to one within `1e-6`.
    pub fn new(rows: usize, classes: usize, probs: Vec<T>) -> Result<Self, DiffusionError> {
        let t = Tensor::new(&[rows, classes], probs)
            .map_err(|e| DiffusionError::Shape(e.to_string()))?;
        for r in 0..rows {
            let row = t.row(r);
            let total: T = row.iter().copied().sum();
            if row.iter().any(|&p| p < T::zero() || !p.is_finite())
                || (total - T::one()).abs() > T::lit(1e-6)
            {
                return Err(DiffusionError::NotADistribution(r));
            }
        }
        Ok(Self(t))
    }

    pub fn uniform(rows: usize, classes: usize) -> Self {
        Self(Tensor::full(&[rows, classes], T::lit(1.0 / classes as f64)))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn classes(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.0.row(i)
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sudoku::parse_board;

    #[test]
    fn board_roundtrip_through_tokens() {
        let b = parse_board("1034000000000021").unwrap();
        let s = TokenSeq::from_board(&b);
        assert_eq!(s.get(0), 0);
        assert!(s.is_masked(1));
        assert_eq!(s.masked_set().len(), 11);
        assert_eq!(s.to_board(2).unwrap(), b);
    }

    #[test]
    fn masked_set_tracks_mask_positions() {
        let mut s = TokenSeq::all_masked(3, 4);
        s.set(2, 1);
        assert_eq!(s.masked_set(), vec![0, 1, 3]);
        assert!(!s.is_complete());
    }

    #[test]
    fn bad_tokens_rejected() {
        assert!(TokenSeq::new(3, vec![0, 3]).is_err());
        assert!(TokenSeq::new(3, vec![0, MASK, 2]).is_ok());
    }

    #[test]
    fn dist_validation() {
        assert!(DenoiserDist::<f64>::new(1, 2, vec![0.5, 0.5]).is_ok());
        assert!(matches!(
            DenoiserDist::<f64>::new(1, 2, vec![0.5, 0.6]),
            Err(DiffusionError::NotADistribution(0))
        ));
        let p = LogitGrid::<f64>::new(1, 3, vec![0.0, 0.0, 0.0]).unwrap().probs();
        assert!((p.row(0)[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(LogitGrid::<f64>::new(1, 2, vec![f64::NAN, 0.0]).is_err());
    }
}
