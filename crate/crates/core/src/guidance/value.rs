use super::GuidanceError;
use crate::grad::{Graph, Tensor, Var};
use crate::scalar::Scalar;
use crate::sudoku::{Board, GroupTable, EMPTY};
use std::sync::Arc;

/// Differentiable score of a relaxed `N² × N` board; higher means fewer violations.
pub trait ValueFunction<T: Scalar>: Sync {
    /// Appends the scalar value of `relaxed` to `g`.
    fn build(&self, g: &mut Graph<T>, relaxed: Var) -> Result<Var, GuidanceError>;

    fn evaluate(&self, relaxed: &Tensor<T>) -> Result<T, GuidanceError> {
        let mut g = Graph::new();
        let x = g.input(relaxed.clone());
        let v = self.build(&mut g, x)?;
        Ok(g.value(v).item())
    }
}

/// Squared deviation of every group's soft digit count from one:
/// `−Σ_g Σ_d (c_{g,d} − 1)²` with `c_{g,d} = Σ_{i∈g} P[i, d]`.
#[derive(Debug, Clone)]
pub struct AnalyticValue {
    groups: Arc<Vec<Vec<usize>>>,
    cells: usize,
    side: usize,
}

impl AnalyticValue {
    pub fn new(table: &GroupTable) -> Self {
        let side = table.side();
        Self {
            groups: Arc::new(table.groups().to_vec()),
            cells: side * side,
            side,
        }
    }

    pub fn for_order(order: usize) -> Self {
        Self::new(&GroupTable::new(order))
    }
}

impl<T: Scalar> ValueFunction<T> for AnalyticValue {
    fn build(&self, g: &mut Graph<T>, relaxed: Var) -> Result<Var, GuidanceError> {
        let shape = g.value(relaxed).shape();
        if shape != [self.cells, self.side] {
            return Err(GuidanceError::Shape(format!(
                "relaxed board {shape:?}, expected [{}, {}]",
                self.cells, self.side
            )));
        }
        let counts = g.gather_sum(relaxed, self.groups.clone());
        let dev = g.add_scalar(counts, -T::one());
        let sq = g.square(dev);
        let total = g.sum(sq);
        Ok(g.scale(total, -T::one()))
    }
}

fn check_relaxed<T: Scalar>(p: &Tensor<T>, table: &GroupTable) -> Result<(), GuidanceError> {
    let side = table.side();
    if p.shape() != [side * side, side] {
        return Err(GuidanceError::BadRelaxed(format!(
            "shape {:?}, expected [{}, {side}]",
            p.shape(),
            side * side
        )));
    }
    for r in 0..p.rows() {
        let row = p.row(r);
        let total: T = row.iter().copied().sum();
        if row.iter().any(|&x| x < T::zero() || !x.is_finite())
            || (total - T::one()).abs() > T::lit(1e-6)
        {
            return Err(GuidanceError::BadRelaxed(format!("row {r} is not a distribution")));
        }
    }
    Ok(())
}

/// The analytic value of a validated relaxed board.
pub fn analytic_value<T: Scalar>(p: &Tensor<T>, table: &GroupTable) -> Result<T, GuidanceError> {
    check_relaxed(p, table)?;
    AnalyticValue::new(table).evaluate(p)
}

/// One-hot `N² × N` encoding of a board; empty cells become uniform rows.
pub fn one_hot_board<T: Scalar>(board: &Board) -> Tensor<T> {
    let side = board.side();
    let mut t = Tensor::zeros(&[board.len(), side]);
    for (i, &d) in board.cells().iter().enumerate() {
        let row = t.row_mut(i);
        if d == EMPTY {
            row.fill(T::lit(1.0 / side as f64));
        } else {
            row[d as usize - 1] = T::one();
        }
    }
    t
}
