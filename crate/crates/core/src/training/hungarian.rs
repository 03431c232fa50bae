use serde::{Deserialize, Serialize};

use super::TrainingError;

/// Dense cost matrix, rows are predictions and columns are labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TrainingError> {
        if data.len() != rows * cols {
            return Err(TrainingError::Argument(format!(
                "cost matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(TrainingError::Argument(format!("non-finite cost {v}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, TrainingError> {
        let data = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| f(i, j)).collect();
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Label index for each prediction, `None` for unmatched predictions.
    pub pred_to_label: Vec<Option<usize>>,
    /// Sum of matched costs, added in prediction order.
    pub cost: f64,
}

impl Assignment {
    pub fn matched(&self) -> usize {
        self.pred_to_label.iter().filter(|m| m.is_some()).count()
    }
}

/// Minimum-cost assignment of every label to a distinct prediction.
///
/// Needs at least as many predictions as labels. Surplus predictions behave
/// as if matched to padding columns of equal constant cost, which never
/// changes the optimum, so they are simply left unmatched.
pub fn hungarian(c: &CostMatrix) -> Result<Assignment, TrainingError> {
    let (n_pred, n_label) = (c.rows, c.cols);
    if n_pred < n_label {
        return Err(TrainingError::Argument(format!(
            "{n_label} labels cannot be matched by {n_pred} predictions"
        )));
    }
    // Shortest augmenting paths with potentials over the transposed problem:
    // labels are the rows to place, predictions the columns.
    let (n, m) = (n_label, n_pred);
    let cost = |i: usize, j: usize| c.get(j - 1, i - 1);
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut way = vec![0usize; m + 1];
    // owner[j]: label (1-based) holding prediction j, 0 if free.
    let mut owner = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pred_to_label = vec![None; n_pred];
    for j in 1..=m {
        if owner[j] != 0 {
            pred_to_label[j - 1] = Some(owner[j] - 1);
        }
    }
    let cost = assignment_cost(c, &pred_to_label);
    Ok(Assignment { pred_to_label, cost })
}

/// Cost of an assignment, summed in prediction order.
pub fn assignment_cost(c: &CostMatrix, pred_to_label: &[Option<usize>]) -> f64 {
    pred_to_label
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|j| c.get(i, j)))
        .fold(0.0, |acc, x| acc + x)
}
