//! Constructive weight and template assignments realizing the separation-rank
//! lower bound, and the Hadamard-power rank witness they rely on.

mod assign;
mod hadamard;

use serde::Serialize;
use thiserror::Error;

use crate::model::ModelError;
use crate::numerics::{Matrix, NumericsError};

pub use assign::{
    build_conv_witness, build_large_n_witness, build_vocab_witness, target_pattern,
    AssignmentBundle, WitnessKind, WitnessParams,
};
pub use hadamard::{
    search_hadamard_witness, verify_hadamard_rank, verify_hadamard_rank_exact,
    DEFAULT_MAX_TRIALS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WitnessError {
    /// A construction assumption does not hold.
    #[error("assumption violated: {0}")]
    Assumption(String),
    /// The randomized search gave up; says nothing about existence.
    #[error("no witness found in {trials} trials (search limitation, not a counterexample)")]
    SearchExhausted { trials: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// `phi(j) = floor((j-1)/d_a) (d_a-1) + ((j-1) mod d_a) + 1`, 1-based.
///
/// Skips the last slot of every `d_a` block, so it is injective on
/// `{j : (j-1) mod d_a != d_a-1}`.
pub fn phi_index(j: usize, d_a: usize) -> usize {
    assert!(j >= 1 && d_a >= 2, "phi_index needs j >= 1 and d_a >= 2");
    (j - 1) / d_a * (d_a - 1) + (j - 1) % d_a + 1
}

/// Non-negative integer matrix whose rows share one squared norm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WitnessMatrix {
    rows: Vec<Vec<u64>>,
    row_norm: u64,
}

impl WitnessMatrix {
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self, WitnessError> {
        let first = rows
            .first()
            .ok_or_else(|| WitnessError::Assumption("witness matrix has no rows".into()))?;
        let d = first.len();
        if d == 0 {
            return Err(WitnessError::Assumption("witness matrix has no columns".into()));
        }
        let norm = |r: &[u64]| r.iter().map(|&x| x * x).sum::<u64>();
        let row_norm = norm(first);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(WitnessError::Assumption(format!(
                    "row {i} has {} entries, expected {d}",
                    r.len()
                )));
            }
            if norm(r) != row_norm {
                return Err(WitnessError::Assumption(format!(
                    "row {i} has squared norm {}, expected the common norm {row_norm}",
                    norm(r)
                )));
            }
        }
        Ok(Self { rows, row_norm })
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// `d`, the number of columns.
    pub fn n_cols(&self) -> usize {
        self.rows[0].len()
    }

    /// Common squared row norm `c`.
    pub fn row_norm(&self) -> u64 {
        self.row_norm
    }

    pub fn max_entry(&self) -> u64 {
        self.rows.iter().flatten().copied().max().unwrap_or(0)
    }

    /// 1-based entry access, as in the case tables.
    pub fn at(&self, row: usize, col: usize) -> u64 {
        self.rows[row - 1][col - 1]
    }

    pub fn to_matrix(&self) -> Matrix<f64> {
        Matrix::from_fn(self.n_rows(), self.n_cols(), |i, j| self.rows[i][j] as f64)
    }
}

/// Outcome of one verification step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl WitnessCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}
