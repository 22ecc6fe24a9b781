//! Grid tensors of network outputs over template inputs, their
//! matricizations under balanced partitions, and the resulting empirical
//! separation-rank lower bounds.

mod experiment;
mod grid;

use thiserror::Error;

use crate::bounds::BoundsError;
use crate::model::ModelError;
use crate::numerics::NumericsError;

pub use experiment::{
    ln_count, median_rank, rank_sweep, write_sweep_csv, GridConfig, GridEmbedding, GridOutcome,
    SweepParam, SweepRow, SweepSpec,
};
pub use grid::{
    build_grid_tensor, build_grid_with, empirical_sep_lower_bound, grid_cap_from_env, grid_size,
    matricize, matricize_index, sampled_submatrix, GridOptions, GridTensor, Partition, Provenance,
    TemplateSet, DEFAULT_GRID_CAP, GRID_CAP_ENV,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeptensorError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{0}")]
    Capability(String),
    #[error("output error: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}
