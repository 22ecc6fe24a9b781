//! Embeddings, unnormalized self-attention layers, depth-`L` networks and
//! their explicit polynomial form.

mod attention;
mod embedding;
mod explicit;
mod init;
mod network;

use thiserror::Error;

use crate::numerics::NumericsError;

pub use attention::{layer_forward, HeadWeights, LayerWeights};
pub use embedding::{
    embedding_rank, random_positional, ConvEmbedding, Embedding, RawInput, VocabEmbedding,
};
pub use explicit::{explicit_order, ExplicitForm, FormTerm, MAX_EXPLICIT_ORDER};
pub use init::gaussian_matrix;
pub use network::{EmbeddingShape, NetworkShape, NetworkSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("unsupported: {0}")]
    Capability(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
