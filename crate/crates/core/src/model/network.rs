use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::{Matrix, Scalar};

use super::attention::{layer_forward, LayerWeights};
use super::embedding::{random_positional, ConvEmbedding, Embedding, RawInput, VocabEmbedding};
use super::ModelError;

/// Depth, head count, width and attention dimension of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkShape {
    pub depth: usize,
    pub heads: usize,
    pub width: usize,
    pub attn_dim: usize,
}

/// How to draw a random input embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingShape {
    /// Factored vocabulary embedding of the given rank.
    Vocab {
        vocab_size: usize,
        rank: usize,
        seq_len: usize,
        /// `0` for a zero positional embedding.
        positional_rank: usize,
    },
    /// Dense random convolution kernel.
    Conv {
        kernel_width: usize,
        input_dim: usize,
        seq_len: usize,
        positional_rank: usize,
    },
}

/// A depth-`L` stack of unnormalized self-attention layers over an input
/// embedding. Immutable once built; forward passes take `&self`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec<T> {
    layers: Vec<LayerWeights<T>>,
    embedding: Embedding<T>,
}

impl<T: Scalar> NetworkSpec<T> {
    pub fn new(layers: Vec<LayerWeights<T>>, embedding: Embedding<T>) -> Result<Self, ModelError> {
        let Some(first) = layers.first() else {
            return Err(ModelError::Input("network depth must be at least 1".into()));
        };
        let (heads, attn_dim) = (first.heads().len(), first.attn_dim());
        for (l, layer) in layers.iter().enumerate() {
            if layer.width() != embedding.width() {
                return Err(ModelError::Input(format!(
                    "layer {l} width {} differs from embedding width {}",
                    layer.width(),
                    embedding.width()
                )));
            }
            if layer.heads().len() != heads || layer.attn_dim() != attn_dim {
                return Err(ModelError::Input(format!(
                    "layer {l} has {} heads of dim {}, expected {heads} of dim {attn_dim}",
                    layer.heads().len(),
                    layer.attn_dim()
                )));
            }
        }
        Ok(Self { layers, embedding })
    }

    /// Seeded random network. Draw order: embedding, positional embedding,
    /// then layers bottom to top.
    pub fn random(shape: NetworkShape, emb: EmbeddingShape, seed: u64) -> Result<Self, ModelError> {
        if shape.depth == 0 || shape.heads == 0 || shape.width == 0 || shape.attn_dim == 0 {
            return Err(ModelError::Input(format!(
                "depth, heads, width and attention dim must be positive: {shape:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding = match emb {
            EmbeddingShape::Vocab {
                vocab_size,
                rank,
                seq_len,
                positional_rank,
            } => {
                let e = VocabEmbedding::low_rank_factor(shape.width, vocab_size, rank, &mut rng)?;
                let p = random_positional(shape.width, seq_len, positional_rank, &mut rng);
                Embedding::Vocab(e.with_positional(p)?)
            }
            EmbeddingShape::Conv {
                kernel_width,
                input_dim,
                seq_len,
                positional_rank,
            } => {
                let e = ConvEmbedding::random(shape.width, kernel_width, input_dim, &mut rng)?;
                let p = random_positional(shape.width, seq_len, positional_rank, &mut rng);
                Embedding::Conv(e.with_positional(p)?)
            }
        };
        let layers = (0..shape.depth)
            .map(|_| LayerWeights::random(shape.width, shape.attn_dim, shape.heads, &mut rng))
            .collect();
        Self::new(layers, embedding)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn heads(&self) -> usize {
        self.layers[0].heads().len()
    }

    pub fn width(&self) -> usize {
        self.embedding.width()
    }

    pub fn attn_dim(&self) -> usize {
        self.layers[0].attn_dim()
    }

    pub fn layers(&self) -> &[LayerWeights<T>] {
        &self.layers
    }

    pub fn embedding(&self) -> &Embedding<T> {
        &self.embedding
    }

    /// Same layers over a different embedding.
    pub fn with_embedding(&self, embedding: Embedding<T>) -> Result<Self, ModelError> {
        Self::new(self.layers.clone(), embedding)
    }

    /// Embedding followed by all layers; returns `width x N`.
    pub fn forward(&self, input: &RawInput<T>) -> Result<Matrix<T>, ModelError> {
        self.forward_embedded(self.embedding.embed(input)?)
    }

    /// Applies the layer stack to an already embedded sequence.
    pub fn forward_embedded(&self, ys: Matrix<T>) -> Result<Matrix<T>, ModelError> {
        self.layers.iter().try_fold(ys, |y, layer| layer_forward(layer, &y))
    }

    /// FNV-1a hash over every weight's `f64` bit pattern, in a fixed order.
    /// Identifies the network in grid-tensor provenance.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::default();
        h.write_usize(self.depth());
        h.write_usize(self.heads());
        h.write_usize(self.width());
        h.write_usize(self.attn_dim());
        match &self.embedding {
            Embedding::Vocab(v) => {
                h.write_usize(0);
                h.write_matrix(v.vocab_matrix());
            }
            Embedding::Conv(c) => {
                h.write_usize(1);
                for s in c.kernel() {
                    h.write_matrix(s);
                }
            }
        }
        if let Some(p) = self.embedding.positional() {
            h.write_matrix(p);
        }
        for layer in &self.layers {
            for head in layer.heads() {
                for m in [&head.key, &head.query, &head.value, &head.output] {
                    h.write_matrix(m);
                }
            }
        }
        h.0
    }
}

struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn write_usize(&mut self, v: usize) {
        self.write_bytes(&(v as u64).to_le_bytes());
    }

    fn write_matrix<T: Scalar>(&mut self, m: &Matrix<T>) {
        self.write_usize(m.rows());
        self.write_usize(m.cols());
        for x in m.as_slice() {
            let bits = x.to_f64().unwrap_or(f64::NAN).to_bits();
            self.write_bytes(&bits.to_le_bytes());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_vocab_net(depth: usize, seed: u64) -> NetworkSpec<f64> {
        NetworkSpec::random(
            NetworkShape {
                depth,
                heads: 2,
                width: 3,
                attn_dim: 2,
            },
            EmbeddingShape::Vocab {
                vocab_size: 5,
                rank: 3,
                seq_len: 4,
                positional_rank: 1,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn depth_one_is_layer_after_embedding() {
        let net = small_vocab_net(1, 9);
        let input = RawInput::Tokens(vec![0, 4, 2, 2]);
        let direct = layer_forward(&net.layers()[0], &net.embedding().embed(&input).unwrap()).unwrap();
        assert_eq!(net.forward(&input).unwrap(), direct);
    }

    #[test]
    fn seeded_construction_is_reproducible() {
        assert_eq!(small_vocab_net(2, 4), small_vocab_net(2, 4));
        assert_eq!(small_vocab_net(2, 4).fingerprint(), small_vocab_net(2, 4).fingerprint());
        assert_ne!(small_vocab_net(2, 4).fingerprint(), small_vocab_net(2, 5).fingerprint());
    }

    #[test]
    fn wrong_input_kind_rejected() {
        let net = small_vocab_net(1, 0);
        assert!(net.forward(&RawInput::Vectors(vec![vec![0.0; 3]; 4])).is_err());
    }

    #[test]
    fn zero_dimensions_rejected() {
        let bad = NetworkShape {
            depth: 0,
            heads: 1,
            width: 2,
            attn_dim: 1,
        };
        let emb = EmbeddingShape::Vocab {
            vocab_size: 2,
            rank: 1,
            seq_len: 2,
            positional_rank: 0,
        };
        assert!(NetworkSpec::<f64>::random(bad, emb, 0).is_err());
    }
}
