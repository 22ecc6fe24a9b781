use rand::Rng;

use crate::numerics::{Matrix, Scalar};

use super::init::gaussian_matrix;
use super::ModelError;

/// Weights of one attention head. Key, query and value are
/// `attn_dim x width`; output is `width x attn_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights<T> {
    pub key: Matrix<T>,
    pub query: Matrix<T>,
    pub value: Matrix<T>,
    pub output: Matrix<T>,
}

/// All heads of one self-attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    heads: Vec<HeadWeights<T>>,
    width: usize,
    attn_dim: usize,
}

impl<T: Scalar> LayerWeights<T> {
    pub fn new(heads: Vec<HeadWeights<T>>) -> Result<Self, ModelError> {
        let Some(first) = heads.first() else {
            return Err(ModelError::Input("a layer needs at least one head".into()));
        };
        let (attn_dim, width) = first.key.shape();
        if attn_dim == 0 || width == 0 {
            return Err(ModelError::Input("attention and model dims must be positive".into()));
        }
        for (h, head) in heads.iter().enumerate() {
            let proj = (attn_dim, width);
            for (name, m) in [("key", &head.key), ("query", &head.query), ("value", &head.value)] {
                if m.shape() != proj {
                    return Err(ModelError::Input(format!(
                        "head {h} {name} is {:?}, expected {proj:?}",
                        m.shape()
                    )));
                }
            }
            if head.output.shape() != (width, attn_dim) {
                return Err(ModelError::Input(format!(
                    "head {h} output is {:?}, expected {:?}",
                    head.output.shape(),
                    (width, attn_dim)
                )));
            }
            let all_finite = [&head.key, &head.query, &head.value, &head.output]
                .iter()
                .all(|m| m.is_finite());
            if !all_finite {
                return Err(ModelError::Input(format!("head {h} has non-finite weights")));
            }
        }
        Ok(Self {
            heads,
            width,
            attn_dim,
        })
    }

    /// Gaussian weights scaled by `1/sqrt(width)`, drawn head by head in the
    /// order key, query, value, output.
    pub fn random<R: Rng + ?Sized>(width: usize, attn_dim: usize, heads: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (width as f64).sqrt();
        let heads = (0..heads)
            .map(|_| HeadWeights {
                key: gaussian_matrix(attn_dim, width, scale, rng),
                query: gaussian_matrix(attn_dim, width, scale, rng),
                value: gaussian_matrix(attn_dim, width, scale, rng),
                output: gaussian_matrix(width, attn_dim, scale, rng),
            })
            .collect();
        Self {
            heads,
            width,
            attn_dim,
        }
    }

    pub fn heads(&self) -> &[HeadWeights<T>] {
        &self.heads
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn attn_dim(&self) -> usize {
        self.attn_dim
    }
}

/// One unnormalized self-attention layer:
/// `out_i = sum_h W^O_h sum_j <W^Q_h y_i, W^K_h y_j> W^V_h y_j`.
///
/// `ys` is `width x N` (one column per position). No softmax, residual,
/// feed-forward block or normalization.
pub fn layer_forward<T: Scalar>(w: &LayerWeights<T>, ys: &Matrix<T>) -> Result<Matrix<T>, ModelError> {
    if ys.rows() != w.width {
        return Err(ModelError::Input(format!(
            "sequence width {} does not match layer width {}",
            ys.rows(),
            w.width
        )));
    }
    let n = ys.cols();
    let mut out = Matrix::zeros(w.width, n);
    for head in &w.heads {
        let q = head.query.matmul(ys)?;
        let k = head.key.matmul(ys)?;
        let v = head.value.matmul(ys)?;
        // scores[i][j] = <q_i, k_j>
        let scores = q.transpose().matmul(&k)?;
        // mixed[:, i] = sum_j scores[i][j] v_j
        let mixed = v.matmul(&scores.transpose())?;
        out = out.add(&head.output.matmul(&mixed)?)?;
    }
    Ok(out)
}
