use rand::Rng;

use crate::numerics::{numerical_rank, Matrix, RankTolerance, Scalar};

use super::init::gaussian_matrix;
use super::ModelError;

/// Vocabulary embedding `y^{0,i} = M_V e_{w_i} + p^i`.
///
/// `positional` is `width x seq_len`; `None` stands for the all-zero
/// positional embedding of any length.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabEmbedding<T> {
    vocab: Matrix<T>,
    positional: Option<Matrix<T>>,
    rank: usize,
    factors: Option<(Matrix<T>, Matrix<T>)>,
}

impl<T: Scalar> VocabEmbedding<T> {
    /// Wraps an unfactored `width x vocab_size` matrix; the declared rank is
    /// its numerical rank under `tol`.
    pub fn new(
        vocab: Matrix<T>,
        positional: Option<Matrix<T>>,
        tol: RankTolerance,
    ) -> Result<Self, ModelError> {
        check_positional(vocab.rows(), positional.as_ref())?;
        let rank = if vocab.is_empty() {
            0
        } else {
            numerical_rank(&vocab, tol)?
        };
        Ok(Self {
            vocab,
            positional,
            rank,
            factors: None,
        })
    }

    /// `M_V = U W` with `U: width x rank`, `W: rank x vocab_size`, both
    /// standard Gaussian scaled by `1/sqrt(rank)`. Positional embedding is zero.
    pub fn low_rank_factor<R: Rng + ?Sized>(
        width: usize,
        vocab_size: usize,
        rank: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if rank == 0 || rank > width.min(vocab_size) {
            return Err(ModelError::Input(format!(
                "embedding rank {rank} must lie in 1..=min(width {width}, vocab {vocab_size})"
            )));
        }
        let scale = 1.0 / (rank as f64).sqrt();
        let u: Matrix<T> = gaussian_matrix(width, rank, scale, rng);
        let w: Matrix<T> = gaussian_matrix(rank, vocab_size, scale, rng);
        let vocab = u.matmul(&w)?;
        Ok(Self {
            vocab,
            positional: None,
            rank,
            factors: Some((u, w)),
        })
    }

    pub fn with_positional(mut self, positional: Option<Matrix<T>>) -> Result<Self, ModelError> {
        check_positional(self.vocab.rows(), positional.as_ref())?;
        self.positional = positional;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.vocab.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.cols()
    }

    pub fn vocab_matrix(&self) -> &Matrix<T> {
        &self.vocab
    }

    pub fn positional(&self) -> Option<&Matrix<T>> {
        self.positional.as_ref()
    }

    /// Rank declared at construction: the factor rank for factored
    /// embeddings, the measured rank otherwise.
    pub fn declared_rank(&self) -> usize {
        self.rank
    }

    pub fn factors(&self) -> Option<&(Matrix<T>, Matrix<T>)> {
        self.factors.as_ref()
    }

    /// Embeds a token sequence (0-based token ids) into a `width x N`
    /// matrix, one column per position.
    pub fn embed(&self, tokens: &[usize]) -> Result<Matrix<T>, ModelError> {
        if let Some(p) = &self.positional {
            if p.cols() != tokens.len() {
                return Err(ModelError::Input(format!(
                    "sequence has {} tokens but the positional embedding covers {} positions",
                    tokens.len(),
                    p.cols()
                )));
            }
        }
        let mut out = Matrix::zeros(self.width(), tokens.len());
        for (pos, &tok) in tokens.iter().enumerate() {
            if tok >= self.vocab_size() {
                return Err(ModelError::Input(format!(
                    "token {tok} at position {pos} is outside the vocabulary of size {}",
                    self.vocab_size()
                )));
            }
            for a in 0..self.width() {
                let pe = self.positional.as_ref().map_or(T::zero(), |p| p[(a, pos)]);
                out[(a, pos)] = self.vocab[(a, tok)] + pe;
            }
        }
        Ok(out)
    }
}

/// Convolutional embedding
/// `y^{0,i} = sum_{j=1..k} W_j x^{k(i-1)+j} + p^i` with kernel width
/// `k = M / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvEmbedding<T> {
    /// `k` slices, each `width x input_dim`.
    kernel: Vec<Matrix<T>>,
    positional: Option<Matrix<T>>,
}

impl<T: Scalar> ConvEmbedding<T> {
    pub fn new(kernel: Vec<Matrix<T>>, positional: Option<Matrix<T>>) -> Result<Self, ModelError> {
        let Some(first) = kernel.first() else {
            return Err(ModelError::Input("convolution kernel has no slices".into()));
        };
        let shape = first.shape();
        if kernel.iter().any(|s| s.shape() != shape) {
            return Err(ModelError::Input(
                "convolution kernel slices must share one shape".into(),
            ));
        }
        check_positional(shape.0, positional.as_ref())?;
        Ok(Self { kernel, positional })
    }

    pub fn random<R: Rng + ?Sized>(
        width: usize,
        kernel_width: usize,
        input_dim: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let scale = 1.0 / (width as f64).sqrt();
        let kernel = (0..kernel_width)
            .map(|_| gaussian_matrix(width, input_dim, scale, rng))
            .collect();
        Self::new(kernel, None)
    }

    pub fn with_positional(mut self, positional: Option<Matrix<T>>) -> Result<Self, ModelError> {
        check_positional(self.width(), positional.as_ref())?;
        self.positional = positional;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.kernel[0].rows()
    }

    pub fn input_dim(&self) -> usize {
        self.kernel[0].cols()
    }

    pub fn kernel_width(&self) -> usize {
        self.kernel.len()
    }

    pub fn kernel(&self) -> &[Matrix<T>] {
        &self.kernel
    }

    pub fn positional(&self) -> Option<&Matrix<T>> {
        self.positional.as_ref()
    }

    /// Effective vocabulary dimension `V = k * input_dim`.
    pub fn effective_vocab(&self) -> usize {
        self.kernel_width() * self.input_dim()
    }

    /// The kernel reshaped to `width x (k * input_dim)`; column
    /// `l * input_dim + λ` holds slice `l`, input coordinate `λ`.
    pub fn reshaped(&self) -> Matrix<T> {
        let d_in = self.input_dim();
        Matrix::from_fn(self.width(), self.effective_vocab(), |a, c| {
            self.kernel[c / d_in][(a, c % d_in)]
        })
    }

    /// Embeds `M = N * k` raw vectors into a `width x N` matrix.
    pub fn embed(&self, xs: &[Vec<T>]) -> Result<Matrix<T>, ModelError> {
        let k = self.kernel_width();
        if !xs.len().is_multiple_of(k) {
            return Err(ModelError::Input(format!(
                "{} raw inputs is not a multiple of the kernel width {k}",
                xs.len()
            )));
        }
        let n = xs.len() / k;
        if let Some(p) = &self.positional {
            if p.cols() != n {
                return Err(ModelError::Input(format!(
                    "{n} patches but the positional embedding covers {} positions",
                    p.cols()
                )));
            }
        }
        if let Some((idx, x)) = xs.iter().enumerate().find(|(_, x)| x.len() != self.input_dim()) {
            return Err(ModelError::Input(format!(
                "raw input {idx} has dimension {}, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut out = Matrix::zeros(self.width(), n);
        for i in 0..n {
            let mut acc = match &self.positional {
                Some(p) => p.column(i),
                None => vec![T::zero(); self.width()],
            };
            for (j, slice) in self.kernel.iter().enumerate() {
                let contrib = slice.matvec(&xs[k * i + j])?;
                for (a, c) in acc.iter_mut().zip(contrib) {
                    *a = *a + c;
                }
            }
            out.set_column(i, &acc);
        }
        Ok(out)
    }
}

fn check_positional<T: Scalar>(width: usize, positional: Option<&Matrix<T>>) -> Result<(), ModelError> {
    match positional {
        Some(p) if p.rows() != width => Err(ModelError::Input(format!(
            "positional embedding has {} rows, expected width {width}",
            p.rows()
        ))),
        _ => Ok(()),
    }
}

/// Input embedding of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Embedding<T> {
    Vocab(VocabEmbedding<T>),
    Conv(ConvEmbedding<T>),
}

/// Raw network input matching the embedding kind.
#[derive(Debug, Clone, PartialEq)]
pub enum RawInput<T> {
    Tokens(Vec<usize>),
    Vectors(Vec<Vec<T>>),
}

impl<T: Scalar> Embedding<T> {
    pub fn width(&self) -> usize {
        match self {
            Embedding::Vocab(v) => v.width(),
            Embedding::Conv(c) => c.width(),
        }
    }

    pub fn embed(&self, input: &RawInput<T>) -> Result<Matrix<T>, ModelError> {
        match (self, input) {
            (Embedding::Vocab(v), RawInput::Tokens(t)) => v.embed(t),
            (Embedding::Conv(c), RawInput::Vectors(x)) => c.embed(x),
            (Embedding::Vocab(_), RawInput::Vectors(_)) => Err(ModelError::Input(
                "vocabulary embedding expects token ids".into(),
            )),
            (Embedding::Conv(_), RawInput::Tokens(_)) => Err(ModelError::Input(
                "convolution embedding expects real vectors".into(),
            )),
        }
    }

    pub fn positional(&self) -> Option<&Matrix<T>> {
        match self {
            Embedding::Vocab(v) => v.positional(),
            Embedding::Conv(c) => c.positional(),
        }
    }

    /// Matrix whose rank is the embedding rank: `M_V`, or the reshaped
    /// convolution kernel.
    pub fn rank_matrix(&self) -> Matrix<T> {
        match self {
            Embedding::Vocab(v) => v.vocab_matrix().clone(),
            Embedding::Conv(c) => c.reshaped(),
        }
    }
}

/// Numerical rank of the vocabulary matrix or the reshaped kernel.
pub fn embedding_rank<T: Scalar>(e: &Embedding<T>, tol: RankTolerance) -> Result<usize, ModelError> {
    let m = e.rank_matrix();
    if m.is_empty() {
        return Ok(0);
    }
    Ok(numerical_rank(&m, tol)?)
}

/// Random positional embedding of the given rank (`0` gives `None`, the zero
/// embedding).
pub fn random_positional<T: Scalar, R: Rng + ?Sized>(
    width: usize,
    seq_len: usize,
    rank: usize,
    rng: &mut R,
) -> Option<Matrix<T>> {
    if rank == 0 {
        return None;
    }
    let rank = rank.min(width).min(seq_len).max(1);
    let scale = 1.0 / (rank as f64).sqrt();
    let u: Matrix<T> = gaussian_matrix(width, rank, scale, rng);
    let v: Matrix<T> = gaussian_matrix(rank, seq_len, scale, rng);
    u.matmul(&v).ok()
}
