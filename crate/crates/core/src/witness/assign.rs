use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{
    layer_forward, ConvEmbedding, Embedding, HeadWeights, LayerWeights, VocabEmbedding,
};
use crate::numerics::{multiset_coeff, numerical_rank, Matrix, RankTolerance};
use crate::septensor::{Partition, TemplateSet};

use super::{phi_index, WitnessCheck, WitnessError, WitnessMatrix};

/// Relative tolerance for the large-N first-layer output.
const LAYER_TOL: f64 = 1e-9;

/// Architecture the witness is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WitnessParams {
    pub width: usize,
    pub attn_dim: usize,
    pub heads: usize,
    /// Embedding rank budget `r`.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    Vocab,
    Conv,
    LargeN,
}

/// Embedding (and for the large-N case first-layer) weights, templates and
/// the verification results.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentBundle {
    pub kind: WitnessKind,
    /// Positional embedding is zero.
    pub embedding: Embedding<f64>,
    /// First layer with the indicator key/query weights (large-N only).
    pub first_layer: Option<LayerWeights<f64>>,
    pub templates: TemplateSet<f64>,
    /// `pi_p[j]` lists the 0-based tokens placed on `P` for row `j` of `A`.
    pub pi_p: Option<Vec<Vec<usize>>>,
    pub pi_q: Option<Vec<Vec<usize>>>,
    pub checks: Vec<WitnessCheck>,
}

impl AssignmentBundle {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    First,
    Second,
    Ones,
}

fn slot(alpha: usize, d_a: usize) -> Slot {
    let m = (alpha - 1) % d_a;
    if m == d_a - 1 {
        Slot::Ones
    } else if 2 * m < d_a - 1 {
        Slot::First
    } else {
        Slot::Second
    }
}

/// Column of `A` read by a first-half slot (`phi(alpha)`) or a second-half
/// slot (`phi(alpha - floor((d_a-1)/2))`).
fn column_of(alpha: usize, d_a: usize) -> Option<usize> {
    match slot(alpha, d_a) {
        Slot::First => Some(phi_index(alpha, d_a)),
        Slot::Second => Some(phi_index(alpha - (d_a - 1) / 2, d_a)),
        Slot::Ones => None,
    }
}

/// Target embedding coordinate `alpha` (1-based) for token `token`
/// (1-based, in `1..=2R+1` with `R` the row count of `A`):
///
/// * first-half slot, `token <= R`, column `<= d`: `A[token, phi(alpha)]`
/// * second-half slot, `R < token <= 2R`, column `<= d`: `A[token-R, phi(alpha-h)]`
/// * last slot of a block: `1`
/// * otherwise `0`
pub fn target_pattern(a: &WitnessMatrix, d_a: usize, token: usize, alpha: usize) -> u64 {
    let (rows, d) = (a.n_rows(), a.n_cols());
    match (slot(alpha, d_a), column_of(alpha, d_a)) {
        (Slot::Ones, _) => 1,
        (Slot::First, Some(c)) if token <= rows && c <= d => a.at(token, c),
        (Slot::Second, Some(c)) if token > rows && token <= 2 * rows && c <= d => a.at(token - rows, c),
        _ => 0,
    }
}

fn check_common(a: &WitnessMatrix, p: &WitnessParams) -> Result<(), WitnessError> {
    if p.attn_dim < 2 {
        return Err(WitnessError::Assumption(format!("d_a must be at least 2, got {}", p.attn_dim)));
    }
    if p.width == 0 || p.heads == 0 {
        return Err(WitnessError::Assumption("d_x and H must be positive".into()));
    }
    if a.n_rows() == 0 {
        return Err(WitnessError::Assumption("A has no rows".into()));
    }
    Ok(())
}

/// Checks `H < r`, `A` has `floor((r-H)/2)` columns and `((d lambda))` rows.
fn check_lower_bound_shape(a: &WitnessMatrix, lambda: u32, p: &WitnessParams) -> Result<(), WitnessError> {
    check_common(a, p)?;
    if p.heads >= p.rank {
        return Err(WitnessError::Assumption(format!(
            "heads H={} must be below the rank r={}",
            p.heads, p.rank
        )));
    }
    let d = (p.rank - p.heads) / 2;
    if a.n_cols() != d {
        return Err(WitnessError::Assumption(format!(
            "A must have (r-H)/2 = {d} columns, got {}",
            a.n_cols()
        )));
    }
    let rows = multiset_coeff(d as u64, u64::from(lambda));
    if rows != a.n_rows().into() {
        return Err(WitnessError::Assumption(format!(
            "A must have (({d} {lambda})) = {rows} rows, got {}",
            a.n_rows()
        )));
    }
    Ok(())
}

fn rank_check(m: &Matrix<f64>, r: usize) -> Result<WitnessCheck, WitnessError> {
    let rank = numerical_rank(m, RankTolerance::DEFAULT)?;
    Ok(WitnessCheck::new(
        "embedding rank <= r",
        rank <= r,
        format!("rank {rank}, budget {r}"),
    ))
}

fn pattern_check(out: &Matrix<f64>, a: &WitnessMatrix, d_a: usize) -> WitnessCheck {
    let mut mismatches = 0;
    for token in 1..=out.cols() {
        for alpha in 1..=out.rows() {
            if out[(alpha - 1, token - 1)] != target_pattern(a, d_a, token, alpha) as f64 {
                mismatches += 1;
            }
        }
    }
    WitnessCheck::new(
        "embedding pattern",
        mismatches == 0,
        format!("{mismatches} mismatching entries over {} tokens", out.cols()),
    )
}

/// Vocabulary witness with `V = 2R + 1` tokens: tokens `1..=R` carry the rows
/// of `A` on first-half slots, tokens `R+1..=2R` on second-half slots, every
/// token has ones on the last slot of each block.
pub fn build_vocab_witness(a: &WitnessMatrix, lambda: u32, p: WitnessParams) -> Result<AssignmentBundle, WitnessError> {
    check_lower_bound_shape(a, lambda, &p)?;
    let rows = a.n_rows();
    let vocab = 2 * rows + 1;
    let mut m = Matrix::zeros(p.width, vocab);
    for alpha in 1..=p.width {
        match (slot(alpha, p.attn_dim), column_of(alpha, p.attn_dim)) {
            (Slot::Ones, _) => (0..vocab).for_each(|t| m[(alpha - 1, t)] = 1.0),
            (Slot::First, Some(c)) if c <= a.n_cols() => {
                for (i, row) in a.rows().iter().enumerate() {
                    m[(alpha - 1, i)] = row[c - 1] as f64;
                }
            }
            (Slot::Second, Some(c)) if c <= a.n_cols() => {
                for (i, row) in a.rows().iter().enumerate() {
                    m[(alpha - 1, rows + i)] = row[c - 1] as f64;
                }
            }
            _ => {}
        }
    }
    let emb = VocabEmbedding::new(m.clone(), None, RankTolerance::DEFAULT)?;
    let tokens: Vec<usize> = (0..vocab).collect();
    let out = emb.embed(&tokens)?;
    let checks = vec![pattern_check(&out, a, p.attn_dim), rank_check(&m, p.rank)?];
    Ok(AssignmentBundle {
        kind: WitnessKind::Vocab,
        embedding: Embedding::Vocab(emb),
        first_layer: None,
        templates: TemplateSet::Tokens(tokens),
        pi_p: None,
        pi_q: None,
        checks,
    })
}

/// Convolution witness: an indicator kernel in which output coordinate
/// `alpha = k(lambda-1) + l` reads input coordinate `lambda` of patch vector
/// `l`, and one template patch per vocabulary-witness token. Requires
/// `k * d_input >= d_x`.
pub fn build_conv_witness(
    a: &WitnessMatrix,
    lambda: u32,
    p: WitnessParams,
    kernel_width: usize,
    input_dim: usize,
) -> Result<AssignmentBundle, WitnessError> {
    check_lower_bound_shape(a, lambda, &p)?;
    let k = kernel_width;
    if k == 0 || input_dim == 0 || k * input_dim < p.width {
        return Err(WitnessError::Assumption(format!(
            "kernel width {k} times input dim {input_dim} must cover d_x = {}",
            p.width
        )));
    }
    let d = a.n_cols();
    let read = |alpha: usize| match (slot(alpha, p.attn_dim), column_of(alpha, p.attn_dim)) {
        (Slot::Ones, _) => true,
        (_, Some(c)) => c <= d,
        _ => false,
    };
    let mut kernel = vec![Matrix::zeros(p.width, input_dim); k];
    for (l, slice) in kernel.iter_mut().enumerate() {
        for lam in 0..input_dim {
            let alpha = k * lam + l + 1;
            if alpha <= p.width && read(alpha) {
                slice[(alpha - 1, lam)] = 1.0;
            }
        }
    }
    let vocab = 2 * a.n_rows() + 1;
    let patches: Vec<Vec<Vec<f64>>> = (1..=vocab)
        .map(|token| {
            (0..k)
                .map(|l| {
                    (0..input_dim)
                        .map(|lam| {
                            let alpha = k * lam + l + 1;
                            if alpha <= p.width {
                                target_pattern(a, p.attn_dim, token, alpha) as f64
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let emb = ConvEmbedding::new(kernel, None)?;
    let xs: Vec<Vec<f64>> = patches.iter().flatten().cloned().collect();
    let out = emb.embed(&xs)?;
    let checks = vec![pattern_check(&out, a, p.attn_dim), rank_check(&emb.reshaped(), p.rank)?];
    Ok(AssignmentBundle {
        kind: WitnessKind::Conv,
        embedding: Embedding::Conv(emb),
        first_layer: None,
        templates: TemplateSet::Patches(patches),
        pi_p: None,
        pi_q: None,
        checks,
    })
}

/// Large-`N` witness with `V = r` tokens and `d = floor((r-1-H)/2)`.
///
/// Token 1 is the all-ones-slot "filler"; token `c+1` marks the first-half
/// slots of column `c`, token `c+1+d` its second-half slots. The first layer's
/// key and query weights are the indicator of entry `(1, d_a)`, which turns
/// the layer into a sum over positions. Row `j` of `A` is written on `P` by
/// repeating token `c+1` `A[j,c]` times inside the `c`-th length-`E` segment,
/// `E` being the largest entry of `A`. Value and output weights are Gaussian
/// from `seed`.
pub fn build_large_n_witness(
    a: &WitnessMatrix,
    p: WitnessParams,
    part: &Partition,
    seed: u64,
) -> Result<AssignmentBundle, WitnessError> {
    check_common(a, &p)?;
    if p.rank < p.heads + 3 {
        return Err(WitnessError::Assumption(format!(
            "need r >= H + 3 so that (r-1-H)/2 >= 1, got r={} H={}",
            p.rank, p.heads
        )));
    }
    let d = (p.rank - 1 - p.heads) / 2;
    if a.n_cols() != d {
        return Err(WitnessError::Assumption(format!(
            "A must have (r-1-H)/2 = {d} columns, got {}",
            a.n_cols()
        )));
    }
    if p.width < p.attn_dim {
        return Err(WitnessError::Assumption(format!(
            "d_x = {} must be at least d_a = {} for the key/query indicator",
            p.width, p.attn_dim
        )));
    }
    let n = part.len();
    let e = a.max_entry().max(1) as usize;
    let need = e * (p.rank - 1 - p.heads);
    if n < need {
        return Err(WitnessError::Assumption(format!(
            "N = {n} is below the required minimum E*(r-1-H) = {e}*{} = {need}",
            p.rank - 1 - p.heads
        )));
    }
    let vocab = p.rank;
    let mut m = Matrix::zeros(p.width, vocab);
    for alpha in 1..=p.width {
        match (slot(alpha, p.attn_dim), column_of(alpha, p.attn_dim)) {
            (Slot::Ones, _) => (0..vocab).for_each(|t| m[(alpha - 1, t)] = 1.0),
            (Slot::First, Some(c)) if c <= d => m[(alpha - 1, c)] = 1.0,
            (Slot::Second, Some(c)) if c <= d => m[(alpha - 1, c + d)] = 1.0,
            _ => {}
        }
    }
    let emb = VocabEmbedding::new(m.clone(), None, RankTolerance::DEFAULT)?;

    let mut indicator = Matrix::zeros(p.attn_dim, p.width);
    indicator[(0, p.attn_dim - 1)] = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = LayerWeights::<f64>::random(p.width, p.attn_dim, p.heads, &mut rng);
    let heads = random
        .heads()
        .iter()
        .map(|h| HeadWeights {
            key: indicator.clone(),
            query: indicator.clone(),
            value: h.value.clone(),
            output: h.output.clone(),
        })
        .collect();
    let layer = LayerWeights::new(heads)?;
    let mut ov = Matrix::zeros(p.width, p.width);
    for h in layer.heads() {
        ov = ov.add(&h.output.matmul(&h.value)?)?;
    }

    // 0-based token for segment position t (1-based) of row j (1-based).
    let pi = |j: usize, t: usize, offset: usize| -> usize {
        let c = (t - 1) / e + 1;
        if c <= d && ((t - 1) % e) < a.at(j, c) as usize {
            c + offset
        } else {
            0
        }
    };
    let half = n / 2;
    let pi_p: Vec<Vec<usize>> = (1..=a.n_rows()).map(|j| (1..=half).map(|t| pi(j, t, 0)).collect()).collect();
    let pi_q: Vec<Vec<usize>> = (1..=a.n_rows()).map(|j| (1..=half).map(|t| pi(j, t, d)).collect()).collect();

    let mut pattern_bad = 0;
    let mut worst = 0.0f64;
    for j1 in 1..=a.n_rows() {
        for j2 in 1..=a.n_rows() {
            let mut seq = vec![0usize; n];
            for (t, (&pp, &qq)) in part.p().iter().zip(part.q()).enumerate() {
                seq[pp] = pi_p[j1 - 1][t];
                seq[qq] = pi_q[j2 - 1][t];
            }
            let ys = emb.embed(&seq)?;
            let u: Vec<f64> = (0..p.width).map(|r| ys.row(r).iter().sum()).collect();
            for alpha in 1..=p.width {
                let want = match (slot(alpha, p.attn_dim), column_of(alpha, p.attn_dim)) {
                    (Slot::Ones, _) => n as u64,
                    (Slot::First, Some(c)) if c <= d => a.at(j1, c),
                    (Slot::Second, Some(c)) if c <= d => a.at(j2, c),
                    _ => 0,
                };
                if u[alpha - 1] != want as f64 {
                    pattern_bad += 1;
                }
            }
            let out = layer_forward(&layer, &ys)?;
            let expect = ov.matvec(&u)?;
            let scale = expect.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(f64::MIN_POSITIVE);
            for i in 0..n {
                for (r, want) in expect.iter().enumerate() {
                    worst = worst.max((out[(r, i)] - want).abs() / scale);
                }
            }
        }
    }
    let checks = vec![
        WitnessCheck::new(
            "summed embedding pattern",
            pattern_bad == 0,
            format!("{pattern_bad} mismatching entries over {} row pairs", a.n_rows().pow(2)),
        ),
        WitnessCheck::new(
            "first-layer output",
            worst <= LAYER_TOL,
            format!("max relative deviation {worst:.3e} (tolerance {LAYER_TOL:e})"),
        ),
        rank_check(&m, p.rank)?,
    ];
    Ok(AssignmentBundle {
        kind: WitnessKind::LargeN,
        embedding: Embedding::Vocab(emb),
        first_layer: Some(layer),
        templates: TemplateSet::Tokens((0..vocab).collect()),
        pi_p: Some(pi_p),
        pi_q: Some(pi_q),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(width: usize, attn_dim: usize, heads: usize, rank: usize) -> WitnessParams {
        WitnessParams {
            width,
            attn_dim,
            heads,
            rank,
        }
    }

    #[test]
    fn smallest_vocab_witness() {
        let a = WitnessMatrix::new(vec![vec![1]]).unwrap();
        let b = build_vocab_witness(&a, 1, params(3, 3, 1, 3)).unwrap();
        assert!(b.passed(), "{:?}", b.checks);
        let Embedding::Vocab(v) = &b.embedding else { panic!() };
        // token 1 carries A on slot 1, token 2 on slot 2, all tokens on slot 3
        assert_eq!(v.vocab_matrix().as_slice(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn vocab_witness_rank_within_budget() {
        let a = WitnessMatrix::new(vec![vec![1, 0], vec![0, 1]]).unwrap();
        let b = build_vocab_witness(&a, 1, params(6, 3, 1, 5)).unwrap();
        assert!(b.passed(), "{:?}", b.checks);
    }

    #[test]
    fn assumption_errors() {
        let a = WitnessMatrix::new(vec![vec![1]]).unwrap();
        assert!(build_vocab_witness(&a, 1, params(3, 3, 3, 3)).is_err());
        assert!(build_vocab_witness(&a, 1, params(3, 3, 1, 5)).is_err());
        let part = Partition::odd_even(2).unwrap();
        let two = WitnessMatrix::new(vec![vec![2]]).unwrap();
        let err = build_large_n_witness(&two, params(3, 3, 1, 4), &part, 0).unwrap_err();
        assert!(err.to_string().contains("required minimum"), "{err}");
    }

    #[test]
    fn conv_k1_matches_vocab() {
        let a = WitnessMatrix::new(vec![vec![1, 0], vec![0, 1]]).unwrap();
        let p = params(6, 3, 1, 5);
        let v = build_vocab_witness(&a, 1, p).unwrap();
        let c = build_conv_witness(&a, 1, p, 1, 6).unwrap();
        assert!(c.passed(), "{:?}", c.checks);
        let Embedding::Vocab(ve) = &v.embedding else { panic!() };
        let TemplateSet::Patches(patches) = &c.templates else { panic!() };
        let Embedding::Conv(ce) = &c.embedding else { panic!() };
        let xs: Vec<Vec<f64>> = patches.iter().flatten().cloned().collect();
        assert_eq!(&ce.embed(&xs).unwrap(), ve.vocab_matrix());
    }

    #[test]
    fn conv_indicator_reads_one_pair() {
        let a = WitnessMatrix::new(vec![vec![1, 0], vec![0, 1]]).unwrap();
        let c = build_conv_witness(&a, 1, params(6, 3, 1, 5), 2, 3).unwrap();
        assert!(c.passed(), "{:?}", c.checks);
        let Embedding::Conv(ce) = &c.embedding else { panic!() };
        let r = ce.reshaped();
        for alpha in 0..r.rows() {
            assert!(r.row(alpha).iter().filter(|&&x| x != 0.0).count() <= 1);
        }
    }

    #[test]
    fn large_n_single_row() {
        let a = WitnessMatrix::new(vec![vec![2]]).unwrap();
        let part = Partition::odd_even(4).unwrap();
        let b = build_large_n_witness(&a, params(3, 3, 1, 4), &part, 0).unwrap();
        assert!(b.passed(), "{:?}", b.checks);
        // P segment repeats token 2 (0-based 1) twice, Q token 3 twice
        assert_eq!(b.pi_p.as_ref().unwrap()[0], vec![1, 1]);
        assert_eq!(b.pi_q.as_ref().unwrap()[0], vec![2, 2]);
    }
}
