use crate::numerics::{c_of_l, Matrix, Scalar};

use super::network::NetworkSpec;
use super::ModelError;

/// Largest polynomial order `C(L)` the literal sum is evaluated at.
pub const MAX_EXPLICIT_ORDER: usize = 4;

/// One head assignment of the explicit form: `a` holds `A^(1..=C+1)`, `b`
/// holds `B^(0..=C)`. All matrices share one row count.
#[derive(Debug, Clone, PartialEq)]
pub struct FormTerm<T> {
    pub a: Vec<Matrix<T>>,
    pub b: Vec<Matrix<T>>,
}

/// Depth-`L` output coordinate written as a sum over head assignments of
///
/// ```text
/// sum_{j_1..j_C} sum_{r_1..r_{C+1}} B0[r_1, p]
///     * prod_{c=1}^{C+1} (A^(c) y^{j_c})_{r_c}
///     * prod_{c=1}^{C}   (B^(c) y^{j_c})_{r_{c+1}}
/// ```
///
/// with `j_{C+1} = i` and `C = (3^L - 1)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitForm<T> {
    order: usize,
    width: usize,
    terms: Vec<FormTerm<T>>,
}

impl<T: Scalar> ExplicitForm<T> {
    pub fn from_parts(order: usize, terms: Vec<FormTerm<T>>) -> Result<Self, ModelError> {
        let first = terms
            .first()
            .ok_or_else(|| ModelError::Input("explicit form needs at least one term".into()))?;
        let (rows, width) = first
            .a
            .first()
            .map(Matrix::shape)
            .ok_or_else(|| ModelError::Input("explicit form term has no A matrices".into()))?;
        for (t, term) in terms.iter().enumerate() {
            if term.a.len() != order + 1 || term.b.len() != order + 1 {
                return Err(ModelError::Input(format!(
                    "term {t}: order {order} needs {} A and {} B matrices, got {} and {}",
                    order + 1,
                    order + 1,
                    term.a.len(),
                    term.b.len()
                )));
            }
            if let Some(m) = term.a.iter().chain(&term.b).find(|m| m.shape() != (rows, width)) {
                return Err(ModelError::Input(format!(
                    "term {t}: matrix of shape {:?}, expected {:?}",
                    m.shape(),
                    (rows, width)
                )));
            }
        }
        Ok(Self {
            order,
            width,
            terms,
        })
    }

    /// Reads the form off a depth-1 or depth-2 network.
    ///
    /// Depth 1: `A1 = V, A2 = Q, B1 = K, B0 = O^T` per head.
    ///
    /// Depth 2, per head tuple `(g, hv, hk, hq)` with `g` a second-layer head
    /// and the rest first-layer heads:
    /// `B0 = O2_g^T`, `A1 = V2_g O1_hv V1_hv`, `B1 = K1_hv`, `A2 = Q1_hv`,
    /// `B2 = Q1_hk`, `A3 = K1_hk`, `B3 = K2_g O1_hk V1_hk`,
    /// `A4 = Q2_g O1_hq V1_hq`, `B4 = K1_hq`, `A5 = Q1_hq`.
    pub fn from_network(net: &NetworkSpec<T>) -> Result<Self, ModelError> {
        match net.depth() {
            1 => {
                let terms = net.layers()[0]
                    .heads()
                    .iter()
                    .map(|h| FormTerm {
                        a: vec![h.value.clone(), h.query.clone()],
                        b: vec![h.output.transpose(), h.key.clone()],
                    })
                    .collect();
                Self::from_parts(1, terms)
            }
            2 => {
                let (l1, l2) = (net.layers()[0].heads(), net.layers()[1].heads());
                // O1_h V1_h, shared by several slots
                let ov: Vec<Matrix<T>> = l1
                    .iter()
                    .map(|h| h.output.matmul(&h.value))
                    .collect::<Result<_, _>>()?;
                let mut terms = Vec::with_capacity(l2.len() * l1.len().pow(3));
                for g in l2 {
                    let o2t = g.output.transpose();
                    for (hv, v1) in l1.iter().enumerate() {
                        let a1 = g.value.matmul(&ov[hv])?;
                        for (hk, k1) in l1.iter().enumerate() {
                            let b3 = g.key.matmul(&ov[hk])?;
                            for (hq, q1) in l1.iter().enumerate() {
                                let a4 = g.query.matmul(&ov[hq])?;
                                terms.push(FormTerm {
                                    a: vec![
                                        a1.clone(),
                                        v1.query.clone(),
                                        k1.key.clone(),
                                        a4,
                                        q1.query.clone(),
                                    ],
                                    b: vec![
                                        o2t.clone(),
                                        v1.key.clone(),
                                        k1.query.clone(),
                                        b3.clone(),
                                        q1.key.clone(),
                                    ],
                                });
                            }
                        }
                    }
                }
                Self::from_parts(4, terms)
            }
            l => Err(ModelError::Capability(format!(
                "explicit form is only built for depth 1 and 2, got depth {l}"
            ))),
        }
    }

    /// `C(L)`, the number of summed positions.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn terms(&self) -> &[FormTerm<T>] {
        &self.terms
    }

    /// Evaluates the literal sum at 0-based position `i` and coordinate `p`
    /// over the embedded sequence `ys` (`width x N`).
    pub fn eval(&self, ys: &Matrix<T>, i: usize, p: usize) -> Result<T, ModelError> {
        let c = self.order;
        if c > MAX_EXPLICIT_ORDER {
            return Err(ModelError::Capability(format!(
                "explicit sum of order {c} exceeds the cap {MAX_EXPLICIT_ORDER}"
            )));
        }
        if ys.rows() != self.width {
            return Err(ModelError::Input(format!(
                "sequence width {} does not match form width {}",
                ys.rows(),
                self.width
            )));
        }
        let n = ys.cols();
        if i >= n || p >= self.width {
            return Err(ModelError::Input(format!(
                "position {i} / coordinate {p} out of range for N={n}, width={}",
                self.width
            )));
        }
        let mut total = T::zero();
        for term in &self.terms {
            // column j of proj_a[k] is A^(k+1) y^j, of proj_b[k] is B^(k+1) y^j
            let proj_a: Vec<Matrix<T>> = term.a.iter().map(|m| m.matmul(ys)).collect::<Result<_, _>>()?;
            let proj_b: Vec<Matrix<T>> = term.b[1..].iter().map(|m| m.matmul(ys)).collect::<Result<_, _>>()?;
            let rows = term.b[0].rows();
            let mut js = vec![0usize; c];
            loop {
                let pos = |k: usize| if k < c { js[k] } else { i };
                let mut rs = vec![0usize; c + 1];
                loop {
                    let mut prod = term.b[0][(rs[0], p)];
                    for k in 0..=c {
                        prod = prod * proj_a[k][(rs[k], pos(k))];
                    }
                    for k in 0..c {
                        prod = prod * proj_b[k][(rs[k + 1], pos(k))];
                    }
                    total = total + prod;
                    if !odometer(&mut rs, rows) {
                        break;
                    }
                }
                if !odometer(&mut js, n) {
                    break;
                }
            }
        }
        Ok(total)
    }
}

/// Advances a little-endian mixed counter; returns `false` after wrapping.
fn odometer(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// `C(L)` as a `usize`, if it fits.
pub fn explicit_order(depth: u32) -> Option<usize> {
    usize::try_from(&c_of_l(depth)).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{layer_forward, EmbeddingShape, NetworkShape, RawInput};

    fn one() -> Matrix<f64> {
        Matrix::from_vec(1, 1, vec![1.0]).unwrap()
    }

    #[test]
    fn scalar_depth_one() {
        let form = ExplicitForm::from_parts(
            1,
            vec![FormTerm {
                a: vec![one(), one()],
                b: vec![one(), one()],
            }],
        )
        .unwrap();
        let ys = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        assert_eq!(form.eval(&ys, 0, 0).unwrap(), 8.0);
    }

    #[test]
    fn zero_a_gives_zero() {
        let z = Matrix::<f64>::zeros(1, 1);
        let form = ExplicitForm::from_parts(
            1,
            vec![FormTerm {
                a: vec![z.clone(), z],
                b: vec![one(), one()],
            }],
        )
        .unwrap();
        let ys = Matrix::from_vec(1, 2, vec![2.0, -3.0]).unwrap();
        assert_eq!(form.eval(&ys, 1, 0).unwrap(), 0.0);
    }

    #[test]
    fn matches_layer_at_depth_one() {
        let shape = NetworkShape {
            depth: 1,
            heads: 2,
            width: 3,
            attn_dim: 2,
        };
        let emb = EmbeddingShape::Conv {
            kernel_width: 1,
            input_dim: 3,
            seq_len: 3,
            positional_rank: 2,
        };
        let net = NetworkSpec::<f64>::random(shape, emb, 7).unwrap();
        let xs = RawInput::Vectors(vec![vec![0.3, -1.0, 0.7], vec![1.1, 0.2, -0.4], vec![-0.5, 0.9, 0.1]]);
        let ys = net.embedding().embed(&xs).unwrap();
        let out = layer_forward(&net.layers()[0], &ys).unwrap();
        let form = ExplicitForm::from_network(&net).unwrap();
        for i in 0..3 {
            for p in 0..3 {
                let e = form.eval(&ys, i, p).unwrap();
                assert!((e - out[(p, i)]).abs() <= 1e-10 * out[(p, i)].abs().max(1e-12), "{e} vs {}", out[(p, i)]);
            }
        }
    }

    #[test]
    fn depth_three_is_capability_error() {
        let shape = NetworkShape {
            depth: 3,
            heads: 1,
            width: 2,
            attn_dim: 1,
        };
        let emb = EmbeddingShape::Vocab {
            vocab_size: 2,
            rank: 2,
            seq_len: 2,
            positional_rank: 0,
        };
        let net = NetworkSpec::<f64>::random(shape, emb, 0).unwrap();
        assert!(matches!(ExplicitForm::from_network(&net), Err(ModelError::Capability(_))));
    }

    #[test]
    fn order_matches_count() {
        assert_eq!(explicit_order(1), Some(1));
        assert_eq!(explicit_order(2), Some(4));
        assert_eq!(explicit_order(3), Some(13));
    }

    #[test]
    fn malformed_term_rejected() {
        let bad = FormTerm {
            a: vec![one()],
            b: vec![one(), one()],
        };
        assert!(ExplicitForm::from_parts(1, vec![bad]).is_err());
    }
}
