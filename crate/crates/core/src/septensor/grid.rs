use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::{gaussian_matrix, NetworkSpec, RawInput};
use crate::numerics::{numerical_rank, Matrix, RankTolerance, Scalar};

use super::SeptensorError;

/// Default limit on the number of grid points `Z^N`.
pub const DEFAULT_GRID_CAP: u64 = 1_000_000;

/// Environment variable overriding [`DEFAULT_GRID_CAP`].
pub const GRID_CAP_ENV: &str = "SEPRANK_GRID_CAP";

/// Grid cap from `SEPRANK_GRID_CAP`, or the default when unset.
pub fn grid_cap_from_env() -> Result<u64, SeptensorError> {
    match std::env::var(GRID_CAP_ENV) {
        Err(_) => Ok(DEFAULT_GRID_CAP),
        Ok(s) => match s.trim().parse::<u64>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(SeptensorError::Input(format!(
                "{GRID_CAP_ENV} must be a positive integer, got {s:?}"
            ))),
        },
    }
}

/// Template inputs, one per grid mode value.
#[derive(Debug, Clone, PartialEq)]
pub enum TemplateSet<T> {
    /// Token ids (0-based) for a vocabulary embedding.
    Tokens(Vec<usize>),
    /// For a convolution embedding: each template is a whole patch of
    /// `kernel_width` input vectors, so no patch is ever split.
    Patches(Vec<Vec<Vec<T>>>),
}

impl<T: Scalar> TemplateSet<T> {
    pub fn tokens(tokens: Vec<usize>) -> Result<Self, SeptensorError> {
        check_distinct(&tokens)?;
        Ok(Self::Tokens(tokens))
    }

    /// The first `z` token ids.
    pub fn first_tokens(z: usize) -> Result<Self, SeptensorError> {
        Self::tokens((0..z).collect())
    }

    pub fn patches(patches: Vec<Vec<Vec<T>>>) -> Result<Self, SeptensorError> {
        check_distinct(&patches)?;
        let shape = |p: &Vec<Vec<T>>| (p.len(), p.first().map_or(0, Vec::len));
        let first = shape(&patches[0]);
        if first.0 == 0 || first.1 == 0 {
            return Err(SeptensorError::Input("patches must be non-empty".into()));
        }
        if let Some(p) = patches.iter().find(|p| p.iter().any(|x| x.len() != first.1) || p.len() != first.0) {
            return Err(SeptensorError::Input(format!(
                "patch of shape {:?} differs from {first:?}",
                shape(p)
            )));
        }
        Ok(Self::Patches(patches))
    }

    /// `z` i.i.d. standard Gaussian patches.
    pub fn random_patches(z: usize, kernel_width: usize, input_dim: usize, seed: u64) -> Result<Self, SeptensorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patches = (0..z)
            .map(|_| {
                let m: Matrix<T> = gaussian_matrix(kernel_width, input_dim, 1.0, &mut rng);
                (0..kernel_width).map(|l| m.row(l).to_vec()).collect()
            })
            .collect();
        Self::patches(patches)
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Tokens(t) => t.len(),
            Self::Patches(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Raw network input for the grid index `idx` (one template per position).
    pub fn input(&self, idx: &[usize]) -> RawInput<T> {
        match self {
            Self::Tokens(t) => RawInput::Tokens(idx.iter().map(|&d| t[d]).collect()),
            Self::Patches(p) => RawInput::Vectors(idx.iter().flat_map(|&d| p[d].iter().cloned()).collect()),
        }
    }

    /// Same set plus one more template.
    pub fn extended(&self, extra: TemplateSet<T>) -> Result<Self, SeptensorError> {
        match (self, extra) {
            (Self::Tokens(a), Self::Tokens(b)) => Self::tokens(a.iter().copied().chain(b).collect()),
            (Self::Patches(a), Self::Patches(b)) => Self::patches(a.iter().cloned().chain(b).collect()),
            _ => Err(SeptensorError::Input("cannot mix token and patch templates".into())),
        }
    }

    fn summary(&self) -> String {
        match self {
            Self::Tokens(t) => format!("tokens{t:?}"),
            Self::Patches(p) => format!("{} gaussian patches", p.len()),
        }
    }
}

fn check_distinct<U: PartialEq>(items: &[U]) -> Result<(), SeptensorError> {
    if items.len() < 2 {
        return Err(SeptensorError::Input(format!(
            "need at least 2 templates, got {}",
            items.len()
        )));
    }
    for (i, a) in items.iter().enumerate() {
        if let Some(j) = items[i + 1..].iter().position(|b| b == a) {
            return Err(SeptensorError::Input(format!(
                "templates {i} and {} coincide",
                i + 1 + j
            )));
        }
    }
    Ok(())
}

/// Balanced split of the positions `0..N` into `P` and `Q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    p: Vec<usize>,
    q: Vec<usize>,
}

impl Partition {
    pub fn new(mut p: Vec<usize>, mut q: Vec<usize>, n: usize) -> Result<Self, SeptensorError> {
        p.sort_unstable();
        q.sort_unstable();
        if p.len() != q.len() || p.len() + q.len() != n {
            return Err(SeptensorError::Input(format!(
                "partition of {n} positions must be balanced, got |P|={} |Q|={}",
                p.len(),
                q.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in p.iter().chain(&q) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(SeptensorError::Input(format!(
                    "position {i} is out of range or listed twice"
                )));
            }
        }
        Ok(Self { p, q })
    }

    /// `P` = even 0-based positions (odd in 1-based terms), `Q` = the rest.
    pub fn odd_even(n: usize) -> Result<Self, SeptensorError> {
        if n == 0 || n % 2 == 1 {
            return Err(SeptensorError::Input(format!(
                "balanced partitions need a positive even N, got {n}"
            )));
        }
        Self::new((0..n).step_by(2).collect(), (1..n).step_by(2).collect(), n)
    }

    pub fn p(&self) -> &[usize] {
        &self.p
    }

    pub fn q(&self) -> &[usize] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.p.len() + self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn swapped(&self) -> Self {
        Self {
            p: self.q.clone(),
            q: self.p.clone(),
        }
    }
}

/// Where a grid tensor's entries came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Network {
        fingerprint: u64,
        position: usize,
        coordinate: usize,
        templates: String,
    },
    Functional(String),
}

/// Order-`N` tensor with all modes of size `Z`, stored row-major (the first
/// index varies slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridTensor<T> {
    order: usize,
    z: usize,
    entries: Vec<T>,
    provenance: Provenance,
}

impl<T: Scalar> GridTensor<T> {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn mode_dim(&self) -> usize {
        self.z
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Entry at the 0-based multi-index `idx`.
    pub fn get(&self, idx: &[usize]) -> T {
        self.entries[flat_index(idx, self.z)]
    }
}

/// Cap and parallelism for grid evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridOptions {
    pub cap: u64,
    /// `None` or `Some(1)` evaluates sequentially.
    pub threads: Option<usize>,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_GRID_CAP,
            threads: None,
        }
    }
}

fn flat_index(idx: &[usize], z: usize) -> usize {
    idx.iter().fold(0, |acc, &d| acc * z + d)
}

fn multi_index(mut flat: usize, order: usize, z: usize) -> Vec<usize> {
    let mut idx = vec![0; order];
    for slot in idx.iter_mut().rev() {
        *slot = flat % z;
        flat /= z;
    }
    idx
}

/// `Z^N`, checked against the cap.
pub fn grid_size(order: usize, z: usize, cap: u64) -> Result<usize, SeptensorError> {
    let size = u32::try_from(order)
        .ok()
        .and_then(|n| (z as u64).checked_pow(n))
        .filter(|&s| s <= cap);
    size.map(|s| s as usize).ok_or_else(|| {
        SeptensorError::Capability(format!(
            "grid of {z}^{order} points exceeds the cap of {cap}; lower Z or N \
             (or raise {GRID_CAP_ENV})"
        ))
    })
}

/// Tabulates an arbitrary functional of `order` template indices.
pub fn build_grid_with<T, F>(
    order: usize,
    z: usize,
    f: F,
    opts: GridOptions,
    label: &str,
) -> Result<GridTensor<T>, SeptensorError>
where
    T: Scalar,
    F: Fn(&[usize]) -> Result<T, SeptensorError> + Sync,
{
    if order == 0 || z == 0 {
        return Err(SeptensorError::Input("grid order and mode size must be positive".into()));
    }
    let size = grid_size(order, z, opts.cap)?;
    let eval = |flat: usize| f(&multi_index(flat, order, z));
    let entries: Vec<T> = match opts.threads {
        Some(t) if t > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| SeptensorError::Input(format!("thread pool: {e}")))?;
            pool.install(|| (0..size).into_par_iter().map(eval).collect::<Result<_, _>>())?
        }
        _ => (0..size).map(eval).collect::<Result<_, _>>()?,
    };
    Ok(GridTensor {
        order,
        z,
        entries,
        provenance: Provenance::Functional(label.to_string()),
    })
}

/// Evaluates output coordinate `coordinate` at position `position` (both
/// 0-based) of the network on every template combination.
pub fn build_grid_tensor<T: Scalar>(
    net: &NetworkSpec<T>,
    templates: &TemplateSet<T>,
    seq_len: usize,
    position: usize,
    coordinate: usize,
    opts: GridOptions,
) -> Result<GridTensor<T>, SeptensorError> {
    if position >= seq_len || coordinate >= net.width() {
        return Err(SeptensorError::Input(format!(
            "position {position} / coordinate {coordinate} out of range for N={seq_len}, d_x={}",
            net.width()
        )));
    }
    let f = |idx: &[usize]| -> Result<T, SeptensorError> {
        let out = net.forward(&templates.input(idx))?;
        Ok(out[(coordinate, position)])
    };
    let mut g = build_grid_with(seq_len, templates.len(), f, opts, "")?;
    g.provenance = Provenance::Network {
        fingerprint: net.fingerprint(),
        position,
        coordinate,
        templates: templates.summary(),
    };
    Ok(g)
}

/// (row, column) of the 0-based grid index `idx` under `part`:
/// `row = sum_t idx[p_t] Z^(N/2-1-t)`, likewise for columns over `Q`.
pub fn matricize_index(idx: &[usize], part: &Partition, z: usize) -> (usize, usize) {
    let row = part.p.iter().fold(0, |acc, &t| acc * z + idx[t]);
    let col = part.q.iter().fold(0, |acc, &t| acc * z + idx[t]);
    (row, col)
}

/// `Z^(N/2) x Z^(N/2)` arrangement of the tensor under `part`.
pub fn matricize<T: Scalar>(g: &GridTensor<T>, part: &Partition) -> Result<Matrix<T>, SeptensorError> {
    if g.order % 2 == 1 {
        return Err(SeptensorError::Input(format!(
            "order {} is odd; balanced partitions need even N",
            g.order
        )));
    }
    if part.len() != g.order {
        return Err(SeptensorError::Input(format!(
            "partition covers {} positions, tensor has order {}",
            part.len(),
            g.order
        )));
    }
    let side = g.z.pow((g.order / 2) as u32);
    let mut m = Matrix::zeros(side, side);
    for (flat, &v) in g.entries.iter().enumerate() {
        let (r, c) = matricize_index(&multi_index(flat, g.order, g.z), part, g.z);
        m[(r, c)] = v;
    }
    Ok(m)
}

/// Rank of the matricized grid tensor: a lower bound on the separation rank
/// of the output coordinate.
#[allow(clippy::too_many_arguments)]
pub fn empirical_sep_lower_bound<T: Scalar>(
    net: &NetworkSpec<T>,
    templates: &TemplateSet<T>,
    part: &Partition,
    position: usize,
    coordinate: usize,
    tol: RankTolerance,
    opts: GridOptions,
) -> Result<usize, SeptensorError> {
    let g = build_grid_tensor(net, templates, part.len(), position, coordinate, opts)?;
    Ok(numerical_rank(&matricize(&g, part)?, tol)?)
}

/// Random `rows x cols` submatrix; its rank is still a valid lower bound.
pub fn sampled_submatrix<T: Scalar>(
    m: &Matrix<T>,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<Matrix<T>, SeptensorError> {
    use rand::seq::index::sample;
    if rows == 0 || cols == 0 || rows > m.rows() || cols > m.cols() {
        return Err(SeptensorError::Input(format!(
            "cannot sample {rows}x{cols} from {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = sample(&mut rng, m.rows(), rows).into_vec();
    let mut c = sample(&mut rng, m.cols(), cols).into_vec();
    r.sort_unstable();
    c.sort_unstable();
    Ok(m.select_rows(&r).select_columns(&c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_functional_grid() {
        let t = [1.0, 2.0];
        let g = build_grid_with(2, 2, |i: &[usize]| Ok(t[i[0]] * t[i[1]]), GridOptions::default(), "x1*x2").unwrap();
        assert_eq!(g.entries(), &[1.0, 2.0, 2.0, 4.0]);
        let m = matricize(&g, &Partition::new(vec![0], vec![1], 2).unwrap()).unwrap();
        assert_eq!(numerical_rank(&m, RankTolerance::GRID).unwrap(), 1);
    }

    #[test]
    fn sum_functional_rank_two() {
        let t = [1.0, 2.0];
        let g = build_grid_with(2, 2, |i: &[usize]| Ok(t[i[0]] + t[i[1]]), GridOptions::default(), "x1+x2").unwrap();
        let m = matricize(&g, &Partition::new(vec![0], vec![1], 2).unwrap()).unwrap();
        assert_eq!(m.as_slice(), &[2.0, 3.0, 3.0, 4.0]);
        assert_eq!(numerical_rank(&m, RankTolerance::GRID).unwrap(), 2);
    }

    #[test]
    fn index_example() {
        // 1-based (2,1,2,1) with P={1,3}, Q={2,4} lands at row 4, col 1.
        let part = Partition::odd_even(4).unwrap();
        assert_eq!(matricize_index(&[1, 0, 1, 0], &part, 2), (3, 0));
    }

    #[test]
    fn odd_order_rejected() {
        let g = build_grid_with(3, 2, |_: &[usize]| Ok(1.0), GridOptions::default(), "").unwrap();
        let part = Partition::new(vec![0], vec![1], 2).unwrap();
        assert!(matricize(&g, &part).is_err());
        assert!(Partition::odd_even(3).is_err());
    }

    #[test]
    fn cap_enforced() {
        let opts = GridOptions { cap: 15, threads: None };
        let r = build_grid_with(4, 2, |_: &[usize]| Ok(0.0f64), opts, "");
        assert!(matches!(r, Err(SeptensorError::Capability(_))));
    }

    #[test]
    fn parallel_matches_sequential() {
        let f = |i: &[usize]| Ok((i[0] as f64 + 0.5).sin() * (i[1] as f64 - i[2] as f64).exp());
        let seq = build_grid_with(3, 5, f, GridOptions::default(), "").unwrap();
        let par = build_grid_with(3, 5, f, GridOptions { cap: DEFAULT_GRID_CAP, threads: Some(4) }, "").unwrap();
        assert_eq!(seq.entries(), par.entries());
    }

    #[test]
    fn templates_must_be_distinct() {
        assert!(TemplateSet::<f64>::tokens(vec![0, 1, 0]).is_err());
        assert!(TemplateSet::<f64>::tokens(vec![0]).is_err());
        assert!(TemplateSet::<f64>::first_tokens(3).is_ok());
    }

    #[test]
    fn bad_partitions() {
        assert!(Partition::new(vec![0, 1], vec![1, 2], 4).is_err());
        assert!(Partition::new(vec![0], vec![1, 2], 3).is_err());
        assert!(Partition::new(vec![0, 5], vec![1, 2], 4).is_err());
    }
}
