use std::io::Write;

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::bounds::{lower_bound, upper_bound, BoundInputs, BoundValue, LowerBound};
use crate::model::{EmbeddingShape, NetworkShape, NetworkSpec};
use crate::numerics::{numerical_rank, BigCount, RankTolerance, Scalar};

use super::grid::{build_grid_tensor, matricize, GridOptions, Partition, TemplateSet};
use super::SeptensorError;

// Offsets the template stream from the weight stream of the same seed.
const TEMPLATE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GridEmbedding {
    /// Low-rank vocabulary embedding; templates are the first `Z` tokens.
    Vocab,
    /// Dense random convolution kernel; templates are Gaussian patches.
    Conv { kernel_width: usize, input_dim: usize },
}

/// One desk-scale grid-tensor experiment, minus the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub depth: usize,
    pub width: usize,
    /// Requested embedding rank; clamped to `min(d_x, V)`. Ignored for
    /// convolution embeddings, whose random kernel has rank
    /// `min(d_x, kernel_width * input_dim)`.
    pub rank: usize,
    pub heads: usize,
    pub attn_dim: usize,
    pub seq_len: usize,
    pub templates: usize,
    /// `0` for a zero positional embedding.
    pub positional_rank: usize,
    /// Defaults to `max(Z, d_x)`.
    pub vocab: Option<usize>,
    pub embedding: GridEmbedding,
    /// 0-based output position.
    pub position: usize,
    /// 0-based output coordinate.
    pub coordinate: usize,
    pub tol: f64,
    /// Positions in `P` (0-based); `None` for the odd/even split.
    pub partition: Option<Vec<usize>>,
}

impl GridConfig {
    /// Vocabulary experiment with a rank-1 positional embedding, output
    /// coordinate 0 at position 0 and the grid tolerance.
    pub fn vocab(depth: usize, width: usize, rank: usize, heads: usize, attn_dim: usize, seq_len: usize, z: usize) -> Self {
        Self {
            depth,
            width,
            rank,
            heads,
            attn_dim,
            seq_len,
            templates: z,
            positional_rank: 1,
            vocab: None,
            embedding: GridEmbedding::Vocab,
            position: 0,
            coordinate: 0,
            tol: RankTolerance::GRID.value(),
            partition: None,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.unwrap_or(self.templates.max(self.width))
    }

    /// Embedding rank the network actually has.
    pub fn effective_rank(&self) -> usize {
        match self.embedding {
            GridEmbedding::Vocab => self.rank.min(self.width).min(self.vocab_size()),
            GridEmbedding::Conv {
                kernel_width,
                input_dim,
            } => self.width.min(kernel_width * input_dim),
        }
    }

    pub fn partition(&self) -> Result<Partition, SeptensorError> {
        match &self.partition {
            None => Partition::odd_even(self.seq_len),
            Some(p) => {
                let q = (0..self.seq_len).filter(|i| !p.contains(i)).collect();
                Partition::new(p.clone(), q, self.seq_len)
            }
        }
    }

    pub fn network<T: Scalar>(&self, seed: u64) -> Result<NetworkSpec<T>, SeptensorError> {
        let shape = NetworkShape {
            depth: self.depth,
            heads: self.heads,
            width: self.width,
            attn_dim: self.attn_dim,
        };
        let emb = match self.embedding {
            GridEmbedding::Vocab => EmbeddingShape::Vocab {
                vocab_size: self.vocab_size(),
                rank: self.effective_rank(),
                seq_len: self.seq_len,
                positional_rank: self.positional_rank,
            },
            GridEmbedding::Conv {
                kernel_width,
                input_dim,
            } => EmbeddingShape::Conv {
                kernel_width,
                input_dim,
                seq_len: self.seq_len,
                positional_rank: self.positional_rank,
            },
        };
        Ok(NetworkSpec::random(shape, emb, seed)?)
    }

    pub fn template_set<T: Scalar>(&self, seed: u64) -> Result<TemplateSet<T>, SeptensorError> {
        match self.embedding {
            GridEmbedding::Vocab => {
                if self.templates > self.vocab_size() {
                    return Err(SeptensorError::Input(format!(
                        "Z={} templates exceed the vocabulary size {}",
                        self.templates,
                        self.vocab_size()
                    )));
                }
                TemplateSet::first_tokens(self.templates)
            }
            GridEmbedding::Conv {
                kernel_width,
                input_dim,
            } => TemplateSet::random_patches(self.templates, kernel_width, input_dim, seed ^ TEMPLATE_SEED_SALT),
        }
    }

    /// Inputs to the analytic bounds. A zero positional embedding is covered
    /// by the `r_e = 1` bound, which is monotone in `r_e`.
    pub fn bound_inputs(&self) -> BoundInputs {
        BoundInputs {
            depth: self.depth as u32,
            width: self.width as u64,
            rank: self.effective_rank() as u64,
            positional_rank: self.positional_rank.max(1) as u64,
            heads: self.heads as u64,
            vocab: match self.embedding {
                GridEmbedding::Vocab => Some(self.vocab_size() as u64),
                GridEmbedding::Conv { .. } => None,
            },
            seq_len: Some(self.seq_len as u64),
        }
    }

    /// Builds the seeded network, measures the matricization rank and
    /// brackets it with the analytic bounds.
    pub fn run<T: Scalar>(&self, seed: u64, opts: GridOptions) -> Result<GridOutcome, SeptensorError> {
        let tol = RankTolerance::new(self.tol)?;
        let part = self.partition()?;
        let net = self.network::<T>(seed)?;
        let templates = self.template_set::<T>(seed)?;
        let g = build_grid_tensor(&net, &templates, self.seq_len, self.position, self.coordinate, opts)?;
        let rank = numerical_rank(&matricize(&g, &part)?, tol)?;
        let inputs = self.bound_inputs();
        let upper = upper_bound(&inputs)?;
        let lower = if self.depth >= 2 {
            Some(lower_bound(&inputs)?)
        } else {
            None
        };
        let upper_holds = match &upper.exact {
            Some(b) => BigCount::from(rank) <= *b,
            None => rank == 0 || (rank as f64).ln() <= upper.ln,
        };
        let lower_holds = lower.as_ref().map(|l| match &l.value.exact {
            Some(b) => BigCount::from(rank) >= *b,
            None => false,
        });
        Ok(GridOutcome {
            empirical_rank: rank,
            fingerprint: net.fingerprint(),
            upper,
            lower,
            upper_holds,
            lower_holds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOutcome {
    pub empirical_rank: usize,
    pub fingerprint: u64,
    pub upper: BoundValue,
    pub lower: Option<LowerBound>,
    /// Empirical rank does not exceed the upper bound.
    pub upper_holds: bool,
    /// Empirical rank reaches the lower bound (`None` below depth 2).
    pub lower_holds: Option<bool>,
}

impl GridOutcome {
    pub fn sandwich_holds(&self) -> bool {
        self.upper_holds && self.lower_holds.unwrap_or(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "r")]
    Rank,
    #[serde(rename = "L")]
    Depth,
    #[serde(rename = "d_x")]
    Width,
    #[serde(rename = "Z")]
    Templates,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rank => "r",
            Self::Depth => "L",
            Self::Width => "d_x",
            Self::Templates => "Z",
        }
    }

    fn apply(self, base: &GridConfig, value: usize) -> GridConfig {
        let mut c = base.clone();
        match self {
            Self::Rank => c.rank = value,
            Self::Depth => c.depth = value,
            Self::Width => c.width = value,
            Self::Templates => c.templates = value,
        }
        c
    }
}

impl std::str::FromStr for SweepParam {
    type Err = SeptensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "r" => Ok(Self::Rank),
            "L" => Ok(Self::Depth),
            "d_x" | "dx" => Ok(Self::Width),
            "Z" => Ok(Self::Templates),
            _ => Err(SeptensorError::Input(format!(
                "unknown sweep parameter {s:?}; expected r, L, d_x or Z"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub base: GridConfig,
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub swept_param: &'static str,
    pub value: usize,
    pub seed: u64,
    #[serde(rename = "L")]
    pub depth: usize,
    pub d_x: usize,
    pub r: usize,
    #[serde(rename = "H")]
    pub heads: usize,
    pub d_a: usize,
    #[serde(rename = "N")]
    pub seq_len: usize,
    #[serde(rename = "Z")]
    pub templates: usize,
    pub empirical_rank: usize,
    pub log_upper_bound: f64,
    /// Empty below depth 2.
    pub log_lower_bound: Option<f64>,
}

/// Runs every `(value, seed)` point, values outermost.
pub fn rank_sweep<T: Scalar>(spec: &SweepSpec, opts: GridOptions) -> Result<Vec<SweepRow>, SeptensorError> {
    let mut rows = Vec::with_capacity(spec.values.len() * spec.seeds.len());
    for &value in &spec.values {
        let cfg = spec.param.apply(&spec.base, value);
        for &seed in &spec.seeds {
            let out = cfg.run::<T>(seed, opts)?;
            rows.push(SweepRow {
                swept_param: spec.param.name(),
                value,
                seed,
                depth: cfg.depth,
                d_x: cfg.width,
                r: cfg.effective_rank(),
                heads: cfg.heads,
                d_a: cfg.attn_dim,
                seq_len: cfg.seq_len,
                templates: cfg.templates,
                empirical_rank: out.empirical_rank,
                log_upper_bound: out.upper.ln,
                log_lower_bound: out.lower.map(|l| l.value.ln),
            });
        }
    }
    Ok(rows)
}

/// Writes sweep rows with a header line.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), SeptensorError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "swept_param",
            "value",
            "seed",
            "L",
            "d_x",
            "r",
            "H",
            "d_a",
            "N",
            "Z",
            "empirical_rank",
            "log_upper_bound",
            "log_lower_bound",
        ])
        .map_err(csv_err)?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| SeptensorError::Io(e.to_string()))
}

fn csv_err(e: csv::Error) -> SeptensorError {
    SeptensorError::Io(e.to_string())
}

/// Median of a list of ranks (lower middle for even lengths).
pub fn median_rank(ranks: &[usize]) -> Option<usize> {
    let mut v = ranks.to_vec();
    v.sort_unstable();
    v.get(v.len().checked_sub(1)? / 2).copied()
}

/// `log` of a big integer as `f64`, for reporting.
pub fn ln_count(b: &BigCount) -> f64 {
    b.to_f64().map_or_else(|| crate::numerics::ln_big(b), f64::ln)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_row_count_and_determinism() {
        let spec = SweepSpec {
            param: SweepParam::Rank,
            values: vec![1, 2, 3],
            seeds: vec![0, 1, 2],
            base: GridConfig::vocab(2, 4, 1, 1, 2, 4, 4),
        };
        let a = rank_sweep::<f64>(&spec, GridOptions::default()).unwrap();
        assert_eq!(a.len(), 9);
        let b = rank_sweep::<f64>(&spec, GridOptions::default()).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_sweep_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "swept_param,value,seed,L,d_x,r,H,d_a,N,Z,empirical_rank,log_upper_bound,log_lower_bound\n"
        ));
        assert_eq!(text.lines().count(), 10);
    }

    #[test]
    fn depth_one_has_empty_lower_column() {
        let spec = SweepSpec {
            param: SweepParam::Depth,
            values: vec![1],
            seeds: vec![0],
            base: GridConfig::vocab(1, 3, 3, 1, 2, 2, 3),
        };
        let rows = rank_sweep::<f64>(&spec, GridOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn medians() {
        assert_eq!(median_rank(&[3, 1, 2]), Some(2));
        assert_eq!(median_rank(&[4, 1, 2, 3]), Some(2));
        assert_eq!(median_rank(&[]), None);
    }
}
