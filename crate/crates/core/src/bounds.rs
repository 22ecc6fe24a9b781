//! Exact and log-space separation-rank bounds and depth-regime classification.

use num_traits::{One, ToPrimitive};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::numerics::{ln_big, ln_multiset_real, multiset_coeff_big, pow3, BigCount};

/// Exact values wider than this many bits are reported in log form only.
pub const EXACT_BITS_LIMIT: u64 = 4096;

/// Keeps `3^L` finite as an `f64`.
pub const MAX_DEPTH: u32 = 600;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("invalid bound input: {0}")]
    Input(String),
}

/// Architecture quantities the bounds depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundInputs {
    pub depth: u32,
    pub width: u64,
    pub rank: u64,
    pub positional_rank: u64,
    pub heads: u64,
    pub vocab: Option<u64>,
    pub seq_len: Option<u64>,
}

impl BoundInputs {
    /// `r_e = 1`, no vocabulary or length information.
    pub fn new(depth: u32, width: u64, rank: u64, heads: u64) -> Self {
        Self {
            depth,
            width,
            rank,
            positional_rank: 1,
            heads,
            vocab: None,
            seq_len: None,
        }
    }

    /// `min(r, d_x)`.
    pub fn effective_rank(&self) -> u64 {
        self.rank.min(self.width)
    }

    fn check(&self) -> Result<(), BoundsError> {
        let named = [
            ("L", u64::from(self.depth)),
            ("d_x", self.width),
            ("r", self.rank),
            ("r_e", self.positional_rank),
            ("H", self.heads),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| *v == 0) {
            return Err(BoundsError::Input(format!("{name} must be at least 1")));
        }
        if self.depth > MAX_DEPTH {
            return Err(BoundsError::Input(format!(
                "L = {} exceeds the supported maximum {MAX_DEPTH}",
                self.depth
            )));
        }
        Ok(())
    }
}

/// A bound as an exact integer (when it fits) and its natural log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundValue {
    #[serde(serialize_with = "ser_big")]
    pub exact: Option<BigCount>,
    pub ln: f64,
}

fn ser_big<S: Serializer>(v: &Option<BigCount>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(b) => s.serialize_some(&b.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabCondition {
    Satisfied,
    Violated,
    /// No vocabulary size given; the bound relies on long sequences instead.
    LargeN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AssumptionFlags {
    /// `3^L > d_x`.
    pub depth_ok: bool,
    /// `H < min(r, d_x)`.
    pub heads_ok: bool,
    pub vocab_ok: VocabCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBound {
    pub value: BoundValue,
    /// `floor((min(r, d_x) - H) / 2)`.
    pub half_rank: u64,
    pub flags: AssumptionFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub upper: BoundValue,
    pub lower: Option<LowerBound>,
    pub scales: AsymptoticScales,
    pub regime: DepthRegime,
}

/// Upper bound
/// `((r+r_e, 3^L)) * ((4, 3^L)) * (3^L + 1)^(r+r_e)` with `r = min(r, d_x)`.
/// Independent of the head count.
pub fn upper_bound(inp: &BoundInputs) -> Result<BoundValue, BoundsError> {
    inp.check()?;
    let n = inp.effective_rank() + inp.positional_rank;
    let ln3l = f64::from(inp.depth) * 3f64.ln();
    let k = 3f64.powi(inp.depth as i32);
    let ln_last = n as f64 * ln_3l_plus_one(inp.depth, ln3l);
    let ln = ln_multiset_real(n as f64, k) + ln_multiset_real(4.0, k) + ln_last;
    let exact = fits(ln).then(|| {
        let k = pow3(inp.depth);
        let last = (k.clone() + BigCount::one()).pow(n as u32);
        multiset_coeff_big(n, &k) * multiset_coeff_big(4, &k) * last
    });
    Ok(finish(exact, ln))
}

/// Lower bound `((floor((r-H)/2), 3^(L-2)))` with `r = min(r, d_x)`; `1`
/// when `H >= r` or the half rank is zero.
pub fn lower_bound(inp: &BoundInputs) -> Result<LowerBound, BoundsError> {
    inp.check()?;
    if inp.depth < 2 {
        return Err(BoundsError::Input(format!(
            "the lower bound needs L >= 2, got L = {}",
            inp.depth
        )));
    }
    let r = inp.effective_rank();
    let heads_ok = inp.heads < r;
    let half_rank = r.saturating_sub(inp.heads) / 2;
    let value = if half_rank == 0 {
        BoundValue {
            exact: Some(BigCount::one()),
            ln: 0.0,
        }
    } else {
        let ln = ln_multiset_real(half_rank as f64, 3f64.powi(inp.depth as i32 - 2));
        let exact = fits(ln).then(|| multiset_coeff_big(half_rank, &pow3(inp.depth - 2)));
        finish(exact, ln)
    };
    let vocab_ok = match inp.vocab {
        None => VocabCondition::LargeN,
        Some(v) => {
            let ok = match &value.exact {
                Some(b) => BigCount::from(v) > b * 2u32,
                None => (v as f64).ln() >= std::f64::consts::LN_2 + value.ln,
            };
            if ok {
                VocabCondition::Satisfied
            } else {
                VocabCondition::Violated
            }
        }
    };
    Ok(LowerBound {
        value,
        half_rank,
        flags: AssumptionFlags {
            depth_ok: depth_exceeds_width(inp.depth, inp.width),
            heads_ok,
            vocab_ok,
        },
    })
}

/// Leading-order log-separation-rank scales with constants suppressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AsymptoticScales {
    /// `L * min(r, d_x)`.
    pub upper: u64,
    /// `L * (min(r, d_x) - H)`, floored at 0.
    pub lower: u64,
}

pub fn asymptotic_logs(inp: &BoundInputs) -> AsymptoticScales {
    let r = inp.effective_rank();
    let l = u64::from(inp.depth);
    AsymptoticScales {
        upper: l.saturating_mul(r),
        lower: l.saturating_mul(r.saturating_sub(inp.heads)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeClass {
    /// `L < log3 d_x`: depth counts more than width.
    DepthEfficiency,
    /// `L > log3 d_x`: both depth and width contribute exponentially.
    DualContribution,
    /// Within half a layer of the threshold.
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthRegime {
    pub threshold: f64,
    pub class: RegimeClass,
}

pub fn depth_regime(depth: u32, width: u64) -> Result<DepthRegime, BoundsError> {
    if width == 0 {
        return Err(BoundsError::Input("d_x must be at least 1".into()));
    }
    let threshold = (width as f64).ln() / 3f64.ln();
    let gap = f64::from(depth) - threshold;
    let class = if gap.abs() < 0.5 {
        RegimeClass::Boundary
    } else if gap > 0.0 {
        RegimeClass::DualContribution
    } else {
        RegimeClass::DepthEfficiency
    };
    Ok(DepthRegime { threshold, class })
}

/// Both bounds (lower only for `L >= 2`), scales and regime.
pub fn bound_report(inp: &BoundInputs) -> Result<BoundReport, BoundsError> {
    Ok(BoundReport {
        upper: upper_bound(inp)?,
        lower: if inp.depth >= 2 {
            Some(lower_bound(inp)?)
        } else {
            None
        },
        scales: asymptotic_logs(inp),
        regime: depth_regime(inp.depth, inp.width)?,
    })
}

/// Integer test `3^L > d_x`.
pub fn depth_exceeds_width(depth: u32, width: u64) -> bool {
    pow3(depth) > BigCount::from(width)
}

fn ln_3l_plus_one(depth: u32, ln3l: f64) -> f64 {
    if depth < 30 {
        (3f64.powi(depth as i32) + 1.0).ln()
    } else {
        ln3l
    }
}

// small margin so borderline estimates still produce the exact value
fn fits(ln: f64) -> bool {
    ln.is_finite() && ln / std::f64::consts::LN_2 < EXACT_BITS_LIMIT as f64 - 8.0
}

fn finish(exact: Option<BigCount>, ln_estimate: f64) -> BoundValue {
    match exact {
        Some(b) => {
            let ln = if b.bits() <= 52 {
                b.to_f64().map_or(ln_estimate, f64::ln)
            } else {
                ln_big(&b)
            };
            BoundValue { exact: Some(b), ln }
        }
        None => BoundValue {
            exact: None,
            ln: ln_estimate,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> Option<BigCount> {
        Some(BigCount::from(v))
    }

    #[test]
    fn upper_depth_one_rank_one() {
        let u = upper_bound(&BoundInputs::new(1, 8, 1, 1)).unwrap();
        assert_eq!(u.exact, big(4 * 20 * 16));
        assert!((u.ln - 1280f64.ln()).abs() < 1e-12);
        let clamped = upper_bound(&BoundInputs::new(1, 1, 5, 1)).unwrap();
        assert_eq!(clamped.exact, big(1280));
    }

    #[test]
    fn lower_examples() {
        let l = lower_bound(&BoundInputs::new(2, 16, 5, 1)).unwrap();
        assert_eq!(l.value.exact, big(2));
        let l = lower_bound(&BoundInputs::new(3, 16, 9, 1)).unwrap();
        assert_eq!(l.value.exact, big(20));
        let l = lower_bound(&BoundInputs::new(2, 16, 2, 2)).unwrap();
        assert_eq!(l.value.exact, big(1));
        assert!(!l.flags.heads_ok);
        assert!(lower_bound(&BoundInputs::new(1, 16, 5, 1)).is_err());
    }

    #[test]
    fn vocab_condition() {
        let mut inp = BoundInputs::new(2, 16, 5, 1);
        assert_eq!(lower_bound(&inp).unwrap().flags.vocab_ok, VocabCondition::LargeN);
        inp.vocab = Some(5);
        assert_eq!(lower_bound(&inp).unwrap().flags.vocab_ok, VocabCondition::Satisfied);
        inp.vocab = Some(4);
        assert_eq!(lower_bound(&inp).unwrap().flags.vocab_ok, VocabCondition::Violated);
    }

    #[test]
    fn scales() {
        let s = asymptotic_logs(&BoundInputs::new(12, 768, 768, 12));
        assert_eq!((s.upper, s.lower), (9216, 9072));
        assert_eq!(asymptotic_logs(&BoundInputs::new(12, 768, 12, 12)).lower, 0);
    }

    #[test]
    fn regimes() {
        let r = depth_regime(12, 768).unwrap();
        assert_eq!(r.class, RegimeClass::DualContribution);
        assert!((r.threshold - 768f64.ln() / 3f64.ln()).abs() < 1e-12);
        assert_eq!(depth_regime(2, 768).unwrap().class, RegimeClass::DepthEfficiency);
        assert_eq!(depth_regime(1, 3).unwrap().class, RegimeClass::Boundary);
    }

    #[test]
    fn huge_bounds_log_only() {
        let u = upper_bound(&BoundInputs::new(24, 1024, 1024, 128)).unwrap();
        assert!(u.exact.is_none());
        assert!(u.ln.is_finite() && u.ln > 0.0);
    }

    #[test]
    fn zero_inputs_rejected() {
        assert!(upper_bound(&BoundInputs::new(0, 4, 4, 1)).is_err());
        assert!(upper_bound(&BoundInputs::new(2, 4, 0, 1)).is_err());
    }
}
