//! Architecture configuration audits: embedding-rank and attention-dimension
//! bottleneck flags, depth regime, bound scales and parameter counts.

use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::bounds::{asymptotic_logs, depth_regime, AsymptoticScales, BoundInputs, DepthRegime, RegimeClass, MAX_DEPTH};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    /// The document does not match the config schema; `path` names the field.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid input: {0}")]
    Input(String),
}

fn schema(path: &str, message: impl Into<String>) -> AuditError {
    AuditError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

const REQUIRED: [&str; 5] = ["name", "vocab_size", "width", "depth", "heads"];
const OPTIONAL: [&str; 4] = ["embedding_rank", "attention_dim", "positional_rank", "seq_len"];

/// A validated architecture with defaults resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArchConfig {
    pub name: String,
    pub vocab_size: u64,
    /// Defaults to `min(V, d_x)`.
    pub embedding_rank: u64,
    pub width: u64,
    pub depth: u32,
    pub heads: u64,
    /// Defaults to `floor(d_x / H)`.
    pub attention_dim: u64,
    /// Defaults to `min(d_x, N)`, or `d_x` without `N`.
    pub positional_rank: u64,
    pub seq_len: Option<u64>,
}

/// Parses a JSON config document.
pub fn load_config(document: &str) -> Result<ArchConfig, AuditError> {
    let value: Value = serde_json::from_str(document).map_err(|e| schema("$", format!("not valid JSON: {e}")))?;
    config_from_value(&value)
}

/// Validates an already parsed document and applies defaults.
pub fn config_from_value(value: &Value) -> Result<ArchConfig, AuditError> {
    let obj = value.as_object().ok_or_else(|| schema("$", "expected an object"))?;
    if let Some(k) = obj.keys().find(|k| !REQUIRED.contains(&k.as_str()) && !OPTIONAL.contains(&k.as_str())) {
        return Err(schema(&format!("$.{k}"), "unknown field"));
    }
    let name = match obj.get("name") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(schema("$.name", "expected a string")),
        None => return Err(schema("$.name", "missing required field")),
    };
    let req = |k: &str| positive(obj, k)?.ok_or_else(|| schema(&format!("$.{k}"), "missing required field"));
    let vocab_size = req("vocab_size")?;
    let width = req("width")?;
    let depth = req("depth")?;
    let heads = req("heads")?;
    if depth > u64::from(MAX_DEPTH) {
        return Err(schema("$.depth", format!("must be at most {MAX_DEPTH}")));
    }
    let seq_len = positive(obj, "seq_len")?;

    let full = vocab_size.min(width);
    let embedding_rank = match positive(obj, "embedding_rank")? {
        Some(r) if r > full => {
            return Err(schema("$.embedding_rank", format!("{r} exceeds min(vocab_size, width) = {full}")))
        }
        Some(r) => r,
        None => full,
    };
    let attention_dim = match positive(obj, "attention_dim")? {
        Some(a) => a,
        None if heads > width => {
            return Err(schema(
                "$.attention_dim",
                format!("default width/heads = {width}/{heads} rounds to 0; set it explicitly"),
            ))
        }
        None => width / heads,
    };
    let pos_full = seq_len.map_or(width, |n| n.min(width));
    let positional_rank = match positive(obj, "positional_rank")? {
        Some(re) if re > pos_full => {
            return Err(schema("$.positional_rank", format!("{re} exceeds min(width, seq_len) = {pos_full}")))
        }
        Some(re) => re,
        None => pos_full,
    };
    Ok(ArchConfig {
        name,
        vocab_size,
        embedding_rank,
        width,
        depth: depth as u32,
        heads,
        attention_dim,
        positional_rank,
        seq_len,
    })
}

fn positive(obj: &Map<String, Value>, key: &str) -> Result<Option<u64>, AuditError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => match v.as_u64() {
            Some(0) => Err(schema(&format!("$.{key}"), "must be positive")),
            Some(n) => Ok(Some(n)),
            None => Err(schema(&format!("$.{key}"), format!("expected a positive integer, got {v}"))),
        },
    }
}

impl ArchConfig {
    pub fn bound_inputs(&self) -> BoundInputs {
        BoundInputs {
            depth: self.depth,
            width: self.width,
            rank: self.embedding_rank,
            positional_rank: self.positional_rank,
            heads: self.heads,
            vocab: Some(self.vocab_size),
            seq_len: self.seq_len,
        }
    }

    /// Whether the embedding is stored as a rank-`r` factorization.
    pub fn factored_embedding(&self) -> bool {
        self.embedding_rank < self.vocab_size.min(self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    /// `4 H d_a d_x`.
    pub per_layer: u64,
    pub layers_total: u64,
    pub embedding: u64,
    /// `None` when the count was computed without the positional term.
    pub positional: Option<u64>,
    pub total: u64,
}

/// Exact parameter counts. Factored matrices (`r < min(V, d_x)`,
/// `r_e < min(N, d_x)`) count both factors.
pub fn param_count(c: &ArchConfig, with_positional: bool) -> Result<ParamCount, AuditError> {
    let over = || AuditError::Input("parameter count overflows u64".into());
    let per_layer = 4u64
        .checked_mul(c.heads)
        .and_then(|x| x.checked_mul(c.attention_dim))
        .and_then(|x| x.checked_mul(c.width))
        .ok_or_else(over)?;
    let layers_total = per_layer.checked_mul(c.depth.into()).ok_or_else(over)?;
    let factored = |rows: u64, rank: u64| -> Option<u64> {
        if rank < rows.min(c.width) {
            rows.checked_mul(rank)?.checked_add(rank.checked_mul(c.width)?)
        } else {
            rows.checked_mul(c.width)
        }
    };
    let embedding = factored(c.vocab_size, c.embedding_rank).ok_or_else(over)?;
    let positional = if with_positional {
        let n = c
            .seq_len
            .ok_or_else(|| AuditError::Input("seq_len is required for the positional parameter count".into()))?;
        Some(factored(n, c.positional_rank).ok_or_else(over)?)
    } else {
        None
    };
    let total = layers_total
        .checked_add(embedding)
        .and_then(|x| x.checked_add(positional.unwrap_or(0)))
        .ok_or_else(over)?;
    Ok(ParamCount {
        per_layer,
        layers_total,
        embedding,
        positional,
        total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Flag {
    pub flagged: bool,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub config: ArchConfig,
    /// `r < d_x`, ratio `r / d_x`.
    pub vocab_bottleneck: Flag,
    /// `H d_a > d_x`, ratio `H d_a / d_x`.
    pub attention_overhang: Flag,
    pub depth_regime: DepthRegime,
    pub scales: AsymptoticScales,
    pub params: ParamCount,
    pub notes: Vec<String>,
}

impl AuditReport {
    pub fn any_flag(&self) -> bool {
        self.vocab_bottleneck.flagged || self.attention_overhang.flagged
    }
}

pub fn diagnose(c: &ArchConfig) -> Result<AuditReport, AuditError> {
    let r = c.embedding_rank;
    let vocab_bottleneck = Flag {
        flagged: r < c.width,
        ratio: r as f64 / c.width as f64,
    };
    let inner = c.heads as f64 * c.attention_dim as f64;
    let attention_overhang = Flag {
        flagged: u128::from(c.heads) * u128::from(c.attention_dim) > u128::from(c.width),
        ratio: inner / c.width as f64,
    };
    let regime = depth_regime(c.depth, c.width).map_err(|e| AuditError::Input(e.to_string()))?;
    let scales = asymptotic_logs(&c.bound_inputs());
    let params = param_count(c, c.seq_len.is_some())?;

    let mut notes = Vec::new();
    if vocab_bottleneck.flagged {
        if c.factored_embedding() {
            notes.push(format!(
                "embedding factored to rank {r} < d_x = {}: bounds scale with r, so width beyond r adds little; \
                 an ALBERT-style reduction of this kind was reported to leave about 25% of network size redundant \
                 (cited figure from full-scale training, not computed here)",
                c.width
            ));
        } else {
            notes.push(format!(
                "vocabulary of {} tokens caps the embedding rank below d_x = {}: bounds scale with r = {r}, \
                 and deepening is favored over widening",
                c.vocab_size, c.width
            ));
        }
    }
    if attention_overhang.flagged {
        let mut note = format!(
            "H*d_a = {} exceeds d_x = {} ({:.4}x); the bounds do not grow with the extra attention dimensions",
            c.heads * c.attention_dim,
            c.width,
            attention_overhang.ratio
        );
        if attention_overhang.ratio >= 16.0 {
            note.push_str(
                "; a T5-11B-style 16x overhang was reported to carry roughly 45% redundancy \
                 (cited figure from full-scale training, not computed here)",
            );
        }
        notes.push(note);
    }
    if c.heads >= r.min(c.width) {
        notes.push(format!(
            "H = {} is not below min(r, d_x) = {}: the lower bound is vacuous",
            c.heads,
            r.min(c.width)
        ));
    }
    match regime.class {
        RegimeClass::DepthEfficiency => notes.push(format!(
            "L = {} is below log3(d_x) = {:.2}: depth is the cheaper way to add expressivity",
            c.depth, regime.threshold
        )),
        RegimeClass::Boundary => notes.push(format!(
            "L = {} is within half a layer of log3(d_x) = {:.2}",
            c.depth, regime.threshold
        )),
        RegimeClass::DualContribution => {}
    }
    Ok(AuditReport {
        config: c.clone(),
        vocab_bottleneck,
        attention_overhang,
        depth_regime: regime,
        scales,
        params,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LargerScale {
    First,
    Second,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub first: AuditReport,
    pub second: AuditReport,
    /// `second.total - first.total`.
    pub param_delta: i128,
    /// Config with the larger `L (min(r, d_x) - H)`.
    pub larger_lower_scale: LargerScale,
}

pub fn compare(c1: &ArchConfig, c2: &ArchConfig) -> Result<Comparison, AuditError> {
    let first = diagnose(c1)?;
    let second = diagnose(c2)?;
    let param_delta = i128::from(second.params.total) - i128::from(first.params.total);
    let larger_lower_scale = match first.scales.lower.cmp(&second.scales.lower) {
        std::cmp::Ordering::Greater => LargerScale::First,
        std::cmp::Ordering::Less => LargerScale::Second,
        std::cmp::Ordering::Equal => LargerScale::Equal,
    };
    Ok(Comparison {
        first,
        second,
        param_delta,
        larger_lower_scale,
    })
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(f, "config: {}", c.name)?;
        writeln!(
            f,
            "  V={} r={} d_x={} L={} H={} d_a={} r_e={} N={}",
            c.vocab_size,
            c.embedding_rank,
            c.width,
            c.depth,
            c.heads,
            c.attention_dim,
            c.positional_rank,
            c.seq_len.map_or("-".to_string(), |n| n.to_string())
        )?;
        writeln!(
            f,
            "vocab bottleneck:   {} (r/d_x = {})",
            yes_no(self.vocab_bottleneck.flagged),
            self.vocab_bottleneck.ratio
        )?;
        writeln!(
            f,
            "attention overhang: {} (H*d_a/d_x = {})",
            yes_no(self.attention_overhang.flagged),
            self.attention_overhang.ratio
        )?;
        let class = serde_json::to_value(self.depth_regime.class).map_err(|_| fmt::Error)?;
        writeln!(
            f,
            "depth regime:       {} (log3 d_x = {:.4})",
            class.as_str().unwrap_or_default(),
            self.depth_regime.threshold
        )?;
        writeln!(
            f,
            "log sep-rank scale: upper ~ {}, lower ~ {}",
            self.scales.upper, self.scales.lower
        )?;
        let p = &self.params;
        write!(
            f,
            "parameters:         total {} (attention {} = {} x {}, embedding {}",
            p.total, p.layers_total, c.depth, p.per_layer, p.embedding
        )?;
        match p.positional {
            Some(n) => writeln!(f, ", positional {n})")?,
            None => writeln!(f, ")")?,
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\n{}\n", self.first, self.second)?;
        writeln!(f, "parameter delta (second - first): {}", self.param_delta)?;
        let who = match self.larger_lower_scale {
            LargerScale::First => self.first.config.name.as_str(),
            LargerScale::Second => self.second.config.name.as_str(),
            LargerScale::Equal => "tie",
        };
        writeln!(f, "larger lower-bound scale: {who}")
    }
}
