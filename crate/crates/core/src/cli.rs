//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | output could not be written |
//! | 2 | usage, schema or assumption error |
//! | 3 | `audit --strict` raised a flag |
//! | 4 | grid size cap exceeded |
//! | 5 | witness verification failed |
//! | 6 | witness search exhausted |

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audit::{compare, config_from_value, diagnose, AuditError};
use crate::bounds::{bound_report, BoundInputs, BoundValue};
use crate::numerics::{RankTolerance, Scalar};
use crate::septensor::{
    grid_cap_from_env, rank_sweep, write_sweep_csv, GridConfig, GridEmbedding, GridOptions, GridOutcome,
    SeptensorError, SweepParam, SweepSpec, GRID_CAP_ENV,
};
use crate::witness::{
    build_conv_witness, build_large_n_witness, build_vocab_witness, search_hadamard_witness,
    verify_hadamard_rank, verify_hadamard_rank_exact, AssignmentBundle, WitnessError, WitnessMatrix,
    WitnessParams, DEFAULT_MAX_TRIALS,
};
use crate::septensor::Partition;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_STRICT: i32 = 3;
pub const EXIT_CAP: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;
pub const EXIT_EXHAUSTED: i32 = 6;

#[derive(Debug, Parser, Serialize)]
#[command(name = "seprank", version, about = "Separation-rank bounds, grid-tensor experiments, witnesses and architecture audits")]
pub struct Cli {
    /// Also write the run manifest to this path.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Upper and lower separation-rank bounds for an architecture.
    Bounds(BoundsArgs),
    /// Bottleneck diagnostics for an architecture config.
    Audit(AuditArgs),
    /// Empirical matricization rank of one seeded network.
    Grid(GridArgs),
    /// Rank sweep over one parameter, written as CSV.
    Sweep(SweepArgs),
    /// Construct and verify a lower-bound witness.
    Witness(WitnessArgs),
    /// Re-run the command recorded in the manifest given by --manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct BoundsArgs {
    /// Depth L (layers).
    #[arg(long = "L")]
    pub depth: u32,
    /// Width d_x (embedding dimension).
    #[arg(long = "dx")]
    pub width: u64,
    /// Embedding rank r.
    #[arg(long = "r")]
    pub rank: u64,
    /// Positional embedding rank r_e.
    #[arg(long = "re", default_value_t = 1)]
    pub positional_rank: u64,
    /// Heads per layer H.
    #[arg(long = "H")]
    pub heads: u64,
    /// Vocabulary size V (tokens).
    #[arg(long = "V")]
    pub vocab: Option<u64>,
    /// Sequence length N (tokens).
    #[arg(long = "N")]
    pub seq_len: Option<u64>,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    /// Config file (JSON). Inline flags override its fields.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Second config to compare against.
    #[arg(long, value_name = "PATH")]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub name: Option<String>,
    /// Vocabulary size (tokens).
    #[arg(long = "V")]
    pub vocab: Option<u64>,
    /// Width d_x.
    #[arg(long = "dx")]
    pub width: Option<u64>,
    /// Depth L.
    #[arg(long = "L")]
    pub depth: Option<u64>,
    /// Heads H.
    #[arg(long = "H")]
    pub heads: Option<u64>,
    /// Embedding rank r [default: min(V, d_x)].
    #[arg(long = "r")]
    pub rank: Option<u64>,
    /// Attention dimension d_a [default: d_x / H].
    #[arg(long = "da")]
    pub attn_dim: Option<u64>,
    /// Positional rank r_e [default: min(d_x, N)].
    #[arg(long = "re")]
    pub positional_rank: Option<u64>,
    /// Sequence length N (tokens).
    #[arg(long = "N")]
    pub seq_len: Option<u64>,
    /// Exit with code 3 when a bottleneck flag is raised.
    #[arg(long)]
    pub strict: bool,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
    /// Write the JSON report to this path.
    #[arg(long, value_name = "PATH")]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentArgs {
    /// Depth L.
    #[arg(long = "L", default_value_t = 2)]
    pub depth: usize,
    /// Width d_x.
    #[arg(long = "dx", default_value_t = 6)]
    pub width: usize,
    /// Embedding rank r (clamped to min(d_x, V)).
    #[arg(long = "r", default_value_t = 6)]
    pub rank: usize,
    /// Heads H.
    #[arg(long = "H", default_value_t = 1)]
    pub heads: usize,
    /// Attention dimension d_a [default: d_x / H].
    #[arg(long = "da")]
    pub attn_dim: Option<usize>,
    /// Sequence length N (tokens).
    #[arg(long = "N", default_value_t = 4)]
    pub seq_len: usize,
    /// Templates per position Z.
    #[arg(long = "Z", default_value_t = 5)]
    pub templates: usize,
    /// Positional rank r_e; 0 for no positional embedding.
    #[arg(long = "re", default_value_t = 1)]
    pub positional_rank: usize,
    /// Vocabulary size V [default: max(Z, d_x)].
    #[arg(long = "V")]
    pub vocab: Option<usize>,
    /// Convolution kernel width k; selects a convolution embedding.
    #[arg(long = "conv-k", requires = "conv_din")]
    pub conv_k: Option<usize>,
    /// Convolution input dimension.
    #[arg(long = "conv-din", requires = "conv_k")]
    pub conv_din: Option<usize>,
    /// Relative singular-value tolerance for the rank.
    #[arg(long, default_value_t = RankTolerance::GRID.value())]
    pub tol: f64,
    /// Positions in the first partition set, 1-based, comma separated [default: odd positions].
    #[arg(long, value_delimiter = ',')]
    pub partition: Option<Vec<usize>>,
    /// Output position, 1-based.
    #[arg(long, default_value_t = 1)]
    pub position: usize,
    /// Output coordinate, 1-based.
    #[arg(long, default_value_t = 1)]
    pub coordinate: usize,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
    /// Worker threads for grid evaluation (output is identical for any value).
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write a one-row CSV result here.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Swept parameter: r, L, d_x or Z.
    #[arg(long)]
    pub param: String,
    /// Values, as a comma list (1,2,4) or an inclusive range (1..4).
    #[arg(long)]
    pub values: String,
    /// Number of seeds per value, starting at --seed-start.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_start: u64,
    /// Output CSV path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum WitnessMode {
    Vocab,
    Conv,
    #[value(name = "large-n", alias = "largeN")]
    LargeN,
    Hadamard,
}

#[derive(Debug, Args, Serialize)]
pub struct WitnessArgs {
    #[arg(long, value_enum)]
    pub mode: WitnessMode,
    /// Columns d of the witness matrix A.
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Hadamard power lambda.
    #[arg(long, default_value_t = 1)]
    pub lambda: u32,
    /// Attention dimension d_a.
    #[arg(long = "da", default_value_t = 3)]
    pub attn_dim: usize,
    /// Heads H.
    #[arg(long = "H", default_value_t = 1)]
    pub heads: usize,
    /// Width d_x [default: H * d_a].
    #[arg(long = "dx")]
    pub width: Option<usize>,
    /// Embedding rank r [default: 2d + H, or 2d + 1 + H for large-n].
    #[arg(long = "r")]
    pub rank: Option<usize>,
    /// Sequence length for large-n [default: smallest even N >= E(r-1-H)].
    #[arg(long = "N")]
    pub seq_len: Option<usize>,
    /// Convolution kernel width.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Convolution input dimension [default: ceil(d_x / k)].
    #[arg(long)]
    pub din: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Search trials for A.
    #[arg(long, default_value_t = DEFAULT_MAX_TRIALS)]
    pub trials: usize,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

/// `replay` reads the manifest named by the global `--manifest`.
#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Arguments after the program name, replayed verbatim.
    pub args: Vec<String>,
    pub flags: Value,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    pub outputs: Vec<String>,
    pub exit_code: i32,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<SeptensorError> for Failure {
    fn from(e: SeptensorError) -> Self {
        match e {
            SeptensorError::Capability(_) => Failure::new(EXIT_CAP, e.to_string()),
            SeptensorError::Io(_) => Failure::new(EXIT_IO, e.to_string()),
            _ => Failure::new(EXIT_USAGE, e.to_string()),
        }
    }
}

impl From<WitnessError> for Failure {
    fn from(e: WitnessError) -> Self {
        match e {
            WitnessError::SearchExhausted { .. } => Failure::new(EXIT_EXHAUSTED, e.to_string()),
            _ => Failure::new(EXIT_USAGE, e.to_string()),
        }
    }
}

impl From<AuditError> for Failure {
    fn from(e: AuditError) -> Self {
        Failure::new(EXIT_USAGE, e.to_string())
    }
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

/// What a subcommand produced besides its stdout text.
#[derive(Default)]
struct Produced {
    code: i32,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    tolerance: Option<f64>,
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns its exit code. Results go to `out`, diagnostics to stderr.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Bounds(a) => cmd_bounds(a, out),
        Command::Audit(a) => cmd_audit(a, out),
        Command::Grid(a) => cmd_grid(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Witness(a) => cmd_witness(a, out),
        Command::Replay(_) => return cmd_replay(cli.manifest.as_deref(), out),
    };
    let produced = match result {
        Ok(p) => p,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return f.code;
        }
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand_name(&cli.command).into(),
        args: argv.iter().skip(1).map(|s| s.to_string_lossy().into_owned()).collect(),
        flags: serde_json::to_value(&cli.command).unwrap_or(Value::Null),
        seed: produced.seed,
        tolerance: produced.tolerance,
        outputs: produced.outputs.iter().map(|p| p.display().to_string()).collect(),
        exit_code: produced.code,
    };
    let mut targets: Vec<PathBuf> = produced.outputs.iter().map(|p| sidecar(p)).collect();
    targets.extend(cli.manifest.clone());
    for t in targets {
        if let Err(f) = write_json(&t, &manifest) {
            eprintln!("error: {}", f.message);
            return f.code;
        }
    }
    produced.code
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Bounds(_) => "bounds",
        Command::Audit(_) => "audit",
        Command::Grid(_) => "grid",
        Command::Sweep(_) => "sweep",
        Command::Witness(_) => "witness",
        Command::Replay(_) => "replay",
    }
}

/// `<out>.manifest.json`.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes to a temporary sibling and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp-{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let res = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(io_fail(path, e));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| io_fail(path, e))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::new(EXIT_IO, format!("stdout: {e}")))
}

fn fmt_bound(b: &BoundValue) -> String {
    match &b.exact {
        Some(v) => format!("{v} (ln {:.6})", b.ln),
        None => format!("too large for exact form (ln {:.6})", b.ln),
    }
}

fn snake<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|x| x.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn cmd_bounds(a: &BoundsArgs, out: &mut dyn Write) -> Result<Produced, Failure> {
    let inp = BoundInputs {
        depth: a.depth,
        width: a.width,
        rank: a.rank,
        positional_rank: a.positional_rank,
        heads: a.heads,
        vocab: a.vocab,
        seq_len: a.seq_len,
    };
    let rep = bound_report(&inp).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let text = if a.json {
        serde_json::to_string_pretty(&rep).map_err(|e| Failure::new(EXIT_IO, e.to_string()))? + "\n"
    } else {
        let mut s = format!("upper bound: {}\n", fmt_bound(&rep.upper));
        match &rep.lower {
            Some(l) => {
                s += &format!("lower bound: {}\n", fmt_bound(&l.value));
                s += &format!("half rank: {}\n", l.half_rank);
                s += &format!(
                    "assumptions: depth_ok={} heads_ok={} vocab_ok={}\n",
                    l.flags.depth_ok,
                    l.flags.heads_ok,
                    snake(&l.flags.vocab_ok)
                );
            }
            None => s += "lower bound: not available for L < 2\n",
        }
        s += &format!(
            "log scales: upper ~ L*min(r,d_x) = {}, lower ~ L*(min(r,d_x)-H) = {}\n",
            rep.scales.upper, rep.scales.lower
        );
        s += &format!(
            "depth regime: {} (log3 d_x = {:.4})\n",
            snake(&rep.regime.class),
            rep.regime.threshold
        );
        s
    };
    emit(out, &text)?;
    Ok(Produced::default())
}

fn audit_document(a: &AuditArgs) -> Result<Value, Failure> {
    let mut doc = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", p.display())))?;
            serde_json::from_str::<Value>(&text)
                .map_err(|e| Failure::new(EXIT_USAGE, format!("schema error at $: not valid JSON: {e}")))?
        }
        None => Value::Object(Default::default()),
    };
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| Failure::new(EXIT_USAGE, "schema error at $: expected an object"))?;
    if let Some(n) = &a.name {
        obj.insert("name".into(), n.clone().into());
    } else if !obj.contains_key("name") && a.config.is_none() {
        obj.insert("name".into(), "inline".into());
    }
    let overrides = [
        ("vocab_size", a.vocab),
        ("width", a.width),
        ("depth", a.depth),
        ("heads", a.heads),
        ("embedding_rank", a.rank),
        ("attention_dim", a.attn_dim),
        ("positional_rank", a.positional_rank),
        ("seq_len", a.seq_len),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            obj.insert(k.into(), v.into());
        }
    }
    Ok(doc)
}

fn cmd_audit(a: &AuditArgs, out: &mut dyn Write) -> Result<Produced, Failure> {
    let c1 = config_from_value(&audit_document(a)?)?;
    let (text, json, flagged) = match &a.compare {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", p.display())))?;
            let c2 = crate::audit::load_config(&text)?;
            let cmp = compare(&c1, &c2)?;
            let json = serde_json::to_value(&cmp).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
            (cmp.to_string(), json, cmp.first.any_flag() || cmp.second.any_flag())
        }
        None => {
            let rep = diagnose(&c1)?;
            let json = serde_json::to_value(&rep).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
            (rep.to_string(), json, rep.any_flag())
        }
    };
    if a.json {
        emit(out, &(serde_json::to_string_pretty(&json).unwrap_or_default() + "\n"))?;
    } else {
        emit(out, &text)?;
    }
    let mut produced = Produced::default();
    if let Some(p) = &a.json_out {
        write_json(p, &json)?;
        produced.outputs.push(p.clone());
    }
    if a.strict && flagged {
        produced.code = EXIT_STRICT;
    }
    Ok(produced)
}

fn grid_config(e: &ExperimentArgs) -> Result<GridConfig, Failure> {
    let one_based = |name: &str, v: usize| {
        v.checked_sub(1)
            .ok_or_else(|| Failure::new(EXIT_USAGE, format!("--{name} is 1-based; got 0")))
    };
    let partition = match &e.partition {
        None => None,
        Some(p) => Some(p.iter().map(|&i| one_based("partition", i)).collect::<Result<Vec<_>, _>>()?),
    };
    let embedding = match (e.conv_k, e.conv_din) {
        (Some(kernel_width), Some(input_dim)) => GridEmbedding::Conv {
            kernel_width,
            input_dim,
        },
        _ => GridEmbedding::Vocab,
    };
    Ok(GridConfig {
        depth: e.depth,
        width: e.width,
        rank: e.rank,
        heads: e.heads,
        attn_dim: e.attn_dim.unwrap_or(e.width / e.heads.max(1)).max(1),
        seq_len: e.seq_len,
        templates: e.templates,
        positional_rank: e.positional_rank,
        vocab: e.vocab,
        embedding,
        position: one_based("position", e.position)?,
        coordinate: one_based("coordinate", e.coordinate)?,
        tol: e.tol,
        partition,
    })
}

fn grid_options(e: &ExperimentArgs) -> Result<GridOptions, Failure> {
    Ok(GridOptions {
        cap: grid_cap_from_env()?,
        threads: Some(e.threads.max(1)),
    })
}

/// Largest `N` with `Z^N <= cap`.
fn max_order(z: usize, cap: u64) -> u32 {
    if z < 2 {
        return u32::MAX;
    }
    let mut n = 0;
    let mut size: u64 = 1;
    while let Some(next) = size.checked_mul(z as u64).filter(|&s| s <= cap) {
        size = next;
        n += 1;
    }
    n
}

fn cap_failure(e: SeptensorError, z: usize, cap: u64) -> Failure {
    let mut f = Failure::from(e);
    if f.code == EXIT_CAP {
        f.message += &format!(
            "\nsuggestion: with Z={z} use N <= {} (or lower Z), or set {GRID_CAP_ENV} above {cap}",
            max_order(z, cap)
        );
    }
    f
}

fn run_grid<T: Scalar>(cfg: &GridConfig, seed: u64, opts: GridOptions) -> Result<GridOutcome, SeptensorError> {
    cfg.run::<T>(seed, opts)
}

fn cmd_grid(a: &GridArgs, out: &mut dyn Write) -> Result<Produced, Failure> {
    let cfg = grid_config(&a.exp)?;
    let opts = grid_options(&a.exp)?;
    let res = match a.exp.precision {
        Precision::F64 => run_grid::<f64>(&cfg, a.seed, opts),
        Precision::F32 => run_grid::<f32>(&cfg, a.seed, opts),
    };
    let o = res.map_err(|e| cap_failure(e, cfg.templates, opts.cap))?;
    let mut s = format!("empirical rank: {}\n", o.empirical_rank);
    s += &format!("upper bound: {}\n", fmt_bound(&o.upper));
    match &o.lower {
        Some(l) => s += &format!("lower bound: {}\n", fmt_bound(&l.value)),
        None => s += "lower bound: not available for L < 2\n",
    }
    s += &format!("upper holds: {}\n", o.upper_holds);
    if let Some(h) = o.lower_holds {
        s += &format!("lower holds: {h}\n");
    }
    s += &format!("sandwich holds: {}\n", o.sandwich_holds());
    s += &format!("network fingerprint: {:016x}\n", o.fingerprint);
    emit(out, &s)?;
    let mut produced = Produced {
        seed: Some(a.seed),
        tolerance: Some(cfg.tol),
        ..Default::default()
    };
    if let Some(p) = &a.out {
        let mut w = csv::Writer::from_writer(Vec::new());
        let row = [
            cfg.depth.to_string(),
            cfg.width.to_string(),
            cfg.effective_rank().to_string(),
            cfg.heads.to_string(),
            cfg.attn_dim.to_string(),
            cfg.seq_len.to_string(),
            cfg.templates.to_string(),
            a.seed.to_string(),
            o.empirical_rank.to_string(),
            o.upper.ln.to_string(),
            o.lower.as_ref().map_or(String::new(), |l| l.value.ln.to_string()),
            o.sandwich_holds().to_string(),
        ];
        let header = [
            "L", "d_x", "r", "H", "d_a", "N", "Z", "seed", "empirical_rank", "log_upper_bound",
            "log_lower_bound", "sandwich_holds",
        ];
        w.write_record(header).map_err(|e| io_fail(p, e))?;
        w.write_record(&row).map_err(|e| io_fail(p, e))?;
        let bytes = w.into_inner().map_err(|e| io_fail(p, e))?;
        write_atomic(p, &bytes)?;
        produced.outputs.push(p.clone());
    }
    Ok(produced)
}

/// `1,2,4` or the inclusive range `1..4`.
fn parse_values(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::new(EXIT_USAGE, format!("--values: cannot parse {s:?}"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    let v = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err(bad());
    }
    Ok(v)
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<Produced, Failure> {
    let param: SweepParam = a
        .param
        .parse()
        .map_err(|e: SeptensorError| Failure::new(EXIT_USAGE, e.to_string()))?;
    let spec = SweepSpec {
        param,
        values: parse_values(&a.values)?,
        seeds: (a.seed_start..a.seed_start + a.seeds).collect(),
        base: grid_config(&a.exp)?,
    };
    let opts = grid_options(&a.exp)?;
    let z = spec.base.templates;
    let rows = match a.exp.precision {
        Precision::F64 => rank_sweep::<f64>(&spec, opts),
        Precision::F32 => rank_sweep::<f32>(&spec, opts),
    }
    .map_err(|e| cap_failure(e, z, opts.cap))?;
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf)?;
    write_atomic(&a.out, &buf)?;
    emit(out, &format!("wrote {} rows to {}\n", rows.len(), a.out.display()))?;
    Ok(Produced {
        outputs: vec![a.out.clone()],
        seed: Some(a.seed_start),
        tolerance: Some(spec.base.tol),
        ..Default::default()
    })
}

fn witness_text(bundle: &AssignmentBundle) -> String {
    let mut s = String::new();
    for c in &bundle.checks {
        s += &format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    s
}

fn matrix_text(a: &WitnessMatrix) -> String {
    let mut s = format!("A ({} x {}, squared row norm {}):\n", a.n_rows(), a.n_cols(), a.row_norm());
    for r in a.rows() {
        let cells: Vec<String> = r.iter().map(|x| x.to_string()).collect();
        s += &format!("  [{}]\n", cells.join(", "));
    }
    s
}

fn cmd_witness(a: &WitnessArgs, out: &mut dyn Write) -> Result<Produced, Failure> {
    let mut produced = Produced {
        seed: Some(a.seed),
        ..Default::default()
    };
    let mat = search_hadamard_witness(a.d, a.lambda, a.seed, a.trials)?;
    if a.mode == WitnessMode::Hadamard {
        let num = verify_hadamard_rank(&mat, a.lambda, RankTolerance::DEFAULT)?;
        let exact = verify_hadamard_rank_exact(&mat, a.lambda)?;
        let text = if a.json {
            serde_json::json!({"matrix": mat, "numerical_rank_full": num, "exact_rank_full": exact}).to_string() + "\n"
        } else {
            let mut s = matrix_text(&mat);
            s += &format!("{} numerical rank of (A A^T)^(.{}) is full\n", pass(num), a.lambda);
            s += &format!("{} exact rank of (A A^T)^(.{}) is full\n", pass(exact), a.lambda);
            s
        };
        emit(out, &text)?;
        if !(num && exact) {
            produced.code = EXIT_VERIFY;
        }
        return Ok(produced);
    }
    let large = a.mode == WitnessMode::LargeN;
    let rank = a.rank.unwrap_or(2 * a.d + a.heads + usize::from(large));
    let width = a.width.unwrap_or(a.heads * a.attn_dim);
    let params = WitnessParams {
        width,
        attn_dim: a.attn_dim,
        heads: a.heads,
        rank,
    };
    let bundle = match a.mode {
        WitnessMode::Vocab => build_vocab_witness(&mat, a.lambda, params)?,
        WitnessMode::Conv => {
            let din = a.din.unwrap_or(width.div_ceil(a.k.max(1)));
            build_conv_witness(&mat, a.lambda, params, a.k, din)?
        }
        _ => {
            let e = mat.max_entry().max(1) as usize;
            let n = a.seq_len.unwrap_or_else(|| {
                let need = (e * rank.saturating_sub(1 + a.heads)).max(2);
                need + need % 2
            });
            let part = Partition::odd_even(n).map_err(Failure::from)?;
            build_large_n_witness(&mat, params, &part, a.seed)?
        }
    };
    produced.tolerance = Some(RankTolerance::DEFAULT.value());
    let text = if a.json {
        serde_json::json!({"matrix": mat, "params": params, "kind": bundle.kind, "checks": bundle.checks}).to_string() + "\n"
    } else {
        matrix_text(&mat) + &witness_text(&bundle)
    };
    emit(out, &text)?;
    if !bundle.passed() {
        produced.code = EXIT_VERIFY;
    }
    Ok(produced)
}

fn pass(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_replay(path: Option<&Path>, out: &mut dyn Write) -> i32 {
    let Some(path) = path else {
        eprintln!("error: replay needs --manifest PATH");
        return EXIT_USAGE;
    };
    let m: RunManifest = match fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|s| serde_json::from_str(&s).map_err(|e| e.to_string()))
    {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    if m.tool != env!("CARGO_PKG_NAME") || m.subcommand == "replay" {
        eprintln!("error: {} is not a replayable {} manifest", path.display(), env!("CARGO_PKG_NAME"));
        return EXIT_USAGE;
    }
    let argv = std::iter::once(env!("CARGO_PKG_NAME").to_string()).chain(m.args);
    run(argv, out)
}
