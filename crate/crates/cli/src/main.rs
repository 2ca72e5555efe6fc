use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use nca_core::complexity::ComplexityHistogram;
use nca_core::corpus::zipf::zipf_report_for;
use nca_core::corpus::{
    generate_corpus, generate_dyck, render_trajectory, DyckConfig, RenderFormat, Rendered, Shard, ShardKind,
};
use nca_core::metrics::{compare_arms, read_curves, Crossing, Stage, TrainingCurve};
use nca_core::{gzip_ratio, ComplexityBand, Error, GenConfig, Result, Trajectory};

#[derive(Parser)]
#[command(
    name = "ncagen",
    version,
    about = "Generate and inspect NCA pre-pre-training corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a complexity-filtered NCA corpus shard and its stats sidecar.
    Generate(GenerateArgs),
    /// Generate a balanced k-Dyck baseline shard.
    Dyck(DyckArgs),
    /// Corpus statistics: rank-frequency fit and gzip-ratio histogram.
    Stats(StatsArgs),
    /// Render one stored trajectory as ASCII or PGM frames.
    Render(RenderArgs),
    /// Print a shard header and its first sequence.
    Inspect(InspectArgs),
    /// Compare a treated arm against a scratch baseline from JSON-lines curve logs.
    Compare(CompareArgs),
}

/// `HxW`, e.g. `12x12`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Dims(usize, usize);

impl FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (h, w) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
        Ok(Dims(parse(h)?, parse(w)?))
    }
}

#[derive(clap::Args)]
struct GenerateArgs {
    /// Alphabet size.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value = "12x12")]
    grid: Dims,
    #[arg(long, default_value = "2x2")]
    patch: Dims,
    /// Gzip-ratio band in percent, `LO-HI` or `LO+`.
    #[arg(long, default_value = "50+")]
    band: ComplexityBand,
    /// Token budget; rounded up to whole sequences.
    #[arg(long)]
    tokens: u64,
    /// Maximum sequence length; the rollout length is derived from it.
    #[arg(long, default_value_t = 1024)]
    seq_len: usize,
    #[arg(long, default_value_t = 1e-3)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(clap::Args)]
struct DyckArgs {
    /// Number of bracket types.
    #[arg(long, default_value_t = 128)]
    k: u16,
    #[arg(long)]
    tokens: u64,
    #[arg(long, default_value_t = 1024)]
    seq_len: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of opening when both moves are feasible.
    #[arg(long, default_value_t = 0.5)]
    p_open: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(clap::Args)]
struct StatsArgs {
    shard: PathBuf,
    /// Rank-frequency table and log-log fit.
    #[arg(long)]
    zipf: bool,
    /// Histogram of per-sequence gzip ratios (NCA shards only).
    #[arg(long)]
    gzip_hist: bool,
    /// Count grid delimiters in the rank-frequency table.
    #[arg(long)]
    include_delimiters: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Ascii,
    Pgm,
}

#[derive(clap::Args)]
struct RenderArgs {
    shard: PathBuf,
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[arg(long, value_enum, default_value = "ascii")]
    format: FormatArg,
    /// Directory for PGM frames.
    #[arg(long, default_value = "frames")]
    out_dir: PathBuf,
}

#[derive(clap::Args)]
struct InspectArgs {
    shard: PathBuf,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CrossingArg {
    Interpolated,
    FirstLogged,
}

#[derive(clap::Args)]
struct CompareArgs {
    /// JSON-lines curve logs; records from all files are pooled.
    #[arg(required = true)]
    curves: Vec<PathBuf>,
    /// Label of the scratch baseline arm.
    #[arg(long)]
    baseline: String,
    /// Label of the treated arm.
    #[arg(long)]
    treated: String,
    /// Pre-pre-training tokens of the treated arm. Defaults to the largest
    /// `tokens_seen` among its pre-pre-training curves.
    #[arg(long)]
    ppt_tokens: Option<u64>,
    #[arg(long, value_enum, default_value = "interpolated")]
    crossing: CrossingArg,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ncagen: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Dyck(a) => dyck(a),
        Command::Stats(a) => stats(a),
        Command::Render(a) => render(a),
        Command::Inspect(a) => inspect(a),
        Command::Compare(a) => compare(a),
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn out(text: &str) -> Result<()> {
    let mut stdout = io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn emit(value: &Value, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => fs::write(p, text)?,
        None => out(&text)?,
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let config = GenConfig {
        alphabet_n: a.n,
        grid_h: a.grid.0,
        grid_w: a.grid.1,
        patch_h: a.patch.0,
        patch_w: a.patch.1,
        band: a.band,
        max_seq_len: a.seq_len,
        temperature: a.temperature,
        master_seed: a.seed,
        ..GenConfig::default()
    };
    let stats = generate_corpus(&config, a.tokens, &a.out, a.workers)?;
    eprintln!(
        "wrote {} sequences ({} tokens) to {}, acceptance rate {:.3}, {:.0} tokens/s",
        stats.num_sequences,
        stats.total_tokens,
        a.out.display(),
        stats.acceptance_rate,
        stats.tokens_per_sec
    );
    Ok(())
}

fn dyck(a: DyckArgs) -> Result<()> {
    let config = DyckConfig {
        k: a.k,
        token_budget: a.tokens,
        seq_len: a.seq_len,
        seed: a.seed,
        p_open: a.p_open,
    };
    let summary = generate_dyck(&config, &a.out, a.workers)?;
    emit(&serde_json::to_value(summary)?, None)
}

fn stats(a: StatsArgs) -> Result<()> {
    let shard = Shard::open(&a.shard)?;
    let (zipf, hist) = if a.zipf || a.gzip_hist {
        (a.zipf, a.gzip_hist)
    } else {
        (true, matches!(shard.kind(), ShardKind::Nca(_)))
    };
    let mut report = json!({
        "shard": a.shard,
        "header": shard.header,
        "num_sequences": shard.num_sequences(),
        "total_tokens": shard.tokens().len(),
    });
    if zipf {
        report["zipf"] = serde_json::to_value(zipf_report_for(&shard, a.include_delimiters))?;
    }
    if hist {
        if !matches!(shard.kind(), ShardKind::Nca(_)) {
            return Err(Error::InvalidConfig("--gzip-hist needs an NCA shard".into()));
        }
        let ratios = (0..shard.num_sequences())
            .map(|i| Ok(gzip_ratio(&Trajectory::new(0, shard.grids(i)?))))
            .collect::<Result<Vec<f64>>>()?;
        report["gzip_histogram"] = serde_json::to_value(ComplexityHistogram::from_ratios(&ratios))?;
    }
    emit(&report, a.json.as_deref())
}

fn render(a: RenderArgs) -> Result<()> {
    let format = match a.format {
        FormatArg::Ascii => RenderFormat::Ascii,
        FormatArg::Pgm => RenderFormat::PgmFrames,
    };
    match render_trajectory(&a.shard, a.index, format, &a.out_dir)? {
        Rendered::Ascii(text) => out(&text)?,
        Rendered::Frames(paths) => {
            eprintln!("wrote {} frames to {}", paths.len(), a.out_dir.display());
        }
    }
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    let shard = Shard::open(&a.shard)?;
    let h = shard.header;
    let first = if shard.num_sequences() > 0 {
        Some(shard.sequence(0)?)
    } else {
        None
    };
    let kind = match shard.kind() {
        ShardKind::Nca(v) => json!({
            "type": "nca",
            "patch_vocab_size": v.patch_vocab_size,
            "grid_open_id": v.grid_open_id(),
            "grid_close_id": v.grid_close_id(),
            "total_vocab": v.total_vocab(),
        }),
        ShardKind::Dyck { k } => json!({ "type": "dyck", "k": k }),
    };
    if a.json {
        return emit(&json!({ "header": h, "kind": kind, "first_sequence": first }), None);
    }

    let mut text = String::new();
    let fields = serde_json::to_value(h)?;
    for (key, value) in fields.as_object().into_iter().flatten() {
        writeln!(text, "{key:>18}: {value}").unwrap();
    }
    for (key, value) in kind.as_object().into_iter().flatten() {
        writeln!(text, "{key:>18}: {value}").unwrap();
    }
    if let Some(tokens) = first {
        // One grid block (or 32 Dyck tokens) per line.
        let width = h.block_len().unwrap_or(32);
        writeln!(text, "sequence 0:").unwrap();
        for row in tokens.chunks(width) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            writeln!(text, "  {}", line.join(" ")).unwrap();
        }
    }
    out(&text)
}

fn compare(a: CompareArgs) -> Result<()> {
    let mut curves: Vec<TrainingCurve> = Vec::new();
    for path in &a.curves {
        curves.extend(read_curves(path)?);
    }
    let arm = |label: &str| -> Vec<TrainingCurve> {
        curves
            .iter()
            .filter(|c| c.label == label && c.stage == Stage::PreTraining)
            .cloned()
            .collect()
    };
    let ppt_tokens = match a.ppt_tokens {
        Some(t) => t,
        None => curves
            .iter()
            .filter(|c| c.label == a.treated && c.stage == Stage::PrePreTraining)
            .filter_map(|c| c.points().last().map(|p| p.tokens_seen))
            .max()
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "no pre-pre-training curve for {:?}; pass --ppt-tokens",
                    a.treated
                ))
            })?,
    };
    let crossing = match a.crossing {
        CrossingArg::Interpolated => Crossing::Interpolated,
        CrossingArg::FirstLogged => Crossing::FirstLogged,
    };
    let report = compare_arms(&arm(&a.baseline), &arm(&a.treated), ppt_tokens, crossing)?;
    emit(&serde_json::to_value(report)?, a.json.as_deref())
}
