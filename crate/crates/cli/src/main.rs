//! `hivtp` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 validation failure. Summaries go
//! to stdout as `key=value` lines; errors go to stderr.

mod bench;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hivtp::render::{render_heatmap, render_mask};
use hivtp::synth::{generate, quadrant_peaks, Peak, SynthSpec};
use hivtp::{
    compute_importance, indices_from_buffer, indices_to_buffer, prune_scores, read_hvtd, write_hvtd,
    AttentionStack, ImportanceScores, LayerSet, PruneConfig, Result, SelectionResult, TokenMatrix,
};

#[derive(Parser)]
#[command(name = "hivtp", version, about = "Attention-guided visual token pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-token importance scores from an attention stack.
    Score {
        #[arg(long)]
        attn: PathBuf,
        /// 1-based layers, "7-10" or "7,8,9,10".
        #[arg(long, default_value = "7-10")]
        layers: LayerSet,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select and gather the retained visual tokens.
    Prune(PruneArgs),
    /// Draw a score heatmap (PGM) or a selection mask (PPM).
    Render {
        #[command(subcommand)]
        kind: RenderKind,
    },
    /// Check the engine against the reference selector on seeded inputs.
    Verify(verify::VerifyArgs),
    /// Time the engine on synthetic stacks, optionally with a cost model.
    Bench(bench::BenchArgs),
    /// Write a synthetic attention stack and token matrix.
    Synth(SynthArgs),
}

/// Shared `r`, `k`, `c` flags.
#[derive(Args, Clone)]
pub struct StageArgs {
    /// Regions per side.
    #[arg(long)]
    pub regions: usize,
    /// Percentage of tokens kept by the region stage.
    #[arg(long)]
    pub topk: f64,
    /// Window side in tokens.
    #[arg(long)]
    pub window: usize,
}

impl StageArgs {
    pub fn config(&self, grid_side: usize, layers: LayerSet) -> Result<PruneConfig> {
        PruneConfig::new(grid_side, self.regions, self.topk, self.window, layers)
    }
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["attn", "scores"]))]
struct PruneArgs {
    #[arg(long)]
    attn: Option<PathBuf>,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    tokens: PathBuf,
    #[command(flatten)]
    stages: StageArgs,
    #[arg(long, default_value = "7-10")]
    layers: LayerSet,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum RenderKind {
    Heatmap {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 8)]
        cell_px: usize,
        #[arg(long)]
        out: PathBuf,
    },
    Mask {
        #[arg(long)]
        global: PathBuf,
        #[arg(long)]
        local: PathBuf,
        /// Grid side n.
        #[arg(long)]
        grid: usize,
        #[arg(long, default_value_t = 8)]
        cell_px: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// `key=value` file (seed, n, layers, heads, noise, dim, peak); replaces the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 24)]
    grid: usize,
    #[arg(long, default_value_t = 12)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Planted peak "row,col,amplitude,radius"; repeatable.
    #[arg(long)]
    peak: Vec<Peak>,
    /// Plant one peak per quadrant (amplitude 8, radius 1) drawn from the seed.
    #[arg(long)]
    quadrant_peaks: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Score { attn, layers, out } => score(&attn, &layers, &out)?,
        Command::Prune(args) => prune(&args)?,
        Command::Render { kind } => render(&kind)?,
        Command::Verify(args) => return verify::run(&args),
        Command::Bench(args) => bench::run(&args)?,
        Command::Synth(args) => synth(&args)?,
    }
    Ok(ExitCode::SUCCESS)
}

/// Worker cap from `HIVTP_THREADS`; unset or 0 means one per core.
pub fn worker_count() -> usize {
    std::env::var("HIVTP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn load_stack(path: &Path) -> Result<AttentionStack> {
    AttentionStack::from_buffer(read_hvtd(path)?)
}

fn score(attn: &Path, layers: &LayerSet, out: &Path) -> Result<()> {
    let stack = load_stack(attn)?;
    let scores = compute_importance(&stack, layers)?;
    write_hvtd(&scores.to_buffer(), out)?;
    println!("n={}", scores.grid_side());
    println!("layers={layers}");
    println!("score_sum={:.9}", scores.sum());
    Ok(())
}

fn prune(args: &PruneArgs) -> Result<()> {
    let tokens = TokenMatrix::from_buffer(read_hvtd(&args.tokens)?)?;
    let (scores, computed) = match (&args.attn, &args.scores) {
        (Some(attn), _) => (compute_importance(&load_stack(attn)?, &args.layers)?, true),
        (None, Some(path)) => (ImportanceScores::from_buffer(&read_hvtd(path)?)?, false),
        (None, None) => unreachable!("clap enforces one source"),
    };
    let config = args.stages.config(scores.grid_side(), args.layers.clone())?;
    let out = prune_scores(scores, &tokens, &config)?;
    let sel = &out.selection;

    fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;
    write_hvtd(&indices_to_buffer(sel.final_indices()), dir.join("indices.hvtd"))?;
    write_hvtd(&indices_to_buffer(sel.global_indices()), dir.join("global.hvtd"))?;
    write_hvtd(&indices_to_buffer(sel.local_indices()), dir.join("local.hvtd"))?;
    write_hvtd(&out.retained.to_buffer(), dir.join("retained.hvtd"))?;
    if computed {
        write_hvtd(&out.scores.to_buffer(), dir.join("scores.hvtd"))?;
    }
    let summary = sel.summary(&config);
    fs::write(dir.join("summary.txt"), format!("# {config}\n{summary}"))?;
    print!("{summary}");
    Ok(())
}

fn render(kind: &RenderKind) -> Result<()> {
    match kind {
        RenderKind::Heatmap { scores, cell_px, out } => {
            let s = ImportanceScores::from_buffer(&read_hvtd(scores)?)?;
            let n = s.grid_side();
            let comment = format!("heatmap n={n} cell_px={cell_px} scores={}", scores.display());
            fs::write(out, render_heatmap(s.values(), n, *cell_px, &comment)?)?;
            println!("n={n}");
        }
        RenderKind::Mask {
            global,
            local,
            grid,
            cell_px,
            out,
        } => {
            let g = indices_from_buffer(&read_hvtd(global)?)?;
            let l = indices_from_buffer(&read_hvtd(local)?)?;
            let sel = SelectionResult::from_sets(g, l, grid * grid)?;
            let comment = format!(
                "mask n={grid} cell_px={cell_px} p_g={} p_l={} p={}",
                sel.p_global(),
                sel.p_local(),
                sel.p()
            );
            fs::write(out, render_mask(&sel, *grid, *cell_px, &comment)?)?;
            println!("n={grid}");
            println!("p={}", sel.p());
        }
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = match &args.config {
        Some(path) => SynthSpec::from_kv(&fs::read_to_string(path)?)?,
        None => {
            let mut peaks = args.peak.clone();
            if args.quadrant_peaks {
                peaks.extend(quadrant_peaks(args.grid, args.seed, 8.0, 1.0)?);
            }
            let mut spec = SynthSpec::new(args.seed, args.grid, args.layers, args.heads)
                .with_peaks(peaks)
                .with_noise(args.noise);
            spec.embed_dim = args.dim;
            spec
        }
    };
    let (stack, tokens) = generate(&spec)?;
    fs::create_dir_all(&args.out_dir)?;
    write_hvtd(&stack.to_buffer(), args.out_dir.join("attn.hvtd"))?;
    write_hvtd(&tokens.to_buffer(), args.out_dir.join("tokens.hvtd"))?;
    println!("seed={}", spec.seed);
    println!("n={}", spec.grid_side);
    println!("layers={}", spec.layers);
    println!("heads={}", spec.heads);
    println!("dim={}", spec.embed_dim);
    for p in &spec.peaks {
        println!("peak={},{},{},{}", p.row, p.col, p.amplitude, p.radius);
    }
    Ok(())
}
