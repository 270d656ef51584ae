use std::fs::File;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use hivtp::costmodel::{fit, predict_speedup, read_measurements};
use hivtp::synth::{generate, SynthSpec};
use hivtp::{hivtp_prune, LayerSet, Result};

use crate::StageArgs;

const POOL: usize = 4;

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    grid: usize,
    #[arg(long, default_value_t = 100)]
    images: usize,
    #[command(flatten)]
    stages: StageArgs,
    #[arg(long, default_value = "7-10")]
    layers: LayerSet,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    /// `tokens,latency_ms[,tokens_per_s]` measurements to fit a cost model.
    #[arg(long)]
    cost_csv: Option<PathBuf>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len().is_multiple_of(2) {
        (xs[mid - 1] + xs[mid]) / 2.0
    } else {
        xs[mid]
    }
}

pub fn run(args: &BenchArgs) -> Result<()> {
    let config = args.stages.config(args.grid, args.layers.clone())?;
    let coeffs = match &args.cost_csv {
        Some(path) => Some(fit(&read_measurements(File::open(path)?)?)?),
        None => None,
    };
    if args.images == 0 {
        return Err(hivtp::HivtpError::InvalidSpec("need at least one image".into()));
    }
    let depth = *args
        .layers
        .indices()
        .iter()
        .max()
        .expect("layer sets are non-empty");
    let pool = (0..args.images.min(POOL) as u64)
        .map(|seed| generate(&SynthSpec::new(seed, args.grid, depth, args.heads)))
        .collect::<Result<Vec<_>>>()?;

    let mut times = Vec::with_capacity(args.images);
    let mut retained = Vec::with_capacity(args.images);
    for i in 0..args.images {
        let (stack, tokens) = &pool[i % pool.len()];
        let start = Instant::now();
        let out = hivtp_prune(stack, tokens, &config)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        retained.push(out.selection.p() as f64);
    }

    println!("# {config}");
    println!("images={}", args.images);
    println!("median_ms={:.4}", median(times.clone()));
    println!("total_ms={:.4}", times.iter().sum::<f64>());
    println!("median_p={}", median(retained));
    println!("p_max={}", config.max_retained());
    if let Some(coeffs) = coeffs {
        print!("{}", coeffs.to_kv());
        let before = config.token_count() as f64;
        let after = config.max_retained() as f64;
        let speedup = predict_speedup(&coeffs, before, after)?;
        println!("tokens_before={before}");
        println!("tokens_after={after}");
        println!("ttft_ratio={:.4}", speedup.ttft_ratio);
        if let Some(t) = speedup.throughput_ratio {
            println!("throughput_ratio={t:.4}");
        }
    }
    Ok(())
}
