use std::collections::BTreeSet;
use std::ops::RangeInclusive;
use std::process::ExitCode;
use std::thread;

use clap::Args;
use hivtp::synth::{generate, oracle_prune_with, SplitMix64, SynthSpec, TieBreak};
use hivtp::{
    compute_importance, partition_regions, partition_windows, region_quotas, select, ImportanceScores,
    LayerSet, PruneConfig, Result,
};

use crate::{worker_count, StageArgs};

#[derive(Args)]
pub struct VerifyArgs {
    /// Inclusive seed range "A..B".
    #[arg(long, value_parser = parse_seed_range)]
    seeds: RangeInclusive<u64>,
    #[arg(long)]
    grid: usize,
    #[command(flatten)]
    stages: StageArgs,
    /// Reverse the reference tie-break; every run should then fail.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn parse_seed_range(s: &str) -> std::result::Result<RangeInclusive<u64>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<u64>().map_err(|_| format!("bad seed {v:?}"));
    let (a, b) = (parse(a)?, parse(b.trim_start_matches('='))?);
    if a > b {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok(a..=b)
}

/// Scores drawn from {0, 1, 2, 3}: nearly every selection hits a tie.
fn tied_scores(seed: u64, n: usize) -> ImportanceScores {
    let mut rng = SplitMix64::new(seed ^ 0x7135_EED5);
    ImportanceScores::from_vec((0..n * n).map(|_| rng.next_below(4) as f64).collect())
        .expect("small non-negative integers are valid scores")
}

fn check_scores(
    scores: &ImportanceScores,
    config: &PruneConfig,
    tie: TieBreak,
    what: &str,
) -> Result<Vec<String>> {
    let mut problems = Vec::new();
    let sel = select(scores, config)?;
    if oracle_prune_with(scores.values(), config, tie)? != sel {
        problems.push(format!("{what}: differs from reference"));
    }
    let global: BTreeSet<usize> = sel.global_indices().iter().copied().collect();
    let local: BTreeSet<usize> = sel.local_indices().iter().copied().collect();
    if !global.is_disjoint(&local) {
        problems.push(format!("{what}: stages overlap"));
    }
    if sel.p_global() != config.global_budget() {
        problems.push(format!(
            "{what}: p_g={} budget={}",
            sel.p_global(),
            config.global_budget()
        ));
    }
    let regions = partition_regions(config.grid_side(), config.region_divisor())?;
    for (b, (block, q)) in regions.blocks().iter().zip(region_quotas(config)?).enumerate() {
        let kept = block.iter().filter(|i| global.contains(i)).count();
        if kept != q {
            problems.push(format!("{what}: region {b} kept {kept}, quota {q}"));
        }
    }
    let windows = partition_windows(config.grid_side(), config.window_side())?;
    if windows
        .blocks()
        .iter()
        .any(|w| w.iter().filter(|i| local.contains(i)).count() > 1)
    {
        problems.push(format!("{what}: window kept more than one token"));
    }
    if sel.p() > config.max_retained() || sel.retain_ratio() > config.max_retain_ratio() {
        problems.push(format!(
            "{what}: p={} above p_max={}",
            sel.p(),
            config.max_retained()
        ));
    }
    Ok(problems)
}

fn check_seed(seed: u64, config: &PruneConfig, tie: TieBreak) -> Result<Vec<String>> {
    let n = config.grid_side();
    let (stack, _) = generate(&SynthSpec::new(seed, n, 2, 2))?;
    let synthetic = compute_importance(&stack, config.layers())?;
    let mut problems = check_scores(&synthetic, config, tie, "synthetic")?;
    problems.extend(check_scores(&tied_scores(seed, n), config, tie, "tied")?);
    Ok(problems)
}

pub fn run(args: &VerifyArgs) -> Result<ExitCode> {
    let config = args.stages.config(args.grid, LayerSet::range(1, 2)?)?;
    let tie = if args.inject_fault {
        TieBreak::HigherIndex
    } else {
        TieBreak::LowerIndex
    };
    let seeds: Vec<u64> = args.seeds.clone().collect();
    let chunk = seeds.len().div_ceil(worker_count().min(seeds.len()));
    let results: Vec<Result<Vec<String>>> = thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                let config = &config;
                scope.spawn(move || {
                    part.iter()
                        .map(|&s| check_seed(s, config, tie))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("verify worker panicked"))
            .collect()
    });

    println!("# {config}");
    let mut failed = 0;
    for (seed, result) in seeds.iter().zip(results) {
        let problems = result?;
        if problems.is_empty() {
            println!("seed={seed} PASS");
        } else {
            failed += 1;
            println!("seed={seed} FAIL {}", problems.join("; "));
        }
    }
    println!("passed={}", seeds.len() - failed);
    println!("failed={failed}");
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
