//! Hierarchical token pruning over the `n x n` token grid.
//!
//! Stage one splits the grid into `r * r` equal regions and keeps the
//! highest-scoring tokens of each region up to its quota. Stage two splits
//! the grid into `c x c` windows and keeps, per window, the single best
//! token not already kept. The union is returned in ascending index order.
//!
//! All indices are 0-based and row-major over the grid; the CLS token never
//! enters index space. Ties always go to the lower index.

use std::cmp::Ordering;
use std::fmt;
use std::thread;

use crate::error::{HivtpError, Result};
use crate::importance::{compute_importance, AttentionStack, ImportanceScores, LayerSet};
use crate::tokens::TokenMatrix;

/// Budgets that land within this of an integer are snapped to it before flooring.
const BUDGET_EPSILON: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct PruneConfig {
    grid_side: usize,
    region_divisor: usize,
    top_percent: f64,
    window_side: usize,
    layers: LayerSet,
}

impl PruneConfig {
    pub fn new(
        grid_side: usize,
        region_divisor: usize,
        top_percent: f64,
        window_side: usize,
        layers: LayerSet,
    ) -> Result<Self> {
        if grid_side == 0 {
            return Err(HivtpError::InvalidShape("grid side must be positive".into()));
        }
        check_divides(grid_side, region_divisor, "region divisor")?;
        check_divides(grid_side, window_side, "window side")?;
        if !(top_percent > 0.0 && top_percent <= 100.0) {
            return Err(HivtpError::InvalidPercent(top_percent));
        }
        Ok(Self {
            grid_side,
            region_divisor,
            top_percent,
            window_side,
            layers,
        })
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn region_divisor(&self) -> usize {
        self.region_divisor
    }

    pub fn top_percent(&self) -> f64 {
        self.top_percent
    }

    pub fn window_side(&self) -> usize {
        self.window_side
    }

    pub fn layers(&self) -> &LayerSet {
        &self.layers
    }

    pub fn with_grid_side(&self, grid_side: usize) -> Result<Self> {
        Self::new(
            grid_side,
            self.region_divisor,
            self.top_percent,
            self.window_side,
            self.layers.clone(),
        )
    }

    /// `N = n * n`.
    pub fn token_count(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn region_count(&self) -> usize {
        self.region_divisor * self.region_divisor
    }

    /// `N_r = (n / r)^2`.
    pub fn region_size(&self) -> usize {
        let side = self.grid_side / self.region_divisor;
        side * side
    }

    /// `N_w = (n / c)^2`.
    pub fn window_count(&self) -> usize {
        let per_edge = self.grid_side / self.window_side;
        per_edge * per_edge
    }

    /// `floor(N * k / 100)`: the exact number of globally retained tokens.
    pub fn global_budget(&self) -> usize {
        let raw = self.token_count() as f64 * self.top_percent / 100.0;
        let budget = (raw + BUDGET_EPSILON).floor() as usize;
        budget.min(self.token_count())
    }

    /// Upper bound on retained tokens: global budget plus one per window.
    pub fn max_retained(&self) -> usize {
        self.global_budget() + self.window_count()
    }

    pub fn max_retain_ratio(&self) -> f64 {
        self.max_retained() as f64 / self.token_count() as f64
    }
}

impl fmt::Display for PruneConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={} r={} k={} c={} layers={}",
            self.grid_side, self.region_divisor, self.top_percent, self.window_side, self.layers
        )
    }
}

fn check_divides(n: usize, divisor: usize, what: &'static str) -> Result<()> {
    if divisor == 0 || !n.is_multiple_of(divisor) {
        return Err(HivtpError::NotDivisible { n, divisor, what });
    }
    Ok(())
}

/// Equal square blocks tiling the grid, enumerated row-major. Each block
/// lists its linear indices in ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridPartition {
    grid_side: usize,
    block_side: usize,
    blocks: Vec<Vec<usize>>,
}

pub type RegionPartition = GridPartition;
pub type WindowPartition = GridPartition;

impl GridPartition {
    fn tile(grid_side: usize, block_side: usize) -> Self {
        let per_edge = grid_side / block_side;
        let mut blocks = Vec::with_capacity(per_edge * per_edge);
        for block_row in 0..per_edge {
            for block_col in 0..per_edge {
                let mut block = Vec::with_capacity(block_side * block_side);
                for row in block_row * block_side..(block_row + 1) * block_side {
                    let start = row * grid_side + block_col * block_side;
                    block.extend(start..start + block_side);
                }
                blocks.push(block);
            }
        }
        Self {
            grid_side,
            block_side,
            blocks,
        }
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// `r * r` regions of side `n / r`.
pub fn partition_regions(n: usize, r: usize) -> Result<RegionPartition> {
    check_divides(n, r, "region divisor")?;
    Ok(GridPartition::tile(n, n / r))
}

/// `(n / c)^2` windows of side `c`.
pub fn partition_windows(n: usize, c: usize) -> Result<WindowPartition> {
    check_divides(n, c, "window side")?;
    Ok(GridPartition::tile(n, c))
}

/// Splits the global budget across regions: an equal base share, with the
/// remainder handed out one token each to the first regions in row-major order.
pub fn region_quotas(config: &PruneConfig) -> Result<Vec<usize>> {
    let regions = config.region_count();
    let budget = config.global_budget();
    let base = budget / regions;
    let extra = budget % regions;
    let quotas: Vec<usize> = (0..regions).map(|i| base + usize::from(i < extra)).collect();
    let region_size = config.region_size();
    if let Some(&quota) = quotas.iter().find(|&&q| q > region_size) {
        return Err(HivtpError::QuotaExceedsRegion { quota, region_size });
    }
    Ok(quotas)
}

/// Higher score first, then lower index.
fn rank(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b]
        .partial_cmp(&scores[a])
        .expect("scores are finite")
        .then(a.cmp(&b))
}

fn check_grid(scores: &ImportanceScores, partition: &GridPartition) -> Result<()> {
    if scores.grid_side() != partition.grid_side() {
        return Err(HivtpError::ShapeMismatch(format!(
            "scores cover a {0}x{0} grid, partition a {1}x{1} grid",
            scores.grid_side(),
            partition.grid_side()
        )));
    }
    Ok(())
}

/// Per-region top-quota selection, returned sorted.
pub fn global_retain(
    scores: &ImportanceScores,
    regions: &RegionPartition,
    quotas: &[usize],
) -> Result<Vec<usize>> {
    check_grid(scores, regions)?;
    if quotas.len() != regions.len() {
        return Err(HivtpError::ShapeMismatch(format!(
            "{} quotas for {} regions",
            quotas.len(),
            regions.len()
        )));
    }
    let s = scores.values();
    let mut kept = Vec::with_capacity(quotas.iter().sum());
    for (block, &quota) in regions.blocks().iter().zip(quotas) {
        if quota > block.len() {
            return Err(HivtpError::QuotaExceedsRegion {
                quota,
                region_size: block.len(),
            });
        }
        if quota == 0 {
            continue;
        }
        let mut candidates = block.clone();
        if quota < candidates.len() {
            candidates.select_nth_unstable_by(quota, |&a, &b| rank(s, a, b));
        }
        kept.extend_from_slice(&candidates[..quota]);
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Per-window argmax over tokens not already retained, returned sorted.
pub fn local_retain(
    scores: &ImportanceScores,
    windows: &WindowPartition,
    global_set: &[usize],
) -> Result<Vec<usize>> {
    check_grid(scores, windows)?;
    let n_tokens = scores.len();
    let mut taken = vec![false; n_tokens];
    for &i in global_set {
        *taken.get_mut(i).ok_or(HivtpError::IndexOutOfRange {
            index: i,
            count: n_tokens,
        })? = true;
    }
    let s = scores.values();
    let mut kept = Vec::with_capacity(windows.len());
    for block in windows.blocks() {
        let mut best: Option<usize> = None;
        for &t in block.iter().filter(|&&t| !taken[t]) {
            // blocks are ascending, so strict > keeps the lower index on ties
            if best.is_none_or(|b| s[t] > s[b]) {
                best = Some(t);
            }
        }
        kept.extend(best);
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Outcome of both stages. Index lists are ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionResult {
    token_count: usize,
    global: Vec<usize>,
    local: Vec<usize>,
    final_indices: Vec<usize>,
}

impl SelectionResult {
    /// Builds the result from the two stage outputs, rejecting overlaps,
    /// duplicates and out-of-range indices.
    pub fn from_sets(mut global: Vec<usize>, mut local: Vec<usize>, token_count: usize) -> Result<Self> {
        global.sort_unstable();
        local.sort_unstable();
        let mut seen = vec![false; token_count];
        for &i in global.iter().chain(&local) {
            let slot = seen.get_mut(i).ok_or(HivtpError::IndexOutOfRange {
                index: i,
                count: token_count,
            })?;
            if *slot {
                return Err(HivtpError::OverlapDetected(i));
            }
            *slot = true;
        }
        let final_indices = seen
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i))
            .collect();
        Ok(Self {
            token_count,
            global,
            local,
            final_indices,
        })
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    pub fn global_indices(&self) -> &[usize] {
        &self.global
    }

    pub fn local_indices(&self) -> &[usize] {
        &self.local
    }

    pub fn final_indices(&self) -> &[usize] {
        &self.final_indices
    }

    pub fn p_global(&self) -> usize {
        self.global.len()
    }

    pub fn p_local(&self) -> usize {
        self.local.len()
    }

    pub fn p(&self) -> usize {
        self.final_indices.len()
    }

    pub fn retain_ratio(&self) -> f64 {
        self.p() as f64 / self.token_count as f64
    }

    /// `key=value` lines: stage counts, realized ratio and configured bound.
    pub fn summary(&self, config: &PruneConfig) -> String {
        format!(
            "p_g={}\np_l={}\np={}\nr_retain={:.4}\nr_max={:.4}\np_max={}\nN={}\n",
            self.p_global(),
            self.p_local(),
            self.p(),
            self.retain_ratio(),
            config.max_retain_ratio(),
            config.max_retained(),
            self.token_count,
        )
    }
}

/// Combines the stages and gathers the retained token rows in index order.
pub fn finalize(
    global_set: &[usize],
    local_set: &[usize],
    tokens: &TokenMatrix,
) -> Result<(SelectionResult, TokenMatrix)> {
    let selection = SelectionResult::from_sets(global_set.to_vec(), local_set.to_vec(), tokens.rows())?;
    let retained = tokens.gather(selection.final_indices())?;
    Ok((selection, retained))
}

/// Both stages on precomputed scores.
pub fn select(scores: &ImportanceScores, config: &PruneConfig) -> Result<SelectionResult> {
    if scores.grid_side() != config.grid_side() {
        return Err(HivtpError::ShapeMismatch(format!(
            "scores cover a {0}x{0} grid, config expects {1}x{1}",
            scores.grid_side(),
            config.grid_side()
        )));
    }
    let regions = partition_regions(config.grid_side(), config.region_divisor())?;
    let quotas = region_quotas(config)?;
    let global = global_retain(scores, &regions, &quotas)?;
    let windows = partition_windows(config.grid_side(), config.window_side())?;
    let local = local_retain(scores, &windows, &global)?;
    SelectionResult::from_sets(global, local, scores.len())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneOutput {
    pub selection: SelectionResult,
    pub retained: TokenMatrix,
    pub scores: ImportanceScores,
}

/// Selection plus gather, starting from scores.
pub fn prune_scores(
    scores: ImportanceScores,
    tokens: &TokenMatrix,
    config: &PruneConfig,
) -> Result<PruneOutput> {
    if tokens.rows() != config.token_count() {
        return Err(HivtpError::ShapeMismatch(format!(
            "token matrix has {} rows, config expects {}",
            tokens.rows(),
            config.token_count()
        )));
    }
    let selection = select(&scores, config)?;
    let retained = tokens.gather(selection.final_indices())?;
    Ok(PruneOutput {
        selection,
        retained,
        scores,
    })
}

/// Scoring, both retaining stages and the final gather.
pub fn hivtp_prune(
    stack: &AttentionStack,
    tokens: &TokenMatrix,
    config: &PruneConfig,
) -> Result<PruneOutput> {
    if stack.grid_side() != config.grid_side() {
        return Err(HivtpError::ShapeMismatch(format!(
            "stack grid side {} does not match config grid side {}",
            stack.grid_side(),
            config.grid_side()
        )));
    }
    let scores = compute_importance(stack, config.layers())?;
    prune_scores(scores, tokens, config)
}

/// One outcome per image, in input order.
#[derive(Debug)]
pub struct BatchReport {
    pub outcomes: Vec<Result<PruneOutput>>,
}

impl BatchReport {
    pub fn failures(&self) -> impl Iterator<Item = (usize, &HivtpError)> {
        self.outcomes
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.as_ref().err().map(|e| (i, e)))
    }

    pub fn is_ok(&self) -> bool {
        self.outcomes.iter().all(Result::is_ok)
    }
}

pub fn prune_batch(images: &[(AttentionStack, TokenMatrix)], config: &PruneConfig) -> BatchReport {
    BatchReport {
        outcomes: images
            .iter()
            .map(|(stack, tokens)| hivtp_prune(stack, tokens, config))
            .collect(),
    }
}

/// Like [`prune_batch`], fanned out over up to `threads` workers. Each image
/// is processed independently, so outcomes do not depend on scheduling.
pub fn prune_batch_parallel(
    images: &[(AttentionStack, TokenMatrix)],
    config: &PruneConfig,
    threads: usize,
) -> BatchReport {
    let threads = threads.clamp(1, images.len().max(1));
    if threads == 1 {
        return prune_batch(images, config);
    }
    let chunk = images.len().div_ceil(threads);
    let outcomes = thread::scope(|scope| {
        let handles: Vec<_> = images
            .chunks(chunk)
            .map(|part| scope.spawn(move || prune_batch(part, config).outcomes))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("pruning worker panicked"))
            .collect()
    });
    BatchReport { outcomes }
}
