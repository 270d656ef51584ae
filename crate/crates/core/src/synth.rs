//! Deterministic synthetic attention stacks with planted hot-spots, and a
//! deliberately naive reference implementation of the pruning stages.
//!
//! Every random draw comes from [`SplitMix64`], so fixtures are reproducible
//! bit-for-bit by any implementation that follows the same draw order:
//! attention entries in `[layer][head][row][col]` order, then token
//! embeddings row-major. Normals use Box-Muller on two consecutive draws.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::str::FromStr;

use crate::error::{HivtpError, Result};
use crate::importance::AttentionStack;
use crate::pruner::{PruneConfig, SelectionResult};
use crate::tokens::TokenMatrix;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` (`bound > 0`).
    pub fn next_below(&mut self, bound: u64) -> u64 {
        ((u128::from(self.next_u64()) * u128::from(bound)) >> 64) as u64
    }

    /// Standard normal via Box-Muller; consumes exactly two draws.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }
}

/// An attention hot-spot centred on grid cell `(row, col)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub row: usize,
    pub col: usize,
    pub amplitude: f64,
    pub radius: f64,
}

impl Peak {
    pub fn index(&self, grid_side: usize) -> usize {
        self.row * grid_side + self.col
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub grid_side: usize,
    pub layers: usize,
    pub heads: usize,
    pub peaks: Vec<Peak>,
    pub noise_scale: f64,
    pub embed_dim: usize,
}

pub const DEFAULT_EMBED_DIM: usize = 16;

impl SynthSpec {
    pub fn new(seed: u64, grid_side: usize, layers: usize, heads: usize) -> Self {
        Self {
            seed,
            grid_side,
            layers,
            heads,
            peaks: Vec::new(),
            noise_scale: 0.1,
            embed_dim: DEFAULT_EMBED_DIM,
        }
    }

    pub fn with_peaks(mut self, peaks: Vec<Peak>) -> Self {
        self.peaks = peaks;
        self
    }

    pub fn with_noise(mut self, noise_scale: f64) -> Self {
        self.noise_scale = noise_scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HivtpError::InvalidSpec(msg));
        if self.grid_side < 2 {
            return bad(format!("grid side must be >= 2, got {}", self.grid_side));
        }
        if self.layers == 0 || self.heads == 0 {
            return bad("need at least one layer and one head".into());
        }
        if self.embed_dim == 0 {
            return bad("embedding width must be positive".into());
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise scale must be >= 0, got {}", self.noise_scale));
        }
        for p in &self.peaks {
            if p.row >= self.grid_side || p.col >= self.grid_side {
                return bad(format!("peak ({}, {}) outside the grid", p.row, p.col));
            }
            if !(p.amplitude > 0.0 && p.amplitude.is_finite()) {
                return bad(format!("peak amplitude must be > 0, got {}", p.amplitude));
            }
            if !(p.radius > 0.0 && p.radius.is_finite()) {
                return bad(format!("peak radius must be > 0, got {}", p.radius));
            }
        }
        Ok(())
    }

    /// Parses `key=value` lines: `seed`, `n`, `layers`, `heads`, `noise`,
    /// `dim`, and repeatable `peak=row,col,amplitude,radius`. Blank lines and
    /// `#` comments are skipped.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut spec = SynthSpec::new(0, 0, 0, 0);
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HivtpError::InvalidSpec(format!("expected key=value, got {line:?}")))?;
            let value = value.trim();
            match key.trim() {
                "seed" => spec.seed = parse_field(key, value)?,
                "n" => spec.grid_side = parse_field(key, value)?,
                "layers" => spec.layers = parse_field(key, value)?,
                "heads" => spec.heads = parse_field(key, value)?,
                "noise" => spec.noise_scale = parse_field(key, value)?,
                "dim" => spec.embed_dim = parse_field(key, value)?,
                "peak" => spec.peaks.push(value.parse()?),
                other => return Err(HivtpError::InvalidSpec(format!("unknown key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_field<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HivtpError::InvalidSpec(format!("cannot parse {key}={value:?}")))
}

impl FromStr for Peak {
    type Err = HivtpError;

    /// `row,col,amplitude,radius`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(HivtpError::InvalidSpec(format!(
                "peak needs row,col,amplitude,radius, got {s:?}"
            )));
        }
        Ok(Peak {
            row: parse_field("peak row", parts[0])?,
            col: parse_field("peak col", parts[1])?,
            amplitude: parse_field("peak amplitude", parts[2])?,
            radius: parse_field("peak radius", parts[3])?,
        })
    }
}

/// One peak per quadrant, each at least one cell in from its quadrant's
/// edges, positions drawn from `seed`. Requires an even `grid_side >= 6`.
pub fn quadrant_peaks(grid_side: usize, seed: u64, amplitude: f64, radius: f64) -> Result<Vec<Peak>> {
    if grid_side < 6 || !grid_side.is_multiple_of(2) {
        return Err(HivtpError::InvalidSpec(format!(
            "quadrant peaks need an even grid side >= 6, got {grid_side}"
        )));
    }
    let half = grid_side / 2;
    let span = (half - 2) as u64;
    let mut rng = SplitMix64::new(seed);
    let mut peaks = Vec::with_capacity(4);
    for (qr, qc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let row = qr * half + 1 + rng.next_below(span) as usize;
        let col = qc * half + 1 + rng.next_below(span) as usize;
        peaks.push(Peak {
            row,
            col,
            amplitude,
            radius,
        });
    }
    Ok(peaks)
}

/// Sum of Gaussian bumps at every visual token.
fn bump_field(spec: &SynthSpec) -> Vec<f64> {
    let n = spec.grid_side;
    let mut field = vec![0.0; n * n];
    for (i, f) in field.iter_mut().enumerate() {
        let (r, c) = ((i / n) as f64, (i % n) as f64);
        for p in &spec.peaks {
            let d2 = (r - p.row as f64).powi(2) + (c - p.col as f64).powi(2);
            *f += p.amplitude * (-d2 / (2.0 * p.radius * p.radius)).exp();
        }
    }
    field
}

/// Builds a row-stochastic attention stack and a standard-normal token matrix.
///
/// Each row is `softmax(bump + noise_scale * z)`; the CLS column gets no bump.
pub fn generate(spec: &SynthSpec) -> Result<(AttentionStack, TokenMatrix)> {
    spec.validate()?;
    let n_tokens = spec.grid_side * spec.grid_side;
    let width = n_tokens + 1;
    let bump = bump_field(spec);
    let mut rng = SplitMix64::new(spec.seed);
    let mut weights = Vec::with_capacity(spec.layers * spec.heads * width * width);
    let mut logits = vec![0.0f64; width];
    for _ in 0..spec.layers * spec.heads * width {
        for (col, logit) in logits.iter_mut().enumerate() {
            let base = if col == 0 { 0.0 } else { bump[col - 1] };
            *logit = base + spec.noise_scale * rng.next_normal();
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for logit in logits.iter_mut() {
            *logit = (*logit - max).exp();
            total += *logit;
        }
        weights.extend(logits.iter().map(|&e| (e / total) as f32));
    }
    let embeddings = (0..n_tokens * spec.embed_dim)
        .map(|_| rng.next_normal() as f32)
        .collect();
    let stack = AttentionStack::from_f32(spec.layers, spec.heads, width, weights)?;
    let tokens = TokenMatrix::from_f32(n_tokens, spec.embed_dim, embeddings)?;
    Ok((stack, tokens))
}

/// Which index wins a score tie in the reference implementation. Only
/// `LowerIndex` matches the engine; `HigherIndex` exists so verification
/// runs can prove they detect a broken tie-break.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    LowerIndex,
    HigherIndex,
}

pub fn oracle_prune(scores: &[f64], config: &PruneConfig) -> Result<SelectionResult> {
    oracle_prune_with(scores, config, TieBreak::LowerIndex)
}

/// Reference selection: full sorts per region, linear scans per window.
pub fn oracle_prune_with(scores: &[f64], config: &PruneConfig, tie: TieBreak) -> Result<SelectionResult> {
    let n = config.grid_side();
    let total = n * n;
    if scores.len() != total {
        return Err(HivtpError::ShapeMismatch(format!(
            "{} scores for a {n}x{n} grid",
            scores.len()
        )));
    }
    let better = |a: usize, b: usize| -> bool {
        // does token a outrank token b?
        if scores[a] != scores[b] {
            return scores[a] > scores[b];
        }
        match tie {
            TieBreak::LowerIndex => a < b,
            TieBreak::HigherIndex => a > b,
        }
    };

    let r = config.region_divisor();
    let region_side = n / r;
    let budget = ((total as f64) * config.top_percent() / 100.0 + 1e-9).floor() as usize;
    let regions = r * r;

    let mut global = BTreeSet::new();
    for region in 0..regions {
        let quota = budget / regions + if region < budget % regions { 1 } else { 0 };
        let (r0, c0) = ((region / r) * region_side, (region % r) * region_side);
        let mut members = Vec::new();
        for row in r0..r0 + region_side {
            for col in c0..c0 + region_side {
                members.push(row * n + col);
            }
        }
        members.sort_by(|&a, &b| {
            if better(a, b) {
                std::cmp::Ordering::Less
            } else if better(b, a) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        global.extend(members.into_iter().take(quota));
    }

    let c = config.window_side();
    let mut local = BTreeSet::new();
    for wr in (0..n).step_by(c) {
        for wc in (0..n).step_by(c) {
            let mut best: Option<usize> = None;
            for row in wr..wr + c {
                for col in wc..wc + c {
                    let t = row * n + col;
                    if global.contains(&t) {
                        continue;
                    }
                    best = match best {
                        Some(b) if !better(t, b) => Some(b),
                        _ => Some(t),
                    };
                }
            }
            local.extend(best);
        }
    }
    SelectionResult::from_sets(global.into_iter().collect(), local.into_iter().collect(), total)
}
