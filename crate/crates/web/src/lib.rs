//! Browser bindings for the interactive demo in `www/`.
//!
//! Three operations: synthesize a score map, prune it with adjustable
//! `r`/`k`/`c`, and predict the cost-model speedup of a token count.

use hivtp::costmodel::{fit, predict_speedup, read_measurements};
use hivtp::render::normalize_scores;
use hivtp::synth::{generate, quadrant_peaks, SynthSpec};
use hivtp::{compute_importance, select, ImportanceScores, LayerSet, PruneConfig, Result};
use wasm_bindgen::prelude::*;

const LAYERS: usize = 4;
const HEADS: usize = 2;

pub const MASK_PRUNED: u8 = 0;
pub const MASK_GLOBAL: u8 = 1;
pub const MASK_LOCAL: u8 = 2;

fn js(e: hivtp::HivtpError) -> JsError {
    JsError::new(&e.to_string())
}

pub fn synth_scores_inner(seed: u32, grid: usize, planted: bool, noise: f64) -> Result<Vec<f64>> {
    let mut spec = SynthSpec::new(u64::from(seed), grid, LAYERS, HEADS).with_noise(noise);
    if planted {
        spec = spec.with_peaks(quadrant_peaks(grid, u64::from(seed), 8.0, 1.0)?);
    }
    let (stack, _) = generate(&spec)?;
    Ok(compute_importance(&stack, &LayerSet::range(1, LAYERS)?)?
        .values()
        .to_vec())
}

/// Importance scores of a seeded synthetic image, row-major `grid * grid`.
#[wasm_bindgen]
pub fn synth_scores(seed: u32, grid: usize, planted: bool, noise: f64) -> Result<Vec<f64>, JsError> {
    synth_scores_inner(seed, grid, planted, noise).map_err(js)
}

/// Gray levels 0..=255 for drawing a heatmap.
#[wasm_bindgen]
pub fn heatmap_levels(scores: &[f64]) -> Vec<u8> {
    normalize_scores(scores)
}

#[wasm_bindgen]
pub struct PruneView {
    mask: Vec<u8>,
    summary: String,
}

#[wasm_bindgen]
impl PruneView {
    /// Per token: 0 pruned, 1 kept by the region stage, 2 by the window stage.
    pub fn mask(&self) -> Vec<u8> {
        self.mask.clone()
    }

    /// `key=value` lines, config first.
    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

pub fn prune_mask_inner(scores: &[f64], regions: usize, topk: f64, window: usize) -> Result<PruneView> {
    let scores = ImportanceScores::from_vec(scores.to_vec())?;
    let n = scores.grid_side();
    let config = PruneConfig::new(n, regions, topk, window, LayerSet::range(1, LAYERS)?)?;
    let sel = select(&scores, &config)?;
    let mut mask = vec![MASK_PRUNED; n * n];
    for &i in sel.global_indices() {
        mask[i] = MASK_GLOBAL;
    }
    for &i in sel.local_indices() {
        mask[i] = MASK_LOCAL;
    }
    Ok(PruneView {
        mask,
        summary: format!("# {config}\n{}", sel.summary(&config)),
    })
}

#[wasm_bindgen]
pub fn prune_mask(scores: &[f64], regions: usize, topk: f64, window: usize) -> Result<PruneView, JsError> {
    prune_mask_inner(scores, regions, topk, window).map_err(js)
}

pub fn speedup_inner(csv: &str, before: f64, after: f64) -> Result<String> {
    let coeffs = fit(&read_measurements(csv.as_bytes())?)?;
    let s = predict_speedup(&coeffs, before, after)?;
    let mut out = coeffs.to_kv();
    out.push_str(&format!("ttft_ratio={:.4}\n", s.ttft_ratio));
    if let Some(t) = s.throughput_ratio {
        out.push_str(&format!("throughput_ratio={t:.4}\n"));
    }
    Ok(out)
}

/// Fits the cost model to `csv` and predicts `before -> after` ratios.
#[wasm_bindgen]
pub fn speedup(csv: &str, before: f64, after: f64) -> Result<String, JsError> {
    speedup_inner(csv, before, after).map_err(js)
}
