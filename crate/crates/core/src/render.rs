//! Binary PGM heatmaps of importance scores and PPM masks of a selection.
//!
//! Both writers emit `magic\n# comment\nwidth height\n255\n` followed by the
//! raw 8-bit samples. The comment is a single line; newlines in it are
//! replaced by spaces.

use crate::error::{HivtpError, Result};
use crate::pruner::SelectionResult;

pub const GLOBAL_RGB: [u8; 3] = [0, 255, 0];
pub const LOCAL_RGB: [u8; 3] = [255, 0, 0];
pub const PRUNED_RGB: [u8; 3] = [40, 40, 40];

fn header(magic: &str, side: usize, comment: &str) -> Vec<u8> {
    let comment = comment.replace(['\n', '\r'], " ");
    format!("{magic}\n# {comment}\n{side} {side}\n255\n").into_bytes()
}

fn check_cell(cell_px: usize) -> Result<()> {
    if cell_px == 0 {
        return Err(HivtpError::InvalidShape("cell size must be positive".into()));
    }
    Ok(())
}

/// Min-max scales scores to `0..=255`; a constant vector maps to 128.
pub fn normalize_scores(scores: &[f64]) -> Vec<u8> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    scores
        .iter()
        .map(|&s| {
            if range > 0.0 {
                ((s - min) / range * 255.0).round() as u8
            } else {
                128
            }
        })
        .collect()
}

/// Expands one value per grid cell into `cell_px x cell_px` blocks.
fn upscale<const C: usize>(cells: &[[u8; C]], n: usize, cell_px: usize) -> Vec<u8> {
    let side = n * cell_px;
    let mut out = Vec::with_capacity(side * side * C);
    for row in 0..n {
        let mut line = Vec::with_capacity(side * C);
        for cell in &cells[row * n..(row + 1) * n] {
            for _ in 0..cell_px {
                line.extend_from_slice(cell);
            }
        }
        for _ in 0..cell_px {
            out.extend_from_slice(&line);
        }
    }
    out
}

/// Grayscale P5 image, brighter = higher score.
pub fn render_heatmap(scores: &[f64], n: usize, cell_px: usize, comment: &str) -> Result<Vec<u8>> {
    check_cell(cell_px)?;
    if scores.len() != n * n || n == 0 {
        return Err(HivtpError::ShapeMismatch(format!(
            "{} scores for a {n}x{n} grid",
            scores.len()
        )));
    }
    let cells: Vec<[u8; 1]> = normalize_scores(scores).into_iter().map(|v| [v]).collect();
    let mut out = header("P5", n * cell_px, comment);
    out.extend(upscale(&cells, n, cell_px));
    Ok(out)
}

/// Colour P6 image: global tokens green, local tokens red, the rest dark gray.
pub fn render_mask(selection: &SelectionResult, n: usize, cell_px: usize, comment: &str) -> Result<Vec<u8>> {
    check_cell(cell_px)?;
    if selection.token_count() != n * n || n == 0 {
        return Err(HivtpError::ShapeMismatch(format!(
            "selection over {} tokens does not fit a {n}x{n} grid",
            selection.token_count()
        )));
    }
    let mut cells = vec![PRUNED_RGB; n * n];
    for &i in selection.global_indices() {
        cells[i] = GLOBAL_RGB;
    }
    for &i in selection.local_indices() {
        cells[i] = LOCAL_RGB;
    }
    let mut out = header("P6", n * cell_px, comment);
    out.extend(upscale(&cells, n, cell_px));
    Ok(out)
}

/// Splits a binary PNM produced above into `(magic, side, samples)`.
pub fn parse_pnm(bytes: &[u8]) -> Option<(&str, usize, &[u8])> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        let end = pos + bytes[pos..].iter().position(|&b| b == b'\n')?;
        let line = std::str::from_utf8(&bytes[pos..end]).ok()?;
        pos = end + 1;
        if line.starts_with('#') {
            continue;
        }
        fields.extend(line.split_whitespace().map(str::to_owned));
    }
    let magic = std::str::from_utf8(&bytes[..2]).ok()?;
    let width: usize = fields[1].parse().ok()?;
    let height: usize = fields[2].parse().ok()?;
    (width == height).then_some((magic, width, &bytes[pos..]))
}
