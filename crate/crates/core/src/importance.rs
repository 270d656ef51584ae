//! Token importance from middle-layer attention.
//!
//! An attention stack holds `L x H` maps of size `(N+1) x (N+1)`, the CLS
//! token at position 0 of both axes. The selected maps are averaged (over
//! layers, then heads) into a single map, and token `i` scores the mean of
//! column `i + 1` over all `N + 1` rows, CLS row included.

use std::fmt;
use std::str::FromStr;

use crate::error::{HivtpError, Result};
use crate::hvtd::{TensorBuffer, TensorData};

/// Entries may stray this far outside `[0, 1]` before the stack is rejected.
pub const RANGE_TOLERANCE: f64 = 1e-5;
/// Row-sum tolerance used to flag a stack as row-stochastic.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Returns `n` such that `n * n + 1 == token_count_with_cls`.
pub fn recover_grid_side(token_count_with_cls: usize) -> Result<usize> {
    if token_count_with_cls < 5 {
        return Err(HivtpError::NotPerfectSquare(token_count_with_cls));
    }
    let visual = token_count_with_cls - 1;
    let n = visual.isqrt();
    if n * n != visual {
        return Err(HivtpError::NotPerfectSquare(token_count_with_cls));
    }
    Ok(n)
}

/// Strictly increasing, 1-based encoder layer indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LayerSet(Vec<usize>);

impl LayerSet {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(HivtpError::InvalidLayerSet("layer set is empty".into()));
        }
        if indices.contains(&0) {
            return Err(HivtpError::LayerIndexZero);
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HivtpError::InvalidLayerSet(format!(
                "layer indices must be strictly increasing: {indices:?}"
            )));
        }
        Ok(Self(indices))
    }

    /// Inclusive 1-based range.
    pub fn range(first: usize, last: usize) -> Result<Self> {
        if first == 0 {
            return Err(HivtpError::LayerIndexZero);
        }
        if first > last {
            return Err(HivtpError::InvalidLayerSet(format!("empty range {first}-{last}")));
        }
        Self::new((first..=last).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check(&self, layer_count: usize) -> Result<()> {
        match self.0.last() {
            Some(&max) if max > layer_count => Err(HivtpError::LayerOutOfRange {
                layer: max,
                available: layer_count,
            }),
            _ => Ok(()),
        }
    }

    /// The single 1-based to 0-based conversion point.
    pub fn zero_based(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&l| l - 1)
    }
}

impl Default for LayerSet {
    /// Layers 7 through 10.
    fn default() -> Self {
        Self((7..=10).collect())
    }
}

impl FromStr for LayerSet {
    type Err = HivtpError;

    /// Accepts `"7-10"` or `"7,8,9,10"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| HivtpError::InvalidLayerSet(format!("cannot parse {t:?} as a layer index")))
        };
        if let Some((a, b)) = s.split_once('-') {
            return Self::range(parse(a)?, parse(b)?);
        }
        Self::new(s.split(',').map(parse).collect::<Result<_>>()?)
    }
}

impl fmt::Display for LayerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let contiguous = self.0.windows(2).all(|w| w[1] == w[0] + 1);
        match (self.0.first(), self.0.last()) {
            (Some(a), Some(b)) if contiguous && self.0.len() > 1 => write!(f, "{a}-{b}"),
            _ => {
                let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Weights {
    fn len(&self) -> usize {
        match self {
            Weights::F32(v) => v.len(),
            Weights::F64(v) => v.len(),
        }
    }

    #[inline]
    fn get(&self, at: usize) -> f64 {
        match self {
            Weights::F32(v) => f64::from(v[at]),
            Weights::F64(v) => v[at],
        }
    }

    /// Adds `src[start..start + out.len()]` into `out`.
    fn accumulate(&self, start: usize, out: &mut [f64]) {
        let end = start + out.len();
        match self {
            Weights::F32(v) => {
                for (o, &x) in out.iter_mut().zip(&v[start..end]) {
                    *o += f64::from(x);
                }
            }
            Weights::F64(v) => {
                for (o, &x) in out.iter_mut().zip(&v[start..end]) {
                    *o += x;
                }
            }
        }
    }
}

/// Attention maps `[layers, heads, N+1, N+1]`, CLS at index 0.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionStack {
    layers: usize,
    heads: usize,
    tokens: usize,
    grid_side: usize,
    weights: Weights,
    row_stochastic: bool,
}

impl AttentionStack {
    pub fn new(layers: usize, heads: usize, tokens: usize, weights: Weights) -> Result<Self> {
        if layers == 0 || heads == 0 {
            return Err(HivtpError::ShapeMismatch(format!(
                "stack needs at least one layer and head, got [{layers}, {heads}, ..]"
            )));
        }
        let grid_side = recover_grid_side(tokens)?;
        let expected = layers * heads * tokens * tokens;
        if weights.len() != expected {
            return Err(HivtpError::ShapeMismatch(format!(
                "[{layers}, {heads}, {tokens}, {tokens}] needs {expected} weights, got {}",
                weights.len()
            )));
        }
        let mut row_stochastic = true;
        for row in 0..layers * heads * tokens {
            let mut sum = 0.0;
            for at in row * tokens..(row + 1) * tokens {
                let w = weights.get(at);
                if w.is_nan() || !(-RANGE_TOLERANCE..=1.0 + RANGE_TOLERANCE).contains(&w) {
                    return Err(HivtpError::InvalidAttention(format!(
                        "weight {w} at flat offset {at} outside [0, 1]"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                row_stochastic = false;
            }
        }
        Ok(Self {
            layers,
            heads,
            tokens,
            grid_side,
            weights,
            row_stochastic,
        })
    }

    pub fn from_f32(layers: usize, heads: usize, tokens: usize, weights: Vec<f32>) -> Result<Self> {
        Self::new(layers, heads, tokens, Weights::F32(weights))
    }

    pub fn from_f64(layers: usize, heads: usize, tokens: usize, weights: Vec<f64>) -> Result<Self> {
        Self::new(layers, heads, tokens, Weights::F64(weights))
    }

    /// Takes a 4-D f32 or f64 HVTD tensor.
    pub fn from_buffer(buffer: TensorBuffer) -> Result<Self> {
        buffer.expect_ndim(4)?;
        let dims = buffer.dims().to_vec();
        if dims[2] != dims[3] {
            return Err(HivtpError::ShapeMismatch(format!(
                "attention maps must be square, got dims {dims:?}"
            )));
        }
        let weights = match buffer.into_data() {
            TensorData::F32(v) => Weights::F32(v),
            TensorData::F64(v) => Weights::F64(v),
            TensorData::U32(_) => {
                return Err(HivtpError::DtypeMismatch {
                    expected: "f32 or f64",
                    found: "u32",
                })
            }
        };
        Self::new(dims[0], dims[1], dims[2], weights)
    }

    pub fn to_buffer(&self) -> TensorBuffer {
        let dims = vec![self.layers, self.heads, self.tokens, self.tokens];
        let data = match &self.weights {
            Weights::F32(v) => TensorData::F32(v.clone()),
            Weights::F64(v) => TensorData::F64(v.clone()),
        };
        TensorBuffer::new(dims, data).expect("stack shape already validated")
    }

    pub fn layer_count(&self) -> usize {
        self.layers
    }

    pub fn head_count(&self) -> usize {
        self.heads
    }

    /// `N + 1`.
    pub fn token_count_with_cls(&self) -> usize {
        self.tokens
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    /// `N = n * n`.
    pub fn visual_token_count(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn is_row_stochastic(&self) -> bool {
        self.row_stochastic
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// Entry `[layer, head, row, col]`, all 0-based.
    pub fn get(&self, layer: usize, head: usize, row: usize, col: usize) -> f64 {
        let t = self.tokens;
        self.weights
            .get(((layer * self.heads + head) * t + row) * t + col)
    }

    fn map_offset(&self, layer: usize, head: usize) -> usize {
        (layer * self.heads + head) * self.tokens * self.tokens
    }
}

/// The layer- and head-averaged `(N+1) x (N+1)` attention map.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanAttention {
    size: usize,
    values: Vec<f64>,
}

impl MeanAttention {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.size + col]
    }

    /// Mean over rows of the CLS column.
    pub fn cls_column_mean(&self) -> f64 {
        (0..self.size).map(|j| self.get(j, 0)).sum::<f64>() / self.size as f64
    }

    /// Column means over all rows, CLS column dropped.
    pub fn scores(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.size - 1];
        for row in self.values.chunks_exact(self.size) {
            for (s, &a) in sums.iter_mut().zip(&row[1..]) {
                *s += a;
            }
        }
        let rows = self.size as f64;
        sums.iter_mut().for_each(|s| *s /= rows);
        sums
    }
}

/// Averages the selected layers per head, then the heads.
pub fn mean_attention(stack: &AttentionStack, layers: &LayerSet) -> Result<MeanAttention> {
    layers.check(stack.layers)?;
    let cells = stack.tokens * stack.tokens;
    let mut per_head = vec![0.0f64; cells];
    let mut mean = vec![0.0f64; cells];
    let layer_norm = layers.len() as f64;
    for head in 0..stack.heads {
        per_head.iter_mut().for_each(|x| *x = 0.0);
        for layer in layers.zero_based() {
            stack
                .weights
                .accumulate(stack.map_offset(layer, head), &mut per_head);
        }
        for (m, &p) in mean.iter_mut().zip(&per_head) {
            *m += p / layer_norm;
        }
    }
    let head_norm = stack.heads as f64;
    mean.iter_mut().for_each(|x| *x /= head_norm);
    Ok(MeanAttention {
        size: stack.tokens,
        values: mean,
    })
}

/// Per-token importance, length `N = n * n`, row-major over the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceScores {
    grid_side: usize,
    values: Vec<f64>,
}

impl ImportanceScores {
    /// Scores must be finite and non-negative, and there must be `n * n` of them.
    pub fn new(grid_side: usize, values: Vec<f64>) -> Result<Self> {
        if grid_side == 0 || values.len() != grid_side * grid_side {
            return Err(HivtpError::ShapeMismatch(format!(
                "{} scores do not fill a {grid_side}x{grid_side} grid",
                values.len()
            )));
        }
        if let Some(at) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(HivtpError::InvalidScores(format!(
                "score {} at index {at} is not a finite non-negative number",
                values[at]
            )));
        }
        Ok(Self { grid_side, values })
    }

    /// Grid side is recovered from the vector length.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        let n = values.len().isqrt();
        if n * n != values.len() {
            return Err(HivtpError::ShapeMismatch(format!(
                "{} scores do not form a square grid",
                values.len()
            )));
        }
        Self::new(n, values)
    }

    pub fn from_buffer(buffer: &TensorBuffer) -> Result<Self> {
        buffer.expect_ndim(1)?;
        Self::from_vec(buffer.to_f64_vec()?)
    }

    pub fn to_buffer(&self) -> TensorBuffer {
        TensorBuffer::from_f64(vec![self.values.len()], self.values.clone())
            .expect("score length already validated")
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

impl std::ops::Index<usize> for ImportanceScores {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

pub fn compute_importance(stack: &AttentionStack, layers: &LayerSet) -> Result<ImportanceScores> {
    let mean = mean_attention(stack, layers)?;
    ImportanceScores::new(stack.grid_side, mean.scores())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_side_recovery() {
        assert_eq!(recover_grid_side(577).unwrap(), 24);
        assert_eq!(recover_grid_side(5).unwrap(), 2);
        assert!(matches!(
            recover_grid_side(578),
            Err(HivtpError::NotPerfectSquare(578))
        ));
        assert!(matches!(
            recover_grid_side(2),
            Err(HivtpError::NotPerfectSquare(2))
        ));
    }

    #[test]
    fn layer_set_parsing() {
        assert_eq!("7-10".parse::<LayerSet>().unwrap(), LayerSet::default());
        assert_eq!("7,8,9,10".parse::<LayerSet>().unwrap(), LayerSet::default());
        assert_eq!("3".parse::<LayerSet>().unwrap().indices(), &[3]);
        assert!(matches!(
            "0-3".parse::<LayerSet>(),
            Err(HivtpError::LayerIndexZero)
        ));
        assert!(matches!(
            "2,2".parse::<LayerSet>(),
            Err(HivtpError::InvalidLayerSet(_))
        ));
        assert!(matches!(
            "5-2".parse::<LayerSet>(),
            Err(HivtpError::InvalidLayerSet(_))
        ));
        assert!(matches!(
            "a".parse::<LayerSet>(),
            Err(HivtpError::InvalidLayerSet(_))
        ));
        assert_eq!(LayerSet::default().to_string(), "7-10");
        assert_eq!(LayerSet::new(vec![1, 3]).unwrap().to_string(), "1,3");
        assert_eq!(
            LayerSet::default().zero_based().collect::<Vec<_>>(),
            vec![6, 7, 8, 9]
        );
    }

    #[test]
    fn uniform_stack_gives_uniform_scores() {
        let t = 17;
        let stack = AttentionStack::from_f64(3, 2, t, vec![1.0 / t as f64; 3 * 2 * t * t]).unwrap();
        assert!(stack.is_row_stochastic());
        for layers in ["1", "1-3", "2,3"] {
            let s = compute_importance(&stack, &layers.parse().unwrap()).unwrap();
            assert_eq!(s.len(), 16);
            for &v in s.values() {
                assert!((v - 1.0 / t as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn all_attention_on_first_token() {
        let mut w = vec![0.0f32; 25];
        for row in 0..5 {
            w[row * 5 + 1] = 1.0;
        }
        let stack = AttentionStack::from_f32(1, 1, 5, w).unwrap();
        let s = compute_importance(&stack, &LayerSet::new(vec![1]).unwrap()).unwrap();
        assert_eq!(s.values(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn layer_out_of_range() {
        let stack = AttentionStack::from_f32(4, 1, 5, vec![0.2; 4 * 25]).unwrap();
        assert!(matches!(
            compute_importance(&stack, &LayerSet::default()),
            Err(HivtpError::LayerOutOfRange {
                layer: 10,
                available: 4
            })
        ));
    }

    #[test]
    fn stack_validation() {
        assert!(matches!(
            AttentionStack::from_f32(1, 1, 6, vec![0.0; 36]),
            Err(HivtpError::NotPerfectSquare(6))
        ));
        assert!(matches!(
            AttentionStack::from_f32(1, 1, 5, vec![0.2; 24]),
            Err(HivtpError::ShapeMismatch(_))
        ));
        let mut w = vec![0.2f32; 25];
        w[3] = 1.5;
        assert!(matches!(
            AttentionStack::from_f32(1, 1, 5, w),
            Err(HivtpError::InvalidAttention(_))
        ));
        let mut w = vec![0.2f32; 25];
        w[3] = -1e-6;
        let stack = AttentionStack::from_f32(1, 1, 5, w).unwrap();
        assert!(!stack.is_row_stochastic());
        let stack = AttentionStack::from_f32(1, 1, 5, vec![0.1; 25]).unwrap();
        assert!(!stack.is_row_stochastic());
    }

    #[test]
    fn buffer_round_trip() {
        let stack = AttentionStack::from_f32(2, 1, 5, vec![0.2; 50]).unwrap();
        let back = AttentionStack::from_buffer(stack.to_buffer()).unwrap();
        assert_eq!(back, stack);
        let bad = TensorBuffer::from_f32(vec![1, 1, 5, 4], vec![0.25; 20]).unwrap();
        assert!(matches!(
            AttentionStack::from_buffer(bad),
            Err(HivtpError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn score_validation() {
        assert!(ImportanceScores::from_vec(vec![0.1; 5]).is_err());
        assert!(matches!(
            ImportanceScores::from_vec(vec![0.1, -0.1, 0.0, 0.0]),
            Err(HivtpError::InvalidScores(_))
        ));
        assert!(matches!(
            ImportanceScores::from_vec(vec![0.1, f64::INFINITY, 0.0, 0.0]),
            Err(HivtpError::InvalidScores(_))
        ));
        assert_eq!(ImportanceScores::from_vec(vec![0.0; 9]).unwrap().grid_side(), 3);
    }
}
