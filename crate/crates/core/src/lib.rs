//! Attention-guided visual token pruning.
//!
//! Scores each visual token by the attention it receives in a chosen band
//! of vision-encoder layers, then keeps a spatially spread subset: a fixed
//! per-region quota of top tokens plus the best remaining token of every
//! small window. Everything operates on dumped tensors (see [`hvtd`]), so
//! the engine is independent of any particular model runtime.

pub mod costmodel;
pub mod error;
pub mod hvtd;
pub mod importance;
pub mod pruner;
pub mod render;
pub mod synth;
pub mod tokens;

pub use error::{HivtpError, Result};
pub use hvtd::{read_hvtd, write_hvtd, DType, TensorBuffer, TensorData};
pub use importance::{compute_importance, recover_grid_side, AttentionStack, ImportanceScores, LayerSet};
pub use pruner::{
    finalize, global_retain, hivtp_prune, local_retain, partition_regions, partition_windows, prune_batch,
    prune_batch_parallel, prune_scores, region_quotas, select, PruneConfig, PruneOutput, SelectionResult,
};
pub use tokens::TokenMatrix;

/// Converts a sorted index list to a 1-D u32 HVTD tensor.
pub fn indices_to_buffer(indices: &[usize]) -> TensorBuffer {
    TensorBuffer::from_u32(vec![indices.len()], indices.iter().map(|&i| i as u32).collect())
        .expect("1-D index list is always a valid shape")
}

/// Reads a 1-D u32 HVTD tensor back into indices.
pub fn indices_from_buffer(buffer: &TensorBuffer) -> Result<Vec<usize>> {
    buffer.expect_ndim(1)?;
    match buffer.data() {
        TensorData::U32(v) => Ok(v.iter().map(|&i| i as usize).collect()),
        other => Err(HivtpError::DtypeMismatch {
            expected: "u32",
            found: other.dtype().name(),
        }),
    }
}
