use crate::error::{HivtpError, Result};
use crate::hvtd::{TensorBuffer, TensorData};

/// `N x d` visual-token embeddings. The pruner only gathers rows, so the
/// payload keeps whatever dtype it was loaded with.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenMatrix {
    rows: usize,
    cols: usize,
    data: TensorData,
}

impl TokenMatrix {
    pub fn new(rows: usize, cols: usize, data: TensorData) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(HivtpError::ShapeMismatch(format!(
                "{rows}x{cols} token matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_f32(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        Self::new(rows, cols, TensorData::F32(values))
    }

    pub fn from_buffer(buffer: TensorBuffer) -> Result<Self> {
        buffer.expect_ndim(2)?;
        let (rows, cols) = (buffer.dims()[0], buffer.dims()[1]);
        Self::new(rows, cols, buffer.into_data())
    }

    pub fn to_buffer(&self) -> TensorBuffer {
        TensorBuffer::new(vec![self.rows, self.cols], self.data.clone())
            .expect("token matrix shape already validated")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    /// Rows at `indices`, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.rows) {
            return Err(HivtpError::IndexOutOfRange {
                index: bad,
                count: self.rows,
            });
        }
        let d = self.cols;
        fn pick<T: Copy>(src: &[T], indices: &[usize], d: usize) -> Vec<T> {
            let mut out = Vec::with_capacity(indices.len() * d);
            for &i in indices {
                out.extend_from_slice(&src[i * d..(i + 1) * d]);
            }
            out
        }
        let data = match &self.data {
            TensorData::F32(v) => TensorData::F32(pick(v, indices, d)),
            TensorData::F64(v) => TensorData::F64(pick(v, indices, d)),
            TensorData::U32(v) => TensorData::U32(pick(v, indices, d)),
        };
        Self::new(indices.len(), d, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gather_preserves_order_and_bits() {
        let m = TokenMatrix::from_f32(4, 2, (0..8).map(|x| x as f32 + 0.5).collect()).unwrap();
        let g = m.gather(&[3, 1]).unwrap();
        assert_eq!(g.rows(), 2);
        assert_eq!(g.data(), &TensorData::F32(vec![6.5, 7.5, 2.5, 3.5]));
        assert!(matches!(
            m.gather(&[4]),
            Err(HivtpError::IndexOutOfRange { index: 4, count: 4 })
        ));
        assert_eq!(m.gather(&[]).unwrap().rows(), 0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(TokenMatrix::from_f32(3, 2, vec![0.0; 5]).is_err());
        let b = TensorBuffer::from_f32(vec![6], vec![0.0; 6]).unwrap();
        assert!(matches!(
            TokenMatrix::from_buffer(b),
            Err(HivtpError::ShapeMismatch(_))
        ));
    }
}
