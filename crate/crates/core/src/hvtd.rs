//! HVTD: a one-tensor-per-file binary format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset 0   magic      b"HVTD"
//! offset 4   version    u8 (= 1)
//! offset 5   dtype      u8 (1 = f32, 2 = f64, 3 = u32)
//! offset 6   ndim       u8 (1..=4)
//! offset 7   dims       ndim x u32
//! then       payload    product(dims) scalars, row-major, last axis fastest
//! ```
//!
//! The file length must equal header length plus payload length exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{HivtpError, Result};

pub const MAGIC: [u8; 4] = *b"HVTD";
pub const VERSION: u8 = 1;
pub const MAX_NDIM: usize = 4;
pub const MAX_ELEMENTS: usize = 1 << 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
    U32,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
            DType::U32 => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::F64),
            3 => Ok(DType::U32),
            other => Err(HivtpError::UnsupportedDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::U32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::U32 => "u32",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HvtdHeader {
    pub version: u8,
    pub dtype: DType,
    pub dims: Vec<usize>,
}

impl HvtdHeader {
    pub fn element_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn header_len(&self) -> usize {
        7 + 4 * self.dims.len()
    }

    pub fn payload_len(&self) -> usize {
        self.element_count() * self.dtype.size()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U32(Vec<u32>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::U32(_) => DType::U32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn first_nan(&self) -> Option<usize> {
        match self {
            TensorData::F32(v) => v.iter().position(|x| x.is_nan()),
            TensorData::F64(v) => v.iter().position(|x| x.is_nan()),
            TensorData::U32(_) => None,
        }
    }
}

/// A validated tensor: shape plus a contiguous row-major payload.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorBuffer {
    dims: Vec<usize>,
    data: TensorData,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > MAX_NDIM {
        return Err(HivtpError::InvalidShape(format!(
            "ndim must be in 1..={MAX_NDIM}, got {}",
            dims.len()
        )));
    }
    let mut count: usize = 1;
    for &d in dims {
        if d > u32::MAX as usize {
            return Err(HivtpError::InvalidShape(format!("dimension {d} exceeds u32")));
        }
        count = count
            .checked_mul(d)
            .filter(|&c| c <= MAX_ELEMENTS)
            .ok_or_else(|| HivtpError::InvalidShape(format!("{dims:?} exceeds 2^31 elements")))?;
    }
    Ok(count)
}

impl TensorBuffer {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let count = check_dims(&dims)?;
        if count != data.len() {
            return Err(HivtpError::InvalidShape(format!(
                "dims {dims:?} imply {count} elements, payload has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_f32(dims: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        Self::new(dims, TensorData::F32(values))
    }

    pub fn from_f64(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::new(dims, TensorData::F64(values))
    }

    pub fn from_u32(dims: Vec<usize>, values: Vec<u32>) -> Result<Self> {
        Self::new(dims, TensorData::U32(values))
    }

    pub fn header(&self) -> HvtdHeader {
        HvtdHeader {
            version: VERSION,
            dtype: self.data.dtype(),
            dims: self.dims.clone(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    /// Requires the tensor to have exactly `ndim` axes.
    pub fn expect_ndim(&self, ndim: usize) -> Result<()> {
        if self.dims.len() != ndim {
            return Err(HivtpError::ShapeMismatch(format!(
                "expected a {ndim}-D tensor, got dims {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    /// Float payloads widened to f64; u32 payloads are rejected.
    pub fn to_f64_vec(&self) -> Result<Vec<f64>> {
        match &self.data {
            TensorData::F32(v) => Ok(v.iter().map(|&x| f64::from(x)).collect()),
            TensorData::F64(v) => Ok(v.clone()),
            TensorData::U32(_) => Err(HivtpError::DtypeMismatch {
                expected: "f32 or f64",
                found: "u32",
            }),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = self.header();
        let mut out = Vec::with_capacity(header.header_len() + header.payload_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(header.dtype.code());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8], opts: ReadOptions) -> Result<Self> {
        let header = decode_header(bytes)?;
        let start = header.header_len();
        let expected = header.payload_len();
        let actual = bytes.len() - start;
        if actual < expected {
            return Err(HivtpError::TruncatedPayload { expected, actual });
        }
        if actual > expected {
            return Err(HivtpError::TrailingBytes { expected, actual });
        }
        let payload = &bytes[start..];
        let data = match header.dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::U32 => TensorData::U32(
                payload
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        if !opts.allow_nan {
            if let Some(at) = data.first_nan() {
                return Err(HivtpError::NaNPayload(at));
            }
        }
        Self::new(header.dims, data)
    }
}

fn decode_header(bytes: &[u8]) -> Result<HvtdHeader> {
    if bytes.len() < 4 {
        return Err(HivtpError::TruncatedPayload {
            expected: 7,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(HivtpError::BadMagic(magic));
    }
    if bytes.len() < 7 {
        return Err(HivtpError::TruncatedPayload {
            expected: 7,
            actual: bytes.len(),
        });
    }
    let version = bytes[4];
    if version != VERSION {
        return Err(HivtpError::UnsupportedVersion(version));
    }
    let dtype = DType::from_code(bytes[5])?;
    let ndim = bytes[6] as usize;
    if !(1..=MAX_NDIM).contains(&ndim) {
        return Err(HivtpError::InvalidShape(format!(
            "ndim must be in 1..={MAX_NDIM}, got {ndim}"
        )));
    }
    let dims_end = 7 + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(HivtpError::TruncatedPayload {
            expected: dims_end,
            actual: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[7..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    check_dims(&dims)?;
    Ok(HvtdHeader { version, dtype, dims })
}

/// Read-time validation knobs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReadOptions {
    /// Accept NaN in float payloads instead of failing with `NaNPayload`.
    pub allow_nan: bool,
}

pub fn read_hvtd(path: impl AsRef<Path>) -> Result<TensorBuffer> {
    read_hvtd_with(path, ReadOptions::default())
}

pub fn read_hvtd_with(path: impl AsRef<Path>, opts: ReadOptions) -> Result<TensorBuffer> {
    let bytes = fs::read(path)?;
    TensorBuffer::decode(&bytes, opts)
}

pub fn write_hvtd(buffer: &TensorBuffer, path: impl AsRef<Path>) -> Result<()> {
    check_dims(&buffer.dims)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&buffer.encode())?;
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_bytes() -> Vec<u8> {
        let mut b = b"HVTD".to_vec();
        b.extend_from_slice(&[1, 1, 2]);
        b.extend_from_slice(&2u32.to_le_bytes());
        b.extend_from_slice(&2u32.to_le_bytes());
        for v in [1.0f32, 0.0, 0.0, 1.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn decodes_identity() {
        let buf = TensorBuffer::decode(&identity_bytes(), ReadOptions::default()).unwrap();
        assert_eq!(buf.dims(), &[2, 2]);
        assert_eq!(buf.data(), &TensorData::F32(vec![1.0, 0.0, 0.0, 1.0]));
        assert_eq!(buf.encode(), identity_bytes());
    }

    #[test]
    fn rejects_bad_magic() {
        let mut b = identity_bytes();
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            TensorBuffer::decode(&b, ReadOptions::default()),
            Err(HivtpError::BadMagic(m)) if &m == b"XXXX"
        ));
    }

    #[test]
    fn rejects_version_and_dtype() {
        let mut b = identity_bytes();
        b[4] = 2;
        assert!(matches!(
            TensorBuffer::decode(&b, ReadOptions::default()),
            Err(HivtpError::UnsupportedVersion(2))
        ));
        let mut b = identity_bytes();
        b[5] = 9;
        assert!(matches!(
            TensorBuffer::decode(&b, ReadOptions::default()),
            Err(HivtpError::UnsupportedDtype(9))
        ));
    }

    #[test]
    fn payload_length_must_match_exactly() {
        let b = identity_bytes();
        assert!(matches!(
            TensorBuffer::decode(&b[..b.len() - 1], ReadOptions::default()),
            Err(HivtpError::TruncatedPayload {
                expected: 16,
                actual: 15
            })
        ));
        let mut long = b.clone();
        long.push(0);
        assert!(matches!(
            TensorBuffer::decode(&long, ReadOptions::default()),
            Err(HivtpError::TrailingBytes {
                expected: 16,
                actual: 17
            })
        ));
        assert!(matches!(
            TensorBuffer::decode(&b[..9], ReadOptions::default()),
            Err(HivtpError::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn nan_is_rejected_unless_allowed() {
        let mut b = identity_bytes();
        let at = b.len() - 4;
        b[at..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            TensorBuffer::decode(&b, ReadOptions::default()),
            Err(HivtpError::NaNPayload(3))
        ));
        let buf = TensorBuffer::decode(&b, ReadOptions { allow_nan: true }).unwrap();
        assert_eq!(buf.dims(), &[2, 2]);
    }

    #[test]
    fn shape_validation() {
        assert!(matches!(
            TensorBuffer::from_f32(vec![], vec![]),
            Err(HivtpError::InvalidShape(_))
        ));
        assert!(matches!(
            TensorBuffer::from_f32(vec![1, 1, 1, 1, 1], vec![0.0]),
            Err(HivtpError::InvalidShape(_))
        ));
        assert!(matches!(
            TensorBuffer::from_f32(vec![3], vec![0.0; 2]),
            Err(HivtpError::InvalidShape(_))
        ));
        assert!(matches!(
            TensorBuffer::from_u32(vec![1 << 16, 1 << 16], vec![]),
            Err(HivtpError::InvalidShape(_))
        ));
        // zero-length index lists are legal
        assert!(TensorBuffer::from_u32(vec![0], vec![]).is_ok());
    }

    #[test]
    fn score_vector_round_trip_is_bitwise() {
        let values: Vec<f32> = (0..576).map(|i| (i as f32).sin() / 577.0).collect();
        let buf = TensorBuffer::from_f32(vec![576], values.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.hvtd");
        write_hvtd(&buf, &path).unwrap();
        let back = read_hvtd(&path).unwrap();
        match back.data() {
            TensorData::F32(v) => {
                assert!(v.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()))
            }
            other => panic!("unexpected dtype {:?}", other.dtype()),
        }
    }

    #[test]
    fn u32_cannot_widen_to_float() {
        let buf = TensorBuffer::from_u32(vec![2], vec![1, 2]).unwrap();
        assert!(matches!(buf.to_f64_vec(), Err(HivtpError::DtypeMismatch { .. })));
    }
}
