use std::fs;
use std::path::Path;

use hivtp::hvtd::{read_hvtd, read_hvtd_with, write_hvtd, ReadOptions, TensorBuffer, TensorData};
use hivtp::synth::{generate, SplitMix64, SynthSpec};
use hivtp::HivtpError;
use proptest::prelude::*;
use sha2::{Digest, Sha256};

fn sha256(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

#[test]
fn golden_ramp_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ramp3x3.hvtd");
    let buf = read_hvtd(&path).unwrap();
    assert_eq!(buf.dims(), &[3, 3]);
    let expected: Vec<f32> = (0..9).map(|i| i as f32).collect();
    assert_eq!(buf.data(), &TensorData::F32(expected));
    assert_eq!(buf.encode(), fs::read(&path).unwrap());
}

#[test]
fn full_size_stack_round_trips_byte_identically() {
    // [4, 8, 577, 577] from the synthetic generator, written, read, rewritten
    let spec = SynthSpec::new(2024, 24, 4, 8);
    let (stack, _) = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.hvtd");
    let second = dir.path().join("b.hvtd");
    write_hvtd(&stack.to_buffer(), &first).unwrap();
    let back = read_hvtd(&first).unwrap();
    assert_eq!(back.dims(), &[4, 8, 577, 577]);
    write_hvtd(&back, &second).unwrap();
    assert_eq!(sha256(&first), sha256(&second));
}

#[test]
fn file_level_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.hvtd");
    fs::write(&path, b"XXXX\x01\x01\x01\x01\x00\x00\x00\x00\x00\x00\x00").unwrap();
    assert!(matches!(read_hvtd(&path), Err(HivtpError::BadMagic(_))));

    let buf = TensorBuffer::from_f64(vec![2], vec![f64::NAN, 1.0]).unwrap();
    write_hvtd(&buf, &path).unwrap();
    assert!(matches!(read_hvtd(&path), Err(HivtpError::NaNPayload(0))));
    assert!(read_hvtd_with(&path, ReadOptions { allow_nan: true }).is_ok());

    let missing = dir.path().join("missing.hvtd");
    let err = read_hvtd(&missing).unwrap_err();
    assert!(err.is_io());
    let err = write_hvtd(&buf, dir.path().join("no/such/dir/x.hvtd")).unwrap_err();
    assert!(err.is_io());
}

fn arb_buffer() -> impl Strategy<Value = TensorBuffer> {
    (prop::collection::vec(1usize..6, 1..=4), any::<u64>(), 0u8..3).prop_map(|(dims, seed, kind)| {
        let count: usize = dims.iter().product();
        let mut rng = SplitMix64::new(seed);
        let data = match kind {
            0 => TensorData::F32((0..count).map(|_| rng.next_normal() as f32).collect()),
            1 => TensorData::F64((0..count).map(|_| rng.next_normal()).collect()),
            _ => TensorData::U32((0..count).map(|_| rng.next_u64() as u32).collect()),
        };
        TensorBuffer::new(dims, data).unwrap()
    })
}

proptest! {
    #[test]
    fn encode_decode_is_identity(buf in arb_buffer()) {
        let bytes = buf.encode();
        let back = TensorBuffer::decode(&bytes, ReadOptions::default()).unwrap();
        prop_assert_eq!(back.header(), buf.header());
        prop_assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn any_length_change_is_rejected(buf in arb_buffer(), cut in 1usize..8) {
        let bytes = buf.encode();
        let short = &bytes[..bytes.len().saturating_sub(cut)];
        prop_assert!(TensorBuffer::decode(short, ReadOptions::default()).is_err());
        let mut long = bytes.clone();
        long.extend(std::iter::repeat_n(0u8, cut));
        let rejected = matches!(
            TensorBuffer::decode(&long, ReadOptions::default()),
            Err(HivtpError::TrailingBytes { .. })
        );
        prop_assert!(rejected);
    }
}
