//! SEG-Y files on disk: round trips, foreign encodings and malformed input.

use std::io::Cursor;

use ndarray::Array3;
use proptest::prelude::*;
use velgan_core::segy::{self, SegyError, BINARY_HEADER_LEN, TEXT_HEADER_LEN, TRACE_HEADER_LEN};
use velgan_core::Volume3D;

fn volume(ni: usize, nx: usize, ns: usize, seed: u64) -> Volume3D {
    let a = Array3::from_shape_fn((ni, nx, ns), |(i, j, k)| {
        let h = (i * 7919 + j * 104729 + k * 1299709) as u64 ^ seed;
        (h % 100_003) as f64 * 0.0371 - 1500.0
    });
    Volume3D::new(a, 25.0, 12.5, 0.004).unwrap().with_origin((100, 2000)).with_t0(0.112)
}

fn encode(v: &Volume3D) -> Vec<u8> {
    let mut bytes = Vec::new();
    segy::write_segy_to(v, &mut bytes).unwrap();
    bytes
}

fn trace_offset(t: usize, ns: usize) -> usize {
    TEXT_HEADER_LEN + BINARY_HEADER_LEN + t * (TRACE_HEADER_LEN + 4 * ns)
}

/// IBM single for values that are exact in 24-bit hex-normalized form.
fn ibm_word(x: f64) -> u32 {
    if x == 0.0 {
        return 0;
    }
    let sign = if x < 0.0 { 1u32 << 31 } else { 0 };
    let (mut frac, mut exp) = (x.abs(), 64i32);
    while frac >= 1.0 {
        frac /= 16.0;
        exp += 1;
    }
    while frac < 1.0 / 16.0 {
        frac *= 16.0;
        exp -= 1;
    }
    sign | ((exp as u32) << 24) | (frac * (1u32 << 24) as f64) as u32
}

#[test]
fn file_round_trip_is_bit_exact_at_single_precision() {
    let v = volume(3, 5, 17, 1).map_samples(|x| x as f32 as f64);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.sgy");
    segy::write_segy(&v, &path).unwrap();
    let back = segy::read_segy(&path).unwrap();
    assert_eq!(back.samples(), v.samples());
    assert_eq!((back.dx, back.dy, back.dt, back.t0, back.origin), (25.0, 12.5, 0.004, 0.112, (100, 2000)));
    assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, trace_offset(15, 17));
}

#[test]
fn double_precision_input_rounds_to_nearest_single() {
    let v = volume(2, 2, 9, 2).map_samples(|x| x + 1e-7);
    let back = segy::read_segy_from(Cursor::new(encode(&v))).unwrap();
    for (a, b) in back.samples().iter().zip(v.samples()) {
        assert_eq!(*a, *b as f32 as f64);
    }
}

#[test]
fn ibm_words_decode_to_known_values() {
    assert_eq!(segy::ibm32_to_f64(0x4264_0000), 100.0);
    assert_eq!(segy::ibm32_to_f64(0xC118_0000), -1.5);
    assert_eq!(segy::ibm32_to_f64(0x0000_0000), 0.0);
    assert_eq!(ibm_word(100.0), 0x4264_0000);
    assert_eq!(ibm_word(-1.5), 0xC118_0000);
}

#[test]
fn ibm_coded_file_is_read() {
    let values = [100.0, -1.5, 0.0, 2500.25, -0.0625, 4096.0];
    let v = Volume3D::new(Array3::from_shape_vec((1, 1, 6), values.to_vec()).unwrap(), 12.5, 12.5, 0.002).unwrap();
    let mut bytes = encode(&v);
    // Binary-header bytes 3225-3226: format code 1.
    bytes[TEXT_HEADER_LEN + 24..TEXT_HEADER_LEN + 26].copy_from_slice(&1u16.to_be_bytes());
    let start = trace_offset(0, 6) + TRACE_HEADER_LEN;
    for (k, x) in values.iter().enumerate() {
        bytes[start + 4 * k..start + 4 * k + 4].copy_from_slice(&ibm_word(*x).to_be_bytes());
    }
    let back = segy::read_segy_from(Cursor::new(bytes)).unwrap();
    assert_eq!(back.samples().iter().copied().collect::<Vec<_>>(), values);
}

#[test]
fn shuffled_trace_order_is_reassembled() {
    let v = volume(2, 3, 4, 3);
    let bytes = encode(&v);
    let ns = 4;
    let tl = TRACE_HEADER_LEN + 4 * ns;
    let head = trace_offset(0, ns);
    let mut shuffled = bytes[..head].to_vec();
    for t in [5, 0, 3, 1, 4, 2] {
        shuffled.extend_from_slice(&bytes[head + t * tl..head + (t + 1) * tl]);
    }
    let back = segy::read_segy_from(Cursor::new(shuffled)).unwrap();
    assert_eq!(back.samples(), v.map_samples(|x| x as f32 as f64).samples());
}

#[test]
fn truncated_files_are_rejected() {
    let bytes = encode(&volume(2, 2, 8, 4));
    let err = segy::read_segy_from(Cursor::new(&bytes[..bytes.len() - 5])).unwrap_err();
    assert!(matches!(err, SegyError::TruncatedTrace { trace: 3, .. }), "{err}");
    let err = segy::read_segy_from(Cursor::new(&bytes[..TEXT_HEADER_LEN + 10])).unwrap_err();
    assert!(matches!(err, SegyError::TruncatedHeader(_)), "{err}");
    let err = segy::read_segy_from(Cursor::new(&bytes[..trace_offset(0, 8)])).unwrap_err();
    assert!(matches!(err, SegyError::NoTraces), "{err}");
}

#[test]
fn missing_or_duplicate_traces_are_rejected() {
    let ns = 8;
    let bytes = encode(&volume(2, 2, ns, 5));
    let tl = TRACE_HEADER_LEN + 4 * ns;
    let err = segy::read_segy_from(Cursor::new(&bytes[..bytes.len() - tl])).unwrap_err();
    assert!(matches!(err, SegyError::NonRectangular(_)), "{err}");
    // Give trace 1 the line numbers of trace 0.
    let mut dup = bytes.clone();
    let (t0, t1) = (trace_offset(0, ns), trace_offset(1, ns));
    let ids = dup[t0 + 188..t0 + 196].to_vec();
    dup[t1 + 188..t1 + 196].copy_from_slice(&ids);
    let err = segy::read_segy_from(Cursor::new(dup)).unwrap_err();
    assert!(matches!(err, SegyError::NonRectangular(_)), "{err}");
}

#[test]
fn unsupported_format_code_is_rejected() {
    let mut bytes = encode(&volume(1, 1, 4, 6));
    bytes[TEXT_HEADER_LEN + 24..TEXT_HEADER_LEN + 26].copy_from_slice(&3u16.to_be_bytes());
    assert!(matches!(segy::read_segy_from(Cursor::new(bytes)), Err(SegyError::UnsupportedFormat(3))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn any_single_precision_volume_round_trips(
        ni in 1usize..4, nx in 1usize..4, ns in 1usize..12,
        values in prop::collection::vec(-1e6f32..1e6, 48..49),
    ) {
        let a = Array3::from_shape_fn((ni, nx, ns), |(i, j, k)| values[(i * 16 + j * 4 + k) % 48] as f64);
        let v = Volume3D::new(a, 12.5, 12.5, 0.004).unwrap();
        let back = segy::read_segy_from(Cursor::new(encode(&v))).unwrap();
        prop_assert_eq!(back.samples(), v.samples());
    }
}
