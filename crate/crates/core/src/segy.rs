//! SEG-Y rev-1 subset reader and writer.
//!
//! Layout: 3200-byte textual header, 400-byte binary header, then fixed-length
//! traces of a 240-byte header followed by `samples_per_trace` 4-byte words.
//! Everything is big-endian. Only sample format codes 1 (IBM float) and
//! 5 (IEEE float) are accepted; the writer always emits code 5.
//!
//! Byte positions below are 0-based offsets of the 1-based positions in the
//! SEG-Y standard (e.g. binary-header bytes 3221–3222 live at offset 3220).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use ndarray::Array3;
use thiserror::Error;

use crate::volume::{Volume3D, VolumeError};

pub const TEXT_HEADER_LEN: usize = 3200;
pub const BINARY_HEADER_LEN: usize = 400;
pub const TRACE_HEADER_LEN: usize = 240;

const BIN_TRACES_PER_ENSEMBLE: usize = 12;
const BIN_SAMPLE_INTERVAL: usize = 16;
const BIN_SAMPLES_PER_TRACE: usize = 20;
const BIN_FORMAT_CODE: usize = 24;
const BIN_REVISION: usize = 300;
const BIN_FIXED_LENGTH: usize = 302;

const TR_SEQUENCE: usize = 0;
const TR_COORD_SCALAR: usize = 70;
const TR_DELAY_MS: usize = 108;
const TR_NUM_SAMPLES: usize = 114;
const TR_SAMPLE_INTERVAL: usize = 116;
const TR_CDP_X: usize = 180;
const TR_CDP_Y: usize = 184;
const TR_INLINE: usize = 188;
const TR_CROSSLINE: usize = 192;

/// Coordinates are written in centimeters.
const COORD_SCALAR: i16 = -100;
/// Trace spacing reported when a volume has a single inline or crossline.
pub const DEFAULT_SPACING_M: f64 = 12.5;

#[derive(Debug, Error)]
pub enum SegyError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("truncated file: {0} is incomplete")]
    TruncatedHeader(&'static str),
    #[error("truncated trace {trace}: expected {expected} bytes, found {found}")]
    TruncatedTrace {
        trace: usize,
        expected: usize,
        found: usize,
    },
    #[error("unsupported sample format code {0} (only 1 and 5 are supported)")]
    UnsupportedFormat(u16),
    #[error("invalid binary header: {0}")]
    InvalidHeader(String),
    #[error("file contains no traces")]
    NoTraces,
    #[error("trace grid is not a full rectangle: {0}")]
    NonRectangular(String),
    #[error("value {0} cannot be written as an IEEE single-precision float")]
    Unwritable(f64),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Sample formats understood by the reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    IbmFloat = 1,
    IeeeFloat = 5,
}

impl SampleFormat {
    pub fn from_code(code: u16) -> Result<Self, SegyError> {
        match code {
            1 => Ok(Self::IbmFloat),
            5 => Ok(Self::IeeeFloat),
            other => Err(SegyError::UnsupportedFormat(other)),
        }
    }

    pub fn code(self) -> u16 {
        self as u16
    }

    fn decode(self, word: u32) -> f64 {
        match self {
            Self::IbmFloat => ibm32_to_f64(word),
            Self::IeeeFloat => f32::from_bits(word) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryHeader {
    pub sample_interval_us: u16,
    pub samples_per_trace: u16,
    pub format: SampleFormat,
}

impl BinaryHeader {
    fn parse(raw: &[u8]) -> Result<Self, SegyError> {
        let format = SampleFormat::from_code(be_u16(raw, BIN_FORMAT_CODE))?;
        let samples_per_trace = be_u16(raw, BIN_SAMPLES_PER_TRACE);
        let sample_interval_us = be_u16(raw, BIN_SAMPLE_INTERVAL);
        if samples_per_trace == 0 {
            return Err(SegyError::InvalidHeader("samples per trace is 0".into()));
        }
        if sample_interval_us == 0 {
            return Err(SegyError::InvalidHeader("sample interval is 0".into()));
        }
        Ok(Self {
            sample_interval_us,
            samples_per_trace,
            format,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceHeader {
    pub inline_no: i32,
    pub crossline_no: i32,
    pub cdp_x: i32,
    pub cdp_y: i32,
    pub coord_scalar: i16,
    pub delay_ms: i16,
}

impl TraceHeader {
    fn parse(raw: &[u8]) -> Self {
        Self {
            inline_no: be_i32(raw, TR_INLINE),
            crossline_no: be_i32(raw, TR_CROSSLINE),
            cdp_x: be_i32(raw, TR_CDP_X),
            cdp_y: be_i32(raw, TR_CDP_Y),
            coord_scalar: be_u16(raw, TR_COORD_SCALAR) as i16,
            delay_ms: be_u16(raw, TR_DELAY_MS) as i16,
        }
    }

    fn scaled(&self, raw: i32) -> f64 {
        match self.coord_scalar {
            0 | 1 => raw as f64,
            s if s < 0 => raw as f64 / (-(s as f64)),
            s => raw as f64 * s as f64,
        }
    }
}

/// Decodes an IBM System/360 single-precision word:
/// `(-1)^sign * 0.fraction * 16^(exponent - 64)`.
pub fn ibm32_to_f64(bits: u32) -> f64 {
    let sign = if bits >> 31 == 1 { -1.0 } else { 1.0 };
    let exponent = ((bits >> 24) & 0x7f) as i32;
    let fraction = (bits & 0x00ff_ffff) as f64 / (1u32 << 24) as f64;
    sign * fraction * 2f64.powi(4 * (exponent - 64))
}

/// Encodes `x` as a big-endian IEEE-754 single (returned as the word value;
/// `to_be_bytes` gives the on-disk bytes). Rounds to nearest.
pub fn f64_to_ieee32_be(x: f64) -> Result<u32, SegyError> {
    let single = x as f32;
    if !single.is_finite() {
        return Err(SegyError::Unwritable(x));
    }
    Ok(single.to_bits())
}

/// Reads a SEG-Y file into a volume. Traces may appear in any order but must
/// tile a full (inline × crossline) rectangle.
pub fn read_segy(path: impl AsRef<Path>) -> Result<Volume3D, SegyError> {
    let file = File::open(path)?;
    read_segy_from(BufReader::new(file))
}

pub fn read_segy_from(mut reader: impl Read) -> Result<Volume3D, SegyError> {
    let mut text = vec![0u8; TEXT_HEADER_LEN];
    if read_full(&mut reader, &mut text)? != TEXT_HEADER_LEN {
        return Err(SegyError::TruncatedHeader("textual header"));
    }
    let mut bin = vec![0u8; BINARY_HEADER_LEN];
    if read_full(&mut reader, &mut bin)? != BINARY_HEADER_LEN {
        return Err(SegyError::TruncatedHeader("binary header"));
    }
    let header = BinaryHeader::parse(&bin)?;
    let ns = header.samples_per_trace as usize;
    let trace_len = TRACE_HEADER_LEN + 4 * ns;

    let mut traces: Vec<(TraceHeader, Vec<f64>)> = Vec::new();
    let mut buf = vec![0u8; trace_len];
    loop {
        let n = read_full(&mut reader, &mut buf)?;
        if n == 0 {
            break;
        }
        if n < trace_len {
            return Err(SegyError::TruncatedTrace {
                trace: traces.len(),
                expected: trace_len,
                found: n,
            });
        }
        let th = TraceHeader::parse(&buf[..TRACE_HEADER_LEN]);
        let samples = buf[TRACE_HEADER_LEN..]
            .chunks_exact(4)
            .map(|w| header.format.decode(u32::from_be_bytes([w[0], w[1], w[2], w[3]])))
            .collect();
        traces.push((th, samples));
    }
    if traces.is_empty() {
        return Err(SegyError::NoTraces);
    }
    assemble(header, traces)
}

fn assemble(header: BinaryHeader, traces: Vec<(TraceHeader, Vec<f64>)>) -> Result<Volume3D, SegyError> {
    let inlines: BTreeSet<i32> = traces.iter().map(|(h, _)| h.inline_no).collect();
    let xlines: BTreeSet<i32> = traces.iter().map(|(h, _)| h.crossline_no).collect();
    if let Some(neg) = inlines.iter().chain(xlines.iter()).find(|&&n| n < 0) {
        return Err(SegyError::NonRectangular(format!("negative line number {neg}")));
    }
    let (ni, nx, ns) = (inlines.len(), xlines.len(), header.samples_per_trace as usize);
    if ni * nx != traces.len() {
        return Err(SegyError::NonRectangular(format!(
            "{} traces over {ni} inlines x {nx} crosslines",
            traces.len()
        )));
    }
    let il_pos: BTreeMap<i32, usize> = inlines.iter().enumerate().map(|(p, &n)| (n, p)).collect();
    let xl_pos: BTreeMap<i32, usize> = xlines.iter().enumerate().map(|(p, &n)| (n, p)).collect();

    let mut samples = Array3::<f64>::zeros((ni, nx, ns));
    let mut seen = vec![false; ni * nx];
    let mut headers = vec![None; ni * nx];
    for (th, data) in traces {
        let (i, j) = (il_pos[&th.inline_no], xl_pos[&th.crossline_no]);
        if std::mem::replace(&mut seen[i * nx + j], true) {
            return Err(SegyError::NonRectangular(format!(
                "duplicate trace at inline {} crossline {}",
                th.inline_no, th.crossline_no
            )));
        }
        for (k, v) in data.into_iter().enumerate() {
            samples[[i, j, k]] = v;
        }
        headers[i * nx + j] = Some(th);
    }
    let first = headers[0].expect("grid is full");
    // Spacing comes from the CDP coordinates of the first trace's neighbours.
    let dy = if nx > 1 {
        let h = headers[1].expect("grid is full");
        (h.scaled(h.cdp_x) - first.scaled(first.cdp_x)).abs()
    } else {
        DEFAULT_SPACING_M
    };
    let dx = if ni > 1 {
        let h = headers[nx].expect("grid is full");
        (h.scaled(h.cdp_y) - first.scaled(first.cdp_y)).abs()
    } else {
        DEFAULT_SPACING_M
    };
    let dx = if dx > 0.0 { dx } else { DEFAULT_SPACING_M };
    let dy = if dy > 0.0 { dy } else { DEFAULT_SPACING_M };
    let dt = header.sample_interval_us as f64 / 1e6;
    let volume = Volume3D::new(samples, dx, dy, dt)?
        .with_origin((*inlines.first().unwrap(), *xlines.first().unwrap()))
        .with_t0(first.delay_ms as f64 / 1e3);
    Ok(volume)
}

/// Writes `volume` as a format-code-5 SEG-Y file.
///
/// Inline/crossline numbers go to trace bytes 189/193, CDP coordinates (in
/// centimeters, scalar −100) to bytes 181/185, and the start time in whole
/// milliseconds to the delay field at byte 109.
pub fn write_segy(volume: &Volume3D, path: impl AsRef<Path>) -> Result<(), SegyError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_segy_to(volume, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_segy_to(volume: &Volume3D, mut w: impl Write) -> Result<(), SegyError> {
    let (ni, nx, ns) = volume.dim();
    let ns16 = u16::try_from(ns)
        .map_err(|_| SegyError::InvalidHeader(format!("{ns} samples per trace exceeds 65535")))?;
    let interval = (volume.dt * 1e6).round();
    if !(1.0..=u16::MAX as f64).contains(&interval) {
        return Err(SegyError::InvalidHeader(format!(
            "sample interval {} s not representable in microseconds",
            volume.dt
        )));
    }
    let delay_ms = (volume.t0 * 1e3).round();
    if !(0.0..=i16::MAX as f64).contains(&delay_ms) {
        return Err(SegyError::InvalidHeader(format!("start time {} s out of range", volume.t0)));
    }

    w.write_all(&textual_header(volume))?;

    let mut bin = [0u8; BINARY_HEADER_LEN];
    put_u16(&mut bin, BIN_TRACES_PER_ENSEMBLE, nx.min(u16::MAX as usize) as u16);
    put_u16(&mut bin, BIN_SAMPLE_INTERVAL, interval as u16);
    put_u16(&mut bin, BIN_SAMPLES_PER_TRACE, ns16);
    put_u16(&mut bin, BIN_FORMAT_CODE, SampleFormat::IeeeFloat.code());
    put_u16(&mut bin, BIN_REVISION, 0x0100);
    put_u16(&mut bin, BIN_FIXED_LENGTH, 1);
    w.write_all(&bin)?;

    let samples = volume.samples();
    let mut trace = vec![0u8; TRACE_HEADER_LEN + 4 * ns];
    for i in 0..ni {
        for j in 0..nx {
            trace[..TRACE_HEADER_LEN].fill(0);
            let header = &mut trace[..TRACE_HEADER_LEN];
            put_i32(header, TR_SEQUENCE, (i * nx + j + 1) as i32);
            put_u16(header, TR_COORD_SCALAR, COORD_SCALAR as u16);
            put_u16(header, TR_DELAY_MS, delay_ms as i16 as u16);
            put_u16(header, TR_NUM_SAMPLES, ns16);
            put_u16(header, TR_SAMPLE_INTERVAL, interval as u16);
            put_i32(header, TR_CDP_X, (j as f64 * volume.dy * 100.0).round() as i32);
            put_i32(header, TR_CDP_Y, (i as f64 * volume.dx * 100.0).round() as i32);
            put_i32(header, TR_INLINE, volume.origin.0 + i as i32);
            put_i32(header, TR_CROSSLINE, volume.origin.1 + j as i32);
            for (k, out) in trace[TRACE_HEADER_LEN..].chunks_exact_mut(4).enumerate() {
                out.copy_from_slice(&f64_to_ieee32_be(samples[[i, j, k]])?.to_be_bytes());
            }
            w.write_all(&trace)?;
        }
    }
    Ok(())
}

/// Big-endian IEEE single bytes of every sample in trace order, i.e. exactly
/// the sample bytes [`write_segy`] emits.
pub fn sample_bytes(volume: &Volume3D) -> Result<Vec<u8>, SegyError> {
    let mut out = Vec::with_capacity(volume.samples().len() * 4);
    for &v in volume.samples().iter() {
        out.extend_from_slice(&f64_to_ieee32_be(v)?.to_be_bytes());
    }
    Ok(out)
}

fn textual_header(volume: &Volume3D) -> Vec<u8> {
    let mut text = vec![b' '; TEXT_HEADER_LEN];
    let lines = [
        "C 1 VELGAN SEG-Y REV1 SUBSET".to_string(),
        format!("C 2 ROLE {}", volume.label),
        format!(
            "C 3 INLINES {} CROSSLINES {} SAMPLES {}",
            volume.n_inlines(),
            volume.n_crosslines(),
            volume.n_samples()
        ),
        "C 4 INLINE BYTE 189 CROSSLINE BYTE 193 FORMAT 5".to_string(),
    ];
    for (row, line) in lines.iter().enumerate() {
        let bytes: Vec<u8> = line.bytes().filter(|b| b.is_ascii()).take(80).collect();
        text[row * 80..row * 80 + bytes.len()].copy_from_slice(&bytes);
    }
    text
}

/// Reads until `buf` is full or EOF; returns the byte count.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn be_u16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be_i32(b: &[u8], at: usize) -> i32 {
    i32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn put_u16(b: &mut [u8], at: usize, v: u16) {
    b[at..at + 2].copy_from_slice(&v.to_be_bytes());
}

fn put_i32(b: &mut [u8], at: usize, v: i32) {
    b[at..at + 4].copy_from_slice(&v.to_be_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Bit-by-bit evaluation of the excess-64 base-16 encoding, written
    /// without floating-point powers: shifts the fraction one bit at a time.
    fn ibm_oracle(bits: u32) -> f64 {
        let negative = bits & 0x8000_0000 != 0;
        let exp = ((bits >> 24) & 0x7f) as i64 - 64;
        let mut value = 0.0f64;
        let mut weight = 0.5f64;
        for bit in (0..24).rev() {
            if bits >> bit & 1 == 1 {
                value += weight;
            }
            weight /= 2.0;
        }
        let mut binary_exp = 4 * exp;
        while binary_exp > 0 {
            value *= 2.0;
            binary_exp -= 1;
        }
        while binary_exp < 0 {
            value /= 2.0;
            binary_exp += 1;
        }
        if negative {
            -value
        } else {
            value
        }
    }

    #[test]
    fn ibm_examples() {
        assert_eq!(ibm32_to_f64(0x0000_0000), 0.0);
        assert_eq!(ibm32_to_f64(0x4264_0000), 100.0);
        assert_eq!(ibm32_to_f64(0xC118_0000), -1.5);
    }

    #[test]
    fn ibm_matches_bitwise_oracle_on_random_words() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5e9);
        for _ in 0..10_000 {
            let w: u32 = rng.random();
            assert_eq!(ibm32_to_f64(w), ibm_oracle(w), "word {w:#010x}");
        }
    }

    #[test]
    fn ieee_examples() {
        assert_eq!(f64_to_ieee32_be(0.0).unwrap(), 0x0000_0000);
        assert_eq!(f64_to_ieee32_be(1.0).unwrap(), 0x3F80_0000);
        assert_eq!(f64_to_ieee32_be(-2.5).unwrap(), 0xC020_0000);
        assert_eq!(f64_to_ieee32_be(42.0).unwrap(), 0x4228_0000);
    }

    #[test]
    fn ieee_overflow_is_an_error() {
        assert!(matches!(f64_to_ieee32_be(1e39), Err(SegyError::Unwritable(_))));
        assert!(matches!(f64_to_ieee32_be(f64::NAN), Err(SegyError::Unwritable(_))));
    }

    proptest! {
        #[test]
        fn ieee_encoding_round_trips_singles(x in proptest::num::f32::NORMAL | proptest::num::f32::ZERO) {
            let w = f64_to_ieee32_be(x as f64).unwrap();
            prop_assert_eq!(f32::from_bits(w), x);
        }
    }

    #[test]
    fn header_unsupported_format() {
        let mut bin = [0u8; BINARY_HEADER_LEN];
        put_u16(&mut bin, BIN_FORMAT_CODE, 3);
        put_u16(&mut bin, BIN_SAMPLES_PER_TRACE, 1);
        put_u16(&mut bin, BIN_SAMPLE_INTERVAL, 1);
        assert!(matches!(BinaryHeader::parse(&bin), Err(SegyError::UnsupportedFormat(3))));
    }
}
