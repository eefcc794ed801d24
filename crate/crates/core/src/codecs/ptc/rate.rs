//! Global quantiser scale search and the exact bit cost of a band.

use crate::codecs::CodecError;
use std::sync::OnceLock;

use crate::util::bit_length;

/// Number of entries in the global scale grid (8-bit index).
pub(crate) const LAMBDA_STEPS: usize = 256;
/// Largest quantised magnitude.
pub(crate) const R_MAX: u64 = 16_383;
const ROUNDING: f64 = 0.4054;

/// Noise-to-threshold factor for grid index `i`; eight steps per octave,
/// unity at index 160.
pub(crate) fn lambda(i: usize) -> f64 {
    2f64.powf((i as f64 - 160.0) / 8.0)
}

/// Uniform step that would put the band's noise at `lambda * threshold`.
pub(crate) fn step(lambda: f64, threshold: f64, width: usize) -> f64 {
    (12.0 * lambda * threshold / width as f64).sqrt()
}

pub(crate) fn quantize(c: f64, step: f64, range: u64) -> i64 {
    let q = ((c.abs() / step).powf(0.75) + ROUNDING).floor() as u64;
    let q = q.min(range) as i64;
    if c < 0.0 {
        -q
    } else {
        q
    }
}

pub(crate) fn dequantize(q: i64, step: f64) -> f64 {
    let m = (q.unsigned_abs() as f64).powf(4.0 / 3.0) * step;
    if q < 0 {
        -m
    } else {
        m
    }
}

/// Bits of the per-band range index.
pub(crate) const RANGE_BITS: u32 = 5;
const RANGE_CODES: usize = 1 << RANGE_BITS;

/// Magnitude limits selectable per band: `0..=7` exactly, then a geometric
/// ladder up to `R_MAX`. Index 0 marks a band with no coefficients sent.
pub(crate) fn range_table() -> &'static [u64; RANGE_CODES] {
    static TABLE: OnceLock<[u64; RANGE_CODES]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0u64; RANGE_CODES];
        let ratio = (R_MAX as f64 / 7.0).powf(1.0 / (RANGE_CODES - 8) as f64);
        for (i, v) in t.iter_mut().enumerate() {
            *v = if i <= 7 {
                i as u64
            } else {
                (7.0 * ratio.powi(i as i32 - 7)).round() as u64
            };
        }
        t[RANGE_CODES - 1] = R_MAX;
        t
    })
}

/// Smallest range index whose limit covers `magnitude`.
pub(crate) fn range_code(magnitude: u64) -> usize {
    let t = range_table();
    t.iter()
        .position(|&r| r >= magnitude)
        .unwrap_or(RANGE_CODES - 1)
}

/// Range of a band whose largest coefficient magnitude is `peak`.
pub(crate) fn band_range(peak: f64, step: f64) -> u64 {
    range_table()[range_code(quantize(peak, step, R_MAX).unsigned_abs())]
}

/// Symbols per mixed-radix group for an alphabet of `alphabet` values, so that a group fits in 64 bits.
pub(crate) fn group_size(alphabet: u64) -> usize {
    let mut g = 0;
    let mut v: u128 = 1;
    while v * alphabet as u128 <= 1u128 << 64 {
        v *= alphabet as u128;
        g += 1;
    }
    g.max(1)
}

/// Bits needed for a group of `count` symbols.
pub(crate) fn group_bits(alphabet: u64, count: usize) -> u32 {
    let span = (alphabet as u128).pow(count as u32);
    bit_length(span - 1)
}

/// Exact packed size of `width` symbols in `-range..=range`.
pub(crate) fn band_bits(range: u64, width: usize) -> u64 {
    if range == 0 {
        return 0;
    }
    let a = 2 * range + 1;
    let g = group_size(a);
    let full = width / g;
    let rest = width % g;
    let mut bits = full as u64 * group_bits(a, g) as u64;
    if rest > 0 {
        bits += group_bits(a, rest) as u64;
    }
    bits
}

/// Spectral bits at grid index `i`, excluding the fixed per-band range indices.
pub(crate) fn total_bits(i: usize, peaks: &[f64], thresholds: &[f64], widths: &[usize]) -> u64 {
    let l = lambda(i);
    peaks
        .iter()
        .zip(thresholds)
        .zip(widths)
        .map(|((&p, &t), &w)| band_bits(band_range(p, step(l, t, w)), w))
        .sum()
}

/// Outcome of the per-frame rate search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateDecision {
    pub lambda_index: usize,
    pub lambda: f64,
    /// Exact spectral bits at the chosen scale.
    pub bits: u64,
    /// The chosen scale lies outside `[0.95, 1.05] * target`: the target was
    /// unreachable even at a search bound.
    pub rate_miss: bool,
}

/// Finds the finest quantiser scale whose packed size fits `target_bits`.
///
/// `bands` holds the coefficients of each coded band. Bit cost is
/// non-increasing along the grid, so a bisection over the 256 indices finds
/// the smallest index with `bits <= target_bits`. When even the coarsest
/// scale overshoots, the coarsest index is returned with `rate_miss`.
pub fn ptc_rate_control(
    bands: &[&[f64]],
    thresholds: &[f64],
    target_bits: u64,
) -> Result<RateDecision, CodecError> {
    if bands.len() != thresholds.len() {
        return Err(CodecError::RateInput(format!(
            "{} bands but {} thresholds",
            bands.len(),
            thresholds.len()
        )));
    }
    if target_bits == 0 {
        return Err(CodecError::RateInput("target bits must be positive".into()));
    }
    if let Some(c) = bands.iter().flat_map(|b| b.iter()).find(|c| !c.is_finite()) {
        return Err(CodecError::RateInput(format!(
            "coefficient {c} is not finite"
        )));
    }
    if let Some(t) = thresholds.iter().find(|t| !t.is_finite() || **t <= 0.0) {
        return Err(CodecError::RateInput(format!(
            "masking threshold {t} is not finite and positive"
        )));
    }
    if bands.iter().any(|b| b.is_empty()) {
        return Err(CodecError::RateInput("zero-width band".into()));
    }
    let peaks: Vec<f64> = bands.iter().map(|b| peak(b)).collect();
    let widths: Vec<usize> = bands.iter().map(|b| b.len()).collect();
    Ok(search(&peaks, thresholds, &widths, target_bits))
}

pub(crate) fn peak(c: &[f64]) -> f64 {
    c.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn search(
    peaks: &[f64],
    thresholds: &[f64],
    widths: &[usize],
    target_bits: u64,
) -> RateDecision {
    let cost = |i| total_bits(i, peaks, thresholds, widths);
    let (mut lo, mut hi) = (0usize, LAMBDA_STEPS - 1);
    let index = if cost(hi) > target_bits {
        hi
    } else {
        while lo < hi {
            let mid = (lo + hi) / 2;
            if cost(mid) <= target_bits {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    };
    let bits = cost(index);
    let target = target_bits as f64;
    RateDecision {
        lambda_index: index,
        lambda: lambda(index),
        bits,
        rate_miss: (bits as f64) > 1.05 * target || (bits as f64) < 0.95 * target,
    }
}
