//! The PTC family: an MDCT transform codec with a masking-driven rate loop.
//!
//! All three members share the bitstream. They differ in window length
//! (576 coefficients for `ptc-mp3`, 1024 for the others), in the bitrate to
//! bandwidth table, and in `ptc-heaac`'s high band, which is not coded but
//! rebuilt by the decoder from a copy of the upper low band scaled to three
//! transmitted band energies.
//!
//! Container: `"PTC1"`, then little-endian `family u8, reserved u8, window u16,
//! sample_rate u32, bitrate_bps u32, cutoff_hz u32, frame_count u32,
//! original_length u32`, then one continuous bitstream of frames. Each frame
//! holds an 8-bit scale index, a 6-bit scale factor per coded band (plus three
//! for the replicated band), then per coded band a 5-bit range index followed
//! by the band's mixed-radix packed coefficients.

pub(crate) mod bands;
pub(crate) mod mdct;
pub(crate) mod psycho;
mod rate;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::bits::{BitReader, BitWriter};
use super::{CodecError, CodecFamily, CodecSpec, DecodeError, EncodedStream};
use crate::util::mix_seed;
use crate::AudioClip;
use bands::{split_bark, BandLayout};
use mdct::Mdct;
use psycho::MaskingModel;

pub use rate::{ptc_rate_control, RateDecision};

pub(crate) const MAGIC: &[u8; 4] = b"PTC1";
pub(crate) const HEADER_LEN: usize = 28;
pub(crate) const N_BANDS: usize = 32;
const SBR_BANDS: usize = 3;
const SBR_TOP_HZ: f64 = 18_000.0;
const SF_BITS: u32 = 6;
const SF_OFFSET: f64 = 40.0;
const ALLOWED_WINDOWS: [usize; 6] = [128, 256, 512, 576, 1024, 2048];

/// Default audio bandwidth (Hz) for a family at a bitrate.
pub fn default_cutoff_hz(family: CodecFamily, kbps: f64) -> u32 {
    let table: &[(f64, u32)] = match family {
        CodecFamily::PtcMp3 => &[
            (24.0, 7_000),
            (32.0, 10_000),
            (48.0, 12_500),
            (64.0, 15_000),
            (96.0, 17_500),
        ],
        CodecFamily::PtcAac => &[
            (24.0, 9_000),
            (32.0, 11_000),
            (48.0, 14_000),
            (64.0, 16_000),
            (96.0, 18_500),
        ],
        CodecFamily::PtcHeaac => &[(16.0, 5_500), (24.0, 6_500), (32.0, 8_000), (48.0, 10_000)],
        _ => &[],
    };
    let top = match family {
        CodecFamily::PtcMp3 => 19_500,
        CodecFamily::PtcAac => 20_000,
        _ => 11_000,
    };
    table
        .iter()
        .find(|&&(limit, _)| kbps <= limit)
        .map(|&(_, hz)| hz)
        .unwrap_or(top)
}

fn family_id(family: CodecFamily) -> u8 {
    match family {
        CodecFamily::PtcMp3 => 1,
        CodecFamily::PtcAac => 2,
        CodecFamily::PtcHeaac => 3,
        _ => 0,
    }
}

/// Resolved PTC parameters for one clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PtcConfig {
    pub family: CodecFamily,
    pub window: usize,
    pub sample_rate: u32,
    pub bitrate_bps: u32,
    pub cutoff_hz: u32,
}

impl PtcConfig {
    pub fn from_spec(spec: &CodecSpec, sample_rate: u32) -> Result<PtcConfig, CodecError> {
        let family = spec.family;
        let param = |key: &str, reason: String| CodecError::Param {
            family: family.to_string(),
            key: key.into(),
            reason,
        };
        if !(8_000..=192_000).contains(&sample_rate) {
            return Err(CodecError::UnsupportedRate {
                family: family.to_string(),
                rate: sample_rate,
            });
        }
        let window = match spec.param("window") {
            None if family == CodecFamily::PtcMp3 => 576,
            None => 1024,
            Some(text) => {
                let w: usize = text
                    .parse()
                    .map_err(|_| param("window", format!("{text:?} is not an integer")))?;
                if !ALLOWED_WINDOWS.contains(&w) {
                    return Err(param(
                        "window",
                        format!("{w}, expected one of {ALLOWED_WINDOWS:?}"),
                    ));
                }
                w
            }
        };
        let nyquist = sample_rate / 2;
        let cutoff_hz = match spec.param("cutoff") {
            None => default_cutoff_hz(family, spec.bitrate_kbps).min(nyquist),
            Some(text) => {
                let c: f64 = text
                    .parse()
                    .map_err(|_| param("cutoff", format!("{text:?} is not a number")))?;
                if !(c > 0.0 && c <= nyquist as f64) {
                    return Err(param("cutoff", format!("{c} Hz outside (0, {nyquist}]")));
                }
                c.round() as u32
            }
        };
        Ok(PtcConfig {
            family,
            window,
            sample_rate,
            bitrate_bps: spec.bitrate_bps(),
            cutoff_hz,
        })
    }
}

/// Everything both ends derive from the container header.
struct Layout {
    n: usize,
    bands: BandLayout,
    coded: usize,
    widths: Vec<usize>,
    /// Edges of the three replicated bands, when present.
    sbr: Option<Vec<usize>>,
    model: MaskingModel,
}

impl Layout {
    fn new(family: CodecFamily, n: usize, sample_rate: u32, cutoff_hz: u32) -> Layout {
        let bands = BandLayout::bark(n, sample_rate, N_BANDS);
        let coded = (0..N_BANDS)
            .take_while(|&b| bands.edges[b + 1] as f64 * bands.bin_hz <= cutoff_hz as f64)
            .count()
            .max(1);
        let widths = (0..coded).map(|b| bands.width(b)).collect();
        let sbr = if family == CodecFamily::PtcHeaac {
            let kc = bands.edges[coded];
            let top_hz = (2.5 * cutoff_hz as f64)
                .min(SBR_TOP_HZ)
                .min(sample_rate as f64 / 2.0);
            let kt = ((top_hz / bands.bin_hz).round() as usize).min(n);
            (kt >= kc + SBR_BANDS && kc >= 2).then(|| split_bark(kc, kt, bands.bin_hz, SBR_BANDS))
        } else {
            None
        };
        let model = MaskingModel::new(&bands, n);
        Layout {
            n,
            bands,
            coded,
            widths,
            sbr,
            model,
        }
    }

    fn side_bits(&self) -> u64 {
        let sbr = if self.sbr.is_some() { SBR_BANDS } else { 0 };
        8 + SF_BITS as u64 * (self.coded + sbr) as u64 + rate::RANGE_BITS as u64 * self.coded as u64
    }
}

fn scale_index(energy: f64, width: usize) -> u64 {
    if energy <= 0.0 {
        return 0;
    }
    let rms = (energy / width as f64).sqrt();
    (4.0 * rms.log2() + SF_OFFSET).ceil().clamp(1.0, 63.0) as u64
}

fn scale_energy(sf: u64, width: usize) -> f64 {
    if sf == 0 {
        0.0
    } else {
        width as f64 * 2f64.powf((sf as f64 - SF_OFFSET) / 2.0)
    }
}

fn band_energy(c: &[f64]) -> f64 {
    c.iter().map(|v| v * v).sum()
}

pub(crate) fn encode(spec: &CodecSpec, clip: &AudioClip) -> Result<EncodedStream, CodecError> {
    let cfg = PtcConfig::from_spec(spec, clip.sample_rate())?;
    let layout = Layout::new(cfg.family, cfg.window, cfg.sample_rate, cfg.cutoff_hz);
    let n = layout.n;
    let mdct = Mdct::new(n);
    let x: Vec<f64> = clip.samples().iter().map(|&s| s as f64).collect();
    let frames = mdct.analyze(&x);
    let frame_count = frames.len();

    let total_bits =
        (cfg.bitrate_bps as f64 * clip.len() as f64 / cfg.sample_rate as f64).floor() as i64;
    let frame_budget = total_bits - 8 * HEADER_LEN as i64;

    let mut w = BitWriter::new();
    for (f, coeffs) in frames.iter().enumerate() {
        let sfs: Vec<u64> = (0..layout.coded)
            .map(|b| {
                scale_index(
                    band_energy(&coeffs[layout.bands.range(b)]),
                    layout.widths[b],
                )
            })
            .collect();
        let energies: Vec<f64> = sfs
            .iter()
            .zip(&layout.widths)
            .map(|(&s, &w)| scale_energy(s, w))
            .collect();
        let thresholds = layout.model.thresholds(&energies);
        let sbr_sfs: Vec<u64> = layout
            .sbr
            .as_ref()
            .map(|e| {
                (0..SBR_BANDS)
                    .map(|j| scale_index(band_energy(&coeffs[e[j]..e[j + 1]]), e[j + 1] - e[j]))
                    .collect()
            })
            .unwrap_or_default();

        let peaks: Vec<f64> = (0..layout.coded)
            .map(|b| rate::peak(&coeffs[layout.bands.range(b)]))
            .collect();
        let target = frame_budget * (f as i64 + 1) / frame_count as i64 - w.bit_len() as i64;
        let spectral = (target - layout.side_bits() as i64).max(1) as u64;
        let decision = rate::search(&peaks, &thresholds, &layout.widths, spectral);

        w.write(decision.lambda_index as u64, 8);
        for &s in sfs.iter().chain(&sbr_sfs) {
            w.write(s, SF_BITS);
        }
        for b in 0..layout.coded {
            let width = layout.widths[b];
            let step = rate::step(decision.lambda, thresholds[b], width);
            let code = rate::range_code(rate::quantize(peaks[b], step, rate::R_MAX).unsigned_abs());
            w.write(code as u64, rate::RANGE_BITS);
            let range = rate::range_table()[code];
            if range == 0 {
                continue;
            }
            let a = 2 * range + 1;
            let g = rate::group_size(a);
            for group in coeffs[layout.bands.range(b)].chunks(g) {
                let mut value: u128 = 0;
                for &c in group.iter().rev() {
                    let symbol = (rate::quantize(c, step, range) + range as i64) as u128;
                    value = value * a as u128 + symbol;
                }
                w.write(value as u64, rate::group_bits(a, group.len()));
            }
        }
    }

    let mut payload = Vec::with_capacity(HEADER_LEN + (total_bits.max(0) as usize) / 8);
    payload.extend_from_slice(MAGIC);
    payload.push(family_id(cfg.family));
    payload.push(0);
    payload.extend_from_slice(&(n as u16).to_le_bytes());
    payload.extend_from_slice(&cfg.sample_rate.to_le_bytes());
    payload.extend_from_slice(&cfg.bitrate_bps.to_le_bytes());
    payload.extend_from_slice(&cfg.cutoff_hz.to_le_bytes());
    payload.extend_from_slice(&(frame_count as u32).to_le_bytes());
    payload.extend_from_slice(&(clip.len() as u32).to_le_bytes());
    payload.extend_from_slice(&w.finish());
    // Constant-rate stuffing: the decoder ignores bytes after the last frame.
    let nominal_bytes = (total_bits.max(0) / 8) as usize;
    if payload.len() < nominal_bytes {
        payload.resize(nominal_bytes, 0);
    }
    Ok(EncodedStream {
        spec: spec.clone(),
        sample_rate: cfg.sample_rate,
        frame_count,
        payload,
        original_length: clip.len(),
    })
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub(crate) fn decode(stream: &EncodedStream) -> Result<AudioClip, CodecError> {
    let p = &stream.payload;
    let header_err = |m: String| CodecError::Decode(DecodeError::Header(m));
    if p.len() < HEADER_LEN {
        return Err(header_err(format!(
            "{} bytes, header needs {HEADER_LEN}",
            p.len()
        )));
    }
    if &p[0..4] != MAGIC {
        return Err(header_err("missing PTC1 magic".into()));
    }
    let family = stream.spec.family;
    if p[4] != family_id(family) {
        return Err(header_err(format!(
            "family id {} does not match {family}",
            p[4]
        )));
    }
    let n = u16_at(p, 6) as usize;
    let sample_rate = u32_at(p, 8);
    let cutoff_hz = u32_at(p, 16);
    let frame_count = u32_at(p, 20) as usize;
    let original_length = u32_at(p, 24) as usize;
    if !ALLOWED_WINDOWS.contains(&n) {
        return Err(header_err(format!("window {n} not supported")));
    }
    if !(8_000..=192_000).contains(&sample_rate) {
        return Err(header_err(format!(
            "sample rate {sample_rate} out of range"
        )));
    }
    if cutoff_hz == 0 || cutoff_hz > sample_rate / 2 {
        return Err(header_err(format!("cutoff {cutoff_hz} Hz invalid")));
    }
    if original_length != stream.original_length {
        return Err(header_err(format!(
            "header length {original_length} disagrees with stream length {}",
            stream.original_length
        )));
    }
    if frame_count != original_length.div_ceil(n) + 1 {
        return Err(header_err(format!(
            "frame count {frame_count} inconsistent with length"
        )));
    }
    let body = &p[HEADER_LEN..];
    if (frame_count as u64) * 8 > body.len() as u64 * 8 {
        return Err(DecodeError::Truncated { frame: body.len() }.into());
    }

    let layout = Layout::new(family, n, sample_rate, cutoff_hz);
    let mut r = BitReader::new(body);
    let mut frames = Vec::with_capacity(frame_count);
    for frame in 0..frame_count {
        let truncated = || CodecError::Decode(DecodeError::Truncated { frame });
        let index = r.read(8).ok_or_else(truncated)? as usize;
        let mut sfs = Vec::with_capacity(layout.coded);
        for _ in 0..layout.coded {
            sfs.push(r.read(SF_BITS).ok_or_else(truncated)?);
        }
        let mut sbr_sfs = Vec::new();
        if layout.sbr.is_some() {
            for _ in 0..SBR_BANDS {
                sbr_sfs.push(r.read(SF_BITS).ok_or_else(truncated)?);
            }
        }
        let energies: Vec<f64> = sfs
            .iter()
            .zip(&layout.widths)
            .map(|(&s, &w)| scale_energy(s, w))
            .collect();
        let thresholds = layout.model.thresholds(&energies);
        let lambda = rate::lambda(index);
        let mut coeffs = vec![0.0; n];
        for b in 0..layout.coded {
            let width = layout.widths[b];
            let step = rate::step(lambda, thresholds[b], width);
            let code = r.read(rate::RANGE_BITS).ok_or_else(truncated)? as usize;
            let range = rate::range_table()[code];
            if range == 0 {
                continue;
            }
            let a = 2 * range + 1;
            let g = rate::group_size(a);
            let band = layout.bands.range(b);
            let mut k = band.start;
            while k < band.end {
                let count = g.min(band.end - k);
                let mut value = r.read(rate::group_bits(a, count)).ok_or_else(truncated)? as u128;
                if value >= (a as u128).pow(count as u32) {
                    return Err(DecodeError::Invalid {
                        frame,
                        reason: format!("band {b} symbol group out of range"),
                    }
                    .into());
                }
                for _ in 0..count {
                    let symbol = (value % a as u128) as i64;
                    value /= a as u128;
                    coeffs[k] = rate::dequantize(symbol - range as i64, step);
                    k += 1;
                }
            }
        }
        if let Some(edges) = &layout.sbr {
            replicate_high_band(&mut coeffs, edges, &sbr_sfs, frame);
        }
        frames.push(coeffs);
    }
    let y = Mdct::new(n).synthesize(&frames, original_length);
    Ok(AudioClip::new(
        sample_rate,
        y.into_iter().map(|v| v as f32).collect(),
    ))
}

/// Fills `edges[0]..edges[3]` with copies of the upper half of the low band,
/// scaled per band to the transmitted energies.
fn replicate_high_band(coeffs: &mut [f64], edges: &[usize], sfs: &[u64], frame: usize) {
    let kc = edges[0];
    let period = (kc / 2).max(1);
    for k in kc..edges[SBR_BANDS] {
        coeffs[k] = coeffs[kc - period + (k - kc) % period];
    }
    for j in 0..SBR_BANDS {
        let band = edges[j]..edges[j + 1];
        let target = scale_energy(sfs[j], band.len());
        if target == 0.0 {
            coeffs[band].fill(0.0);
            continue;
        }
        let mut have = band_energy(&coeffs[band.clone()]);
        if have == 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(frame as u64, j as u64));
            for c in &mut coeffs[band.clone()] {
                *c = StandardNormal.sample(&mut rng);
            }
            have = band_energy(&coeffs[band.clone()]);
        }
        let g = (target / have).sqrt();
        for c in &mut coeffs[band] {
            *c *= g;
        }
    }
}
