//! Log-mel filterbank features and the frame-mean feature divergence.

mod cache;

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::sha256_hex;
use crate::AudioClip;

pub use cache::FeatureCache;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature parameters: {0}")]
    Params(String),
    #[error(
        "mel filter {index} is empty for n_mels={n_mels} over {fmin}..{fmax} Hz with n_fft={n_fft}"
    )]
    EmptyFilter {
        index: usize,
        n_mels: usize,
        fmin: f64,
        fmax: f64,
        n_fft: usize,
    },
    #[error("clip sample rate {clip} Hz differs from feature rate {params} Hz")]
    RateMismatch { clip: u32, params: u32 },
    #[error("clip of {len} samples is shorter than one {n_fft}-sample frame")]
    TooShort { len: usize, n_fft: usize },
    #[error("feature shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("feature cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Floor applied in the power domain before the logarithm.
    pub log_floor: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            sample_rate: 44_100,
            n_fft: 2048,
            hop: 1024,
            n_mels: 64,
            fmin: 0.0,
            fmax: 22_050.0,
            log_floor: 1e-10,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::Params(m));
        if self.sample_rate == 0 {
            return bad("sample rate must be positive".into());
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return bad(format!("n_fft {} is not a power of two", self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return bad(format!("hop {} must be in 1..={}", self.hop, self.n_fft));
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive".into());
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return bad(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got {}..{}",
                self.fmin, self.fmax
            ));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad(format!("log_floor {} must be positive", self.log_floor));
        }
        Ok(())
    }

    /// Stable digest of the parameters, used for cache keys.
    pub fn digest(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("serialisable")
                .as_bytes(),
        )
    }

    /// Number of frames for a clip of `len` samples (0 if shorter than one frame).
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.n_fft {
            0
        } else {
            1 + (len - self.n_fft) / self.hop
        }
    }
}

/// A frames x bands matrix of natural-log mel power, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMel {
    values: Vec<f32>,
    frames: usize,
    n_mels: usize,
    params: FeatureParams,
}

impl LogMel {
    pub fn from_values(
        values: Vec<f32>,
        frames: usize,
        params: FeatureParams,
    ) -> Result<Self, FeatureError> {
        if values.len() != frames * params.n_mels {
            return Err(FeatureError::ShapeMismatch(format!(
                "{} values for {frames} x {} matrix",
                values.len(),
                params.n_mels
            )));
        }
        Ok(Self {
            values,
            frames,
            n_mels: params.n_mels,
            params,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.n_mels..(t + 1) * self.n_mels]
    }

    pub fn get(&self, t: usize, m: usize) -> f32 {
        self.values[t * self.n_mels + m]
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Centre frequencies (Hz) of the mel filters, equally spaced in mel.
pub fn mel_centers(params: &FeatureParams) -> Vec<f64> {
    mel_points(params)[1..=params.n_mels].to_vec()
}

fn mel_points(params: &FeatureParams) -> Vec<f64> {
    let lo = hz_to_mel(params.fmin);
    let hi = hz_to_mel(params.fmax);
    let last = params.n_mels + 1;
    (0..=last)
        .map(|i| match i {
            0 => params.fmin,
            i if i == last => params.fmax,
            i => mel_to_hz(lo + (hi - lo) * i as f64 / last as f64),
        })
        .collect()
}

/// Unit-height triangular filters on the mel scale, `n_mels` rows of `n_fft / 2 + 1` weights.
pub fn mel_filterbank(params: &FeatureParams) -> Result<Vec<Vec<f64>>, FeatureError> {
    params.validate()?;
    let pts = mel_points(params);
    let n_bins = params.n_fft / 2 + 1;
    let bin_hz = params.sample_rate as f64 / params.n_fft as f64;
    let mut bank = Vec::with_capacity(params.n_mels);
    for m in 0..params.n_mels {
        let (l, c, r) = (pts[m], pts[m + 1], pts[m + 2]);
        let row: Vec<f64> = (0..n_bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                let up = (f - l) / (c - l);
                let down = (r - f) / (r - c);
                up.min(down).max(0.0)
            })
            .collect();
        if row.iter().sum::<f64>() <= 0.0 {
            return Err(FeatureError::EmptyFilter {
                index: m,
                n_mels: params.n_mels,
                fmin: params.fmin,
                fmax: params.fmax,
                n_fft: params.n_fft,
            });
        }
        bank.push(row);
    }
    Ok(bank)
}

/// Reusable STFT + filterbank state for one parameter set.
pub struct LogMelExtractor {
    params: FeatureParams,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// Per filter: first bin and its non-zero weights.
    filters: Vec<(usize, Vec<f64>)>,
}

impl LogMelExtractor {
    pub fn new(params: &FeatureParams) -> Result<Self, FeatureError> {
        let bank = mel_filterbank(params)?;
        let filters = bank
            .into_iter()
            .map(|row| {
                let start = row.iter().position(|&w| w > 0.0).unwrap_or(0);
                let end = row.iter().rposition(|&w| w > 0.0).map_or(start, |e| e + 1);
                (start, row[start..end].to_vec())
            })
            .collect();
        let n = params.n_fft;
        Ok(Self {
            params: params.clone(),
            fft: FftPlanner::new().plan_fft_forward(n),
            window: (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
            filters,
        })
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<LogMel, FeatureError> {
        let p = &self.params;
        if clip.sample_rate() != p.sample_rate {
            return Err(FeatureError::RateMismatch {
                clip: clip.sample_rate(),
                params: p.sample_rate,
            });
        }
        if clip.len() < p.n_fft {
            return Err(FeatureError::TooShort {
                len: clip.len(),
                n_fft: p.n_fft,
            });
        }
        let frames = p.frame_count(clip.len());
        let floor_log = p.log_floor.ln();
        let samples = clip.samples();
        let mut values = Vec::with_capacity(frames * p.n_mels);
        let mut buf = vec![Complex::new(0.0, 0.0); p.n_fft];
        let mut power = vec![0.0f64; p.n_fft / 2 + 1];
        for t in 0..frames {
            let start = t * p.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(samples[start + i] as f64 * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            for (pw, b) in power.iter_mut().zip(&buf) {
                *pw = b.norm_sqr();
            }
            for (start, weights) in &self.filters {
                let e: f64 = weights
                    .iter()
                    .zip(&power[*start..])
                    .map(|(w, p)| w * p)
                    .sum();
                values.push(if e > p.log_floor { e.ln() } else { floor_log } as f32);
            }
        }
        LogMel::from_values(values, frames, p.clone())
    }
}

/// `log(max(melbank . |STFT|^2, log_floor))` with a periodic Hann window and no padding.
pub fn log_mel(clip: &AudioClip, params: &FeatureParams) -> Result<LogMel, FeatureError> {
    LogMelExtractor::new(params)?.extract(clip)
}

/// Mean over frames of the Euclidean distance between band vectors.
pub fn feature_divergence(a: &LogMel, b: &LogMel) -> Result<f64, FeatureError> {
    if a.params != b.params {
        return Err(FeatureError::ShapeMismatch(
            "feature parameters differ".into(),
        ));
    }
    if a.frames != b.frames {
        return Err(FeatureError::ShapeMismatch(format!(
            "{} vs {} frames",
            a.frames, b.frames
        )));
    }
    if a.frames == 0 {
        return Err(FeatureError::ShapeMismatch("no frames".into()));
    }
    let total: f64 = (0..a.frames)
        .map(|t| {
            a.frame(t)
                .iter()
                .zip(b.frame(t))
                .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / a.frames as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_params() -> FeatureParams {
        FeatureParams {
            sample_rate: 16_000,
            n_fft: 256,
            hop: 128,
            n_mels: 20,
            fmin: 0.0,
            fmax: 8_000.0,
            log_floor: 1e-10,
        }
    }

    #[test]
    fn single_filter_spans_range() {
        let p = FeatureParams {
            n_mels: 1,
            ..small_params()
        };
        let bank = mel_filterbank(&p).unwrap();
        assert_eq!(bank.len(), 1);
        let nz: Vec<usize> = (0..bank[0].len()).filter(|&k| bank[0][k] > 0.0).collect();
        assert_eq!(nz[0], 1);
        assert_eq!(*nz.last().unwrap(), p.n_fft / 2 - 1);
    }

    #[test]
    fn too_many_filters_is_an_error() {
        let p = FeatureParams {
            n_mels: 200,
            ..small_params()
        };
        assert!(matches!(
            mel_filterbank(&p),
            Err(FeatureError::EmptyFilter { .. })
        ));
    }

    #[test]
    fn filterbank_covers_interior_bins() {
        let p = FeatureParams::default();
        let bank = mel_filterbank(&p).unwrap();
        let centers = mel_centers(&p);
        let bin_hz = p.sample_rate as f64 / p.n_fft as f64;
        for k in 0..bank[0].len() {
            let f = k as f64 * bin_hz;
            if f > centers[0] && f < *centers.last().unwrap() {
                let total: f64 = bank.iter().map(|r| r[k]).sum();
                assert!(total > 0.0, "bin {k}");
            }
        }
        for w in bank.windows(2) {
            assert!(
                w[0].iter().zip(&w[1]).any(|(a, b)| *a > 0.0 && *b > 0.0),
                "adjacent filters overlap"
            );
        }
    }

    #[test]
    fn centers_equally_spaced_in_mel() {
        let p = FeatureParams::default();
        let mels: Vec<f64> = mel_centers(&p)
            .iter()
            .map(|&f| 2595.0 * (1.0 + f / 700.0).log10())
            .collect();
        let step = mels[1] - mels[0];
        for w in mels.windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-9);
        }
    }

    #[test]
    fn silence_is_floor() {
        let p = small_params();
        let lm = log_mel(&AudioClip::silence(16_000, 1000), &p).unwrap();
        assert_eq!(lm.frames(), 1 + (1000 - 256) / 128);
        let floor = (1e-10f64).ln() as f32;
        assert!(lm.values().iter().all(|&v| v == floor));
    }

    #[test]
    fn tone_at_center_peaks_in_its_band() {
        let p = small_params();
        let centers = mel_centers(&p);
        let band = 12;
        let f = centers[band];
        let clip = AudioClip::new(
            16_000,
            (0..4000)
                .map(|i| (0.5 * (2.0 * PI * f * i as f64 / 16_000.0).sin()) as f32)
                .collect(),
        );
        let lm = log_mel(&clip, &p).unwrap();
        for t in 0..lm.frames() {
            let row = lm.frame(t);
            let arg = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap();
            assert_eq!(arg, band);
        }
    }

    #[test]
    fn divergence_identities() {
        let p = small_params();
        let mut rng = crate::util::seeded_rng(3);
        let clip = AudioClip::new(
            16_000,
            (0..3000).map(|_| rng.random_range(-0.5..0.5)).collect(),
        );
        let a = log_mel(&clip, &p).unwrap();
        assert_eq!(feature_divergence(&a, &a).unwrap(), 0.0);
        let c = 0.75f32;
        let shifted = LogMel::from_values(
            a.values().iter().map(|v| v + c).collect(),
            a.frames(),
            p.clone(),
        )
        .unwrap();
        let d = feature_divergence(&a, &shifted).unwrap();
        assert!(
            (d - c as f64 * (p.n_mels as f64).sqrt()).abs() < 1e-4,
            "{d}"
        );
        assert_eq!(
            feature_divergence(&a, &shifted).unwrap(),
            feature_divergence(&shifted, &a).unwrap()
        );
        let short = LogMel::from_values(a.values()[..p.n_mels].to_vec(), 1, p).unwrap();
        assert!(feature_divergence(&a, &short).is_err());
    }

    #[test]
    fn rejects_rate_mismatch_and_short_clips() {
        let p = small_params();
        assert!(matches!(
            log_mel(&AudioClip::silence(8_000, 1000), &p),
            Err(FeatureError::RateMismatch { .. })
        ));
        assert!(matches!(
            log_mel(&AudioClip::silence(16_000, 100), &p),
            Err(FeatureError::TooShort { .. })
        ));
    }
}
