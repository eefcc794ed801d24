#![allow(dead_code)]

use asc_core::features::FeatureParams;
use asc_core::AudioClip;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian white noise with the given RMS, clipped to [-1, 1].
pub fn white_noise(seconds: f64, rms: f64, seed: u64) -> AudioClip {
    let mut r = rng(seed);
    let n = (seconds * 44_100.0).round() as usize;
    let samples = (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut r);
            (v * rms).clamp(-1.0, 1.0) as f32
        })
        .collect();
    AudioClip::new(44_100, samples)
}

pub fn uniform_samples(n: usize, seed: u64) -> Vec<f32> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-0.5f32..0.5)).collect()
}

pub fn sine(freq: f64, seconds: f64, amp: f64) -> AudioClip {
    let n = (seconds * 44_100.0).round() as usize;
    AudioClip::new(
        44_100,
        (0..n)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 44_100.0).sin()) as f32)
            .collect(),
    )
}

/// Adds white noise at `level_db` relative to the clip RMS.
pub fn add_noise(clip: &AudioClip, level_db: f64, seed: u64) -> AudioClip {
    let mut r = rng(seed);
    let g = clip.rms() * 10f64.powf(level_db / 20.0);
    AudioClip::new(
        clip.sample_rate(),
        clip.samples()
            .iter()
            .map(|&s| {
                let v: f64 = StandardNormal.sample(&mut r);
                s + (g * v) as f32
            })
            .collect(),
    )
}

/// Averaged Hann-windowed power spectrum, `n / 2 + 1` bins.
pub fn power_spectrum(clip: &AudioClip, n: usize) -> Vec<f64> {
    let fft = FftPlanner::new().plan_fft_forward(n);
    let x = clip.samples();
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let mut acc = vec![0.0; n / 2 + 1];
    let mut start = 0;
    while start + n <= x.len() {
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|i| Complex::new(x[start + i] as f64 * window[i], 0.0))
            .collect();
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        start += n / 2;
    }
    acc
}

/// Spectrum energy between two frequencies.
pub fn band_energy(spectrum: &[f64], n: usize, lo_hz: f64, hi_hz: f64) -> f64 {
    let bin = 44_100.0 / n as f64;
    spectrum
        .iter()
        .enumerate()
        .filter(|&(k, _)| {
            let f = k as f64 * bin;
            f >= lo_hz && f < hi_hz
        })
        .map(|(_, &e)| e)
        .sum()
}

/// Straight-line transcription of the A2DP mono bit allocation.
pub fn reference_allocation(sf: &[u8], bitpool: i32, snr: bool, fs_index: usize) -> Vec<u8> {
    const LOUDNESS_4: [[i32; 4]; 4] = [[-1, 0, 0, 0], [-2, 0, 0, 1], [-2, 0, 0, 1], [-2, 0, 0, 1]];
    const LOUDNESS_8: [[i32; 8]; 4] = [
        [-2, 0, 0, 0, 0, 0, 0, 1],
        [-3, 0, 0, 0, 0, 0, 1, 2],
        [-4, 0, 0, 0, 0, 0, 1, 2],
        [-4, 0, 0, 0, 0, 0, 1, 2],
    ];
    let nsb = sf.len();
    let mut bitneed = vec![0i32; nsb];
    for sb in 0..nsb {
        if snr {
            bitneed[sb] = sf[sb] as i32;
        } else if sf[sb] == 0 {
            bitneed[sb] = -5;
        } else {
            let off = if nsb == 4 {
                LOUDNESS_4[fs_index][sb]
            } else {
                LOUDNESS_8[fs_index][sb]
            };
            let loud = sf[sb] as i32 - off;
            bitneed[sb] = if loud > 0 { loud / 2 } else { loud };
        }
    }
    let mut max_bitneed = 0;
    for &b in &bitneed {
        if b > max_bitneed {
            max_bitneed = b;
        }
    }
    let mut bitcount = 0;
    let mut slicecount = 0;
    let mut bitslice = max_bitneed + 1;
    // do { ... } while (bitcount + slicecount < bitpool)
    loop {
        bitslice -= 1;
        bitcount += slicecount;
        slicecount = 0;
        for &b in &bitneed {
            if b > bitslice + 1 && b < bitslice + 16 {
                slicecount += 1;
            } else if b == bitslice + 1 {
                slicecount += 2;
            }
        }
        if !(bitcount + slicecount < bitpool) {
            break;
        }
    }
    if bitcount + slicecount == bitpool {
        bitcount += slicecount;
        bitslice -= 1;
    }
    let mut bits = vec![0i32; nsb];
    for sb in 0..nsb {
        if bitneed[sb] < bitslice + 2 {
            bits[sb] = 0;
        } else {
            bits[sb] = bitneed[sb] - bitslice;
            if bits[sb] > 16 {
                bits[sb] = 16;
            }
        }
    }
    let mut sb = 0;
    while bitcount < bitpool && sb < nsb {
        if bits[sb] >= 2 && bits[sb] < 16 {
            bits[sb] += 1;
            bitcount += 1;
        } else if bitneed[sb] == bitslice + 1 && bitpool > bitcount + 1 {
            bits[sb] = 2;
            bitcount += 2;
        }
        sb += 1;
    }
    sb = 0;
    while bitcount < bitpool && sb < nsb {
        if bits[sb] < 16 {
            bits[sb] += 1;
            bitcount += 1;
        }
        sb += 1;
    }
    bits.iter().map(|&b| b as u8).collect()
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

/// Direct DFT summation followed by explicit triangle sums.
pub fn oracle_log_mel(samples: &[f32], p: &FeatureParams) -> Vec<Vec<f64>> {
    let n = p.n_fft;
    let lo = hz_to_mel(p.fmin);
    let hi = hz_to_mel(p.fmax);
    let edges: Vec<f64> = (0..p.n_mels + 2)
        .map(|i| {
            let m = lo + (hi - lo) * i as f64 / (p.n_mels + 1) as f64;
            700.0 * (10f64.powf(m / 2595.0) - 1.0)
        })
        .collect();
    let frames = 1 + (samples.len() - n) / p.hop;
    (0..frames)
        .map(|t| {
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    samples[t * p.hop + i] as f64
                        * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                })
                .collect();
            let power: Vec<f64> = (0..=n / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (i, &v) in x.iter().enumerate() {
                        let a = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                        re += v * a.cos();
                        im += v * a.sin();
                    }
                    re * re + im * im
                })
                .collect();
            (0..p.n_mels)
                .map(|m| {
                    let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
                    let mut e = 0.0;
                    for (k, &pw) in power.iter().enumerate() {
                        let f = k as f64 * p.sample_rate as f64 / n as f64;
                        let w = if f > l && f <= c {
                            (f - l) / (c - l)
                        } else if f > c && f < r {
                            (r - f) / (r - c)
                        } else {
                            0.0
                        };
                        e += w * pw;
                    }
                    e.max(p.log_floor).ln()
                })
                .collect()
        })
        .collect()
}
