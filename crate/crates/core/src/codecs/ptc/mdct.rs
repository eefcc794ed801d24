//! Orthonormal sine-window MDCT via a `2N`-point FFT.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Mdct {
    n: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    pre: Vec<Complex<f64>>,
    post: Vec<Complex<f64>>,
    ipre: Vec<Complex<f64>>,
    ipost: Vec<Complex<f64>>,
}

impl Mdct {
    /// A transform with `n` coefficients per frame of `2n` samples.
    pub fn new(n: usize) -> Mdct {
        let mut planner = FftPlanner::new();
        let two_n = 2 * n;
        let n0 = 0.5 + n as f64 / 2.0;
        let scale = (2.0 / n as f64).sqrt();
        let cis = |a: f64| Complex::new(a.cos(), a.sin());
        Mdct {
            n,
            window: (0..two_n)
                .map(|i| (PI * (i as f64 + 0.5) / two_n as f64).sin())
                .collect(),
            forward: planner.plan_fft_forward(two_n),
            inverse: planner.plan_fft_inverse(two_n),
            pre: (0..two_n)
                .map(|i| cis(-PI * i as f64 / two_n as f64))
                .collect(),
            post: (0..n)
                .map(|k| cis(-PI * n0 * (k as f64 + 0.5) / n as f64) * scale)
                .collect(),
            ipre: (0..n).map(|k| cis(PI * n0 * k as f64 / n as f64)).collect(),
            ipost: (0..two_n)
                .map(|i| cis(PI * (i as f64 + n0) / two_n as f64) * scale)
                .collect(),
        }
    }

    /// Windowed forward transform of `2n` samples.
    pub fn forward(&self, frame: &[f64]) -> Vec<f64> {
        debug_assert_eq!(frame.len(), 2 * self.n);
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .zip(&self.pre)
            .map(|((&x, &w), &p)| p * (x * w))
            .collect();
        self.forward.process(&mut buf);
        (0..self.n).map(|k| (self.post[k] * buf[k]).re).collect()
    }

    /// Windowed inverse transform; overlap-add consecutive outputs with hop `n`.
    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.n);
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * self.n];
        for (k, &c) in coeffs.iter().enumerate() {
            buf[k] = self.ipre[k] * c;
        }
        self.inverse.process(&mut buf);
        buf.iter()
            .zip(&self.ipost)
            .zip(&self.window)
            .map(|((&v, &p), &w)| (p * v).re * w)
            .collect()
    }

    /// Splits a signal into `ceil(len / n) + 1` half-overlapping frames,
    /// frame `f` covering samples `[(f - 1) n, (f + 1) n)`.
    pub fn analyze(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = self.n;
        let frames = x.len().div_ceil(n) + 1;
        let mut padded = vec![0.0; (frames + 1) * n];
        padded[n..n + x.len()].copy_from_slice(x);
        (0..frames)
            .map(|f| self.forward(&padded[f * n..f * n + 2 * n]))
            .collect()
    }

    /// Overlap-adds inverse frames and returns `len` samples.
    pub fn synthesize(&self, frames: &[Vec<f64>], len: usize) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; (frames.len() + 1) * n];
        for (f, c) in frames.iter().enumerate() {
            for (o, v) in out[f * n..f * n + 2 * n].iter_mut().zip(self.inverse(c)) {
                *o += v;
            }
        }
        out.drain(..n);
        out.truncate(len);
        out.resize(len, 0.0);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn direct_forward(x: &[f64], n: usize) -> Vec<f64> {
        let n0 = 0.5 + n as f64 / 2.0;
        (0..n)
            .map(|k| {
                (0..2 * n)
                    .map(|i| {
                        let w = (PI * (i as f64 + 0.5) / (2 * n) as f64).sin();
                        w * x[i] * (PI / n as f64 * (i as f64 + n0) * (k as f64 + 0.5)).cos()
                    })
                    .sum::<f64>()
                    * (2.0 / n as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn matches_direct_sum() {
        let n = 64;
        let mut rng = crate::util::seeded_rng(1);
        let x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = Mdct::new(n).forward(&x);
        for (a, b) in fast.iter().zip(direct_forward(&x, n)) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn perfect_reconstruction() {
        for n in [64, 576] {
            let m = Mdct::new(n);
            let mut rng = crate::util::seeded_rng(2);
            let x: Vec<f64> = (0..5 * n + 17)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let y = m.synthesize(&m.analyze(&x), x.len());
            let err = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "n={n} max error {err}");
        }
    }

    #[test]
    fn full_scale_sine_energy_is_half_n() {
        // Per-frame energy depends on phase; the lapped transform preserves energy on average.
        let n = 1024;
        let m = Mdct::new(n);
        let x: Vec<f64> = (0..40 * n)
            .map(|i| (2.0 * PI * 1000.0 / 44_100.0 * i as f64).sin())
            .collect();
        let frames = m.analyze(&x);
        let inner = &frames[2..frames.len() - 2];
        let e: f64 = inner.iter().flatten().map(|c| c * c).sum::<f64>() / inner.len() as f64;
        assert!((e / (n as f64 / 2.0) - 1.0).abs() < 0.02, "{e}");
    }
}
