//! Cosine-modulated pseudo-QMF analysis/synthesis bank.
//!
//! The prototype is a Kaiser-windowed sinc of length `10 * M`; its cutoff is
//! tuned so the prototype is close to power complementary, which makes the
//! aliasing terms between adjacent bands cancel.

use std::f64::consts::PI;
use std::sync::OnceLock;

const BETA: f64 = 5.5;

#[derive(Debug)]
pub(crate) struct Filterbank {
    m: usize,
    taps: usize,
    analysis: Vec<Vec<f64>>,
    synthesis: Vec<Vec<f64>>,
}

fn bessel_i0(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn prototype(taps: usize, cutoff: f64) -> Vec<f64> {
    let mid = (taps - 1) as f64 / 2.0;
    let denom = bessel_i0(BETA);
    (0..taps)
        .map(|n| {
            let t = n as f64 - mid;
            let r = t / (mid + 0.5);
            let w = bessel_i0(BETA * (1.0 - r * r).max(0.0).sqrt()) / denom;
            let sinc = if t == 0.0 {
                cutoff / PI
            } else {
                (cutoff * t).sin() / (PI * t)
            };
            w * sinc
        })
        .collect()
}

/// Worst normalised autocorrelation at the non-zero multiples of `2M`.
fn complementarity_error(p: &[f64], m: usize) -> f64 {
    let g = |lag: usize| -> f64 { p.iter().zip(&p[lag..]).map(|(a, b)| a * b).sum() };
    let g0 = g(0);
    (1..)
        .map(|k| 2 * m * k)
        .take_while(|&lag| lag < p.len())
        .map(|lag| (g(lag) / g0).abs())
        .fold(0.0, f64::max)
}

fn tuned_cutoff(taps: usize, m: usize) -> f64 {
    let nominal = PI / (2 * m) as f64;
    let (mut a, mut b) = (0.7 * nominal, 1.3 * nominal);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let cost = |c: f64| complementarity_error(&prototype(taps, c), m);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = cost(x2);
        }
    }
    (a + b) / 2.0
}

impl Filterbank {
    pub fn get(m: usize) -> &'static Filterbank {
        static FOUR: OnceLock<Filterbank> = OnceLock::new();
        static EIGHT: OnceLock<Filterbank> = OnceLock::new();
        match m {
            4 => FOUR.get_or_init(|| Filterbank::design(4)),
            8 => EIGHT.get_or_init(|| Filterbank::design(8)),
            _ => panic!("unsupported subband count {m}"),
        }
    }

    fn design(m: usize) -> Filterbank {
        let taps = 10 * m;
        let p = prototype(taps, tuned_cutoff(taps, m));
        let mid = (taps - 1) as f64 / 2.0;
        let modulated = |sign: f64| -> Vec<Vec<f64>> {
            (0..m)
                .map(|k| {
                    let theta = if k % 2 == 0 { PI / 4.0 } else { -PI / 4.0 };
                    (0..taps)
                        .map(|n| {
                            let arg = (2 * k + 1) as f64 * PI / (2 * m) as f64 * (n as f64 - mid);
                            2.0 * p[n] * (arg + sign * theta).cos()
                        })
                        .collect()
                })
                .collect()
        };
        let mut bank = Filterbank {
            m,
            taps,
            analysis: modulated(1.0),
            synthesis: modulated(-1.0),
        };
        let gain = bank.measured_gain();
        for f in &mut bank.synthesis {
            for c in f.iter_mut() {
                *c /= gain;
            }
        }
        bank
    }

    /// Mean delayed-impulse response over all polyphase offsets.
    fn measured_gain(&self) -> f64 {
        let len = 4 * self.taps + 4 * self.m;
        let mut total = 0.0;
        for phase in 0..self.m {
            let mut x = vec![0.0; len];
            let at = 2 * self.taps + phase;
            x[at] = 1.0;
            let y = self.synthesize(&self.analyze(&x));
            total += y[at + self.delay()];
        }
        total / self.m as f64
    }

    /// Analysis-plus-synthesis latency in samples.
    pub fn delay(&self) -> usize {
        self.taps - 1
    }

    /// Returns `len / M` blocks of `M` subband samples (input length must be a multiple of `M`).
    pub fn analyze(&self, x: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(x.len() % self.m, 0);
        (0..x.len() / self.m)
            .map(|t| {
                let end = t * self.m + self.m - 1;
                self.analysis
                    .iter()
                    .map(|h| {
                        h.iter()
                            .enumerate()
                            .take_while(|&(n, _)| n <= end)
                            .map(|(n, &c)| c * x[end - n])
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn synthesize(&self, blocks: &[Vec<f64>]) -> Vec<f64> {
        let len = blocks.len() * self.m;
        let mut y = vec![0.0; len];
        for (t, block) in blocks.iter().enumerate() {
            let start = t * self.m + self.m - 1;
            for (f, &s) in self.synthesis.iter().zip(block) {
                if s == 0.0 {
                    continue;
                }
                for (n, &c) in f.iter().enumerate() {
                    let i = start + n;
                    if i >= len {
                        break;
                    }
                    y[i] += s * c;
                }
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn reconstruction_snr_db(m: usize) -> f64 {
        let bank = Filterbank::get(m);
        let mut rng = crate::util::seeded_rng(9);
        let x: Vec<f64> = (0..m * 600).map(|_| rng.random_range(-0.5..0.5)).collect();
        let y = bank.synthesize(&bank.analyze(&x));
        let d = bank.delay();
        let (mut sig, mut err) = (0.0, 0.0);
        for n in 2 * bank.taps..x.len() - 2 * bank.taps {
            sig += x[n] * x[n];
            err += (y[n + d] - x[n]).powi(2);
        }
        10.0 * (sig / err).log10()
    }

    #[test]
    fn near_perfect_reconstruction() {
        // Reference build measured 48.9 dB for both; frozen with 3 dB of headroom.
        let snr8 = reconstruction_snr_db(8);
        let snr4 = reconstruction_snr_db(4);
        assert!(snr8 > 45.5, "M=8 reconstruction SNR {snr8:.1} dB");
        assert!(snr4 > 45.5, "M=4 reconstruction SNR {snr4:.1} dB");
    }

    #[test]
    fn prototype_is_nearly_power_complementary() {
        let m = 8;
        let taps = 10 * m;
        let tuned = complementarity_error(&prototype(taps, tuned_cutoff(taps, m)), m);
        let nominal = complementarity_error(&prototype(taps, PI / (2 * m) as f64), m);
        assert!(tuned <= nominal);
        assert!(tuned < 1e-2, "{tuned}");
    }
}
