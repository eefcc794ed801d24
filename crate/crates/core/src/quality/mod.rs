//! Noise-to-mask ratio, an ODG-style quality proxy, and least-squares fitting.
//!
//! The proxy reuses the PTC masking model: the reference is analysed with a
//! 1024-coefficient MDCT, masking thresholds are computed per Bark band, and
//! the coding noise (test minus reference) is compared against them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codecs::ptc::bands::BandLayout;
use crate::codecs::ptc::mdct::Mdct;
use crate::codecs::ptc::psycho::MaskingModel;
use crate::codecs::ptc::N_BANDS;
use crate::AudioClip;

const WINDOW: usize = 1024;
/// Lower clamp for a single frame/band ratio.
pub const NMR_FLOOR_DB: f64 = -60.0;
/// Slope of the NMR to ODG map.
pub const ODG_SLOPE: f64 = 0.2;
/// NMR (dB) at which the proxy reads -2.
pub const ODG_MIDPOINT_DB: f64 = 0.0;

#[derive(Debug, Error, PartialEq)]
pub enum QualityError {
    #[error("reference has {reference} samples, test has {test}")]
    LengthMismatch { reference: usize, test: usize },
    #[error("reference rate {reference} Hz differs from test rate {test} Hz")]
    RateMismatch { reference: u32, test: u32 },
    #[error("reference is silent; the masking threshold is undefined")]
    SilentReference,
    #[error("regression undefined: {0}")]
    Regression(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    /// In `[-4, 0]`; 0 is transparent.
    pub odg: f64,
    pub nmr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Mean over non-silent reference frames and all bands of
/// `10 log10(noise energy / masking threshold)`, each term clamped at -60 dB.
pub fn nmr(reference: &AudioClip, test: &AudioClip) -> Result<f64, QualityError> {
    if reference.len() != test.len() {
        return Err(QualityError::LengthMismatch {
            reference: reference.len(),
            test: test.len(),
        });
    }
    if reference.sample_rate() != test.sample_rate() {
        return Err(QualityError::RateMismatch {
            reference: reference.sample_rate(),
            test: test.sample_rate(),
        });
    }
    let to_f64 = |c: &AudioClip| c.samples().iter().map(|&s| s as f64).collect::<Vec<_>>();
    let mdct = Mdct::new(WINDOW);
    let layout = BandLayout::bark(WINDOW, reference.sample_rate(), N_BANDS);
    let model = MaskingModel::new(&layout, WINDOW);
    let r = mdct.analyze(&to_f64(reference));
    let t = mdct.analyze(&to_f64(test));
    let floor = 10f64.powf(NMR_FLOOR_DB / 10.0);
    let mut sum = 0.0;
    let mut cells = 0usize;
    for (rf, tf) in r.iter().zip(&t) {
        let energies: Vec<f64> = (0..N_BANDS)
            .map(|b| rf[layout.range(b)].iter().map(|c| c * c).sum())
            .collect();
        if energies.iter().all(|&e| e == 0.0) {
            continue;
        }
        let thresholds = model.thresholds(&energies);
        for b in 0..N_BANDS {
            let noise: f64 = layout.range(b).map(|k| (tf[k] - rf[k]).powi(2)).sum();
            sum += 10.0 * (noise / thresholds[b]).max(floor).log10();
            cells += 1;
        }
    }
    if cells == 0 {
        return Err(QualityError::SilentReference);
    }
    Ok(sum / cells as f64)
}

/// `-4 * sigmoid(ODG_SLOPE * (nmr_db - ODG_MIDPOINT_DB))`, a strictly decreasing map into `(-4, 0)`.
pub fn odg_from_nmr(nmr_db: f64) -> f64 {
    let s = 1.0 / (1.0 + (-ODG_SLOPE * (nmr_db - ODG_MIDPOINT_DB)).exp());
    (-4.0 * s).clamp(-4.0, 0.0)
}

/// Quality of `test` judged against `reference`. Masking is computed from the
/// reference only, so the roles are not interchangeable.
pub fn odg_proxy(reference: &AudioClip, test: &AudioClip) -> Result<QualityScore, QualityError> {
    let nmr_db = nmr(reference, test)?;
    Ok(QualityScore {
        odg: odg_from_nmr(nmr_db),
        nmr_db,
    })
}

/// Ordinary least squares of `y` on `x`, with `r_squared = 1 - SSE / SST`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<RegressionFit, QualityError> {
    if x.len() != y.len() {
        return Err(QualityError::Regression(format!(
            "{} x values, {} y values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(QualityError::Regression("need at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(QualityError::Regression("non-finite input".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - mx, yi - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(QualityError::Regression("x has zero variance".into()));
    }
    if syy == 0.0 {
        return Err(QualityError::Regression("y has zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - (slope * xi + intercept)).powi(2))
        .sum();
    Ok(RegressionFit {
        slope,
        intercept,
        r_squared: (1.0 - sse / syy).clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn perfect_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn degenerate_regressions() {
        assert!(linear_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(linear_fit(&[1.0, 2.0], &[3.0, 3.0]).is_err());
        assert!(linear_fit(&[1.0], &[3.0]).is_err());
    }

    #[test]
    fn identical_clips_floor_out() {
        let mut rng = crate::util::seeded_rng(8);
        let c = AudioClip::new(
            44_100,
            (0..20_000).map(|_| rng.random_range(-0.3..0.3)).collect(),
        );
        let q = odg_proxy(&c, &c).unwrap();
        assert_eq!(q.nmr_db, NMR_FLOOR_DB);
        assert!(q.odg >= -0.05);
    }

    #[test]
    fn silent_reference_is_an_error() {
        let s = AudioClip::silence(44_100, 4096);
        assert_eq!(nmr(&s, &s), Err(QualityError::SilentReference));
        assert!(matches!(
            nmr(&s, &AudioClip::silence(44_100, 10)),
            Err(QualityError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn odg_map_is_decreasing() {
        let mut prev = 0.0;
        for i in -80..40 {
            let o = odg_from_nmr(i as f64);
            assert!(o < prev || i == -80);
            assert!((-4.0..=0.0).contains(&o));
            prev = o;
        }
    }
}
