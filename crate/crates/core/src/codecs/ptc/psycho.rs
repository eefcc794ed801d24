//! Band masking thresholds: spread band energy minus a fixed offset, floored
//! by the absolute threshold of hearing.

use super::bands::BandLayout;

/// Threshold offset below the spread energy (13 dB).
const MASK_OFFSET: f64 = 0.050_118_723_362_727_23;
const SLOPE_UP_DB: f64 = 10.0;
const SLOPE_DOWN_DB: f64 = 27.0;
/// Sound pressure level assigned to a full-scale sine.
const FULL_SCALE_SPL: f64 = 96.0;

/// Terhardt's threshold in quiet, dB SPL.
pub(crate) fn ath_db(f: f64) -> f64 {
    let k = f.max(20.0) / 1000.0;
    3.64 * k.powf(-0.8) - 6.5 * (-0.6 * (k - 3.3).powi(2)).exp() + 1e-3 * k.powi(4)
}

#[derive(Debug, Clone)]
pub(crate) struct MaskingModel {
    /// `spread[i][j]`: share of band `i`'s energy that masks band `j`.
    spread: Vec<Vec<f64>>,
    ath: Vec<f64>,
}

impl MaskingModel {
    /// `n` is the transform length; a full-scale sine carries about `n / 2`
    /// of coefficient energy per frame.
    pub fn new(layout: &BandLayout, n: usize) -> MaskingModel {
        let nb = layout.n_bands();
        let z: Vec<f64> = (0..nb).map(|b| layout.center_bark(b)).collect();
        let spread = (0..nb)
            .map(|i| {
                (0..nb)
                    .map(|j| {
                        let dz = z[j] - z[i];
                        let db = if dz >= 0.0 {
                            -SLOPE_UP_DB * dz
                        } else {
                            SLOPE_DOWN_DB * dz
                        };
                        10f64.powf(db / 10.0)
                    })
                    .collect()
            })
            .collect();
        let full_scale = n as f64 / 2.0;
        let ath = (0..nb)
            .map(|b| {
                let min_db = layout
                    .range(b)
                    .map(|k| ath_db(layout.bin_center_hz(k)))
                    .fold(f64::INFINITY, f64::min);
                full_scale * 10f64.powf((min_db - FULL_SCALE_SPL) / 10.0)
            })
            .collect();
        MaskingModel { spread, ath }
    }

    /// Thresholds for the first `energies.len()` bands; missing bands count as silent.
    pub fn thresholds(&self, energies: &[f64]) -> Vec<f64> {
        (0..energies.len())
            .map(|j| {
                let spread: f64 = energies
                    .iter()
                    .zip(&self.spread)
                    .map(|(&e, row)| e * row[j])
                    .sum();
                (MASK_OFFSET * spread).max(self.ath[j])
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_is_thirteen_db() {
        assert!((10.0 * MASK_OFFSET.log10() + 13.0).abs() < 1e-12);
    }

    #[test]
    fn hearing_threshold_shape() {
        assert!(ath_db(3300.0) < ath_db(1000.0));
        assert!(ath_db(50.0) > 30.0);
        assert!(ath_db(16_000.0) > ath_db(8_000.0));
    }

    #[test]
    fn loud_band_raises_neighbours_more_upwards() {
        let layout = BandLayout::bark(1024, 44_100, 32);
        let m = MaskingModel::new(&layout, 1024);
        let mut e = vec![0.0; 32];
        e[15] = 100.0;
        let t = m.thresholds(&e);
        assert!(t[16] > t[14]);
        assert!(t.iter().all(|&v| v > 0.0));
        let quiet = m.thresholds(&[0.0; 32]);
        assert!(t[15] > quiet[15]);
    }
}
