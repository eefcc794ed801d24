//! Bark-scale band layouts over MDCT bins.

/// Zwicker's critical-band rate approximation.
pub(crate) fn bark(f: f64) -> f64 {
    13.0 * (0.00076 * f).atan() + 3.5 * (f / 7500.0).powi(2).atan()
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BandLayout {
    /// `n_bands + 1` increasing bin indices.
    pub edges: Vec<usize>,
    pub bin_hz: f64,
}

impl BandLayout {
    /// Splits `0..n_bins` into `n_bands` bands of equal Bark width.
    pub fn bark(n_bins: usize, sample_rate: u32, n_bands: usize) -> BandLayout {
        let bin_hz = sample_rate as f64 / (2 * n_bins) as f64;
        BandLayout {
            edges: split_bark(0, n_bins, bin_hz, n_bands),
            bin_hz,
        }
    }

    pub fn n_bands(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn range(&self, b: usize) -> std::ops::Range<usize> {
        self.edges[b]..self.edges[b + 1]
    }

    pub fn width(&self, b: usize) -> usize {
        self.edges[b + 1] - self.edges[b]
    }

    /// Bark value at the centre of band `b`.
    pub fn center_bark(&self, b: usize) -> f64 {
        let mid = (self.edges[b] + self.edges[b + 1]) as f64 / 2.0;
        bark(mid * self.bin_hz)
    }

    /// Frequency of bin `k`'s centre.
    pub fn bin_center_hz(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.bin_hz
    }
}

/// Edges dividing bins `lo..hi` into `n` bands of near-equal Bark width,
/// each at least one bin wide. Requires `hi - lo >= n`.
pub(crate) fn split_bark(lo: usize, hi: usize, bin_hz: f64, n: usize) -> Vec<usize> {
    assert!(hi - lo >= n, "{} bins cannot hold {n} bands", hi - lo);
    let z_lo = bark(lo as f64 * bin_hz);
    let z_hi = bark(hi as f64 * bin_hz);
    let mut edges = vec![lo; n + 1];
    edges[n] = hi;
    let mut k = lo;
    for i in 1..n {
        let target = z_lo + (z_hi - z_lo) * i as f64 / n as f64;
        while k < hi && bark(k as f64 * bin_hz) < target {
            k += 1;
        }
        edges[i] = k.max(edges[i - 1] + 1).min(hi - (n - i));
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_cover_all_bins() {
        for (bins, rate) in [(576, 44_100), (1024, 44_100), (128, 16_000), (32, 44_100)] {
            let l = BandLayout::bark(bins, rate, 32);
            assert_eq!(l.edges[0], 0);
            assert_eq!(*l.edges.last().unwrap(), bins);
            assert!(
                l.edges.windows(2).all(|w| w[1] > w[0]),
                "{bins}: {:?}",
                l.edges
            );
        }
    }

    #[test]
    fn low_bands_are_narrow() {
        let l = BandLayout::bark(1024, 44_100, 32);
        assert!(l.width(1) < l.width(31) / 4);
    }
}
