mod common;

use asc_core::audio::{default_recipes, synth_scene_clip};
use asc_core::quality::{linear_fit, nmr, odg_proxy, QualityError};
use common::{add_noise, rng};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn fixture() -> asc_core::AudioClip {
    synth_scene_clip(&default_recipes()[5], 2.0, 17).unwrap()
}

/// NMR of the fixture with white noise at -20 dB (seed 3), measured on the reference build.
const PINNED_NMR_DB: f64 = -1.046373896;

#[test]
fn nmr_regression_value() {
    let clip = fixture();
    let v = nmr(&clip, &add_noise(&clip, -20.0, 3)).unwrap();
    assert!((v - PINNED_NMR_DB).abs() <= 1e-6, "nmr {v:.9}");
}

#[test]
fn nmr_rises_with_noise_level() {
    let clip = fixture();
    let levels = [-40.0, -30.0, -20.0];
    let v: Vec<f64> = levels
        .iter()
        .map(|&l| nmr(&clip, &add_noise(&clip, l, 4)).unwrap())
        .collect();
    assert!(v[0] < v[1] && v[1] < v[2], "{v:?}");
}

#[test]
fn odg_is_non_increasing_over_noise_grid() {
    for (i, recipe) in default_recipes().iter().enumerate() {
        let clip = synth_scene_clip(recipe, 1.5, 60 + i as u64).unwrap();
        let odg: Vec<f64> = [-50.0, -35.0, -20.0, -5.0]
            .iter()
            .map(|&l| odg_proxy(&clip, &add_noise(&clip, l, 8)).unwrap().odg)
            .collect();
        assert!(odg.windows(2).all(|w| w[1] <= w[0]), "class {i}: {odg:?}");
    }
}

#[test]
fn heavy_noise_reads_as_very_annoying() {
    let clip = fixture();
    let q = odg_proxy(&clip, &add_noise(&clip, 0.0, 5)).unwrap();
    assert!(q.odg <= -3.5, "{q:?}");
    assert_eq!(
        odg_proxy(&clip, &clip).unwrap().odg.max(-0.05),
        odg_proxy(&clip, &clip).unwrap().odg
    );
}

#[test]
fn roles_are_not_symmetric() {
    let reference = fixture();
    let test = add_noise(&reference, -10.0, 6);
    let a = odg_proxy(&reference, &test).unwrap();
    let b = odg_proxy(&test, &reference).unwrap();
    assert_ne!(a, b);
    let silent = asc_core::AudioClip::silence(44_100, reference.len());
    assert_eq!(
        odg_proxy(&silent, &reference),
        Err(QualityError::SilentReference)
    );
}

#[test]
fn fit_matches_normal_equations() {
    let x = [0.5, 1.25, 2.0, 3.5, 4.75];
    let y = [1.1, 1.9, 3.3, 4.2, 6.05];
    // Solve [n Σx; Σx Σx²] [b; a] = [Σy; Σxy] by Cramer's rule.
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let mean = sy / n;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sse: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let fit = linear_fit(&x, &y).unwrap();
    assert!((fit.slope - slope).abs() <= 1e-12);
    assert!((fit.intercept - intercept).abs() <= 1e-12);
    assert!((fit.r_squared - (1.0 - sse / sst)).abs() <= 1e-12);
}

#[test]
fn permuted_pairs_have_low_r_squared() {
    let mut r = rng(2024);
    let x: Vec<f64> = (0..100).map(|_| r.random_range(0.0..10.0)).collect();
    let mut y = x.clone();
    y.shuffle(&mut r);
    let fit = linear_fit(&x, &y).unwrap();
    assert!(fit.r_squared <= 0.2, "{fit:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn odg_stays_in_range(level in -60.0f64..10.0, seed in any::<u64>(), class in 0usize..10) {
        let clip = synth_scene_clip(&default_recipes()[class], 0.5, seed).unwrap();
        let q = odg_proxy(&clip, &add_noise(&clip, level, seed ^ 1)).unwrap();
        prop_assert!((-4.0..=0.0).contains(&q.odg));
    }
}
