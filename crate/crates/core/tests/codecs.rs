mod common;

use asc_core::codecs::{
    decode, encode, parse_codec_spec, sbc_bit_allocation, transcode, Allocation, CodecError,
    EncodedStream,
};
use asc_core::quality::odg_proxy;
use common::{band_energy, power_spectrum, reference_allocation, rng, white_noise};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn sbc_allocation_matches_reference_fixture() {
    let got = sbc_bit_allocation(&[7, 3, 0, 1], 16, Allocation::Snr, 44_100).unwrap();
    assert_eq!(got, reference_allocation(&[7, 3, 0, 1], 16, true, 2));
    assert_eq!(got, vec![9, 5, 0, 2]);
}

#[test]
fn sbc_allocation_matches_reference_on_random_inputs() {
    let mut r = rng(0x5bc);
    let rates = [16_000, 32_000, 44_100, 48_000];
    for case in 0..1000 {
        let nsb = if r.random_bool(0.5) { 4 } else { 8 };
        let sf: Vec<u8> = (0..nsb).map(|_| r.random_range(0..16u8)).collect();
        let bitpool = r.random_range(0..=16 * nsb as u32);
        let snr = r.random_bool(0.5);
        let fs = r.random_range(0..4usize);
        let alloc = if snr {
            Allocation::Snr
        } else {
            Allocation::Loudness
        };
        let got = sbc_bit_allocation(&sf, bitpool, alloc, rates[fs]).unwrap();
        let want = reference_allocation(&sf, bitpool as i32, snr, fs);
        assert_eq!(
            got, want,
            "case {case}: sf {sf:?} bitpool {bitpool} snr {snr} fs {fs}"
        );
        assert!(got.iter().map(|&b| b as u32).sum::<u32>() <= bitpool);
    }
}

#[test]
fn decoder_survives_fuzzed_streams() {
    let mut r = rng(0xf022);
    let specs = ["sbc@64", "ptc-mp3@32", "ptc-aac@64", "ptc-heaac@16"];
    let clip = white_noise(0.3, 0.1, 9);
    let valid: Vec<EncodedStream> = specs
        .iter()
        .map(|s| encode(&parse_codec_spec(s).unwrap(), &clip).unwrap())
        .collect();
    for case in 0..10_000 {
        let base = &valid[case % valid.len()];
        let mut stream = base.clone();
        match case % 3 {
            0 => {
                let len = r.random_range(0..600);
                stream.payload = (0..len).map(|_| r.random()).collect();
            }
            1 => {
                for _ in 0..r.random_range(1..8) {
                    let i = r.random_range(0..stream.payload.len());
                    stream.payload[i] ^= 1 << r.random_range(0..8);
                }
            }
            _ => {
                let cut = r.random_range(0..stream.payload.len());
                stream.payload.truncate(cut);
                stream.frame_count = r.random_range(0..2 * base.frame_count + 2);
            }
        }
        stream.original_length = r.random_range(0..2 * base.original_length + 1);
        if let Ok(out) = decode(&stream) {
            assert_eq!(out.len(), stream.original_length, "case {case}");
            assert!(out
                .samples()
                .iter()
                .all(|s| s.is_finite() && s.abs() <= 1.0));
        }
    }
}

#[test]
fn every_grid_spec_meets_its_rate_on_ten_seconds_of_noise() {
    let clip = white_noise(10.0, 0.2, 11);
    for text in [
        "sbc@64",
        "ptc-aac@32",
        "ptc-aac@48",
        "ptc-aac@64",
        "ptc-heaac@16",
        "ptc-heaac@32",
        "ptc-mp3@32",
        "ptc-mp3@64",
    ] {
        let spec = parse_codec_spec(text).unwrap();
        let stream = encode(&spec, &clip).unwrap();
        let kbps = stream.measured_bitrate_kbps();
        assert!(
            (kbps - spec.bitrate_kbps).abs() <= 0.05 * spec.bitrate_kbps,
            "{text}: {kbps:.2} kbps"
        );
        assert_eq!(decode(&stream).unwrap().len(), clip.len());
    }
}

#[test]
fn ptc_rate_tracks_target_on_scene_audio() {
    let recipes = asc_core::audio::default_recipes();
    for (i, recipe) in recipes.iter().enumerate().step_by(3) {
        let clip = asc_core::audio::synth_scene_clip(recipe, 3.0, i as u64).unwrap();
        for text in ["ptc-mp3@32", "ptc-aac@48", "ptc-heaac@32"] {
            let spec = parse_codec_spec(text).unwrap();
            let kbps = encode(&spec, &clip).unwrap().measured_bitrate_kbps();
            assert!(
                (kbps - spec.bitrate_kbps).abs() <= 0.05 * spec.bitrate_kbps,
                "class {i} {text}: {kbps:.2}"
            );
        }
    }
}

#[test]
fn low_rate_ptc_is_band_limited() {
    let clip = white_noise(3.0, 0.2, 5);
    let n = 2048;
    for text in ["ptc-mp3@24", "ptc-mp3@32", "ptc-aac@24", "ptc-aac@32"] {
        let spec = parse_codec_spec(text).unwrap();
        let cutoff = asc_core::codecs::ptc::default_cutoff_hz(spec.family, spec.bitrate_kbps);
        let out = transcode(&spec, &clip).unwrap();
        let s = power_spectrum(&out, n);
        let total = band_energy(&s, n, 0.0, 22_051.0);
        assert!(total > 0.0, "{text} decoded to silence");
        // One bin of leakage margin past the cutoff.
        let above = band_energy(&s, n, cutoff as f64 + 2.0 * 44_100.0 / n as f64, 22_051.0);
        let db = 10.0 * (above / total).log10();
        assert!(db <= -40.0, "{text}: {db:.1} dB above {cutoff} Hz");
    }
}

#[test]
fn heaac_high_band_is_energy_matched() {
    let clip = white_noise(3.0, 0.2, 6);
    let spec = parse_codec_spec("ptc-heaac@16").unwrap();
    let cutoff = asc_core::codecs::ptc::default_cutoff_hz(spec.family, 16.0) as f64;
    let out = transcode(&spec, &clip).unwrap();
    let n = 2048;
    let (a, b) = (power_spectrum(&clip, n), power_spectrum(&out, n));
    // The high band spans cutoff..min(2.5 * cutoff, 18 kHz); stay one bin inside each edge.
    let top = (2.5 * cutoff).min(18_000.0);
    let lo = cutoff + 2.0 * 44_100.0 / n as f64;
    let hi = top - 2.0 * 44_100.0 / n as f64;
    let ratio = (hi / lo).powf(1.0 / 3.0);
    for j in 0..3 {
        let (f0, f1) = (lo * ratio.powi(j), lo * ratio.powi(j + 1));
        let db = 10.0 * (band_energy(&b, n, f0, f1) / band_energy(&a, n, f0, f1)).log10();
        assert!(
            db.abs() <= 3.0,
            "band {f0:.0}..{f1:.0} Hz off by {db:.2} dB"
        );
    }
    let above = band_energy(&b, n, top + 500.0, 22_051.0);
    assert!(above / band_energy(&b, n, 0.0, 22_051.0) < 1e-4);
}

#[test]
fn odg_does_not_fall_as_bitrate_rises() {
    let recipe = &asc_core::audio::default_recipes()[4];
    let clip = asc_core::audio::synth_scene_clip(recipe, 3.0, 2).unwrap();
    for grid in [
        &["ptc-mp3@32", "ptc-mp3@64", "ptc-mp3@128"][..],
        &["ptc-aac@32", "ptc-aac@48", "ptc-aac@64", "ptc-aac@128"],
        &["ptc-heaac@16", "ptc-heaac@32"],
        &["sbc@64", "sbc@128", "sbc@230"],
    ] {
        let odg: Vec<f64> = grid
            .iter()
            .map(|t| {
                let coded = transcode(&parse_codec_spec(t).unwrap(), &clip).unwrap();
                odg_proxy(&clip, &coded).unwrap().odg
            })
            .collect();
        assert!(
            odg.windows(2).all(|w| w[1] >= w[0] - 1e-9),
            "{grid:?}: {odg:?}"
        );
    }
}

#[test]
fn sbc_at_64_beats_half_its_bitpool() {
    let recipes = asc_core::audio::default_recipes();
    let full = parse_codec_spec("sbc@64").unwrap();
    let bitpool = asc_core::codecs::sbc::SbcConfig::from_spec(&full, 44_100)
        .unwrap()
        .bitpool;
    let half = parse_codec_spec(&format!("sbc@32;bitpool={}", bitpool / 2)).unwrap();
    for (i, recipe) in recipes.iter().enumerate().step_by(2) {
        let clip = asc_core::audio::synth_scene_clip(recipe, 2.0, 40 + i as u64).unwrap();
        let q_full = odg_proxy(&clip, &transcode(&full, &clip).unwrap())
            .unwrap()
            .odg;
        let q_half = odg_proxy(&clip, &transcode(&half, &clip).unwrap())
            .unwrap()
            .odg;
        assert!(q_full >= q_half, "class {i}: {q_full:.3} < {q_half:.3}");
    }
}

#[test]
fn silence_decodes_to_silence() {
    let clip = asc_core::AudioClip::silence(44_100, 44_100);
    let out = transcode(&parse_codec_spec("ptc-aac@32").unwrap(), &clip).unwrap();
    let rms = out.rms();
    assert!(rms == 0.0 || 20.0 * rms.log10() <= -60.0);
}

#[test]
fn external_without_binary_is_an_external_error() {
    let spec = parse_codec_spec("external@64;cmd=/nonexistent/encoder {in} {out}").unwrap();
    let err = transcode(&spec, &white_noise(0.1, 0.1, 1)).unwrap_err();
    assert!(matches!(err, CodecError::External(_)), "{err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decoded_length_matches_input(len in 1usize..6000, seed in any::<u64>(), which in 0usize..4) {
        let spec = parse_codec_spec(["sbc@64", "ptc-mp3@64", "ptc-aac@32", "ptc-heaac@16"][which]).unwrap();
        let clip = asc_core::AudioClip::new(44_100, common::uniform_samples(len, seed));
        let out = transcode(&spec, &clip).unwrap();
        prop_assert_eq!(out.len(), len);
        prop_assert!(out.samples().iter().all(|s| s.is_finite() && s.abs() <= 1.0));
    }

    #[test]
    fn sbc_is_deterministic(seed in any::<u64>()) {
        let spec = parse_codec_spec("sbc@64").unwrap();
        let clip = asc_core::AudioClip::new(44_100, common::uniform_samples(3000, seed));
        prop_assert_eq!(transcode(&spec, &clip).unwrap(), transcode(&spec, &clip).unwrap());
    }
}
