//! Round trip through a user-supplied command.
//!
//! The template comes from the spec's `cmd` parameter or, failing that, the
//! `ASC_EXTERNAL_ENCODER` environment variable. `{in}` is replaced by a PCM16
//! WAV of the input, `{out}` by the path where the command must leave the
//! decoded WAV, and `{bitrate}` by the integer kbps. The command runs under
//! `sh -c`; encoder delay is removed by cross-correlation.

use std::process::Command;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{CodecError, CodecSpec};
use crate::audio::wav;
use crate::AudioClip;

pub const ENV_TEMPLATE: &str = "ASC_EXTERNAL_ENCODER";
/// Longest encoder delay searched for, in samples.
const MAX_DELAY: usize = 8192;

pub fn command_template(spec: &CodecSpec) -> Option<String> {
    spec.param("cmd").map(str::to_string).or_else(|| {
        std::env::var(ENV_TEMPLATE)
            .ok()
            .filter(|s| !s.trim().is_empty())
    })
}

pub(crate) fn transcode(spec: &CodecSpec, clip: &AudioClip) -> Result<AudioClip, CodecError> {
    let err = |m: String| CodecError::External(m);
    let template = command_template(spec)
        .ok_or_else(|| err(format!("no command template (set cmd= or {ENV_TEMPLATE})")))?;
    if !template.contains("{in}") || !template.contains("{out}") {
        return Err(err(format!(
            "template {template:?} must contain {{in}} and {{out}}"
        )));
    }
    let dir = tempfile::tempdir().map_err(|e| err(format!("temporary directory: {e}")))?;
    let input = dir.path().join("in.wav");
    let output = dir.path().join("out.wav");
    wav::write(&input, clip).map_err(|e| err(e.to_string()))?;
    let command = template
        .replace("{in}", &shell_quote(&input.display().to_string()))
        .replace("{out}", &shell_quote(&output.display().to_string()))
        .replace(
            "{bitrate}",
            &format!("{}", spec.bitrate_kbps.round() as i64),
        );
    let result = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .output()
        .map_err(|e| err(format!("could not start sh: {e}")))?;
    if !result.status.success() {
        let stderr = String::from_utf8_lossy(&result.stderr);
        return Err(err(format!(
            "command exited with {}: {}",
            result.status,
            stderr.trim()
        )));
    }
    let decoded = wav::read(&output).map_err(|e| err(format!("reading command output: {e}")))?;
    if decoded.sample_rate() != clip.sample_rate() {
        return Err(err(format!(
            "command changed the sample rate from {} to {}",
            clip.sample_rate(),
            decoded.sample_rate()
        )));
    }
    let lag = estimate_delay(clip.samples(), decoded.samples(), MAX_DELAY);
    let mut aligned: Vec<f32> = decoded
        .samples()
        .iter()
        .skip(lag)
        .take(clip.len())
        .copied()
        .collect();
    aligned.resize(clip.len(), 0.0);
    Ok(AudioClip::new(clip.sample_rate(), aligned))
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Lag in `0..=max_lag` maximising the cross-correlation of `y` against `x`.
pub(crate) fn estimate_delay(x: &[f32], y: &[f32], max_lag: usize) -> usize {
    if x.is_empty() || y.is_empty() {
        return 0;
    }
    let size = (x.len() + y.len()).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(size);
    let to_buf = |v: &[f32]| {
        let mut b: Vec<Complex<f64>> = v.iter().map(|&s| Complex::new(s as f64, 0.0)).collect();
        b.resize(size, Complex::new(0.0, 0.0));
        b
    };
    let mut a = to_buf(x);
    let mut b = to_buf(y);
    fft.process(&mut a);
    fft.process(&mut b);
    let mut c: Vec<Complex<f64>> = a.iter().zip(&b).map(|(p, q)| p.conj() * q).collect();
    planner.plan_fft_inverse(size).process(&mut c);
    let limit = max_lag.min(y.len().saturating_sub(1));
    (0..=limit)
        .max_by(|&i, &j| c[i].re.total_cmp(&c[j].re).then(j.cmp(&i)))
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codecs::parse_codec_spec;
    use rand::Rng;

    #[test]
    fn delay_estimate_finds_shift() {
        let mut rng = crate::util::seeded_rng(5);
        let x: Vec<f32> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; 123];
        y.extend_from_slice(&x);
        assert_eq!(estimate_delay(&x, &y, 1000), 123);
    }

    #[test]
    fn missing_binary_is_an_external_error() {
        let spec = parse_codec_spec("external@64;cmd=/nonexistent/enc {in} {out}").unwrap();
        let r = transcode(&spec, &AudioClip::silence(44_100, 1000));
        assert!(matches!(r, Err(CodecError::External(_))));
    }

    #[test]
    fn copy_command_round_trips() {
        let spec = parse_codec_spec("external@64;cmd=cp {in} {out}").unwrap();
        let clip = AudioClip::new(
            44_100,
            (0..2000).map(|i| ((i % 50) as f32 / 50.0) - 0.5).collect(),
        );
        let out = transcode(&spec, &clip).unwrap();
        assert_eq!(out, clip.quantized_pcm16());
    }
}
