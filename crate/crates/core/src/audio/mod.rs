//! Audio sample types, WAV I/O, the synthetic scene generator and dataset manifests.

mod manifest;
mod synth;
pub mod wav;

pub use manifest::{
    build_synthetic_dataset, load_dcase_manifest, load_dcase_split, Category, DatasetManifest,
    ManifestError, ManifestItem, Split, SCENE_CLASSES,
};
pub use synth::{
    default_recipes, synth_scene_clip, synth_scene_clip_at, NoiseBand, SceneRecipe, SynthError,
    Tone, Variability,
};
pub use wav::WavError;

/// Mono PCM audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    sample_rate: u32,
    samples: Vec<f32>,
}

impl AudioClip {
    /// Builds a clip, clipping every sample to `[-1, 1]` and replacing
    /// non-finite values with silence.
    pub fn new(sample_rate: u32, mut samples: Vec<f32>) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        for s in &mut samples {
            *s = if s.is_finite() {
                s.clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
        Self {
            sample_rate,
            samples,
        }
    }

    pub fn silence(sample_rate: u32, len: usize) -> Self {
        Self::new(sample_rate, vec![0.0; len])
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (sum / self.samples.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, &s| m.max(s.abs()))
    }

    /// Rounds every sample to the 16-bit PCM grid, as writing and re-reading a WAV would.
    pub fn quantized_pcm16(&self) -> AudioClip {
        let samples = self
            .samples
            .iter()
            .map(|&s| wav::pcm16_from_f32(s) as f32 / 32768.0)
            .collect();
        AudioClip::new(self.sample_rate, samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_clips_and_sanitises() {
        let c = AudioClip::new(8000, vec![2.0, -3.0, f32::NAN, 0.25, f32::INFINITY]);
        assert_eq!(c.samples(), &[1.0, -1.0, 0.0, 0.25, 0.0]);
    }

    #[test]
    fn duration_is_len_over_rate() {
        let c = AudioClip::silence(44_100, 22_050);
        assert_eq!(c.duration_seconds(), 0.5);
        assert_eq!(c.rms(), 0.0);
    }
}
