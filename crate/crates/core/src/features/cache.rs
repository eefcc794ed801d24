//! On-disk log-mel cache keyed by audio content and parameter digest.
//!
//! Each entry is `<key>.bin` (little-endian f32, frames x bands) plus a
//! `<key>.json` sidecar holding the parameters and shape.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureParams, LogMel, LogMelExtractor};
use crate::audio::wav;
use crate::util::sha256_hex;
use crate::AudioClip;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    params: FeatureParams,
    frames: usize,
    n_mels: usize,
}

#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, FeatureError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| FeatureError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Cache key for a clip: digest of its PCM16 WAV image and of the parameters.
    pub fn key(clip: &AudioClip, params: &FeatureParams) -> String {
        let audio = sha256_hex(&wav::encode_pcm16(clip));
        format!("{}-{}", &audio[..32], &params.digest()[..16])
    }

    pub fn load(&self, key: &str, params: &FeatureParams) -> Option<LogMel> {
        let side: Sidecar =
            serde_json::from_slice(&fs::read(self.dir.join(format!("{key}.json"))).ok()?).ok()?;
        if &side.params != params || side.n_mels != params.n_mels {
            return None;
        }
        let bytes = fs::read(self.dir.join(format!("{key}.bin"))).ok()?;
        if bytes.len() != side.frames * side.n_mels * 4 {
            return None;
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        LogMel::from_values(values, side.frames, side.params).ok()
    }

    pub fn store(&self, key: &str, lm: &LogMel) -> Result<(), FeatureError> {
        let io = |e: std::io::Error| FeatureError::Cache(e.to_string());
        let bytes: Vec<u8> = lm.values().iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(self.dir.join(format!("{key}.bin")), bytes).map_err(io)?;
        let side = Sidecar {
            params: lm.params().clone(),
            frames: lm.frames(),
            n_mels: lm.n_mels(),
        };
        let json = serde_json::to_vec_pretty(&side).expect("serialisable");
        fs::write(self.dir.join(format!("{key}.json")), json).map_err(io)
    }

    /// Returns cached features for `clip`, computing and storing them on a miss.
    pub fn get_or_compute(
        &self,
        clip: &AudioClip,
        extractor: &LogMelExtractor,
    ) -> Result<LogMel, FeatureError> {
        let key = Self::key(clip, extractor.params());
        if let Some(lm) = self.load(&key, extractor.params()) {
            return Ok(lm);
        }
        let lm = extractor.extract(clip)?;
        self.store(&key, &lm)?;
        Ok(lm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path()).unwrap();
        let p = FeatureParams {
            sample_rate: 8_000,
            n_fft: 256,
            hop: 128,
            n_mels: 16,
            fmax: 4_000.0,
            ..FeatureParams::default()
        };
        let clip = AudioClip::new(
            8_000,
            (0..2000)
                .map(|i| ((i * 7919) % 200) as f32 / 400.0 - 0.25)
                .collect(),
        );
        let ex = LogMelExtractor::new(&p).unwrap();
        let first = cache.get_or_compute(&clip, &ex).unwrap();
        let key = FeatureCache::key(&clip, &p);
        assert!(dir.path().join(format!("{key}.bin")).exists());
        assert_eq!(cache.load(&key, &p).unwrap(), first);
        let other = FeatureParams { n_mels: 8, ..p };
        assert!(cache.load(&key, &other).is_none());
    }
}
