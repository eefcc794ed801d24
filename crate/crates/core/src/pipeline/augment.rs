//! Materialised training-set augmentation.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{io_err, PipelineError};
use crate::audio::{wav, AudioClip, DatasetManifest, ManifestItem, Split};
use crate::codecs::{transcode, CodecSpec};
use crate::util::{mix_seed, parallel_map, sanitize_file_stem, seeded_rng};

/// Codec tag of baseline-augmented items.
pub const BASELINE_TAG: &str = "baseline";

/// Seeded gain jitter (±3 dB), circular time shift and white noise 30 to 40 dB below the clip.
pub fn baseline_augment(clip: &AudioClip, seed: u64) -> AudioClip {
    let mut rng = seeded_rng(seed);
    let gain = 10f64.powf(rng.random_range(-3.0..=3.0) / 20.0);
    let len = clip.len();
    let shift = if len > 0 { rng.random_range(0..len) } else { 0 };
    let noise = clip.rms() * 10f64.powf(rng.random_range(-40.0..=-30.0) / 20.0);
    let src = clip.samples();
    let samples = (0..len)
        .map(|i| {
            let n: f64 = StandardNormal.sample(&mut rng);
            (src[(i + shift) % len] as f64 * gain + noise * n) as f32
        })
        .collect();
    AudioClip::new(clip.sample_rate(), samples)
}

/// Remembers what a generation step created so a failure can roll it back.
struct Written {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Written {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            dirs: Vec::new(),
        }
    }

    fn create_dir(&mut self, dir: &Path) -> Result<(), PipelineError> {
        let mut missing = Vec::new();
        let mut d = dir;
        while !d.exists() {
            missing.push(d.to_path_buf());
            match d.parent() {
                Some(p) => d = p,
                None => break,
            }
        }
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        self.dirs.extend(missing);
        Ok(())
    }

    fn rollback(self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in &self.dirs {
            let _ = fs::remove_dir(d);
        }
    }
}

/// Writes `make(item, i)` for every training item into `dir` and returns the new items.
fn materialise<F>(
    manifest: &DatasetManifest,
    dir: &Path,
    tag: &str,
    jobs: usize,
    written: &mut Written,
    make: F,
) -> Result<Vec<ManifestItem>, PipelineError>
where
    F: Fn(&ManifestItem, usize, AudioClip) -> Result<AudioClip, PipelineError> + Sync,
{
    written.create_dir(dir)?;
    let train: Vec<&ManifestItem> = manifest.split(Split::Train).collect();
    let results = parallel_map(train.len(), jobs, |i| {
        let item = train[i];
        let clip = wav::read(&item.file_path).map_err(|source| PipelineError::Audio {
            clip_id: item.clip_id.clone(),
            source,
        })?;
        let out = make(item, i, clip)?;
        let path = dir.join(format!("{}.wav", sanitize_file_stem(&item.clip_id)));
        wav::write(&path, &out).map_err(|source| PipelineError::Audio {
            clip_id: item.clip_id.clone(),
            source,
        })?;
        Ok(ManifestItem {
            clip_id: format!("{}~{tag}", item.clip_id),
            file_path: path,
            scene_label: item.scene_label.clone(),
            split: Split::Train,
            codec_tag: tag.to_string(),
        })
    });
    let mut items = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(item) => {
                written.files.push(item.file_path.clone());
                items.push(item);
            }
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(items),
    }
}

pub(crate) fn transcode_train_split(
    manifest: &DatasetManifest,
    spec: &CodecSpec,
    dir: &Path,
    jobs: usize,
) -> Result<Vec<ManifestItem>, PipelineError> {
    let mut written = Written::new();
    let tag = spec.to_string();
    let result = materialise(manifest, dir, &tag, jobs, &mut written, |item, _, clip| {
        transcode(spec, &clip).map_err(|source| PipelineError::Codec {
            clip_id: item.clip_id.clone(),
            spec: tag.clone(),
            source,
        })
    });
    if result.is_err() {
        written.rollback();
    }
    result
}

pub(crate) fn baseline_train_split(
    manifest: &DatasetManifest,
    seed: u64,
    dir: &Path,
    jobs: usize,
) -> Result<Vec<ManifestItem>, PipelineError> {
    let mut written = Written::new();
    let result = materialise(
        manifest,
        dir,
        BASELINE_TAG,
        jobs,
        &mut written,
        |_, i, clip| Ok(baseline_augment(&clip, mix_seed(seed, i as u64))),
    );
    if result.is_err() {
        written.rollback();
    }
    result
}

/// Directory name for a codec's transcoded training copies.
pub(crate) fn codec_dir(out_dir: &Path, spec: &CodecSpec) -> PathBuf {
    out_dir.join(sanitize_file_stem(&spec.to_string()))
}

fn with_items(
    manifest: &DatasetManifest,
    extra: Vec<Vec<ManifestItem>>,
) -> Result<DatasetManifest, PipelineError> {
    let mut out = manifest.clone();
    out.items.extend(extra.into_iter().flatten());
    out.validate()?;
    assert_eval_untouched(manifest, &out)?;
    Ok(out)
}

/// Transcodes every training item with every codec into `out_dir/<spec>/`
/// and appends the copies, tagged with the spec, to the manifest.
///
/// Original items keep their place; the evaluation split is not touched. On
/// failure everything written by this call is removed.
pub fn generate_augmented_set(
    manifest: &DatasetManifest,
    codecs: &[CodecSpec],
    out_dir: &Path,
    jobs: usize,
) -> Result<DatasetManifest, PipelineError> {
    if manifest.count(Split::Train) == 0 {
        return Err(PipelineError::Config("training split is empty".into()));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = codecs.iter().find(|c| !seen.insert(c.to_string())) {
        return Err(PipelineError::Config(format!("codec {dup} listed twice")));
    }
    let mut extra = Vec::new();
    let mut dirs = Vec::new();
    for spec in codecs {
        let dir = codec_dir(out_dir, spec);
        let existed = dir.exists();
        match transcode_train_split(manifest, spec, &dir, jobs) {
            Ok(items) => {
                extra.push(items);
                dirs.push((dir, existed));
            }
            Err(e) => {
                for (items, (dir, existed)) in extra.iter().zip(&dirs) {
                    for item in items {
                        let _ = fs::remove_file(&item.file_path);
                    }
                    if !existed {
                        let _ = fs::remove_dir(dir);
                    }
                }
                return Err(e);
            }
        }
    }
    with_items(manifest, extra)
}

/// Appends one baseline-augmented copy of every training item, written to `out_dir`.
pub fn generate_baseline_set(
    manifest: &DatasetManifest,
    seed: u64,
    out_dir: &Path,
    jobs: usize,
) -> Result<DatasetManifest, PipelineError> {
    if manifest.count(Split::Train) == 0 {
        return Err(PipelineError::Config("training split is empty".into()));
    }
    let items = baseline_train_split(manifest, seed, out_dir, jobs)?;
    with_items(manifest, vec![items])
}

/// Fails unless `augmented` has exactly the evaluation items of `original`, in order.
pub fn assert_eval_untouched(
    original: &DatasetManifest,
    augmented: &DatasetManifest,
) -> Result<(), PipelineError> {
    let a: Vec<&ManifestItem> = original.split(Split::Eval).collect();
    let b: Vec<&ManifestItem> = augmented.split(Split::Eval).collect();
    if a.len() != b.len() {
        return Err(PipelineError::Leak(format!(
            "{} evaluation items became {}",
            a.len(),
            b.len()
        )));
    }
    if let Some((x, _)) = a.iter().zip(&b).find(|(x, y)| x != y) {
        return Err(PipelineError::Leak(format!(
            "evaluation item {} changed",
            x.clip_id
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_augment_is_seeded_and_mild() {
        let clip = AudioClip::new(
            8000,
            (0..8000).map(|i| (i as f32 * 0.05).sin() * 0.3).collect(),
        );
        let a = baseline_augment(&clip, 4);
        assert_eq!(a, baseline_augment(&clip, 4));
        assert_ne!(a, baseline_augment(&clip, 5));
        let ratio = a.rms() / clip.rms();
        assert!((0.70..1.42).contains(&ratio), "{ratio}");
    }

    #[test]
    fn eval_changes_are_detected() {
        let mut m = DatasetManifest::standard();
        m.items.push(ManifestItem {
            clip_id: "x".into(),
            file_path: "x.wav".into(),
            scene_label: "park".into(),
            split: Split::Eval,
            codec_tag: "none".into(),
        });
        let mut n = m.clone();
        assert!(assert_eval_untouched(&m, &n).is_ok());
        n.items[0].file_path = "y.wav".into();
        assert!(matches!(
            assert_eval_untouched(&m, &n),
            Err(PipelineError::Leak(_))
        ));
    }
}
