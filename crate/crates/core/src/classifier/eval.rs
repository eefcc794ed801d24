//! Evaluation over a manifest split, optionally through a codec.

use serde::{Deserialize, Serialize};

use super::nn::Trace;
use super::{fuse_scores, ClassifierError, Model, Posterior};
use crate::audio::{wav, DatasetManifest, ManifestItem, Split};
use crate::codecs::{transcode, CodecSpec};
use crate::features::{FeatureParams, LogMel, LogMelExtractor};
use crate::quality::{odg_proxy, QualityError, QualityScore};
use crate::util::parallel_map;

/// Features of one (possibly coded) evaluation clip.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedClip {
    pub clip_id: String,
    pub scene_label: String,
    pub features: LogMel,
    /// Quality of the coded clip against its original, when requested.
    pub quality: Option<QualityScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub predictions: Vec<usize>,
}

impl EvalResult {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], n_classes: usize) -> Self {
        let mut confusion = vec![vec![0u64; n_classes]; n_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
        Self {
            accuracy: correct as f64 / truth.len().max(1) as f64,
            confusion,
            predictions: predicted.to_vec(),
        }
    }
}

fn code_one(
    item: &ManifestItem,
    extractor: &LogMelExtractor,
    codec: Option<&CodecSpec>,
    with_quality: bool,
) -> Result<CodedClip, ClassifierError> {
    let clip = wav::read(&item.file_path).map_err(|source| ClassifierError::Audio {
        clip_id: item.clip_id.clone(),
        source,
    })?;
    let (coded, quality) = match codec {
        None => (clip, None),
        Some(spec) => {
            let coded = transcode(spec, &clip).map_err(|source| ClassifierError::Codec {
                clip_id: item.clip_id.clone(),
                source,
            })?;
            let quality = if with_quality {
                match odg_proxy(&clip, &coded) {
                    Ok(q) => Some(q),
                    Err(QualityError::SilentReference) => None,
                    Err(e) => {
                        return Err(ClassifierError::Config(format!(
                            "{}: quality: {e}",
                            item.clip_id
                        )))
                    }
                }
            } else {
                None
            };
            (coded, quality)
        }
    };
    Ok(CodedClip {
        clip_id: item.clip_id.clone(),
        scene_label: item.scene_label.clone(),
        features: extractor.extract(&coded)?,
        quality,
    })
}

/// Reads, optionally transcodes, and featurises every `split` item of
/// `manifest` using up to `jobs` threads. Results are in manifest order.
pub fn coded_features(
    manifest: &DatasetManifest,
    split: Split,
    params: &FeatureParams,
    codec: Option<&CodecSpec>,
    with_quality: bool,
    jobs: usize,
) -> Result<Vec<CodedClip>, ClassifierError> {
    let items: Vec<&ManifestItem> = manifest.split(split).collect();
    let extractor = LogMelExtractor::new(params)?;
    parallel_map(items.len(), jobs, |i| {
        code_one(items[i], &extractor, codec, with_quality)
    })
    .into_iter()
    .collect()
}

/// Category index (into `model3`'s outputs) of each of `model10`'s classes.
fn category_map(
    model10: &Model,
    model3: &Model,
    manifest: &DatasetManifest,
) -> Result<Vec<usize>, ClassifierError> {
    model10
        .labels
        .iter()
        .map(|label| {
            let unknown = || ClassifierError::UnknownLabel {
                label: label.clone(),
            };
            let cat = manifest.category_of(label).ok_or_else(unknown)?;
            model3.label_index(cat.as_str()).ok_or_else(unknown)
        })
        .collect()
}

/// Accuracy and confusion of `model10` (fused with `model3` when given) on pre-computed features.
pub fn evaluate_features(
    model10: &Model,
    model3: Option<&Model>,
    clips: &[CodedClip],
    manifest: &DatasetManifest,
    alpha: f64,
) -> Result<EvalResult, ClassifierError> {
    if clips.is_empty() {
        return Err(ClassifierError::EmptyEval);
    }
    if model10.config.n_outputs != 10 {
        return Err(ClassifierError::Shape {
            expected: 10,
            found: model10.config.n_outputs,
        });
    }
    if let Some(m3) = model3 {
        if m3.config.n_outputs != 3 {
            return Err(ClassifierError::Shape {
                expected: 3,
                found: m3.config.n_outputs,
            });
        }
    }
    let cats = model3
        .map(|m3| category_map(model10, m3, manifest))
        .transpose()?;
    let net10 = model10.network();
    let net3 = model3.map(Model::network);
    let mut trace = Trace::default();
    let mut truth = Vec::with_capacity(clips.len());
    let mut predicted = Vec::with_capacity(clips.len());
    for clip in clips {
        truth.push(model10.label_index(&clip.scene_label).ok_or_else(|| {
            ClassifierError::UnknownLabel {
                label: clip.scene_label.clone(),
            }
        })?);
        let input = model10.prepare_input(&clip.features, None)?;
        let p10 = Posterior::from_logits(&model10.logits(&net10, &input, &mut trace));
        let post = match (model3, &net3, &cats) {
            (Some(m3), Some(n3), Some(cats)) => {
                let input3 = m3.prepare_input(&clip.features, None)?;
                let p3 = Posterior::from_logits(&m3.logits(n3, &input3, &mut trace));
                fuse_scores(&p10, &p3, cats, alpha)?
            }
            _ => p10,
        };
        predicted.push(post.argmax());
    }
    Ok(EvalResult::from_predictions(&truth, &predicted, 10))
}

/// Transcodes (when `codec` is given), featurises and classifies the evaluation split.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    model10: &Model,
    model3: Option<&Model>,
    manifest: &DatasetManifest,
    feature_params: &FeatureParams,
    codec: Option<&CodecSpec>,
    alpha: f64,
    jobs: usize,
) -> Result<EvalResult, ClassifierError> {
    if manifest.count(Split::Eval) == 0 {
        return Err(ClassifierError::EmptyEval);
    }
    let clips = coded_features(manifest, Split::Eval, feature_params, codec, false, jobs)?;
    evaluate_features(model10, model3, &clips, manifest, alpha)
}
