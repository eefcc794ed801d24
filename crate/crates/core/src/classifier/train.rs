//! Seeded mini-batch SGD with momentum and a cosine learning-rate schedule.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::Trace;
use super::{ClassifierError, FeatureNorm, Model};
use crate::audio::{wav, DatasetManifest, Split};
use crate::features::{FeatureCache, FeatureParams, LogMel, LogMelExtractor};
use crate::util::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over all steps.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub seed: u64,
    /// Frames per training example; a seeded random crop of each clip.
    pub crop_frames: usize,
    /// Upper bound on the L2 norm of each batch gradient; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 16,
            learning_rate: 0.05,
            schedule: LrSchedule::Cosine,
            momentum: 0.9,
            seed: 0,
            crop_frames: 96,
            clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::Config(m.into()));
        if self.epochs == 0 || self.batch_size == 0 || self.crop_frames == 0 {
            return bad("epochs, batch size and crop length must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad("clip norm must be positive");
            }
        }
        Ok(())
    }

    fn rate_at(&self, step: usize, total: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                self.learning_rate * 0.5 * (1.0 + (PI * step as f64 / total as f64).cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

/// One training example: features and the index of its target output.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub features: LogMel,
    pub label: usize,
}

fn feature_norm(data: &[LabeledFeatures], bands: usize) -> FeatureNorm {
    let mut sum = vec![0.0f64; bands];
    let mut sq = vec![0.0f64; bands];
    let mut n = 0usize;
    for item in data {
        for t in 0..item.features.frames() {
            for (m, &v) in item.features.frame(t).iter().enumerate() {
                sum[m] += v as f64;
                sq[m] += (v as f64) * (v as f64);
            }
        }
        n += item.features.frames();
    }
    let n = n.max(1) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    FeatureNorm {
        mean: mean.iter().map(|&m| m as f32).collect(),
        std: sq
            .iter()
            .zip(&mean)
            .map(|(&q, &m)| ((q / n - m * m).max(0.0).sqrt().max(1e-3)) as f32)
            .collect(),
    }
}

/// Trains `model` on `data`.
///
/// The feature normalisation is recomputed from `data`; the model's crop
/// length is set from the config. Batches are drawn in a seeded shuffled
/// order and every reduction runs in a fixed order, so the result is a pure
/// function of the inputs.
pub fn train(
    mut model: Model,
    data: &[LabeledFeatures],
    config: &TrainConfig,
) -> Result<(Model, TrainHistory), ClassifierError> {
    config.validate()?;
    let bands = model.config.input_bands;
    let outputs = model.config.n_outputs;
    if config.crop_frames < 1 << model.config.conv_channels.len() {
        return Err(ClassifierError::Config(format!(
            "crop of {} frames is too short for {} pooling blocks",
            config.crop_frames,
            model.config.conv_channels.len()
        )));
    }
    for item in data {
        if item.features.n_mels() != bands {
            return Err(ClassifierError::BandMismatch {
                expected: bands,
                found: item.features.n_mels(),
            });
        }
        if item.label >= outputs {
            return Err(ClassifierError::Config(format!(
                "label {} outside {outputs} outputs",
                item.label
            )));
        }
    }
    for k in 0..outputs {
        if !data.iter().any(|d| d.label == k) {
            return Err(ClassifierError::EmptyClass(model.labels[k].clone()));
        }
    }
    model.feature_norm = feature_norm(data, bands);
    model.crop_frames = config.crop_frames;

    let mut net = model.network();
    let mut velocity = net.zero_grads();
    let mut grads = net.zero_grads();
    let mut trace = Trace::default();
    let mut dlogits = Vec::new();
    let mut rng = seeded_rng(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batches = data.len().div_ceil(config.batch_size);
    let total_steps = config.epochs * batches;
    let mut history = TrainHistory::default();
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            for g in grads.iter_mut() {
                g.fill(0.0);
            }
            for &i in idx {
                let item = &data[i];
                let frames = item.features.frames();
                let offset = if frames > config.crop_frames {
                    rng.random_range(0..=frames - config.crop_frames)
                } else {
                    0
                };
                let input = model.prepare_input(&item.features, Some(offset))?;
                net.forward(&input, config.crop_frames, &mut trace);
                let loss = super::nn::Network::softmax_xent(&trace, item.label, &mut dlogits);
                if !loss.is_finite() {
                    return Err(ClassifierError::NonFinite { epoch, batch });
                }
                loss_sum += loss as f64;
                let pred = trace.logits.iter().enumerate().fold(0, |b, (k, &v)| {
                    if v > trace.logits[b] {
                        k
                    } else {
                        b
                    }
                });
                correct += (pred == item.label) as usize;
                net.backward(&trace, &dlogits, &mut grads);
            }
            let lr = config.rate_at(step, total_steps) as f32;
            let mu = config.momentum as f32;
            let mut scale = 1.0 / idx.len() as f32;
            if let Some(limit) = config.clip_norm {
                let norm = grads
                    .iter()
                    .flatten()
                    .map(|&g| (g as f64) * (g as f64))
                    .sum::<f64>()
                    .sqrt()
                    * scale as f64;
                if norm > limit {
                    scale *= (limit / norm) as f32;
                }
            }
            for ((p, v), g) in net
                .params_mut()
                .iter_mut()
                .zip(velocity.iter_mut())
                .zip(&grads)
            {
                for ((pi, vi), &gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = mu * *vi + gi * scale;
                    *pi -= lr * *vi;
                }
            }
            if net.params().iter().flatten().any(|v| !v.is_finite()) {
                return Err(ClassifierError::NonFinite { epoch, batch });
            }
            step += 1;
        }
        history.epochs.push(EpochStats {
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        });
    }
    model.set_params(net.params().to_vec());
    Ok((model, history))
}

/// Target index of a manifest label for a model of `n_outputs` outputs.
pub(crate) fn target_index(
    manifest: &DatasetManifest,
    model: &Model,
    label: &str,
) -> Result<usize, ClassifierError> {
    let unknown = || ClassifierError::UnknownLabel {
        label: label.to_string(),
    };
    if model.config.n_outputs == 3 {
        let cat = manifest.category_of(label).ok_or_else(unknown)?;
        model.label_index(cat.as_str()).ok_or_else(unknown)
    } else {
        model.label_index(label).ok_or_else(unknown)
    }
}

/// Loads log-mel features for every training item of `manifest` and of
/// `augmentation` (if given) and trains on them.
pub fn train_on_manifest(
    model: Model,
    manifest: &DatasetManifest,
    feature_params: &FeatureParams,
    config: &TrainConfig,
    augmentation: Option<&DatasetManifest>,
    cache: Option<&FeatureCache>,
) -> Result<(Model, TrainHistory), ClassifierError> {
    let extractor = LogMelExtractor::new(feature_params)?;
    let mut data = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for m in std::iter::once(manifest).chain(augmentation) {
        for item in m.split(Split::Train) {
            if !seen.insert(item.clip_id.clone()) {
                continue;
            }
            let clip = wav::read(&item.file_path).map_err(|source| ClassifierError::Audio {
                clip_id: item.clip_id.clone(),
                source,
            })?;
            let features = match cache {
                Some(c) => c.get_or_compute(&clip, &extractor)?,
                None => extractor.extract(&clip)?,
            };
            data.push(LabeledFeatures {
                features,
                label: target_index(manifest, &model, &item.scene_label)?,
            });
        }
    }
    train(model, &data, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{init_model, ModelConfig};

    fn toy(n: usize, seed: u64) -> Vec<LabeledFeatures> {
        let params = FeatureParams {
            n_mels: 8,
            ..FeatureParams::default()
        };
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|i| {
                let label = i % 3;
                let values: Vec<f32> = (0..12 * 8)
                    .map(|k| {
                        let band = k % 8;
                        let base = if band * 3 / 8 == label { 1.0 } else { -1.0 };
                        base + rng.random_range(-0.5..0.5)
                    })
                    .collect();
                LabeledFeatures {
                    features: LogMel::from_values(values, 12, params.clone()).unwrap(),
                    label,
                }
            })
            .collect()
    }

    #[test]
    fn separable_toy_problem_is_learned() {
        let cfg = ModelConfig {
            input_bands: 8,
            conv_channels: vec![4],
            hidden_units: 8,
            n_outputs: 3,
            seed: 3,
        };
        let data = toy(42, 1);
        let tc = TrainConfig {
            epochs: 50,
            batch_size: 8,
            crop_frames: 8,
            ..TrainConfig::default()
        };
        let (model, hist) = train(init_model(&cfg).unwrap(), &data, &tc).unwrap();
        assert!(
            hist.epochs.last().unwrap().accuracy >= 0.99,
            "{:?}",
            hist.epochs.last()
        );
        let (again, _) = train(init_model(&cfg).unwrap(), &data, &tc).unwrap();
        assert_eq!(model.params(), again.params());
    }

    #[test]
    fn empty_class_is_reported() {
        let cfg = ModelConfig {
            input_bands: 8,
            conv_channels: vec![4],
            hidden_units: 8,
            n_outputs: 3,
            seed: 3,
        };
        let mut data = toy(12, 2);
        data.retain(|d| d.label != 1);
        let r = train(init_model(&cfg).unwrap(), &data, &TrainConfig::default());
        assert!(matches!(r, Err(ClassifierError::EmptyClass(_))));
    }
}
