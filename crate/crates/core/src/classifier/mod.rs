//! A small CNN scene classifier trained from scratch, score fusion of the
//! 10-class and 3-class models, evaluation and model files.

mod eval;
mod io;
pub mod nn;
mod train;

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{Category, ManifestError, WavError, SCENE_CLASSES};
use crate::codecs::CodecError;
use crate::features::{FeatureError, LogMel};
use crate::util::seeded_rng;
use nn::{Network, Shape, Trace};

pub use eval::{coded_features, evaluate, evaluate_features, CodedClip, EvalResult};
pub use io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{
    train, train_on_manifest, EpochStats, LabeledFeatures, LrSchedule, TrainConfig, TrainHistory,
};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("features have {found} bands, model expects {expected}")]
    BandMismatch { expected: usize, found: usize },
    #[error("features have {found} frames, model needs at least {needed}")]
    TooFewFrames { needed: usize, found: usize },
    #[error("no training items for output {0:?}")]
    EmptyClass(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("label {label:?} is not known to the model")]
    UnknownLabel { label: String },
    #[error("evaluation split is empty")]
    EmptyEval,
    #[error("invalid posterior: {0}")]
    Posterior(String),
    #[error("model file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("model file {path} has version {found}, expected {expected}")]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("model file {path} failed its checksum")]
    Checksum { path: PathBuf },
    #[error("model has {found} outputs, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("clip {clip_id}: {source}")]
    Codec {
        clip_id: String,
        #[source]
        source: CodecError,
    },
    #[error("clip {clip_id}: {source}")]
    Audio {
        clip_id: String,
        #[source]
        source: WavError,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_bands: usize,
    /// Output channels of each 3x3 convolution + 2x2 max-pool block.
    pub conv_channels: Vec<usize>,
    pub hidden_units: usize,
    /// 10 for scene classes, 3 for categories.
    pub n_outputs: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_bands: 64,
            conv_channels: vec![16, 32],
            hidden_units: 64,
            n_outputs: 10,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: String| Err(ClassifierError::Config(m));
        if self.n_outputs != 3 && self.n_outputs != 10 {
            return bad(format!("n_outputs {} must be 3 or 10", self.n_outputs));
        }
        if self.conv_channels.is_empty() {
            return bad("at least one convolution block is required".into());
        }
        if self.conv_channels.contains(&0) || self.hidden_units == 0 {
            return bad("layer widths must be positive".into());
        }
        if self.input_bands >> self.conv_channels.len() == 0 {
            return bad(format!(
                "{} bands cannot pass through {} pooling blocks",
                self.input_bands,
                self.conv_channels.len()
            ));
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        Shape {
            bands: self.input_bands,
            channels: self.conv_channels.clone(),
            hidden: self.hidden_units,
            outputs: self.n_outputs,
        }
    }
}

/// Per-band standardisation of log-mel inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl FeatureNorm {
    pub fn identity(bands: usize) -> Self {
        Self {
            mean: vec![0.0; bands],
            std: vec![1.0; bands],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    /// Output names: scene labels or category names.
    pub labels: Vec<String>,
    pub feature_norm: FeatureNorm,
    /// Frames seen per example; longer inputs are centre-cropped, shorter ones tiled.
    pub crop_frames: usize,
    params: Vec<Vec<f32>>,
}

/// Default output names for a model with `n_outputs` outputs.
pub fn default_labels(n_outputs: usize) -> Vec<String> {
    if n_outputs == 3 {
        Category::ALL
            .iter()
            .map(|c| c.as_str().to_string())
            .collect()
    } else {
        SCENE_CLASSES.iter().map(|s| s.to_string()).collect()
    }
}

/// Fresh model with seeded uniform fan-in initialisation: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`
/// for layers feeding a ReLU, a tenth of `sqrt(3/fan_in)` for the output layer, zero biases.
pub fn init_model(config: &ModelConfig) -> Result<Model, ClassifierError> {
    config.validate()?;
    let shape = config.shape();
    let mut rng = seeded_rng(config.seed);
    let tensors = shape.tensors();
    let last_weight = tensors.len() - 2;
    let params = tensors
        .iter()
        .enumerate()
        .map(|(i, &(len, fan_in))| {
            if i % 2 == 1 {
                return vec![0.0f32; len];
            }
            let limit = if i == last_weight {
                0.1 * (3.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            (0..len)
                .map(|_| rng.random_range(-limit..limit) as f32)
                .collect()
        })
        .collect();
    Ok(Model {
        config: config.clone(),
        labels: default_labels(config.n_outputs),
        feature_norm: FeatureNorm::identity(config.input_bands),
        crop_frames: 96,
        params,
    })
}

impl Model {
    pub fn params(&self) -> &[Vec<f32>] {
        &self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        labels: Vec<String>,
        feature_norm: FeatureNorm,
        crop_frames: usize,
        params: Vec<Vec<f32>>,
    ) -> Result<Self, ClassifierError> {
        config.validate()?;
        let sizes = config.shape().tensors();
        if sizes.len() != params.len() || sizes.iter().zip(&params).any(|((n, _), p)| *n != p.len())
        {
            return Err(ClassifierError::Config(
                "parameter tensors do not match the configuration".into(),
            ));
        }
        if labels.len() != config.n_outputs {
            return Err(ClassifierError::Config(format!(
                "{} labels for {} outputs",
                labels.len(),
                config.n_outputs
            )));
        }
        if feature_norm.mean.len() != config.input_bands
            || feature_norm.std.len() != config.input_bands
            || feature_norm.std.iter().any(|&s| !(s > 0.0))
        {
            return Err(ClassifierError::Config(
                "feature normalisation does not fit the input bands".into(),
            ));
        }
        if crop_frames < 1 << config.conv_channels.len() {
            return Err(ClassifierError::Config(format!(
                "crop of {crop_frames} frames is too short"
            )));
        }
        Ok(Self {
            config,
            labels,
            feature_norm,
            crop_frames,
            params,
        })
    }

    pub(crate) fn network(&self) -> Network<f32> {
        Network::new(self.config.shape(), self.params.clone())
    }

    pub(crate) fn set_params(&mut self, params: Vec<Vec<f32>>) {
        self.params = params;
    }

    /// Index of `label` among the model's outputs.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Normalised `bands x frames` input (frequency-major), cropped or tiled to `crop_frames`.
    /// `offset` selects the crop start; `None` centres it.
    pub(crate) fn prepare_input(
        &self,
        lm: &LogMel,
        offset: Option<usize>,
    ) -> Result<Vec<f32>, ClassifierError> {
        let bands = self.config.input_bands;
        if lm.n_mels() != bands {
            return Err(ClassifierError::BandMismatch {
                expected: bands,
                found: lm.n_mels(),
            });
        }
        if lm.frames() == 0 {
            return Err(ClassifierError::TooFewFrames {
                needed: 1,
                found: 0,
            });
        }
        let crop = self.crop_frames;
        let frames = lm.frames();
        let start = if frames > crop {
            offset.unwrap_or((frames - crop) / 2).min(frames - crop)
        } else {
            0
        };
        let mut input = vec![0.0f32; bands * crop];
        for t in 0..crop {
            let src = lm.frame((start + t) % frames);
            for (m, &v) in src.iter().enumerate() {
                input[m * crop + t] = (v - self.feature_norm.mean[m]) / self.feature_norm.std[m];
            }
        }
        Ok(input)
    }

    pub(crate) fn logits(
        &self,
        net: &Network<f32>,
        input: &[f32],
        trace: &mut Trace<f32>,
    ) -> Vec<f64> {
        net.forward(input, self.crop_frames, trace);
        trace.logits.iter().map(|&v| v as f64).collect()
    }
}

/// Class or category probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    probabilities: Vec<f64>,
}

impl Posterior {
    /// Requires non-negative finite entries summing to 1 within 1e-6.
    pub fn new(probabilities: Vec<f64>) -> Result<Self, ClassifierError> {
        if probabilities.is_empty() {
            return Err(ClassifierError::Posterior("no entries".into()));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ClassifierError::Posterior(
                "entries must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(ClassifierError::Posterior(format!(
                "entries sum to {total}"
            )));
        }
        Ok(Self { probabilities })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probabilities: vec![1.0 / n as f64; n],
        }
    }

    /// Stable softmax of `logits`.
    pub fn from_logits(logits: &[f64]) -> Self {
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
        let total: f64 = exps.iter().sum();
        Self {
            probabilities: exps.into_iter().map(|e| e / total).collect(),
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Index of the largest probability; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }
}

/// Class posterior of `model` for one clip.
pub fn predict(model: &Model, features: &LogMel) -> Result<Posterior, ClassifierError> {
    let input = model.prepare_input(features, None)?;
    let net = model.network();
    let mut trace = Trace::default();
    Ok(Posterior::from_logits(
        &model.logits(&net, &input, &mut trace),
    ))
}

/// `fused(c) ∝ post10(c)^alpha * post3(category_of[c])^(1 - alpha)`, computed in the log domain.
///
/// `category_of[c]` is the category index of class `c`. `alpha = 1` returns `post10` unchanged.
pub fn fuse_scores(
    post10: &Posterior,
    post3: &Posterior,
    category_of: &[usize],
    alpha: f64,
) -> Result<Posterior, ClassifierError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ClassifierError::Posterior(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    if category_of.len() != post10.len() {
        return Err(ClassifierError::Posterior(format!(
            "category map covers {} classes, posterior has {}",
            category_of.len(),
            post10.len()
        )));
    }
    if let Some(&c) = category_of.iter().find(|&&c| c >= post3.len()) {
        return Err(ClassifierError::Posterior(format!(
            "category index {c} out of range"
        )));
    }
    if alpha == 1.0 {
        return Ok(post10.clone());
    }
    let weighted = |p: f64, w: f64| if w == 0.0 { 0.0 } else { w * p.ln() };
    let logs: Vec<f64> = post10
        .probabilities
        .iter()
        .zip(category_of)
        .map(|(&p, &c)| weighted(p, alpha) + weighted(post3.probabilities[c], 1.0 - alpha))
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(ClassifierError::Posterior(
            "fused posterior has no mass".into(),
        ));
    }
    let exps: Vec<f64> = logs.iter().map(|&l| (l - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(Posterior {
        probabilities: exps.into_iter().map(|e| e / total).collect(),
    })
}
