//! Experiment orchestration: augmented training sets, codec subset selection
//! and the two experiment runners.

mod augment;
mod experiments;
mod subset;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{
    build_synthetic_dataset, load_dcase_split, DatasetManifest, ManifestError, WavError,
};
use crate::classifier::{ClassifierError, TrainConfig};
use crate::codecs::{parse_codec_spec, CodecError, CodecSpec};
use crate::features::{FeatureError, FeatureParams};
use crate::quality::QualityError;
use crate::report::ReportError;

pub use augment::{
    assert_eval_untouched, baseline_augment, generate_augmented_set, generate_baseline_set,
    BASELINE_TAG,
};
pub use experiments::{
    experiment_a, run_experiment_a, run_experiment_b, train_condition, write_report, FeatureStore,
    Progress, SeedModels,
};
pub use subset::{codec_scores, select_codec_subset, CodecScores};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("clip {clip_id} with {spec}: {source}")]
    Codec {
        clip_id: String,
        spec: String,
        #[source]
        source: CodecError,
    },
    #[error("clip {clip_id}: {source}")]
    Audio {
        clip_id: String,
        #[source]
        source: WavError,
    },
    #[error("augmented manifest altered the evaluation split: {0}")]
    Leak(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl PipelineError {
    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        PipelineError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A named training condition: extra codec-transcoded copies of the training
/// split and, optionally, the baseline augmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingCondition {
    pub index: usize,
    pub name: String,
    #[serde(default)]
    pub augmentation_codecs: Vec<CodecSpec>,
    #[serde(default)]
    pub include_baseline_augmentation: bool,
}

fn spec(s: &str) -> CodecSpec {
    parse_codec_spec(s).expect("built-in spec")
}

impl TrainingCondition {
    pub fn new(index: usize, name: &str, codecs: &[&str], baseline: bool) -> Self {
        Self {
            index,
            name: name.to_string(),
            augmentation_codecs: codecs.iter().map(|s| spec(s)).collect(),
            include_baseline_augmentation: baseline,
        }
    }

    /// The cumulative ladder of the codec-augmentation experiment: original data,
    /// baseline augmentation, three codec conditions added one at a time, and
    /// baseline plus all codecs.
    pub fn default_ladder() -> Vec<Self> {
        vec![
            Self::new(1, "none", &[], false),
            Self::new(2, "baseline", &[], true),
            Self::new(3, "1+ptc-mp3@64", &["ptc-mp3@64"], false),
            Self::new(4, "3+ptc-heaac@16", &["ptc-mp3@64", "ptc-heaac@16"], false),
            Self::new(
                5,
                "4+ptc-aac@32",
                &["ptc-mp3@64", "ptc-heaac@16", "ptc-aac@32"],
                false,
            ),
            Self::new(
                6,
                "2+5",
                &["ptc-mp3@64", "ptc-heaac@16", "ptc-aac@32"],
                true,
            ),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Procedurally generated scenes written under the output directory.
    Synthetic {
        train_per_class: usize,
        eval_per_class: usize,
        duration_s: f64,
        seed: u64,
    },
    /// DCASE-style meta files with `filename` and `scene_label` columns.
    Manifest {
        train_meta: PathBuf,
        eval_meta: PathBuf,
        audio_root: PathBuf,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            train_per_class: 100,
            eval_per_class: 40,
            duration_s: 3.0,
            seed: 1,
        }
    }
}

/// Architecture of both classifiers; the input width follows the feature bands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub conv_channels: Vec<usize>,
    pub hidden_units: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            conv_channels: vec![8, 16],
            hidden_units: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentASettings {
    pub eval_codecs: Vec<CodecSpec>,
    /// Train the evaluated models with the baseline augmentation.
    pub baseline_augmentation: bool,
}

impl Default for ExperimentASettings {
    fn default() -> Self {
        Self {
            eval_codecs: [
                "ptc-aac@64",
                "ptc-mp3@64",
                "ptc-heaac@32",
                "sbc@64",
                "ptc-mp3@32",
            ]
            .iter()
            .map(|s| spec(s))
            .collect(),
            baseline_augmentation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentBSettings {
    pub conditions: Vec<TrainingCondition>,
    /// Name of the condition the final row is compared against.
    pub reference: String,
    pub eval_codecs: Vec<CodecSpec>,
}

impl Default for ExperimentBSettings {
    fn default() -> Self {
        Self {
            conditions: TrainingCondition::default_ladder(),
            reference: "baseline".into(),
            eval_codecs: [
                "ptc-aac@32",
                "ptc-mp3@64",
                "ptc-mp3@32",
                "ptc-aac@48",
                "ptc-aac@64",
                "sbc@64",
            ]
            .iter()
            .map(|s| spec(s))
            .collect(),
        }
    }
}

/// Everything an experiment run depends on. Defaults are sized so that both
/// experiments finish on a single laptop core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub features: FeatureParams,
    pub model: ModelSettings,
    pub train: TrainConfig,
    /// Also train a 3-class model per run and fuse its scores.
    pub category_model: bool,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    pub exp_a: ExperimentASettings,
    pub exp_b: ExperimentBSettings,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            features: FeatureParams {
                n_mels: 32,
                hop: 2048,
                ..FeatureParams::default()
            },
            model: ModelSettings::default(),
            train: TrainConfig {
                epochs: 20,
                crop_frames: 48,
                ..TrainConfig::default()
            },
            category_model: true,
            alpha: 0.7,
            seeds: vec![0, 1, 2],
            exp_a: ExperimentASettings::default(),
            exp_b: ExperimentBSettings::default(),
            out_dir: PathBuf::from("asc-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::from_json(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable config")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.features.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        let b = &self.exp_b;
        let mut names = std::collections::BTreeSet::new();
        for c in &b.conditions {
            if !names.insert(c.name.as_str()) {
                return bad(format!("duplicate condition name {:?}", c.name));
            }
        }
        if !b.conditions.is_empty() && !names.contains(b.reference.as_str()) {
            return bad(format!(
                "reference condition {:?} is not defined",
                b.reference
            ));
        }
        Ok(())
    }

    /// Loads or synthesises the dataset. Synthetic data goes to `<out_dir>/data`.
    pub fn dataset(&self) -> Result<DatasetManifest, PipelineError> {
        let manifest = match &self.dataset {
            DatasetSource::Synthetic {
                train_per_class,
                eval_per_class,
                duration_s,
                seed,
            } => build_synthetic_dataset(
                *train_per_class,
                *eval_per_class,
                *duration_s,
                *seed,
                &self.out_dir.join("data"),
            )?,
            DatasetSource::Manifest {
                train_meta,
                eval_meta,
                audio_root,
            } => load_dcase_split(train_meta, eval_meta, audio_root)?,
        };
        Ok(manifest)
    }
}
