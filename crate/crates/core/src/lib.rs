//! Tools for measuring how lossy perceptual coding affects acoustic scene
//! classification, and for training classifiers that hold up under it.
//!
//! The crate is organised bottom-up:
//!
//! * [`audio`]: clips, WAV I/O, the procedural scene generator and dataset manifests.
//! * [`codecs`]: a bit-exact SBC codec, the MDCT-based PTC family and an
//!   external-encoder adapter behind one encode/decode/transcode interface.
//! * [`features`]: STFT, mel filterbank, log-mel extraction and feature divergence.
//! * [`quality`]: noise-to-mask ratio, the ODG proxy and least-squares fitting.
//! * [`classifier`]: a small CNN trained from scratch, score fusion, evaluation and persistence.
//! * [`pipeline`]: augmentation, codec subset selection and the two experiment runners.
//! * [`report`]: report arithmetic and CSV / JSON / markdown rendering.

pub mod audio;
pub mod classifier;
pub mod codecs;
pub mod features;
pub mod pipeline;
pub mod quality;
pub mod report;

mod util;

pub use audio::{AudioClip, Category, DatasetManifest, ManifestItem, SceneRecipe, Split};
pub use classifier::{Model, ModelConfig, Posterior, TrainConfig};
pub use codecs::{CodecFamily, CodecSpec, EncodedStream};
pub use features::{FeatureParams, LogMel};
pub use pipeline::{ExperimentConfig, TrainingCondition};
pub use quality::{QualityScore, RegressionFit};
pub use report::ExperimentReport;

/// Sample rate used throughout unless a clip says otherwise.
pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;
