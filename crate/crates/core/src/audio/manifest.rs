//! Dataset manifests: the synthetic builder and the DCASE-style TSV loader.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::synth::{default_recipes, synth_scene_clip, SynthError};
use super::wav::{self, WavError};
use crate::util::mix_seed;

/// The ten scene labels in class-index order.
pub const SCENE_CLASSES: [&str; 10] = [
    "airport",
    "shopping_mall",
    "metro_station",
    "street_pedestrian",
    "public_square",
    "street_traffic",
    "tram",
    "bus",
    "metro",
    "park",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Indoor,
    Outdoor,
    Transportation,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::Indoor,
        Category::Outdoor,
        Category::Transportation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Indoor => "indoor",
            Category::Outdoor => "outdoor",
            Category::Transportation => "transportation",
        }
    }

    /// The fixed DCASE grouping of the ten scene labels.
    pub fn of_scene(label: &str) -> Option<Category> {
        match label {
            "airport" | "shopping_mall" | "metro_station" => Some(Category::Indoor),
            "street_pedestrian" | "public_square" | "street_traffic" | "park" => {
                Some(Category::Outdoor)
            }
            "tram" | "bus" | "metro" => Some(Category::Transportation),
            _ => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "eval" | "evaluate" | "test" => Ok(Split::Eval),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub clip_id: String,
    pub file_path: PathBuf,
    pub scene_label: String,
    pub split: Split,
    /// `"none"` for original audio, otherwise the canonical codec spec.
    pub codec_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub items: Vec<ManifestItem>,
    pub class_list: Vec<String>,
    pub category_map: BTreeMap<String, Category>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("manifest header lacks required column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: unknown scene label {label:?}")]
    UnknownLabel { row: usize, label: String },
    #[error("row {row}: referenced file {path} does not exist")]
    MissingFile { row: usize, path: String },
    #[error("row {row}: {reason}")]
    Malformed { row: usize, reason: String },
    #[error("manifest has no items")]
    Empty,
    #[error("duplicate clip id {0:?}")]
    DuplicateClipId(String),
    #[error("clip {0:?} appears in both splits")]
    SplitOverlap(String),
    #[error("class {label:?} category is inconsistent")]
    Category { label: String },
    #[error("invalid dataset request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Wav(#[from] WavError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl DatasetManifest {
    /// An empty manifest over the ten standard classes.
    pub fn standard() -> Self {
        let class_list: Vec<String> = SCENE_CLASSES.iter().map(|s| s.to_string()).collect();
        let category_map = class_list
            .iter()
            .map(|c| (c.clone(), Category::of_scene(c).expect("standard class")))
            .collect();
        Self {
            items: Vec::new(),
            class_list,
            category_map,
        }
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_list.iter().position(|c| c == label)
    }

    pub fn category_of(&self, label: &str) -> Option<Category> {
        self.category_map.get(label).copied()
    }

    /// Category of every class, in class-list order.
    pub fn category_indices(&self) -> Vec<usize> {
        self.class_list
            .iter()
            .map(|c| self.category_map[c].index())
            .collect()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestItem> {
        self.items.iter().filter(move |i| i.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Checks the structural invariants: known labels, total category map,
    /// unique clip ids and disjoint splits.
    pub fn validate(&self) -> Result<(), ManifestError> {
        for c in &self.class_list {
            if !self.category_map.contains_key(c) {
                return Err(ManifestError::Category { label: c.clone() });
            }
        }
        let mut ids = BTreeSet::new();
        let mut files: BTreeMap<&Path, Split> = BTreeMap::new();
        for (row, item) in self.items.iter().enumerate() {
            if self.class_index(&item.scene_label).is_none() {
                return Err(ManifestError::UnknownLabel {
                    row: row + 1,
                    label: item.scene_label.clone(),
                });
            }
            if !ids.insert(item.clip_id.as_str()) {
                return Err(ManifestError::DuplicateClipId(item.clip_id.clone()));
            }
            if let Some(prev) = files.insert(item.file_path.as_path(), item.split) {
                if prev != item.split {
                    return Err(ManifestError::SplitOverlap(item.clip_id.clone()));
                }
            }
        }
        Ok(())
    }

    /// Writes the extended TSV form (paths relative to the manifest file where possible).
    pub fn write_tsv(&self, path: &Path) -> Result<(), ManifestError> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut out = String::from("filename\tscene_label\tsplit\tcodec_tag\n");
        for item in &self.items {
            let rel = item.file_path.strip_prefix(base).unwrap_or(&item.file_path);
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                rel.display(),
                item.scene_label,
                item.split.as_str(),
                item.codec_tag
            ));
        }
        fs::write(path, out).map_err(io_err(path))
    }
}

/// Writes `10 * (n_train + n_eval)` synthetic clips plus `manifest.tsv` into `out_dir`.
pub fn build_synthetic_dataset(
    n_train_per_class: usize,
    n_eval_per_class: usize,
    duration: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest, ManifestError> {
    if n_train_per_class == 0 || n_eval_per_class == 0 {
        return Err(ManifestError::InvalidRequest(
            "per-class counts must be positive".into(),
        ));
    }
    let audio_dir = out_dir.join("audio");
    fs::create_dir_all(&audio_dir).map_err(io_err(&audio_dir))?;
    let recipes = default_recipes();
    let mut manifest = DatasetManifest::standard();
    for (split, count) in [
        (Split::Train, n_train_per_class),
        (Split::Eval, n_eval_per_class),
    ] {
        let split_salt = match split {
            Split::Train => 0x7261_696e,
            Split::Eval => 0x6576_616c,
        };
        for (class, recipe) in recipes.iter().enumerate() {
            let label = SCENE_CLASSES[class];
            for idx in 0..count {
                let clip_seed = mix_seed(
                    mix_seed(mix_seed(seed, split_salt), class as u64),
                    idx as u64,
                );
                let clip = synth_scene_clip(recipe, duration, clip_seed)?;
                let clip_id = format!("{label}-{}-{idx:04}", split.as_str());
                let file_path = audio_dir.join(format!("{clip_id}.wav"));
                wav::write(&file_path, &clip)?;
                manifest.items.push(ManifestItem {
                    clip_id,
                    file_path,
                    scene_label: label.to_string(),
                    split,
                    codec_tag: "none".into(),
                });
            }
        }
    }
    manifest.validate()?;
    manifest.write_tsv(&out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}

/// Loads a tab-separated manifest with at least `filename` and `scene_label`
/// columns. Optional `split` and `codec_tag` columns are honoured; rows without
/// a split are treated as evaluation items. Relative filenames resolve against
/// `audio_root`.
pub fn load_dcase_manifest(
    meta_path: &Path,
    audio_root: &Path,
) -> Result<DatasetManifest, ManifestError> {
    load_with_default_split(meta_path, audio_root, Split::Eval)
}

/// Loads DCASE-style train and evaluation lists into one manifest.
pub fn load_dcase_split(
    train_meta: &Path,
    eval_meta: &Path,
    audio_root: &Path,
) -> Result<DatasetManifest, ManifestError> {
    let mut train = load_with_default_split(train_meta, audio_root, Split::Train)?;
    let eval = load_with_default_split(eval_meta, audio_root, Split::Eval)?;
    for item in &mut train.items {
        item.split = Split::Train;
    }
    train.items.extend(eval.items.into_iter().map(|mut i| {
        i.split = Split::Eval;
        i
    }));
    train.validate()?;
    Ok(train)
}

fn load_with_default_split(
    meta_path: &Path,
    audio_root: &Path,
    default_split: Split,
) -> Result<DatasetManifest, ManifestError> {
    let text = fs::read_to_string(meta_path).map_err(io_err(meta_path))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or(ManifestError::MissingColumn("filename".into()))?
        .split('\t')
        .map(str::trim)
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let filename_col =
        col("filename").ok_or_else(|| ManifestError::MissingColumn("filename".into()))?;
    let label_col =
        col("scene_label").ok_or_else(|| ManifestError::MissingColumn("scene_label".into()))?;
    let split_col = col("split");
    let codec_col = col("codec_tag");

    let mut manifest = DatasetManifest::standard();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let get = |c: usize| {
            fields
                .get(c)
                .copied()
                .ok_or_else(|| ManifestError::Malformed {
                    row,
                    reason: format!(
                        "expected at least {} columns, found {}",
                        c + 1,
                        fields.len()
                    ),
                })
        };
        let filename = get(filename_col)?;
        let label = get(label_col)?;
        if manifest.class_index(label).is_none() {
            return Err(ManifestError::UnknownLabel {
                row,
                label: label.to_string(),
            });
        }
        let split = match split_col {
            Some(c) => get(c)?
                .parse()
                .map_err(|reason| ManifestError::Malformed { row, reason })?,
            None => default_split,
        };
        let codec_tag = match codec_col {
            Some(c) => get(c)?.to_string(),
            None => "none".to_string(),
        };
        let file_path = audio_root.join(filename);
        if !file_path.is_file() {
            return Err(ManifestError::MissingFile {
                row,
                path: file_path.display().to_string(),
            });
        }
        let clip_id = match codec_tag.as_str() {
            "none" => stem(filename),
            tag => format!("{}@{tag}", stem(filename)),
        };
        manifest.items.push(ManifestItem {
            clip_id,
            file_path,
            scene_label: label.to_string(),
            split,
            codec_tag,
        });
    }
    if manifest.items.is_empty() {
        return Err(ManifestError::Empty);
    }
    manifest.validate()?;
    Ok(manifest)
}

fn stem(filename: &str) -> String {
    Path::new(filename)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| filename.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::AudioClip;

    fn fixture(dir: &Path, rows: &[(&str, &str)]) -> PathBuf {
        let mut text = String::from("filename\tscene_label\n");
        for (f, l) in rows {
            wav::write(dir.join(f), &AudioClip::silence(8000, 10)).unwrap();
            text.push_str(&format!("{f}\t{l}\n"));
        }
        let meta = dir.join("meta.csv");
        fs::write(&meta, text).unwrap();
        meta
    }

    #[test]
    fn categories_follow_labels() {
        let dir = tempfile::tempdir().unwrap();
        let meta = fixture(
            dir.path(),
            &[("a.wav", "airport"), ("b.wav", "park"), ("c.wav", "bus")],
        );
        let m = load_dcase_manifest(&meta, dir.path()).unwrap();
        let cats: Vec<_> = m
            .items
            .iter()
            .map(|i| m.category_of(&i.scene_label).unwrap())
            .collect();
        assert_eq!(
            cats,
            [
                Category::Indoor,
                Category::Outdoor,
                Category::Transportation
            ]
        );
        assert!(m
            .items
            .iter()
            .all(|i| i.split == Split::Eval && i.codec_tag == "none"));
    }

    #[test]
    fn unknown_label_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let meta = fixture(dir.path(), &[("a.wav", "airport"), ("b.wav", "beach")]);
        let err = load_dcase_manifest(&meta, dir.path()).unwrap_err();
        assert!(matches!(&err, ManifestError::UnknownLabel { row: 2, label } if label == "beach"));
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let meta = fixture(dir.path(), &[]);
        assert!(matches!(
            load_dcase_manifest(&meta, dir.path()),
            Err(ManifestError::Empty)
        ));
    }

    #[test]
    fn missing_column_and_file() {
        let dir = tempfile::tempdir().unwrap();
        let meta = dir.path().join("m.tsv");
        fs::write(&meta, "file\tscene_label\nx.wav\tbus\n").unwrap();
        assert!(
            matches!(load_dcase_manifest(&meta, dir.path()), Err(ManifestError::MissingColumn(c)) if c == "filename")
        );
        fs::write(&meta, "filename\tscene_label\nx.wav\tbus\n").unwrap();
        assert!(matches!(
            load_dcase_manifest(&meta, dir.path()),
            Err(ManifestError::MissingFile { row: 1, .. })
        ));
    }

    #[test]
    fn written_tsv_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_synthetic_dataset(1, 1, 0.1, 4, dir.path()).unwrap();
        let back = load_dcase_manifest(&dir.path().join("manifest.tsv"), dir.path()).unwrap();
        assert_eq!(m, back);
    }
}
