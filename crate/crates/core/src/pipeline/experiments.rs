//! Experiment A (pre-trained models under coded evaluation) and experiment B
//! (training with codec-augmented data).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::augment::{
    assert_eval_untouched, baseline_train_split, codec_dir, transcode_train_split,
};
use super::{io_err, ExperimentConfig, PipelineError, TrainingCondition};
use crate::audio::{wav, DatasetManifest, ManifestItem, Split};
use crate::classifier::{
    coded_features, evaluate_features, init_model, train, CodedClip, LabeledFeatures, Model,
    ModelConfig,
};
use crate::codecs::CodecSpec;
use crate::features::{FeatureParams, LogMel, LogMelExtractor};
use crate::quality::linear_fit;
use crate::report::{
    ExperimentKind, ExperimentReport, ReportFormat, ReportRow, SeedAccuracy, UNCODED,
};
use crate::util::{mix_seed, parallel_map};

/// One progress line: an accuracy for a (training condition, seed, evaluation condition).
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    pub condition: String,
    pub seed: u64,
    pub eval_condition: String,
    pub accuracy: f64,
}

/// The models trained for one (condition, seed).
#[derive(Debug, Clone, PartialEq)]
pub struct SeedModels {
    pub condition: String,
    pub seed: u64,
    pub train_items: usize,
    pub model10: Model,
    pub model3: Option<Model>,
}

/// Log-mel features of training files, computed once per path.
#[derive(Debug, Default)]
pub struct FeatureStore {
    features: BTreeMap<PathBuf, LogMel>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn fill(
        &mut self,
        items: &[&ManifestItem],
        params: &FeatureParams,
        jobs: usize,
    ) -> Result<(), PipelineError> {
        let missing: Vec<&ManifestItem> = items
            .iter()
            .copied()
            .filter(|i| !self.features.contains_key(&i.file_path))
            .collect();
        let extractor = LogMelExtractor::new(params)?;
        let computed = parallel_map(missing.len(), jobs, |k| -> Result<LogMel, PipelineError> {
            let item = missing[k];
            let clip = wav::read(&item.file_path).map_err(|source| PipelineError::Audio {
                clip_id: item.clip_id.clone(),
                source,
            })?;
            Ok(extractor.extract(&clip)?)
        });
        for (item, lm) in missing.iter().zip(computed) {
            self.features.insert(item.file_path.clone(), lm?);
        }
        Ok(())
    }

    fn get(&self, path: &Path) -> &LogMel {
        &self.features[path]
    }
}

fn label_of(
    manifest: &DatasetManifest,
    model: &Model,
    label: &str,
) -> Result<usize, PipelineError> {
    let unknown = || PipelineError::Config(format!("label {label:?} is not known to the model"));
    let name = if model.config.n_outputs == 3 {
        manifest.category_of(label).ok_or_else(unknown)?.as_str()
    } else {
        label
    };
    model.label_index(name).ok_or_else(unknown)
}

fn fit_one(
    manifest: &DatasetManifest,
    store: &FeatureStore,
    config: &ExperimentConfig,
    n_outputs: usize,
    seed: u64,
) -> Result<Model, PipelineError> {
    let model = init_model(&ModelConfig {
        input_bands: config.features.n_mels,
        conv_channels: config.model.conv_channels.clone(),
        hidden_units: config.model.hidden_units,
        n_outputs,
        seed: mix_seed(seed, n_outputs as u64),
    })?;
    let data = manifest
        .split(Split::Train)
        .map(|item| {
            Ok(LabeledFeatures {
                features: store.get(&item.file_path).clone(),
                label: label_of(manifest, &model, &item.scene_label)?,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let mut tc = config.train.clone();
    tc.seed = mix_seed(seed, 0x7472_6169_6e00 + n_outputs as u64);
    Ok(train(model, &data, &tc)?.0)
}

fn train_prepared(
    manifest: &DatasetManifest,
    store: &FeatureStore,
    config: &ExperimentConfig,
    condition: &str,
    seed: u64,
) -> Result<SeedModels, PipelineError> {
    let model10 = fit_one(manifest, store, config, 10, seed)?;
    let model3 = if config.category_model {
        Some(fit_one(manifest, store, config, 3, seed)?)
    } else {
        None
    };
    Ok(SeedModels {
        condition: condition.to_string(),
        seed,
        train_items: manifest.count(Split::Train),
        model10,
        model3,
    })
}

/// Trains the 10-class (and, if configured, 3-class) model of one seed on
/// the training split of `manifest`.
pub fn train_condition(
    manifest: &DatasetManifest,
    config: &ExperimentConfig,
    condition: &str,
    seed: u64,
    store: &mut FeatureStore,
    jobs: usize,
) -> Result<SeedModels, PipelineError> {
    let items: Vec<&ManifestItem> = manifest.split(Split::Train).collect();
    store.fill(&items, &config.features, jobs)?;
    train_prepared(manifest, store, config, condition, seed)
}

fn eval_label(codec: Option<&CodecSpec>) -> String {
    codec.map_or_else(|| UNCODED.to_string(), CodecSpec::to_string)
}

fn eval_sets(
    manifest: &DatasetManifest,
    eval_codecs: &[CodecSpec],
    params: &FeatureParams,
    with_quality: bool,
    jobs: usize,
) -> Result<Vec<(String, Vec<CodedClip>)>, PipelineError> {
    std::iter::once(None)
        .chain(eval_codecs.iter().map(Some))
        .map(|codec| {
            let label = eval_label(codec);
            let clips = coded_features(
                manifest,
                Split::Eval,
                params,
                codec,
                with_quality && codec.is_some(),
                jobs,
            )
            .map_err(|e| PipelineError::from(e).context(format!("evaluation condition {label}")))?;
            Ok((label, clips))
        })
        .collect()
}

fn accuracy(
    models: &SeedModels,
    clips: &[CodedClip],
    manifest: &DatasetManifest,
    alpha: f64,
) -> Result<f64, PipelineError> {
    Ok(evaluate_features(
        &models.model10,
        models.model3.as_ref(),
        clips,
        manifest,
        alpha,
    )?
    .accuracy)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

fn row_from_seeds(
    index: usize,
    name: &str,
    file_count: usize,
    per_seed: Vec<SeedAccuracy>,
) -> ReportRow {
    let width = per_seed.first().map_or(0, |s| s.accuracy.len());
    ReportRow {
        index,
        name: name.to_string(),
        file_count,
        accuracy: (0..width)
            .map(|c| mean(per_seed.iter().map(|s| s.accuracy[c])))
            .collect(),
        per_seed,
    }
}

/// Evaluates trained models under every condition in `eval_codecs` (plus
/// uncoded), averaging over the seeds in `models`. The report has one row,
/// per-condition mean ODG proxy and a linear fit of accuracy on ODG over the
/// coded conditions.
pub fn run_experiment_a(
    models: &[SeedModels],
    manifest: &DatasetManifest,
    eval_codecs: &[CodecSpec],
    params: &FeatureParams,
    alpha: f64,
    jobs: usize,
    progress: &mut dyn FnMut(&Progress),
) -> Result<ExperimentReport, PipelineError> {
    let first = models.first().ok_or_else(|| {
        PipelineError::Config("experiment A needs at least one trained model".into())
    })?;
    if manifest.count(Split::Eval) == 0 {
        return Err(PipelineError::Config("evaluation split is empty".into()));
    }
    let sets = eval_sets(manifest, eval_codecs, params, true, jobs)?;
    let mut per_seed: Vec<SeedAccuracy> = models
        .iter()
        .map(|m| SeedAccuracy {
            seed: m.seed,
            accuracy: Vec::new(),
        })
        .collect();
    let mut odg = Vec::with_capacity(sets.len());
    for (label, clips) in &sets {
        let scores: Vec<f64> = clips
            .iter()
            .filter_map(|c| c.quality.map(|q| q.odg))
            .collect();
        odg.push((!scores.is_empty()).then(|| mean(scores.iter().copied())));
        for (m, acc) in models.iter().zip(per_seed.iter_mut()) {
            let a = accuracy(m, clips, manifest, alpha)
                .map_err(|e| e.context(format!("seed {}, {label}", m.seed)))?;
            progress(&Progress {
                condition: m.condition.clone(),
                seed: m.seed,
                eval_condition: label.clone(),
                accuracy: a,
            });
            acc.accuracy.push(a);
        }
    }
    let row = row_from_seeds(1, &first.condition, first.train_items, per_seed);
    let (xs, ys): (Vec<f64>, Vec<f64>) = odg
        .iter()
        .zip(&row.accuracy)
        .filter_map(|(o, &a)| o.map(|o| (o, a)))
        .unzip();
    let mut report = ExperimentReport::new(
        ExperimentKind::A,
        sets.into_iter().map(|(l, _)| l).collect(),
        vec![row],
        None,
        models.iter().map(|m| m.seed).collect(),
    )?;
    report.odg_per_condition = odg;
    report.odg_fit = linear_fit(&xs, &ys).ok();
    Ok(report)
}

fn check_no_leak(base: &DatasetManifest, m: &DatasetManifest) -> Result<(), PipelineError> {
    m.validate()?;
    assert_eval_untouched(base, m)
}

/// Trains one model set per seed under the configured experiment A training
/// condition and runs [`run_experiment_a`].
pub fn experiment_a(
    config: &ExperimentConfig,
    manifest: &DatasetManifest,
    jobs: usize,
    progress: &mut dyn FnMut(&Progress),
) -> Result<ExperimentReport, PipelineError> {
    config.validate()?;
    let work = config.out_dir.join("augmented");
    let condition = if config.exp_a.baseline_augmentation {
        "baseline"
    } else {
        "none"
    };
    let mut store = FeatureStore::new();
    let mut models = Vec::new();
    for &seed in &config.seeds {
        let mut m = manifest.clone();
        if config.exp_a.baseline_augmentation {
            m.items.extend(baseline_train_split(
                manifest,
                mix_seed(seed, 0xba5e),
                &work.join(format!("baseline-{seed}")),
                jobs,
            )?);
        }
        check_no_leak(manifest, &m)?;
        models.push(
            train_condition(&m, config, condition, seed, &mut store, jobs)
                .map_err(|e| e.context(format!("training seed {seed}")))?,
        );
    }
    run_experiment_a(
        &models,
        manifest,
        &config.exp_a.eval_codecs,
        &config.features,
        config.alpha,
        jobs,
        progress,
    )
}

/// Runs every training condition for every seed, evaluating each trained
/// model set under uncoded audio and every configured evaluation codec.
///
/// Training copies are materialised below `<out_dir>/augmented`: one
/// directory per codec (shared by all conditions and seeds, since coding is
/// deterministic) and one per seed for the baseline augmentation. Seeds of a
/// condition train in parallel when `jobs > 1`; progress is reported in
/// (condition, seed, evaluation condition) order regardless.
pub fn run_experiment_b(
    config: &ExperimentConfig,
    manifest: &DatasetManifest,
    jobs: usize,
    progress: &mut dyn FnMut(&Progress),
) -> Result<ExperimentReport, PipelineError> {
    config.validate()?;
    let settings = &config.exp_b;
    if settings.conditions.len() < 2 {
        return Err(PipelineError::Config(
            "experiment B needs a reference and at least one other condition".into(),
        ));
    }
    if manifest.count(Split::Train) == 0 || manifest.count(Split::Eval) == 0 {
        return Err(PipelineError::Config(
            "both splits must be non-empty".into(),
        ));
    }
    let work = config.out_dir.join("augmented");
    let sets = eval_sets(
        manifest,
        &settings.eval_codecs,
        &config.features,
        false,
        jobs,
    )?;

    let mut codec_items: BTreeMap<String, Vec<ManifestItem>> = BTreeMap::new();
    let mut baseline_items: BTreeMap<u64, Vec<ManifestItem>> = BTreeMap::new();
    let mut store = FeatureStore::new();
    let mut rows = Vec::with_capacity(settings.conditions.len());
    for cond in &settings.conditions {
        let ctx = |e: PipelineError| e.context(format!("condition {}", cond.name));
        for spec in &cond.augmentation_codecs {
            let key = spec.to_string();
            if !codec_items.contains_key(&key) {
                let items = transcode_train_split(manifest, spec, &codec_dir(&work, spec), jobs)
                    .map_err(ctx)?;
                codec_items.insert(key, items);
            }
        }
        let mut manifests = Vec::with_capacity(config.seeds.len());
        for &seed in &config.seeds {
            manifests.push(
                compose(
                    manifest,
                    cond,
                    seed,
                    &codec_items,
                    &mut baseline_items,
                    &work,
                    jobs,
                )
                .map_err(ctx)?,
            );
        }
        for m in &manifests {
            check_no_leak(manifest, m).map_err(ctx)?;
            let items: Vec<&ManifestItem> = m.split(Split::Train).collect();
            store.fill(&items, &config.features, jobs).map_err(ctx)?;
        }
        let seeds = &config.seeds;
        let store_ref = &store;
        let results = parallel_map(seeds.len(), jobs, |s| -> Result<Vec<f64>, PipelineError> {
            let models = train_prepared(&manifests[s], store_ref, config, &cond.name, seeds[s])?;
            sets.iter()
                .map(|(_, clips)| accuracy(&models, clips, manifest, config.alpha))
                .collect()
        });
        let mut per_seed = Vec::with_capacity(seeds.len());
        for (&seed, r) in seeds.iter().zip(results) {
            let acc = r.map_err(|e| e.context(format!("condition {}, seed {seed}", cond.name)))?;
            for ((label, _), &a) in sets.iter().zip(&acc) {
                progress(&Progress {
                    condition: cond.name.clone(),
                    seed,
                    eval_condition: label.clone(),
                    accuracy: a,
                });
            }
            per_seed.push(SeedAccuracy {
                seed,
                accuracy: acc,
            });
        }
        rows.push(row_from_seeds(
            cond.index,
            &cond.name,
            manifests[0].count(Split::Train),
            per_seed,
        ));
    }
    let reference = settings
        .conditions
        .iter()
        .position(|c| c.name == settings.reference);
    Ok(ExperimentReport::new(
        ExperimentKind::B,
        sets.into_iter().map(|(l, _)| l).collect(),
        rows,
        reference,
        config.seeds.clone(),
    )?)
}

fn compose(
    manifest: &DatasetManifest,
    cond: &TrainingCondition,
    seed: u64,
    codec_items: &BTreeMap<String, Vec<ManifestItem>>,
    baseline_items: &mut BTreeMap<u64, Vec<ManifestItem>>,
    work: &Path,
    jobs: usize,
) -> Result<DatasetManifest, PipelineError> {
    let mut m = manifest.clone();
    if cond.include_baseline_augmentation {
        if !baseline_items.contains_key(&seed) {
            let dir = work.join(format!("baseline-{seed}"));
            let items = baseline_train_split(manifest, mix_seed(seed, 0xba5e), &dir, jobs)?;
            baseline_items.insert(seed, items);
        }
        m.items.extend(baseline_items[&seed].iter().cloned());
    }
    for spec in &cond.augmentation_codecs {
        m.items
            .extend(codec_items[&spec.to_string()].iter().cloned());
    }
    Ok(m)
}

/// Writes `<stem>.csv`, `<stem>.json` and `<stem>.md` (plus `<stem>_scatter.csv`
/// for experiment A) into `dir` and returns their paths.
pub fn write_report(
    report: &ExperimentReport,
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();
    for format in [
        ReportFormat::Csv,
        ReportFormat::Json,
        ReportFormat::Markdown,
    ] {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        std::fs::write(&path, report.render(format)).map_err(io_err(&path))?;
        files.push(path);
    }
    if report.kind == ExperimentKind::A {
        let path = dir.join(format!("{stem}_scatter.csv"));
        std::fs::write(&path, report.scatter_csv()).map_err(io_err(&path))?;
        files.push(path);
    }
    Ok(files)
}
