//! `asc`: codec robustness experiments for acoustic scene classification.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use asc_core::audio::{build_synthetic_dataset, load_dcase_manifest, wav};
use asc_core::classifier::{evaluate, load_model, save_model};
use asc_core::codecs::{parse_codec_spec, transcode};
use asc_core::features::log_mel;
use asc_core::pipeline::{
    experiment_a, run_experiment_b, train_condition, write_report, FeatureStore, Progress,
};
use asc_core::quality::odg_proxy;
use asc_core::report::{ExperimentReport, ReportFormat};
use asc_core::{CodecSpec, DatasetManifest, ExperimentConfig, Split};

#[derive(Parser)]
#[command(
    name = "asc",
    version,
    about = "Codec robustness experiments for acoustic scene classification"
)]
struct Cli {
    /// Worker threads for transcoding, feature extraction and evaluation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ten-class scene dataset and its manifest.
    SynthData(SynthArgs),
    /// Encode and decode a WAV file with a codec.
    Transcode(TranscodeArgs),
    /// Extract log-mel features from a WAV file.
    Features(FeaturesArgs),
    /// Train a 10-class or 3-class model on a manifest's training split.
    Train(TrainArgs),
    /// Evaluate a model on a manifest's evaluation split.
    Eval(EvalArgs),
    /// Score a coded WAV against its reference with the ODG proxy.
    Quality(QualityArgs),
    /// Evaluate baseline-trained models under coded audio.
    ExpA(ExpArgs),
    /// Train with codec-augmented data and evaluate every condition.
    ExpB(ExpArgs),
    /// Render a saved JSON report as CSV, JSON or markdown.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory (audio/ and manifest.tsv are written here).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    train_per_class: usize,
    #[arg(long, default_value_t = 40)]
    eval_per_class: usize,
    /// Clip length in seconds.
    #[arg(long, default_value_t = 3.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TranscodeArgs {
    /// Codec spec such as `ptc-mp3@32`, `sbc@64;subbands=4` or a bare family with --bitrate.
    #[arg(long)]
    codec: String,
    /// Bitrate in kbps; overrides the spec's.
    #[arg(long)]
    bitrate: Option<f64>,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    input: PathBuf,
    /// Experiment config whose feature parameters are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv (one row per frame) or json.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct TrainArgs {
    /// Manifest TSV (as written by synth-data).
    manifest: PathBuf,
    /// Where to write the model file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also train the 3-class model, written next to --out with a `.3class` suffix.
    #[arg(long)]
    with_categories: bool,
    /// Optional extra training items, e.g. a manifest of coded copies.
    #[arg(long)]
    augmentation: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    manifest: PathBuf,
    /// 10-class model file.
    #[arg(long)]
    model: PathBuf,
    /// 3-class model file for score fusion.
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Codec applied to every evaluation clip before classification.
    #[arg(long)]
    codec: Option<String>,
    #[arg(long)]
    bitrate: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the full result (accuracy, confusion matrix, predictions) as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QualityArgs {
    reference: PathBuf,
    test: PathBuf,
    /// text or json.
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct ExpArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// First seed; the config's seed count is kept and seeds run consecutively from here.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report written by exp-a or exp-b.
    input: PathBuf,
    /// csv, json or markdown.
    #[arg(long, default_value = "markdown")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures the user can fix by changing the command line.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn codec_arg(flag: &str, codec: &str, bitrate: Option<f64>) -> Result<CodecSpec> {
    let text = match (codec.split_once('@'), bitrate) {
        (None, None) => {
            return Err(usage(format!(
                "--{flag} {codec:?} has no bitrate; use FAMILY@KBPS or --bitrate"
            )))
        }
        (None, Some(b)) => {
            let (family, params) = codec
                .split_once(';')
                .map_or((codec, None), |(f, p)| (f, Some(p)));
            match params {
                Some(p) => format!("{family}@{b};{p}"),
                None => format!("{family}@{b}"),
            }
        }
        (Some((family, rest)), Some(b)) => match rest.split_once(';') {
            Some((_, p)) => format!("{family}@{b};{p}"),
            None => format!("{family}@{b}"),
        },
        (Some(_), None) => codec.to_string(),
    };
    parse_codec_spec(&text).map_err(|e| usage(format!("--{flag} {codec:?}: {e}")))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let root = path.parent().unwrap_or(Path::new("."));
    load_dcase_manifest(path, root).with_context(|| format!("loading manifest {}", path.display()))
}

fn print_progress(experiment: &str) -> impl FnMut(&Progress) + '_ {
    move |p| {
        println!(
            "{experiment} condition={} seed={} eval={} accuracy={:.4}",
            p.condition, p.seed, p.eval_condition, p.accuracy
        )
    }
}

fn experiment(args: &ExpArgs, jobs: usize, b: bool) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(first) = args.seed {
        let n = config.seeds.len() as u64;
        config.seeds = (first..first + n).collect();
    }
    let manifest = config.dataset().context("preparing the dataset")?;
    let (report, stem) = if b {
        (
            run_experiment_b(&config, &manifest, jobs, &mut print_progress("exp-b"))?,
            "exp_b",
        )
    } else {
        (
            experiment_a(&config, &manifest, jobs, &mut print_progress("exp-a"))?,
            "exp_a",
        )
    };
    for path in write_report(&report, &config.out_dir, stem)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    match cli.command {
        Command::SynthData(a) => {
            let m = build_synthetic_dataset(
                a.train_per_class,
                a.eval_per_class,
                a.duration,
                a.seed,
                &a.out,
            )?;
            println!(
                "wrote {} clips and {}",
                m.items.len(),
                a.out.join("manifest.tsv").display()
            );
        }
        Command::Transcode(a) => {
            let spec = codec_arg("codec", &a.codec, a.bitrate)?;
            let clip =
                wav::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            let coded = transcode(&spec, &clip)?;
            wav::write(&a.output, &coded)
                .with_context(|| format!("writing {}", a.output.display()))?;
        }
        Command::Features(a) => {
            let format = match a.format.as_str() {
                f @ ("csv" | "json") => f,
                other => return Err(usage(format!("--format {other:?}: expected csv or json"))),
            };
            let params = load_config(a.config.as_deref())?.features;
            let clip =
                wav::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            let lm = log_mel(&clip, &params)?;
            let text = if format == "json" {
                let mut s = serde_json::to_string(&serde_json::json!({
                    "frames": lm.frames(),
                    "n_mels": lm.n_mels(),
                    "params": lm.params(),
                    "values": lm.values(),
                }))?;
                s.push('\n');
                s
            } else {
                (0..lm.frames())
                    .map(|t| {
                        let row: Vec<String> = lm.frame(t).iter().map(f32::to_string).collect();
                        row.join(",") + "\n"
                    })
                    .collect()
            };
            emit(a.out.as_deref(), &text)?;
        }
        Command::Train(a) => {
            let mut config = load_config(a.config.as_deref())?;
            config.category_model = a.with_categories;
            let mut manifest = load_manifest(&a.manifest)?;
            if let Some(aug) = &a.augmentation {
                let extra = load_manifest(aug)?;
                manifest
                    .items
                    .extend(extra.items.into_iter().filter(|i| i.split == Split::Train));
                manifest.validate()?;
            }
            let mut store = FeatureStore::new();
            let models = train_condition(&manifest, &config, "cli", a.seed, &mut store, jobs)?;
            save_model(&models.model10, &a.out)?;
            println!("wrote {}", a.out.display());
            if let Some(m3) = &models.model3 {
                let path = a.out.with_extension("3class");
                save_model(m3, &path)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Eval(a) => {
            let config = load_config(a.config.as_deref())?;
            let codec = a
                .codec
                .as_deref()
                .map(|c| codec_arg("codec", c, a.bitrate))
                .transpose()?;
            let manifest = load_manifest(&a.manifest)?;
            let model10 = load_model(&a.model, Some(10))?;
            let model3 = a
                .categories
                .as_deref()
                .map(|p| load_model(p, Some(3)))
                .transpose()?;
            let alpha = if model3.is_some() { config.alpha } else { 1.0 };
            let result = evaluate(
                &model10,
                model3.as_ref(),
                &manifest,
                &config.features,
                codec.as_ref(),
                alpha,
                jobs,
            )?;
            println!("accuracy {:.4}", result.accuracy);
            if let Some(out) = &a.out {
                emit(Some(out), &(serde_json::to_string_pretty(&result)? + "\n"))?;
            }
        }
        Command::Quality(a) => {
            let reference = wav::read(&a.reference)
                .with_context(|| format!("reading {}", a.reference.display()))?;
            let test =
                wav::read(&a.test).with_context(|| format!("reading {}", a.test.display()))?;
            let q = odg_proxy(&reference, &test)?;
            match a.format.as_str() {
                "text" => println!("odg {:.3} nmr_db {:.2}", q.odg, q.nmr_db),
                "json" => println!("{}", serde_json::to_string(&q)?),
                other => return Err(usage(format!("--format {other:?}: expected text or json"))),
            }
        }
        Command::ExpA(a) => experiment(&a, jobs, false)?,
        Command::ExpB(a) => experiment(&a, jobs, true)?,
        Command::Report(a) => {
            let format: ReportFormat = a
                .format
                .parse()
                .map_err(|e: asc_core::report::ReportError| usage(format!("--format: {e}")))?;
            let text = std::fs::read_to_string(&a.input)
                .with_context(|| format!("reading {}", a.input.display()))?;
            let report = ExperimentReport::from_json(&text)
                .with_context(|| format!("parsing {}", a.input.display()))?;
            emit(a.out.as_deref(), &report.render(format))?;
        }
    }
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
