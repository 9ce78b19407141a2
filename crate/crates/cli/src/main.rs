use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use percept_core::engine::{save_network, LayerTap, NetworkGraph};
use percept_core::harness::{
    evaluate_saliency_table, ingest_masking_dataset, load_human_curve, load_human_shapes, load_model,
    run_context_experiment, run_contrast_experiment, run_saliency_experiment, sidecar_path, Builtin,
    ContrastExperimentOptions, ExperimentReport, LoadedModel, MetricRow, MetricTable, ModelSpec, PadMode,
    SaliencyExperimentOptions, ScalePolicy, CACHE_ENV,
};
use percept_core::metrics::{ContextOptions, MetricOrder, SaliencyOptions, DEFAULT_BINS, DEFAULT_MAX_NEURONS};
use percept_core::stats::LogisticMode;
use percept_core::stimuli::{CategoryLabel, Condition, Paradigm, PatternGeometry, StimulusConfig};

const EXIT_RUNTIME: u8 = 1;
const EXIT_VALIDATION: u8 = 2;

#[derive(Parser)]
#[command(
    name = "percept",
    version,
    about = "Psychophysical stimuli, layer taps and perceptual correlates"
)]
struct Cli {
    /// Directory for cached built-in models.
    #[arg(long, global = true, env = CACHE_ENV)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render pattern stimuli as PNG files with an index CSV.
    GenStimuli(GenStimuli),
    /// Validate a masking dataset directory and print its manifest.
    IngestDataset(IngestDataset),
    /// Noise saliency of every dataset image against its threshold.
    RunSaliency(RunSaliency),
    /// Easy versus hard category information over all configurations.
    RunContext(RunContext),
    /// Grating contrast response, iso-output curves and log-linearity.
    RunContrast(RunContrast),
    /// Recompute prediction statistics from a saliency metric table.
    Eval(Eval),
    /// Write a built-in filter bank as an NWF file.
    ExportBank(ExportBank),
}

#[derive(Args)]
struct ModelArgs {
    /// NWF file, `builtin:gabor` or `builtin:steerable`.
    #[arg(long, default_value = "builtin:gabor")]
    model: String,
    /// Input side of built-in models.
    #[arg(long, default_value_t = 224)]
    size: usize,
    /// Tap node, repeatable; defaults to the model's default taps.
    #[arg(long = "tap")]
    taps: Vec<String>,
}

impl ModelArgs {
    fn load(&self, cache: Option<&Path>) -> Result<LoadedModel> {
        let spec: ModelSpec = self.model.parse()?;
        Ok(load_model(&spec, self.size, cache)?)
    }

    fn taps(&self) -> Option<Vec<LayerTap>> {
        (!self.taps.is_empty()).then(|| self.taps.iter().map(LayerTap::new).collect())
    }
}

#[derive(Args)]
struct GenStimuli {
    #[arg(long, default_value = "segmentation")]
    paradigm: Paradigm,
    /// Stimulus config file (TOML or JSON); overrides --paradigm.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 224)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples per category and condition.
    #[arg(long, default_value_t = 1)]
    samples: usize,
    /// Only the first N configurations.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestDataset {
    dir: PathBuf,
    #[arg(long, default_value = "100")]
    scale: ScalePolicy,
    #[arg(long, default_value = "black")]
    pad: PadMode,
}

#[derive(Args)]
struct RunSaliency {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "100")]
    scale: ScalePolicy,
    #[arg(long, default_value = "black")]
    pad: PadMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long, default_value = "mean-of-abs")]
    order: MetricOrder,
    /// Noise levels in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    levels: Option<Vec<f64>>,
    /// Pass predictors through a fitted logistic before the linear fit.
    #[arg(long)]
    logistic: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunContext {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "segmentation")]
    paradigm: Paradigm,
    /// Stimulus config file (TOML or JSON); overrides --paradigm.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 250)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Neurons kept per tap; 0 keeps all.
    #[arg(long, default_value_t = DEFAULT_MAX_NEURONS)]
    max_neurons: usize,
    /// `shape,value` CSV of human difficulty for the shape paradigm.
    #[arg(long)]
    human: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunContrast {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 250)]
    repetitions: usize,
    #[arg(long, default_value = "mean-of-abs")]
    order: MetricOrder,
    #[arg(long, value_delimiter = ',')]
    contrasts: Option<Vec<f64>>,
    /// Cycles per image width.
    #[arg(long, value_delimiter = ',')]
    frequencies: Option<Vec<f64>>,
    /// Iso-output targets as fractions of each tap's peak response.
    #[arg(long, value_delimiter = ',')]
    iso: Option<Vec<f64>>,
    /// `frequency,contrast` CSV of a human iso-output curve.
    #[arg(long)]
    human: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Eval {
    /// Saliency metric table CSV.
    table: PathBuf,
    /// Dataset whose thresholds replace those in the table.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    logistic: bool,
}

#[derive(Args)]
struct ExportBank {
    #[arg(long, default_value = "gabor")]
    kind: Builtin,
    #[arg(long, default_value_t = 224)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e
                .downcast_ref::<percept_core::Error>()
                .is_some_and(percept_core::Error::is_validation);
            ExitCode::from(if validation { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cache = cli.cache_dir.as_deref();
    match cli.command {
        Command::GenStimuli(a) => gen_stimuli(a),
        Command::IngestDataset(a) => {
            let m = ingest_masking_dataset(&a.dir)?.with_scale(a.scale).with_pad(a.pad);
            print_json(&serde_json::to_value(&m)?)
        }
        Command::RunSaliency(a) => {
            let model = a.model.load(cache)?;
            let manifest = ingest_masking_dataset(&a.dataset)?.with_scale(a.scale).with_pad(a.pad);
            let defaults = SaliencyOptions::default();
            let opts = SaliencyExperimentOptions {
                saliency: SaliencyOptions {
                    levels_db: a.levels.unwrap_or(defaults.levels_db),
                    repetitions: a.repetitions,
                    order: a.order,
                    seed: a.seed,
                    ..SaliencyOptions::default()
                },
                taps: a.model.taps(),
                logistic: logistic(a.logistic),
                ..SaliencyExperimentOptions::default()
            };
            finish(
                run_saliency_experiment(&manifest, &model.net, &model.id, &opts)?,
                &a.out,
            )
        }
        Command::RunContext(a) => {
            let model = a.model.load(cache)?;
            let stimuli = stimulus_config(a.config.as_deref(), a.paradigm, canvas(&model.net)?, a.seed)?;
            let opts = ContextOptions {
                samples_per_category: a.samples,
                bins: a.bins,
                seed: a.seed,
                taps: a.model.taps(),
                max_neurons_per_tap: (a.max_neurons > 0).then_some(a.max_neurons),
                ..ContextOptions::default()
            };
            let human = a.human.as_ref().map(load_human_shapes).transpose()?;
            let report = run_context_experiment(&stimuli, &model.net, &model.id, &opts, human.as_deref())?;
            finish(report, &a.out)
        }
        Command::RunContrast(a) => {
            let model = a.model.load(cache)?;
            let mut opts = ContrastExperimentOptions {
                taps: a.model.taps(),
                ..ContrastExperimentOptions::default()
            };
            opts.contrast.repetitions = a.repetitions;
            opts.contrast.order = a.order;
            opts.contrast.seed = a.seed;
            if let Some(c) = a.contrasts {
                opts.contrast.contrasts = c;
            }
            if let Some(f) = a.frequencies {
                opts.contrast.frequencies = f;
            }
            if let Some(l) = a.iso {
                opts.iso_levels = l;
            }
            let human = a.human.as_ref().map(load_human_curve).transpose()?;
            finish(
                run_contrast_experiment(&model.net, &model.id, &opts, human.as_deref())?,
                &a.out,
            )
        }
        Command::Eval(a) => eval(a),
        Command::ExportBank(a) => {
            let model = load_model(&ModelSpec::Builtin(a.kind), a.size, None)?;
            save_network(&model.net, &a.out)?;
            print_json(&json!({ "model": model.id, "nodes": model.net.nodes().len(), "out": a.out }))
        }
    }
}

fn logistic(fit: bool) -> LogisticMode {
    if fit {
        LogisticMode::Fit
    } else {
        LogisticMode::Identity
    }
}

fn canvas(net: &NetworkGraph) -> Result<usize> {
    let s = net.input_shape();
    if s.width != s.height {
        bail!(percept_core::Error::InvalidArgument(format!(
            "pattern stimuli need a square model input, got {}x{}",
            s.width, s.height
        )));
    }
    Ok(s.width)
}

fn stimulus_config(path: Option<&Path>, paradigm: Paradigm, canvas: usize, seed: u64) -> Result<StimulusConfig> {
    Ok(match path {
        Some(p) => {
            let mut c = StimulusConfig::load(p)?;
            c.geometry.canvas = canvas;
            c.master_seed = seed;
            c
        }
        None => StimulusConfig {
            paradigm,
            master_seed: seed,
            geometry: PatternGeometry::with_canvas(canvas),
            ..StimulusConfig::default()
        },
    })
}

fn finish(report: ExperimentReport, out: &Path) -> Result<()> {
    report
        .write(out)
        .with_context(|| format!("writing {}", out.display()))?;
    print_json(&json!({
        "experiment": report.kind,
        "model": report.model,
        "rows": report.table.len(),
        "csv": out,
        "sidecar": sidecar_path(out),
        "config_hash": report.config_hash,
        "evals": report.evals,
        "consistency": report.consistency,
        "skipped": report.skipped.len(),
    }))
}

fn gen_stimuli(a: GenStimuli) -> Result<()> {
    let cfg = stimulus_config(a.config.as_deref(), a.paradigm, a.size, a.seed)?;
    let renderer = cfg.renderer()?;
    std::fs::create_dir_all(&a.out)?;
    let mut index = csv::Writer::from_path(a.out.join("index.csv"))?;
    index.write_record(["file", "config_id", "category", "condition", "sample", "seed"])?;
    let configs = cfg.configs();
    let limit = a.limit.unwrap_or(configs.len());
    let mut count = 0;
    for config in configs.iter().take(limit) {
        for category in 0..config.paradigm.category_count() {
            for condition in [Condition::Easy, Condition::Hard] {
                for s in 0..a.samples {
                    let seed = percept_core::metrics::sample_seed(a.seed, config, category, s);
                    let img = renderer.render(config, CategoryLabel::new(category, condition), seed)?;
                    let file = format!("{}-c{category}-{}-{s}.png", config.id(), condition.name());
                    img.save(a.out.join(&file))?;
                    index.write_record([
                        file,
                        config.id(),
                        category.to_string(),
                        condition.name().to_string(),
                        s.to_string(),
                        seed.to_string(),
                    ])?;
                    count += 1;
                }
            }
        }
    }
    index.flush()?;
    print_json(&json!({ "images": count, "out": a.out }))
}

fn eval(a: Eval) -> Result<()> {
    let mut table = MetricTable::read_csv(&a.table)?;
    if let Some(dir) = &a.dataset {
        let manifest = ingest_masking_dataset(dir)?;
        table.rows.retain(|r| r.condition != "threshold-db");
        let ids: Vec<String> = {
            let mut seen = Vec::new();
            for r in &table.rows {
                if r.tap == "aggregate" && !seen.contains(&r.config_id) {
                    seen.push(r.config_id.clone());
                }
            }
            seen
        };
        for id in ids {
            let Some(rec) = manifest.records.iter().find(|r| r.id == id) else {
                continue;
            };
            let template = table
                .rows
                .iter()
                .find(|r| r.config_id == id)
                .expect("id from table")
                .clone();
            table.rows.push(MetricRow {
                tap: String::new(),
                condition: "threshold-db".into(),
                level_or_contrast: None,
                frequency: None,
                value: rec.threshold_db,
                ..template
            });
        }
    }
    let evals = evaluate_saliency_table(&table, &logistic(a.logistic))?;
    let sidecar = sidecar_path(&a.table);
    let hash = percept_core::harness::Sidecar::read(&sidecar)
        .ok()
        .map(|s| s.config_hash);
    print_json(&json!({ "table": a.table, "config_hash": hash, "evals": evals }))
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
