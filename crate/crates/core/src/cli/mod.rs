//! The `qfsru` command-line tool.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::{parse_config, splice_config};

use crate::classifier::{load_model, save_model, sidecar_path, train, FeaturePipeline, TrainConfig};
use crate::data::{
    read_dataset, read_knowledge_base, synth_dataset, write_dataset, write_knowledge_base,
    Format, KnowledgeBase, SampleSet, SynthConfig,
};
use crate::error::{Error, ErrorKind, Result};
use crate::evaluation::{confusion_csv, cross_validate, evaluate, report, CVReport, ReportFormat};
use crate::retrieval::{top_k, topk_avg, Metric, TopkWeighting};
use crate::spectral::{embedding_spectrum, power_spectrum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "qfsru",
    version,
    about = "Frequency-domain fusion classifier with fidelity-based knowledge retrieval",
    args_override_self = true
)]
pub struct Cli {
    /// Seed for every random choice (data synthesis, init, shuffling, folds).
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// key = value file of flag defaults; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-class dataset and knowledge base.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Print the top-k knowledge entries for a query.
    Retrieve(RetrieveArgs),
    /// Print the power spectrum of one sample's embedding as CSV.
    Spectrum(SpectrumArgs),
    /// Re-render a saved cross-validation report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of samples.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Distance between the class means in each modality.
    #[arg(long, default_value_t = 8.0)]
    pub sep: f64,
    /// Per-coordinate noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 768)]
    pub d_t: usize,
    #[arg(long, default_value_t = 2048)]
    pub d_v: usize,
    #[arg(long, default_value_t = 768)]
    pub d_k: usize,
    /// Knowledge base size (prototypes plus distractors).
    #[arg(long, default_value_t = 20)]
    pub n_knowledge: usize,
    #[arg(long, default_value = "binary", value_parser = ["binary", "jsonl"])]
    pub format: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainingFlags {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Initial learning rate.
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Floor of the cosine schedule.
    #[arg(long, default_value_t = 0.0)]
    pub lr_min: f64,
    /// Focal exponent.
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    /// Class weights: uniform, inverse, or a comma list such as 1,3.
    #[arg(long, default_value = "uniform")]
    pub alpha: String,
    #[arg(long, default_value_t = 0.1)]
    pub label_smoothing: f64,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long, default_value = "quantum", value_parser = ["quantum", "cosine"])]
    pub metric: String,
    #[arg(long, default_value = "uniform", value_parser = ["uniform", "score"])]
    pub topk_weighting: String,
    #[arg(long, default_value = "gated", value_parser = ["gated", "concat"])]
    pub fusion: String,
    /// Width of the modality projections.
    #[arg(long, default_value_t = 256)]
    pub proj_dim: usize,
    /// Retrieval query: the raw text embedding or a projection of the fused spectra.
    #[arg(long, default_value = "text", value_parser = ["text", "projected"])]
    pub query_mode: String,
}

impl TrainingFlags {
    pub fn to_config(&self, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr0: self.lr,
            lr_min: self.lr_min,
            gamma: self.gamma,
            alpha: self.alpha.parse()?,
            epsilon: self.label_smoothing,
            seed,
            fusion_mode: self.fusion.parse()?,
            metric: self.metric.parse()?,
            top_k: self.top_k,
            topk_weighting: self.topk_weighting.parse()?,
            query_mode: self.query_mode.parse()?,
            proj_dim: self.proj_dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset file (.jsonl or binary).
    #[arg(long)]
    pub data: PathBuf,
    /// Knowledge base file (.jsonl or binary).
    #[arg(long)]
    pub knowledge: PathBuf,
    /// Checkpoint path; the config and history are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub knowledge: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Folds trained concurrently; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Directory for report.json, report.csv, confusion.csv and report.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub knowledge: PathBuf,
    /// Also write the metrics JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub knowledge: PathBuf,
    /// Dataset holding the query sample.
    #[arg(long, requires = "sample_id")]
    pub data: Option<PathBuf>,
    /// Query with this sample's text embedding.
    #[arg(long, requires = "data", conflicts_with = "query")]
    pub sample_id: Option<String>,
    /// Inline query vector, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub query: Option<String>,
    #[arg(long, default_value = "quantum", value_parser = ["quantum", "cosine"])]
    pub metric: String,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long, default_value = "uniform", value_parser = ["uniform", "score"])]
    pub topk_weighting: String,
    /// Also print the averaged context vector.
    #[arg(long)]
    pub with_context: bool,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub sample_id: String,
    #[arg(long, default_value = "text", value_parser = ["text", "image"])]
    pub modality: String,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json written by `cv`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "text", value_parser = ["json", "text", "csv", "confusion"])]
    pub format: String,
}

fn require_file(flag: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{flag} {}: no such file", path.display()),
        )))
    }
}

fn load_data(path: &Path) -> Result<SampleSet> {
    require_file("--data", path)?;
    read_dataset(path, Format::from_path(path))
}

fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    require_file("--knowledge", path)?;
    read_knowledge_base(path, Format::from_path(path))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_synth(args: &SynthArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let cfg = SynthConfig {
        n_samples: args.n,
        d_t: args.d_t,
        d_v: args.d_v,
        d_k: args.d_k,
        n_knowledge: args.n_knowledge,
        class_separation: args.sep,
        noise_sigma: args.sigma,
        seed,
    };
    let format: Format = args.format.parse()?;
    let (set, kb) = synth_dataset(&cfg)?;
    fs::create_dir_all(&args.out)?;
    let (data_name, kb_name) = match format {
        Format::Binary => ("dataset.qfse", "knowledge.qfkb"),
        Format::Jsonl => ("dataset.jsonl", "knowledge.jsonl"),
    };
    let data_path = args.out.join(data_name);
    let kb_path = args.out.join(kb_name);
    write_dataset(&set, &data_path, format)?;
    write_knowledge_base(&kb, &kb_path, format)?;
    writeln!(out, "{}", data_path.display())?;
    writeln!(out, "{}", kb_path.display())?;
    Ok(())
}

fn cmd_train(args: &TrainArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let cfg = args.training.to_config(seed)?;
    let data = load_data(&args.data)?;
    let kb = load_kb(&args.knowledge)?;
    let (params, history) = train(&data, &kb, &cfg)?;
    save_model(&args.out, &params, &cfg)?;
    fs::write(with_suffix(&args.out, ".history.json"), to_json(&history)?)?;
    let last = history.epochs.last().expect("at least one epoch");
    writeln!(
        out,
        "trained {} epochs: loss {:.4}, train accuracy {:.4}; wrote {} and {}",
        history.epochs.len(),
        last.mean_loss,
        last.train_accuracy,
        args.out.display(),
        sidecar_path(&args.out).display()
    )?;
    Ok(())
}

fn cmd_cv(args: &CvArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let cfg = args.training.to_config(seed)?;
    let data = load_data(&args.data)?;
    let kb = load_kb(&args.knowledge)?;
    let r = cross_validate(&data, &kb, &cfg, args.folds, args.jobs)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), report(&r, ReportFormat::Json)?)?;
        fs::write(dir.join("report.csv"), report(&r, ReportFormat::Csv)?)?;
        fs::write(dir.join("confusion.csv"), confusion_csv(&r))?;
        fs::write(dir.join("report.txt"), report(&r, ReportFormat::Text)?)?;
    }
    write!(out, "{}", report(&r, ReportFormat::Text)?)?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    require_file("--model", &args.model)?;
    let (params, cfg) = load_model(&args.model)?;
    let data = load_data(&args.data)?;
    let kb = load_kb(&args.knowledge)?;
    let pipeline = FeaturePipeline::new(&kb, &cfg, data.d_t, data.d_v)?;
    let features = pipeline.features_all(&data)?;
    let metrics = evaluate(&params, &features, &data.labels(), cfg.fusion_mode)?;
    let json = to_json(&metrics)?;
    if let Some(path) = &args.out {
        fs::write(path, &json)?;
    }
    write!(out, "{json}")?;
    Ok(())
}

#[derive(Serialize)]
struct HitOut<'a> {
    index: usize,
    id: &'a str,
    score: f64,
    payload: &'a str,
}

fn cmd_retrieve(args: &RetrieveArgs, out: &mut dyn Write) -> Result<()> {
    let kb = load_kb(&args.knowledge)?;
    let metric: Metric = args.metric.parse()?;
    let weighting: TopkWeighting = args.topk_weighting.parse()?;
    let query: Vec<f64> = match (&args.data, &args.sample_id, &args.query) {
        (Some(data), Some(id), None) => load_data(data)?.find(id)?.text_f64(),
        (None, None, Some(q)) => q
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidConfig(format!("--query: cannot parse {q:?}")))?,
        _ => {
            return Err(Error::InvalidConfig(
                "give either --data with --sample-id, or --query".into(),
            ))
        }
    };
    let hits = top_k(&query, &kb, args.top_k, metric)?;
    let rows: Vec<HitOut<'_>> = hits
        .iter()
        .map(|h| {
            let e = &kb.entries[h.index];
            HitOut {
                index: h.index,
                id: &e.id,
                score: h.score,
                payload: &e.payload,
            }
        })
        .collect();
    if args.with_context {
        let ctx = topk_avg(&kb, &hits, weighting)?;
        #[derive(Serialize)]
        struct WithContext<'a> {
            hits: Vec<HitOut<'a>>,
            k_agg: Vec<f64>,
        }
        write!(out, "{}", to_json(&WithContext { hits: rows, k_agg: ctx.k_agg })?)?;
    } else {
        write!(out, "{}", to_json(&rows)?)?;
    }
    Ok(())
}

fn cmd_spectrum(args: &SpectrumArgs, out: &mut dyn Write) -> Result<()> {
    let data = load_data(&args.data)?;
    let sample = data.find(&args.sample_id)?;
    let x = match args.modality.as_str() {
        "text" => sample.text_f64(),
        "image" => sample.image_f64(),
        other => return Err(Error::InvalidConfig(format!("unknown modality {other:?}"))),
    };
    let power = power_spectrum(&embedding_spectrum(&x)?);
    let mut csv = String::from("bin,power\n");
    for (k, p) in power.iter().enumerate() {
        csv.push_str(&format!("{k},{p}\n"));
    }
    match &args.out {
        Some(path) => fs::write(path, csv)?,
        None => write!(out, "{csv}")?,
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    require_file("--input", &args.input)?;
    let r = CVReport::from_json(&fs::read_to_string(&args.input)?)?;
    let text = match args.format.as_str() {
        "confusion" => confusion_csv(&r),
        f => report(&r, f.parse()?)?,
    };
    write!(out, "{text}")?;
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, cli.seed, out),
        Command::Train(a) => cmd_train(a, cli.seed, out),
        Command::Cv(a) => cmd_cv(a, cli.seed, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Retrieve(a) => cmd_retrieve(a, out),
        Command::Spectrum(a) => cmd_spectrum(a, out),
        Command::Report(a) => cmd_report(a, out),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match splice_config(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
