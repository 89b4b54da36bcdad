use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use salient_core::dataset::{load_labeled, save_dataset};
use salient_core::eval::{batch_report, DEFAULT_BETA_SQ};
use salient_core::nn::{accuracy, checkpoint, train, TrainConfig};
use salient_core::pipeline::{load_sidecars, run_batch, timing_report, write_outputs, MapFormat, OutputOptions};
use salient_core::synth::{class_names, generate_dataset};
use salient_core::{Error, ErrorKind, Execution, ImageRgb, Network, PipelineConfig, Result};

const MODEL_ENV: &str = "SALIENT_MODEL";

#[derive(Parser)]
#[command(name = "salient", version, about = "Object saliency maps from a small CNN")]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic labeled dataset with foreground masks.
    GenData(GenData),
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Compute saliency maps for one image or a directory.
    Saliency(Box<SaliencyArgs>),
    /// Score saliency maps against ground-truth masks.
    Eval(EvalArgs),
    /// Summarize per-stage timings from a saliency output directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenData {
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Side length in pixels.
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train_dir: PathBuf,
    /// Held-out set to report accuracy on.
    #[arg(long)]
    val_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Seeds weight initialization and shuffling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_model: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Png,
    Pgm,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SaliencyArgs {
    /// Checkpoint path; falls back to the config file, then $SALIENT_MODEL.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, required_unless_present = "image_dir", conflicts_with = "image_dir")]
    image: Option<PathBuf>,
    #[arg(long)]
    image_dir: Option<PathBuf>,
    /// Key-value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<String>,
    /// Learning rate, or `probe` to search for one.
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    /// Prune threshold: absolute value or `rel:<fraction of max>`.
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    refine_theta: Option<String>,
    #[arg(long)]
    superpixels: Option<String>,
    #[arg(long)]
    compactness: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    sigma_color: Option<String>,
    #[arg(long)]
    sigma_dist: Option<String>,
    /// raw, smoothed, refined or all.
    #[arg(long)]
    stage: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Png)]
    format: Format,
    /// Also write the low-level map and superpixel labels.
    #[arg(long)]
    emit_intermediate: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    maps: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BETA_SQ)]
    beta_sq: f64,
    #[arg(long)]
    out_csv: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding the per-image JSON sidecars.
    #[arg(long)]
    run_dir: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}

fn run(cmd: Command, exec: Execution) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a, exec),
        Command::Train(a) => train_cmd(a, exec),
        Command::Saliency(a) => saliency(*a, exec),
        Command::Eval(a) => eval(a, exec),
        Command::Report(a) => report(a),
    }
}

fn gen_data(a: GenData, exec: Execution) -> Result<()> {
    if a.n == 0 || a.classes == 0 {
        return Err(Error::Config("--n and --classes must be positive".into()));
    }
    let samples = generate_dataset(a.n, a.classes, a.size, a.seed, exec)?;
    save_dataset(&a.out_dir, &samples, &class_names(a.classes))?;
    eprintln!("wrote {} samples to {}", samples.len(), a.out_dir.display());
    Ok(())
}

fn train_cmd(a: TrainArgs, exec: Execution) -> Result<()> {
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
        ..TrainConfig::default()
    };
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) || cfg.batch_size == 0 {
        return Err(Error::Config("--lr and --batch-size must be positive".into()));
    }
    let (data, labels) = load_labeled(&a.train_dir)?;
    let first = &data.first().ok_or(Error::EmptyDataset)?.image;
    let mut net = Network::desk_scale(first.width(), first.height(), labels, a.seed)?;
    train(&mut net, &data, &cfg, exec, |s| {
        eprintln!("epoch {:>3}  loss {:.5}  acc {:.4}", s.epoch + 1, s.loss, s.accuracy);
    })?;
    if let Some(dir) = a.val_dir {
        let (val, _) = load_labeled(&dir)?;
        eprintln!("held-out accuracy {:.4}", accuracy(&net, &val, exec)?);
    }
    checkpoint::save(&net, &a.out_model)?;
    eprintln!("saved {}", a.out_model.display());
    Ok(())
}

fn pipeline_config(a: &SaliencyArgs) -> Result<PipelineConfig> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| e.at(p))?,
        None => PipelineConfig::default(),
    };
    let overrides = [
        ("gamma", &a.gamma),
        ("epsilon", &a.epsilon),
        ("iters", &a.iters),
        ("theta", &a.theta),
        ("refine_theta", &a.refine_theta),
        ("superpixels", &a.superpixels),
        ("compactness", &a.compactness),
        ("alpha", &a.alpha),
        ("sigma_color", &a.sigma_color),
        ("sigma_dist", &a.sigma_dist),
        ("stage", &a.stage),
        ("seed", &a.seed),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if let Some(m) = &a.model {
        cfg.model = Some(m.clone());
    }
    if cfg.model.is_none() {
        cfg.model = std::env::var_os(MODEL_ENV).map(PathBuf::from);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| {
            let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            matches!(ext.as_deref(), Some("png" | "ppm"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn saliency(a: SaliencyArgs, exec: Execution) -> Result<()> {
    let cfg = pipeline_config(&a)?;
    let model = cfg
        .model
        .as_ref()
        .ok_or_else(|| Error::Config(format!("no model given (--model, config `model`, or ${MODEL_ENV})")))?;
    let net = checkpoint::load(model).map_err(|e| e.at(model))?;
    let paths = match (&a.image, &a.image_dir) {
        (Some(p), _) => vec![p.clone()],
        (None, Some(d)) => image_files(d)?,
        (None, None) => unreachable!("clap requires one of --image/--image-dir"),
    };
    let images = paths
        .iter()
        .map(|p| Ok((stem(p), ImageRgb::load(p).map_err(|e| e.at(p))?)))
        .collect::<Result<Vec<_>>>()?;
    let opts = OutputOptions {
        format: match a.format {
            Format::Png => MapFormat::Png,
            Format::Pgm => MapFormat::Pgm,
        },
        intermediates: a.emit_intermediate,
    };
    fs::create_dir_all(&a.out_dir)?;
    let mut first_err = None;
    for ((id, _), res) in images.iter().zip(run_batch(&net, &images, &cfg, exec)) {
        match res {
            Ok(out) => {
                write_outputs(&a.out_dir, &out, &cfg, opts)?;
                let m = &out.metadata;
                eprintln!("{id}: {} (eps {}, cost {:.4} -> {:.4})", m.label_name, m.epsilon, m.cost_trace[0], m.cost_trace[m.cost_trace.len() - 1]);
            }
            Err(e) => {
                eprintln!("{id}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn eval(a: EvalArgs, exec: Execution) -> Result<()> {
    if !(a.beta_sq.is_finite() && a.beta_sq > 0.0) {
        return Err(Error::Config("--beta-sq must be positive".into()));
    }
    let report = batch_report(&a.maps, &a.gt, a.beta_sq, exec)?;
    report.write_csv(fs::File::create(&a.out_csv)?)?;
    println!("images {}  mean best F {:.4}", report.images.len(), report.mean_best_f);
    for (id, why) in &report.skipped {
        eprintln!("skipped {id}: {why}");
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let runs = load_sidecars(&a.run_dir)?;
    let report = timing_report(&runs)?;
    match a.out_csv {
        Some(p) => report.write_csv(fs::File::create(p)?),
        None => report.write_csv(io::stdout().lock()),
    }
}
