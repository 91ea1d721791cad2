//! Command-line driver: compress fine-tuned models against a shared base,
//! reconstruct them, inspect archives, verify integrity, and evaluate the
//! entropy ratio calculator and the desk-scale retention harness.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 file/format
//! error, 4 verification failure.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use deltapack::codec::{entropy_ratio, Scheme};
use deltapack::harness::{accuracy_retention_test, RetentionPoint, ToyTask};
use deltapack::pipeline::{
    compress_models, reconstruct, stats, verify_archive, CompressedDelta, PipelineConfig,
    PipelineError, TaskInput,
};
use deltapack::{load_container, save_container};

use output::Format;

const EXIT_USAGE: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "deltapack",
    about = "Delta-weight compression for fleets of fine-tuned models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress fine-tuned models against a shared base model.
    Compress(CompressArgs),
    /// Reconstruct a fine-tuned model from a base and an archive.
    Decompress(DecompressArgs),
    /// Report realized and theoretical rates of an archive.
    Stats(StatsArgs),
    /// Check an archive against its base and the original fine-tuned model.
    Verify(VerifyArgs),
    /// Entropy-based compression-ratio calculator.
    Ratio(RatioArgs),
    /// Desk-scale accuracy-retention experiment on a synthetic task.
    Retention(RetentionArgs),
    /// Write a synthetic pretrained/fine-tuned container pair for trying the
    /// pipeline end to end.
    GenToy(GenToyArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat key = value configuration file; flags override it.
    #[arg(long, env = "DELTAPACK_CONFIG")]
    config: Option<PathBuf>,
    /// Target overall sparsity (s_mid).
    #[arg(long, env = "DELTAPACK_SPARSITY")]
    sparsity: Option<f64>,
    /// Sparsity offset between variance groups.
    #[arg(long, env = "DELTAPACK_STEP")]
    step: Option<f64>,
    /// Quantization bit width.
    #[arg(long, env = "DELTAPACK_BITS")]
    bits: Option<u32>,
    /// Use the non-quantized variant (interval-grouped pruning).
    #[arg(long, env = "DELTAPACK_NO_QUANT")]
    no_quant: bool,
    /// Interval count for the non-quantized variant.
    #[arg(long, env = "DELTAPACK_INTERVALS")]
    intervals: Option<u32>,
    /// Storage scheme.
    #[arg(long, env = "DELTAPACK_SCHEME", value_enum)]
    scheme: Option<SchemeArg>,
    /// Fixed rescale factor, overriding the trace-norm assignment.
    #[arg(long, env = "DELTAPACK_GAMMA")]
    gamma: Option<f64>,
    /// Rescale range as "min,max" (default 0.5,1.0).
    #[arg(long, env = "DELTAPACK_GAMMA_RANGE")]
    gamma_range: Option<String>,
    /// Master seed for all pruning substreams.
    #[arg(long, env = "DELTAPACK_SEED")]
    seed: Option<u64>,
    /// Worker threads (0 = automatic).
    #[arg(long, env = "DELTAPACK_THREADS")]
    threads: Option<usize>,
    /// Layer-name glob(s) selecting compressible layers (default: rank-2).
    #[arg(long, env = "DELTAPACK_SELECT", value_delimiter = ',')]
    select: Vec<String>,
    /// Rescale by the per-layer density instead of the overall one.
    #[arg(long, env = "DELTAPACK_PER_LAYER_DENSITY")]
    per_layer_density: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Golomb,
    Csr,
    Bcsr,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Golomb => Scheme::Golomb,
            SchemeArg::Csr => Scheme::Csr,
            SchemeArg::Bcsr => Scheme::Bcsr,
        }
    }
}

impl ConfigArgs {
    fn build(&self) -> Result<PipelineConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::format(format!("{}: {e}", path.display())))?;
                PipelineConfig::from_text(&text).map_err(CliError::from)?
            }
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.sparsity {
            config.s_mid = s;
        }
        if let Some(step) = self.step {
            config.s_step = step;
        }
        if let Some(b) = self.bits {
            config.bit_width = b;
        }
        if self.no_quant {
            config.use_quantization = false;
        }
        if let Some(i) = self.intervals {
            config.intervals = i;
        }
        if let Some(s) = self.scheme {
            config.scheme = s.into();
        }
        if let Some(g) = self.gamma {
            config.gamma_override = Some(g);
        }
        if let Some(range) = &self.gamma_range {
            let (lo, hi) = range
                .split_once(',')
                .ok_or_else(|| CliError::usage("--gamma-range expects \"min,max\""))?;
            config.gamma_min = lo
                .trim()
                .parse()
                .map_err(|_| CliError::usage("bad --gamma-range minimum"))?;
            config.gamma_max = hi
                .trim()
                .parse()
                .map_err(|_| CliError::usage("bad --gamma-range maximum"))?;
        }
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(t) = self.threads {
            config.thread_count = t;
        }
        if !self.select.is_empty() {
            config.select = self.select.clone();
        }
        if self.per_layer_density {
            config.per_layer_density = true;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct CompressArgs {
    /// Base (pretrained) model container.
    #[arg(long, env = "DELTAPACK_BASE")]
    base: PathBuf,
    /// Fine-tuned model container(s); one archive is written per model.
    #[arg(long = "finetuned", required = true)]
    finetuned: Vec<PathBuf>,
    /// Output directory for archives.
    #[arg(long, env = "DELTAPACK_OUT")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = Format::Text, env = "DELTAPACK_FORMAT")]
    format: Format,
}

#[derive(Args)]
struct DecompressArgs {
    #[arg(long, env = "DELTAPACK_BASE")]
    base: PathBuf,
    #[arg(long)]
    archive: PathBuf,
    /// Output container path.
    #[arg(long, env = "DELTAPACK_OUT")]
    out: PathBuf,
    /// Reconstruct even when the base fingerprint disagrees.
    #[arg(long)]
    override_fingerprint: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    archive: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text, env = "DELTAPACK_FORMAT")]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    archive: PathBuf,
    #[arg(long, env = "DELTAPACK_BASE")]
    base: PathBuf,
    #[arg(long)]
    finetuned: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text, env = "DELTAPACK_FORMAT")]
    format: Format,
}

#[derive(Args)]
struct RatioArgs {
    /// Sparsity value(s) to evaluate.
    #[arg(long = "sparsity", required = true)]
    sparsity: Vec<f64>,
    /// Kept-value bit width.
    #[arg(long, default_value_t = 4)]
    bits: u32,
    #[arg(long, value_enum, default_value_t = Format::Text, env = "DELTAPACK_FORMAT")]
    format: Format,
}

#[derive(Args)]
struct RetentionArgs {
    /// Sparsity grid points.
    #[arg(long = "sparsity", default_values_t = [0.5, 0.9, 0.97])]
    sparsity: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    bits: u32,
    /// Evaluate the non-quantized variant instead.
    #[arg(long)]
    no_quant: bool,
    #[arg(long, default_value_t = 16)]
    intervals: u32,
    /// Also run the single-group pruning baseline at each point.
    #[arg(long)]
    baseline: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Fine-tuning steps (lower values probe under-trained models).
    #[arg(long)]
    finetune_steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Text, env = "DELTAPACK_FORMAT")]
    format: Format,
}

#[derive(Args)]
struct GenToyArgs {
    /// Directory receiving base.udtc and toy.udtc.
    #[arg(long, env = "DELTAPACK_OUT")]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: msg.into(),
        }
    }

    fn format(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_FORMAT,
            message: msg.into(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Config(_) => EXIT_USAGE,
            _ => EXIT_FORMAT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<deltapack::container::ContainerError> for CliError {
    fn from(e: deltapack::container::ContainerError) -> Self {
        Self::format(e.to_string())
    }
}

fn load_model(path: &Path) -> Result<deltapack::NamedTensorSet, CliError> {
    load_container(path).map_err(|e| CliError::format(format!("{}: {e}", path.display())))
}

fn load_archive(path: &Path) -> Result<CompressedDelta, CliError> {
    CompressedDelta::load(path).map_err(|e| CliError::format(format!("{}: {e}", path.display())))
}

fn task_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "task".to_string())
}

fn cmd_compress(args: &CompressArgs) -> Result<(), CliError> {
    let config = args.config.build()?;
    let base = load_model(&args.base)?;
    let mut tasks = Vec::new();
    for path in &args.finetuned {
        tasks.push(TaskInput {
            name: task_name(path),
            model: load_model(path)?,
        });
    }
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::format(format!("{}: {e}", args.out.display())))?;

    let archives = compress_models(&base, &tasks, &config)?;
    for archive in &archives {
        let path = args.out.join(format!("{}.udca", archive.manifest.task.name));
        archive.save(&path)?;
        for w in &archive.manifest.warnings {
            eprintln!("warning: {}: {w}", archive.manifest.task.name);
        }
        let report = stats(archive)?;
        output::print_compress_line(&args.format, archive, &report, &path);
    }
    Ok(())
}

fn cmd_decompress(args: &DecompressArgs) -> Result<(), CliError> {
    let base = load_model(&args.base)?;
    let archive = load_archive(&args.archive)?;
    let rebuilt = reconstruct(&base, &archive, args.override_fingerprint)?;
    save_container(&rebuilt, &args.out)
        .map_err(|e| CliError::format(format!("{}: {e}", args.out.display())))?;
    eprintln!(
        "reconstructed {} layers -> {}",
        rebuilt.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_stats(args: &StatsArgs) -> Result<(), CliError> {
    let archive = load_archive(&args.archive)?;
    let report = stats(&archive)?;
    output::print_stats(&args.format, &report);
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let archive = load_archive(&args.archive)?;
    let base = load_model(&args.base)?;
    let finetuned = load_model(&args.finetuned)?;
    let report = verify_archive(&archive, &base, &finetuned)?;
    output::print_verify(&args.format, &report);
    if report.passed {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_VERIFY,
            message: "verification failed".into(),
        })
    }
}

fn cmd_ratio(args: &RatioArgs) -> Result<(), CliError> {
    let mut entries = Vec::new();
    for &s in &args.sparsity {
        let entry = entropy_ratio(s, args.bits)
            .map_err(|e| CliError::usage(e.to_string()))?;
        entries.push(entry);
    }
    output::print_ratio(&args.format, &entries);
    Ok(())
}

fn cmd_retention(args: &RetentionArgs) -> Result<(), CliError> {
    let mut task = ToyTask {
        seed: args.seed,
        ..ToyTask::default()
    };
    if let Some(steps) = args.finetune_steps {
        task.finetune_steps = steps;
    }
    let mut grid = Vec::new();
    for &s in &args.sparsity {
        let mut point = if args.no_quant {
            RetentionPoint {
                sparsity: s,
                bits: None,
                intervals: args.intervals,
                gamma: None,
                single_group: false,
            }
        } else {
            RetentionPoint::standard(s, args.bits)
        };
        point.intervals = args.intervals;
        grid.push(point);
        if args.baseline {
            grid.push(RetentionPoint::baseline(s, args.bits));
        }
    }
    let rows = accuracy_retention_test(&task, &grid)
        .map_err(|e| CliError::format(e.to_string()))?;
    output::print_retention(&args.format, &rows);
    Ok(())
}

fn cmd_gen_toy(args: &GenToyArgs) -> Result<(), CliError> {
    let task = ToyTask {
        seed: args.seed,
        ..ToyTask::default()
    };
    let (pre, fine) = deltapack::harness::train_toy_model(&task)
        .map_err(|e| CliError::format(e.to_string()))?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::format(format!("{}: {e}", args.out.display())))?;
    let base_path = args.out.join("base.udtc");
    let fine_path = args.out.join("toy.udtc");
    save_container(&pre, &base_path)?;
    save_container(&fine, &fine_path)?;
    eprintln!(
        "wrote {} and {}",
        base_path.display(),
        fine_path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    // die quietly when the output pipe closes (e.g. `deltapack stats | head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Compress(args) => cmd_compress(args),
        Command::Decompress(args) => cmd_decompress(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Ratio(args) => cmd_ratio(args),
        Command::Retention(args) => cmd_retention(args),
        Command::GenToy(args) => cmd_gen_toy(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
