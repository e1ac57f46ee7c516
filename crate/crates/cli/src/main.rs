mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use manifold_nerf::data::{ScenePreset, ViewPattern};
use manifold_nerf::experiment::Recipe;
use manifold_nerf::Error;

/// Few-shot radiance fields with feature-manifold supervision.
///
/// Every command writes under a run directory: `--out` when given, otherwise
/// `<run root>/<command>-<name>`, with the run root taken from
/// `MANIFOLD_NERF_RUNS` (default `runs`).
#[derive(Parser, Debug)]
#[command(name = "manifold-nerf", version, about)]
struct Cli {
    /// Root for run directories.
    #[arg(long, env = "MANIFOLD_NERF_RUNS", default_value = "runs", global = true)]
    run_root: PathBuf,

    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a preset scene as a TOML scene file.
    SceneGen(SceneGenArgs),
    /// Render a scene from a camera layout into a transforms.json dataset.
    Dataset(DatasetArgs),
    /// Train a field on a dataset.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset (PSNR / SSIM per view).
    Eval(EvalArgs),
    /// Feature-similarity, interpolation and projection studies of a dataset.
    Analyze(AnalyzeArgs),
    /// Run a comparison recipe end to end.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
pub struct SceneGenArgs {
    /// blobs3, blobs5 or asym.
    #[arg(long, default_value = "blobs3")]
    pub preset: ScenePreset,
    /// 0 is the canonical layout; other seeds perturb it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output scene file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// Scene file written by scene-gen.
    #[arg(long)]
    pub scene: PathBuf,
    /// uniform_hemisphere, horizontal_ring, diagonal_ring or alternating.
    #[arg(long, default_value = "uniform_hemisphere")]
    pub pattern: ViewPattern,
    /// Number of views.
    #[arg(long, short = 'n', default_value_t = 8)]
    pub views: usize,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Camera distance from the scene center.
    #[arg(long, default_value_t = manifold_nerf::data::DEFAULT_CAMERA_RADIUS)]
    pub radius: f64,
    /// Elevations in degrees overriding the pattern defaults (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub elevations: Vec<f64>,
    /// Samples per ray for the ground-truth render.
    #[arg(long, default_value_t = 128)]
    pub samples: usize,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory or transforms.json.
    #[arg(long)]
    pub dataset: PathBuf,
    /// nerf, dietnerf or manifoldnerf (overrides the config file).
    #[arg(long)]
    pub method: Option<String>,
    /// Flat key = value config file; see `RunConfig` keys in the README.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override, `key=value`; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Iteration count (overrides the config).
    #[arg(long)]
    pub iters: Option<u64>,
    /// Seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Keep the optimizer moments when resuming.
    #[arg(long)]
    pub keep_moments: bool,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory or transforms.json.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Metrics CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the rendered views as PNGs into this directory.
    #[arg(long)]
    pub renders: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Dataset directory or transforms.json.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Histogram bin width for the cosine histogram.
    #[arg(long, default_value_t = manifold_nerf::analysis::DEFAULT_HISTOGRAM_BIN)]
    pub bin_width: f64,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// uniform8, patterns or viewcount.
    #[arg(long)]
    pub recipe: Recipe,
    /// Image width and height.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 3000)]
    pub iters: u64,
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 1024)]
    pub batch_rays: usize,
    #[arg(long, default_value_t = 32)]
    pub samples_per_ray: usize,
    #[arg(long, default_value_t = 4)]
    pub hidden_layers: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden_width: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 5e-5)]
    pub final_learning_rate: f64,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// 1 for domain and config problems, 2 for I/O, 3 for numeric failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Image { .. } => 2,
        Error::Numeric(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let defaults = format!(
        "Config keys and defaults (file or --set):\n\n{}",
        config::RunConfig::default().to_toml()
    );
    let matches = Cli::command()
        .mut_subcommand("train", |c| c.after_long_help(defaults))
        .get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::SceneGen(a) => commands::scene_gen(&a),
        Command::Dataset(a) => commands::dataset(&a),
        Command::Train(a) => commands::train(&a, &cli.run_root),
        Command::Eval(a) => commands::eval(&a),
        Command::Analyze(a) => commands::analyze(&a, &cli.run_root),
        Command::Experiment(a) => commands::experiment(&a, &cli.run_root),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
