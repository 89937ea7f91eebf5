//! `groundkit`: one binary exposing the dataset pipeline, evaluation,
//! oracle analysis, toy training, and agent simulation as subcommands.
//!
//! Exit codes: 0 on success, 1 on operational errors, 2 on usage errors.
//! Diagnostics go to standard error; data goes to declared files or
//! standard output.

mod commands;
mod config;
mod endpoints;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{load_config, AppConfig, FlagOverrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Operational(String),
}

impl From<groundkit_core::jsonl::JsonlError> for CliError {
    fn from(e: groundkit_core::jsonl::JsonlError) -> Self {
        CliError::Operational(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Operational(e.to_string())
    }
}

impl From<groundkit_core::grpo::GrpoError> for CliError {
    fn from(e: groundkit_core::grpo::GrpoError) -> Self {
        CliError::Operational(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "groundkit", version, about = "GUI-grounding toolkit")]
struct Cli {
    /// Seed for all randomized subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides config and environment.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Endpoint profile name, or mock:allpass / mock:replies:<path>.
    #[arg(long, global = true)]
    endpoint_profile: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine, augment, and verify a grounding sample corpus.
    Pipeline {
        /// Samples JSONL file.
        #[arg(long)]
        input: PathBuf,
        /// Detections JSONL file (one record per screenshot).
        #[arg(long)]
        detections: PathBuf,
        /// IoU refinement threshold; overrides config and environment.
        #[arg(long)]
        iou_refine: Option<f64>,
    },
    /// Score a prediction file against ground truth.
    Evaluate {
        /// Predictions JSONL file.
        #[arg(long)]
        predictions: PathBuf,
        /// Samples JSONL file carrying ground-truth boxes and tags.
        #[arg(long)]
        samples: PathBuf,
        /// Tag dimensions to group by, e.g. --group-by platform.
        #[arg(long)]
        group_by: Vec<String>,
    },
    /// Query a grounding endpoint for each sample and save predictions.
    Ground {
        #[arg(long)]
        samples: PathBuf,
        /// Grounding prompt template: sft or rl.
        #[arg(long, default_value = "sft")]
        template: String,
        /// Instruction perspective to ground, or "all".
        #[arg(long, default_value = "original")]
        perspective: String,
    },
    /// Per-perspective and combined-oracle accuracies from a correctness matrix.
    Oracle {
        /// Matrix JSONL: {"sample_id", "correct": {perspective: bool}}.
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Tag free-form reasoning texts against the ten-class taxonomy.
    Classify {
        /// Responses JSONL: {"response_id", "text"}.
        #[arg(long)]
        responses: PathBuf,
    },
    /// Train the toy policy and record a metrics timeline.
    ToyTrain {
        /// Preset name from the config (toy, paper, or user-defined).
        #[arg(long, default_value = "toy")]
        preset: String,
        /// Training regime, e.g. sft_diverse+rl, sft_coords_only+rl, rl.
        #[arg(long, default_value = "sft_diverse+rl")]
        regime: String,
        /// Steps per stage; overrides the preset.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 40)]
        n_train: usize,
        #[arg(long, default_value_t = 20)]
        n_eval: usize,
        /// Scene ambiguity profile: all_unique, unique_appearance_only,
        /// or mixed_unique:<p>.
        #[arg(long, default_value = "unique_appearance_only")]
        profile: String,
    },
    /// Verify analytic policy gradients against finite differences.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
    /// Run the planner/executor loop against a device.
    AgentRun {
        #[arg(long)]
        goal: String,
        /// Planner endpoint profile.
        #[arg(long)]
        planner: String,
        /// Grounding executor profile, or mock:scenario to ground against
        /// the mock device's named regions.
        #[arg(long)]
        executor: String,
        /// Device adapter: mock:<scenario.json>.
        #[arg(long)]
        device: String,
        #[arg(long, default_value_t = 30)]
        max_steps: usize,
        /// Action JSON validation: strict or lenient.
        #[arg(long, default_value = "lenient")]
        json_mode: String,
    },
    /// Generate synthetic scenes for the toy environment.
    GenScenes {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        grid_w: u32,
        #[arg(long, default_value_t = 4)]
        grid_h: u32,
        #[arg(long, default_value = "unique_appearance_only")]
        profile: String,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 2 on usage errors and 0 for --help/--version.
        Err(e) => e.exit(),
    };
    std::process::exit(match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(message)) => {
            eprintln!("usage error: {message}");
            2
        }
        Err(CliError::Operational(message)) => {
            eprintln!("error: {message}");
            1
        }
    });
}

fn resolve_config(cli: &Cli, iou_flag: Option<f64>) -> Result<AppConfig, CliError> {
    let flags = FlagOverrides { iou_refine: iou_flag, out_dir: cli.out.clone() };
    load_config(cli.config.as_deref(), &|key| std::env::var(key).ok(), &flags)
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Pipeline { input, detections, iou_refine } => {
            let config = resolve_config(&cli, *iou_refine)?;
            let profile = cli
                .endpoint_profile
                .as_deref()
                .ok_or_else(|| CliError::Usage("pipeline requires --endpoint-profile".into()))?;
            commands::pipeline(input, detections, profile, &config)
        }
        Command::Evaluate { predictions, samples, group_by } => {
            let config = resolve_config(&cli, None)?;
            commands::evaluate(predictions, samples, group_by, &config)
        }
        Command::Ground { samples, template, perspective } => {
            let config = resolve_config(&cli, None)?;
            let profile = cli
                .endpoint_profile
                .as_deref()
                .ok_or_else(|| CliError::Usage("ground requires --endpoint-profile".into()))?;
            commands::ground(samples, template, perspective, profile, &config)
        }
        Command::Oracle { matrix } => {
            let config = resolve_config(&cli, None)?;
            commands::oracle(matrix, &config)
        }
        Command::Classify { responses } => {
            let config = resolve_config(&cli, None)?;
            let profile = cli
                .endpoint_profile
                .as_deref()
                .ok_or_else(|| CliError::Usage("classify requires --endpoint-profile".into()))?;
            commands::classify(responses, profile, &config)
        }
        Command::ToyTrain { preset, regime, steps, n_train, n_eval, profile } => {
            let config = resolve_config(&cli, None)?;
            commands::toy_train(preset, regime, *steps, *n_train, *n_eval, profile, seed, &config)
        }
        Command::GradCheck { trials, tolerance } => {
            let config = resolve_config(&cli, None)?;
            commands::grad_check(*trials, *tolerance, seed, &config)
        }
        Command::AgentRun { goal, planner, executor, device, max_steps, json_mode } => {
            let config = resolve_config(&cli, None)?;
            commands::agent_run(goal, planner, executor, device, *max_steps, json_mode, &config)
        }
        Command::GenScenes { n, grid_w, grid_h, profile } => {
            let config = resolve_config(&cli, None)?;
            commands::gen_scenes(*n, *grid_w, *grid_h, profile, seed, &config)
        }
    }
}
