use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gptk_cli::commands::{self, GlobalOpts};

/// Desk-scale GAN transfer-learning laboratory.
#[derive(Parser)]
#[command(name = "gptk", version, about)]
struct Cli {
    /// Experiment config file (`key = value` under `[section]` headers).
    #[arg(long, global = true, default_value = "gptk.conf")]
    config: PathBuf,
    /// Experiment seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output root; runs land in `<out>/runs/<run_id>/`.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Maximum concurrent grid cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overwrite a completed run directory.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an unconditional GAN on a source dataset.
    TrainSource,
    /// Fine-tune on a target dataset across the init grid (scratch/pretrained).
    Transfer,
    /// Sweep target dataset sizes for scratch and pretrained inits.
    SizeSweep,
    /// Fine-tune every source model on every target domain.
    Matrix,
    /// Train a conditional (auxiliary-classifier) GAN.
    Acgan,
    /// Rank source models in a zoo for a target dataset.
    Select,
    /// Distance between a generator's samples and a real dataset.
    EvalFid {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Independent-critic distance between real data and generated samples.
    EvalIw {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Reference-classifier accuracy of a conditional generator.
    EvalClassifier {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Render smoothed metric curves from CSV logs to SVG.
    Plot {
        /// CSV log files, one curve per file.
        logs: Vec<PathBuf>,
        /// Column to plot against `iteration`.
        #[arg(long, default_value = "loss_d")]
        column: String,
        /// Trailing moving-average window (1 = raw values).
        #[arg(long, default_value_t = 20)]
        window: usize,
        #[arg(long, default_value = "plot.svg")]
        plot_out: PathBuf,
    },
    /// Render a grid of generated samples to PNG.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 4)]
        rows: usize,
        #[arg(long, default_value_t = 4)]
        cols: usize,
        /// Condition row r on class r (conditional generators only).
        #[arg(long)]
        per_class: bool,
        #[arg(long, default_value = "samples.png")]
        image_out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = GlobalOpts {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        jobs: cli.jobs,
        force: cli.force,
    };
    let result = match &cli.command {
        Command::TrainSource => commands::cmd_train_source(&opts),
        Command::Transfer => commands::cmd_transfer(&opts),
        Command::SizeSweep => commands::cmd_size_sweep(&opts),
        Command::Matrix => commands::cmd_matrix(&opts),
        Command::Acgan => commands::cmd_acgan(&opts),
        Command::Select => commands::cmd_select(&opts),
        Command::EvalFid { checkpoint } => commands::cmd_eval_fid(&opts, checkpoint),
        Command::EvalIw { checkpoint } => commands::cmd_eval_iw(&opts, checkpoint),
        Command::EvalClassifier { checkpoint } => commands::cmd_eval_classifier(&opts, checkpoint),
        Command::Plot {
            logs,
            column,
            window,
            plot_out,
        } => commands::cmd_plot(logs, column, *window, plot_out),
        Command::Sample {
            checkpoint,
            rows,
            cols,
            per_class,
            image_out,
        } => commands::cmd_sample(checkpoint, *rows, *cols, opts.seed, *per_class, image_out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}
