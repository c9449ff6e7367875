use std::ffi::OsString;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::commands::{cmd_aggregate, cmd_cv, cmd_evaluate, cmd_predict, cmd_train, EvaluateOptions};
use super::{Result, EXIT_VALIDATION};
use crate::labels::Variable;

#[derive(Debug, Parser)]
#[command(name = "polyview", version, about = "Party-specific image sentiment: labels, training, evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build per-party image labels from a survey CSV.
    Aggregate {
        survey: PathBuf,
        /// Label file to write.
        #[arg(long, default_value = "labels.json")]
        out: PathBuf,
        /// Directory for tables, plots and the manifest (default: next to --out).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fine-tune a model as described by a run config.
    Train { config: PathBuf },
    /// Score a checkpoint on labelled images.
    Evaluate {
        checkpoint: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value = "evaluation")]
        out_dir: PathBuf,
        /// Refuse unless the checkpoint was trained on this variable.
        #[arg(long)]
        variable: Option<Variable>,
        /// Only score the checkpoint's validation images.
        #[arg(long)]
        validation_only: bool,
    },
    /// K-fold cross-validation of a run config.
    Cv {
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Paired Dem/Rep labels and polarization for image files.
    Predict {
        checkpoint: PathBuf,
        images: Vec<PathBuf>,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Aggregate { survey, out, out_dir } => {
            let s = cmd_aggregate(&survey, &out, out_dir.as_deref())?;
            writeln!(
                stdout,
                "{} images labelled ({} non-partisan rows dropped, {} rows rejected)\n\n{}\n{}",
                s.n_images, s.dropped_other, s.rejected_rows, s.category_table, s.gap_table
            )?;
        }
        Command::Train { config } => {
            let s = cmd_train(&config, stdout)?;
            writeln!(
                stdout,
                "best epoch {} (val_loss {:.6}); run written to {}",
                s.state.best_epoch,
                s.state.best_val_loss,
                s.run_path.display()
            )?;
        }
        Command::Evaluate {
            checkpoint,
            labels,
            images,
            out_dir,
            variable,
            validation_only,
        } => {
            let options = EvaluateOptions {
                variable,
                validation_only,
            };
            let s = cmd_evaluate(&checkpoint, &labels, &images, &out_dir, &options)?;
            let text = serde_json::to_string_pretty(&s.report.to_json())?;
            writeln!(stdout, "{text}")?;
        }
        Command::Cv { config, k } => {
            let (report, dir) = cmd_cv(&config, k, stdout)?;
            writeln!(stdout, "\n{}\nreport written to {}", report.render_text(), dir.display())?;
        }
        Command::Predict { checkpoint, images, out } => {
            let preds = cmd_predict(&checkpoint, &images, out.as_deref())?;
            if out.is_none() {
                let records: Vec<_> = preds.iter().map(|p| p.to_json()).collect();
                writeln!(stdout, "{}", serde_json::to_string_pretty(&records)?)?;
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    let stdout = io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
