use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use velgan_harness::pipeline::{self, latest_checkpoint};
use velgan_harness::RunConfig;

/// Seismic-to-velocity conditional GAN: data synthesis, training,
/// evaluation, prediction and reporting.
#[derive(Parser)]
#[command(name = "velgan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in desk defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a setting, e.g. `--set train.epochs=10` (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic SEG-Y dataset and its manifest.
    Synth(Common),
    /// Preprocess, train and log per-epoch losses and test metrics.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from the run's latest checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Score a checkpoint on the test patches and draw figures.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output directory (default: <run_dir>/eval).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict a full interval-velocity volume as SEG-Y.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory with seismic.sgy, v_avg.sgy, twt.sgy (v_int.sgy optional).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metric-versus-epoch curves and a summary for a run.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directory (default: train.run_dir from the config).
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(common) => {
            let cfg = common.load()?;
            let m = pipeline::cmd_synth(&cfg)?;
            println!("dataset written to {}", cfg.dataset.dir.display());
            for (name, f) in [("seismic", &m.seismic), ("v_avg", &m.v_avg), ("twt", &m.twt), ("v_int", &m.v_int)] {
                println!("  {name:8} {} crc32 {}", f.file, f.crc32);
            }
        }
        Command::Train { common, resume } => {
            let cfg = common.load()?;
            let out = pipeline::cmd_train(&cfg, resume, &mut |r| {
                let metrics = match (r.test_pe, r.test_ssim) {
                    (Some(pe), Some(s)) => format!("  test PE {pe:.3}%  SSIM {s:.4}"),
                    _ => String::new(),
                };
                eprintln!(
                    "epoch {:3}  D {:.4}  G_adv {:.4}  L1 {:.5}  [{:.0}s]{metrics}",
                    r.epoch, r.d_loss, r.g_adv, r.g_l1, r.wall_time_s
                );
            })?;
            println!("trained to epoch {} in {}", out.state.epoch, cfg.train.run_dir.display());
        }
        Command::Evaluate { common, checkpoint, out } => {
            let cfg = common.load()?;
            let o = pipeline::cmd_evaluate(&cfg, checkpoint.as_deref(), out.as_deref())?;
            println!(
                "PE {:.3}%  SSIM ({}) {:.4}  over {} patches; checkpoint crc32 {}; files in {}",
                o.report.pe_mean,
                o.report.ssim_window.label(),
                o.report.ssim_mean,
                o.report.n_patches,
                o.checkpoint_crc32,
                o.out_dir.display()
            );
        }
        Command::Predict { common, checkpoint, input, out } => {
            let cfg = common.load()?;
            let ckpt = checkpoint.unwrap_or_else(|| latest_checkpoint(&cfg.train.run_dir));
            let input = input.unwrap_or_else(|| cfg.dataset.dir.clone());
            let o = pipeline::cmd_predict(&ckpt, &input, &out)?;
            println!("wrote {} {:?}", out.display(), o.volume.dim());
            if let Some(pe) = o.pe_vs_v_int {
                println!("PE against {}: {pe:.3}%", input.join("v_int.sgy").display());
            }
        }
        Command::Report { common, run_dir } => {
            let cfg = common.load()?;
            let dir = run_dir.unwrap_or_else(|| cfg.train.run_dir.clone());
            let s = pipeline::cmd_report(&dir)?;
            println!(
                "best epoch {} (PE {:.3}%, SSIM {:.4}); final epoch {} (PE {:.3}%, SSIM {:.4})",
                s.best_epoch, s.best_pe, s.ssim_at_best, s.final_epoch, s.final_pe, s.final_ssim
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
