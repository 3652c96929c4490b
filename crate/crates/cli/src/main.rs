use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dro_core::dataset::{read_poses, write_table, Dataset};
use dro_core::metrics::{kitti_errors, rpe_se2};
use dro_core::pipeline::{run, write_outputs};
use dro_core::sim::{emit_dataset, Scene};
use dro_core::{Config, Mode};

/// Direct Doppler-aware radar odometry: simulator, estimator and metrics.
#[derive(Debug, Parser)]
#[command(name = "dro", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Gd,
    G,
    D,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Gd => Mode::GD,
            ModeArg::G => Mode::G,
            ModeArg::D => Mode::D,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Metric {
    Kitti,
    Rpe,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a preset or scene file.
    Simulate {
        /// Preset name (suburb, tunnel, corridor-empty) or scene file path.
        #[arg(long)]
        scene: String,
        /// Sequence length in seconds.
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the trajectory of a dataset.
    Run {
        #[arg(long)]
        data: PathBuf,
        /// key=value configuration file; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the mode from the configuration file.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an estimated trajectory with ground truth.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum)]
        metric: Metric,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Simulate {
            scene,
            duration,
            seed,
            out,
        } => {
            if !(duration.is_finite() && duration >= 0.0) {
                bail!("--duration must be a non-negative number of seconds");
            }
            let scene = Scene::load(&scene, duration, seed)?;
            let summary = emit_dataset(&scene, duration, &out)
                .with_context(|| format!("writing dataset to {}", out.display()))?;
            println!("wrote {} scans to {}", summary.n_scans, out.display());
        }
        Command::Run {
            data,
            config,
            mode,
            out,
        } => {
            let mut cfg = match &config {
                Some(p) => Config::from_file(p)?,
                None => Config::default(),
            };
            if let Some(m) = mode {
                cfg.mode = m.into();
            }
            let dataset = Dataset::open(&data)?;
            let output = run(&dataset, &cfg)?;
            write_outputs(&out, &output)?;
            println!(
                "processed {} scans ({} mode), results in {}",
                output.records.len(),
                cfg.mode,
                out.display()
            );
        }
        Command::Eval {
            est,
            gt,
            metric,
            out,
        } => {
            let est = read_poses(&est)?;
            let gt = read_poses(&gt)?;
            match metric {
                Metric::Kitti => {
                    let Some(r) = kitti_errors(&est, &gt) else {
                        bail!("ground truth is shorter than the shortest segment (100 m)");
                    };
                    write_table(
                        &out,
                        &["translation_pct", "rotation_deg_per_100m", "segments"],
                        &[vec![
                            r.translation_pct.to_string(),
                            r.rotation_deg_per_100m.to_string(),
                            r.segments.to_string(),
                        ]],
                    )?;
                    println!(
                        "translation {:.4} %, rotation {:.4} deg/100m over {} segments",
                        r.translation_pct, r.rotation_deg_per_100m, r.segments
                    );
                }
                Metric::Rpe => {
                    let Some(r) = rpe_se2(&est, &gt) else {
                        bail!("ground truth is shorter than the shortest segment (50 m)");
                    };
                    let mut rows: Vec<Vec<String>> = r
                        .per_length
                        .iter()
                        .map(|(l, p, n)| vec![l.to_string(), p.to_string(), n.to_string()])
                        .collect();
                    rows.push(vec!["mean".into(), r.percent.to_string(), String::new()]);
                    write_table(&out, &["length_m", "rpe_pct", "segments"], &rows)?;
                    println!("RPE {:.4} %", r.percent);
                }
            }
        }
    }
    Ok(())
}
