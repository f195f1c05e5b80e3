use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hierkick::checkpoint::Checkpoint;
use hierkick::coach::{AblationVariant, MeanPolicy};
use hierkick::config::Config;
use hierkick::harness::{self, CampaignReport, RewardCurve, METRICS_FILE};

#[derive(Parser)]
#[command(name = "hierkick", version, about = "Train and evaluate the hierarchical soccer coach")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Bundled profile: small or faithful.
    #[arg(long, default_value = "small")]
    profile: String,
    /// TOML config file; overrides --profile.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        Ok(match &self.config {
            Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => Config::profile(&self.profile)?,
        })
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one variant and write checkpoint, metrics log and config.
    Train {
        #[arg(long, default_value = "full")]
        variant: AblationVariant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        /// Defaults to the profile's training.iterations.
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        quiet: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a checkpoint over seeded trials.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 1_000_000)]
        seed_base: u64,
        /// Writes the report (JSON) here, and the trials next to it as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate all four variants found under a checkpoint directory.
    Ablate {
        /// Holds full/, no_distances/, replace_cprev/ and end_to_end/.
        #[arg(long)]
        checkpoint_dir: PathBuf,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 1_000_000)]
        seed_base: u64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Re-run a single trial and print its result.
    Replay {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Turn saved reports and metrics logs into plot columns.
    PlotData {
        /// Directory of `<variant>.json` reports.
        #[arg(long)]
        reports_dir: PathBuf,
        /// Directory holding `<variant>/metrics.jsonl`; defaults to the
        /// parent of the reports directory.
        #[arg(long)]
        logs_dir: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_trials(path: &Path, trials: &[harness::TrialResult]) -> Result<()> {
    let mut text = String::new();
    for t in trials {
        text.push_str(&serde_json::to_string(t)?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_ckpt(path: &Path, cfg: &Config) -> Result<Checkpoint> {
    Checkpoint::load(path, &cfg.ppo).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn curves_from(logs_dir: &Path, names: impl Iterator<Item = String>) -> Result<Vec<RewardCurve>> {
    let mut curves = Vec::new();
    for name in names {
        let path = logs_dir.join(&name).join(METRICS_FILE);
        if path.is_file() {
            curves.push(RewardCurve::from_metrics(&name, &harness::read_metrics_log(&path)?));
        }
    }
    Ok(curves)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train { variant, seed, out_dir, iterations, quiet, config } => {
            let cfg = config.load()?;
            let iterations = iterations.unwrap_or(cfg.training.iterations);
            let ckpt = harness::train_variant(&cfg, variant, seed, iterations, &out_dir, |m| {
                if !quiet && (m.iteration % 10 == 0 || m.iteration == 1) {
                    eprintln!(
                        "iter {:>5}  reward {:>8.3}  success {:>6}  kl {:.4}  std [{:.3} {:.3} {:.3}]",
                        m.iteration,
                        m.mean_reward,
                        m.success_rate.map_or("-".to_string(), |s| format!("{:.1}%", 100.0 * s)),
                        m.approx_kl,
                        m.action_std[0],
                        m.action_std[1],
                        m.action_std[2]
                    );
                }
            })?;
            println!("wrote {} after {} iterations", out_dir.join(harness::CHECKPOINT_FILE).display(), ckpt.iteration);
        }
        Cmd::Eval { checkpoint, trials, seed_base, out, config } => {
            let cfg = config.load()?;
            let ckpt = load_ckpt(&checkpoint, &cfg)?;
            let (report, results) = harness::evaluate_checkpoint(&cfg, &ckpt, trials, seed_base)?;
            print!("{}", harness::comparison_table(std::slice::from_ref(&report)));
            if let Some(out) = out {
                write_json(&out, &report)?;
                write_trials(&out.with_extension("trials.jsonl"), &results)?;
            }
        }
        Cmd::Ablate { checkpoint_dir, trials, seed_base, config } => {
            let cfg = config.load()?;
            let reports = harness::run_ablation_suite(&cfg, &checkpoint_dir, trials, seed_base)?;
            print!("{}", harness::comparison_table(&reports));
            let reports_dir = checkpoint_dir.join("reports");
            fs::create_dir_all(&reports_dir)?;
            for r in &reports {
                write_json(&reports_dir.join(format!("{}.json", r.variant)), r)?;
            }
            let curves = curves_from(&checkpoint_dir, AblationVariant::ALL.iter().map(|v| v.name().to_string()))?;
            let plots = checkpoint_dir.join("plots");
            harness::emit_plot_data(&plots, &reports, &curves)?;
            println!("reports in {}, plot data in {}", reports_dir.display(), plots.display());
        }
        Cmd::Replay { seed, checkpoint, config } => {
            let cfg = config.load()?;
            let ckpt = load_ckpt(&checkpoint, &cfg)?;
            let t = harness::run_trial(&cfg, &MeanPolicy(&ckpt.params), ckpt.variant, seed)?;
            println!("{}", serde_json::to_string(&t)?);
        }
        Cmd::PlotData { reports_dir, logs_dir, out_dir } => {
            if !reports_dir.is_dir() {
                bail!("{} is not a directory", reports_dir.display());
            }
            let mut paths: Vec<PathBuf> = fs::read_dir(&reports_dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
            paths.sort();
            let mut reports: Vec<CampaignReport> = Vec::new();
            for p in &paths {
                let text = fs::read_to_string(p)?;
                reports.push(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?);
            }
            let logs_dir = logs_dir.unwrap_or_else(|| reports_dir.parent().unwrap_or(Path::new(".")).to_path_buf());
            let curves = curves_from(&logs_dir, reports.iter().map(|r| r.variant.clone()))?;
            let out_dir = out_dir.unwrap_or_else(|| reports_dir.join("plots"));
            harness::emit_plot_data(&out_dir, &reports, &curves)?;
            println!("wrote plot data for {} reports to {}", reports.len(), out_dir.display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
