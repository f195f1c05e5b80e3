//! Training runs, evaluation campaigns, the four-way ablation study and
//! plot-data files.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::coach::{AblationVariant, CoachPolicy, MeanPolicy};
use crate::config::Config;
use crate::env::{SoccerEnv, Termination};
use crate::error::{Error, Result};
use crate::ppo::{IterationMetrics, Trainer};

pub const HISTOGRAM_BINS: usize = 20;
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Timeout,
    Fell,
    OutOfBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub success: bool,
    pub failure_reason: Option<FailureReason>,
    /// Distance from the final ball position to the goal centre, m.
    pub kick_distance: f64,
    /// Episode duration, s.
    pub episode_length: f64,
    pub decisions: usize,
}

/// Runs one evaluation episode with a deterministic policy.
pub fn run_trial(cfg: &Config, policy: &dyn CoachPolicy, variant: AblationVariant, seed: u64) -> Result<TrialResult> {
    let wrap = |e| Error::Trial { seed, source: Box::new(e) };
    let mut env = SoccerEnv::new(cfg, variant, seed).map_err(wrap)?;
    let mut upright_throughout = true;
    loop {
        let obs = env.observe().map_err(wrap)?;
        let action = policy.act(&obs.actor_features, &obs.actor);
        let out = env.step(&action).map_err(wrap)?;
        upright_throughout &= env.state().upright;
        if !out.episode_over() {
            continue;
        }
        let success = out.termination == Some(Termination::Goal) && upright_throughout;
        let failure_reason = match out.termination {
            _ if success => None,
            Some(Termination::Fell) => Some(FailureReason::Fell),
            Some(Termination::OutOfBounds) => Some(FailureReason::OutOfBounds),
            _ => Some(FailureReason::Timeout),
        };
        return Ok(TrialResult {
            seed,
            success,
            failure_reason,
            kick_distance: (env.state().ball_pos - env.field().goal()).norm(),
            episode_length: env.elapsed(),
            decisions: env.decisions(),
        });
    }
}

/// Trials for seeds `seed_base..seed_base + n_trials`, in seed order.
pub fn run_trials(
    cfg: &Config,
    policy: &dyn CoachPolicy,
    variant: AblationVariant,
    n_trials: usize,
    seed_base: u64,
) -> Result<Vec<TrialResult>> {
    (0..n_trials as u64).into_par_iter().map(|i| run_trial(cfg, policy, variant, seed_base + i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub timeout: usize,
    pub fell: usize,
    pub out_of_bounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub variant: String,
    pub n_trials: usize,
    pub seed_base: u64,
    pub successes: usize,
    pub success_rate: f64,
    pub kick_distance_mean: f64,
    /// Population standard deviation.
    pub kick_distance_std: f64,
    /// Same statistics over successful trials only.
    pub success_kick_distance_mean: Option<f64>,
    pub success_kick_distance_std: Option<f64>,
    /// `HISTOGRAM_BINS + 1` edges spanning the observed range.
    pub histogram_edges: Vec<f64>,
    pub histogram_counts: Vec<usize>,
    pub failures: FailureCounts,
    pub mean_episode_length: f64,
}

fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

fn histogram(v: &[f64], bins: usize) -> (Vec<f64>, Vec<usize>) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if v.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0; bins];
    for &x in v {
        let k = if width > 0.0 { (((x - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[k] += 1;
    }
    (edges, counts)
}

/// Aggregates trial results. `trials` must be non-empty.
pub fn aggregate(variant: &str, seed_base: u64, trials: &[TrialResult]) -> Result<CampaignReport> {
    if trials.is_empty() {
        return Err(Error::config("a campaign needs at least one trial"));
    }
    let n = trials.len();
    let successes = trials.iter().filter(|t| t.success).count();
    let dists: Vec<f64> = trials.iter().map(|t| t.kick_distance).collect();
    let ok: Vec<f64> = trials.iter().filter(|t| t.success).map(|t| t.kick_distance).collect();
    let (mean, std) = mean_std(&dists).unwrap();
    let ok_stats = mean_std(&ok);
    let (histogram_edges, histogram_counts) = histogram(&dists, HISTOGRAM_BINS);
    let count = |r| trials.iter().filter(|t| t.failure_reason == Some(r)).count();
    Ok(CampaignReport {
        variant: variant.to_string(),
        n_trials: n,
        seed_base,
        successes,
        success_rate: successes as f64 / n as f64,
        kick_distance_mean: mean,
        kick_distance_std: std,
        success_kick_distance_mean: ok_stats.map(|s| s.0),
        success_kick_distance_std: ok_stats.map(|s| s.1),
        histogram_edges,
        histogram_counts,
        failures: FailureCounts {
            timeout: count(FailureReason::Timeout),
            fell: count(FailureReason::Fell),
            out_of_bounds: count(FailureReason::OutOfBounds),
        },
        mean_episode_length: trials.iter().map(|t| t.episode_length).sum::<f64>() / n as f64,
    })
}

pub fn run_campaign(
    cfg: &Config,
    policy: &dyn CoachPolicy,
    variant: AblationVariant,
    n_trials: usize,
    seed_base: u64,
) -> Result<CampaignReport> {
    let trials = run_trials(cfg, policy, variant, n_trials, seed_base)?;
    aggregate(variant.name(), seed_base, &trials)
}

/// Evaluates a checkpoint with its own variant's observation semantics.
pub fn evaluate_checkpoint(
    cfg: &Config,
    ckpt: &Checkpoint,
    n_trials: usize,
    seed_base: u64,
) -> Result<(CampaignReport, Vec<TrialResult>)> {
    let trials = run_trials(cfg, &MeanPolicy(&ckpt.params), ckpt.variant, n_trials, seed_base)?;
    Ok((aggregate(ckpt.variant.name(), seed_base, &trials)?, trials))
}

/// Directory that holds one variant's training outputs inside a suite.
pub fn variant_dir(root: &Path, variant: AblationVariant) -> PathBuf {
    root.join(variant.name())
}

pub fn load_checkpoint(path: &Path, cfg: &Config, variant: AblationVariant) -> Result<Checkpoint> {
    if !path.is_file() {
        return Err(Error::MissingCheckpoint { variant: variant.name().to_string(), path: path.display().to_string() });
    }
    Checkpoint::load(path, &cfg.ppo)
}

/// Evaluates all four variants from `root/<variant>/checkpoint.bin` on one
/// shared seed set, in `AblationVariant::ALL` order.
pub fn run_ablation_suite(cfg: &Config, root: &Path, n_trials: usize, seed_base: u64) -> Result<Vec<CampaignReport>> {
    let ckpts = AblationVariant::ALL
        .iter()
        .map(|&v| load_checkpoint(&variant_dir(root, v).join(CHECKPOINT_FILE), cfg, v))
        .collect::<Result<Vec<_>>>()?;
    ckpts.iter().map(|c| evaluate_checkpoint(cfg, c, n_trials, seed_base).map(|r| r.0)).collect()
}

/// Trains one variant, writing the metrics log, config and final checkpoint
/// into `out_dir`. `progress` sees every iteration's metrics.
pub fn train_variant(
    cfg: &Config,
    variant: AblationVariant,
    seed: u64,
    iterations: usize,
    out_dir: &Path,
    mut progress: impl FnMut(&IterationMetrics),
) -> Result<Checkpoint> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(CONFIG_FILE), cfg.to_toml())?;
    let mut log = BufWriter::new(fs::File::create(out_dir.join(METRICS_FILE))?);
    let mut trainer = Trainer::new(cfg, variant, seed)?;
    for _ in 0..iterations {
        let m = trainer.step()?;
        writeln!(log, "{}", serde_json::to_string(&m).expect("metrics serialise"))?;
        progress(&m);
    }
    log.flush()?;
    let ckpt = trainer.checkpoint();
    ckpt.save(out_dir.join(CHECKPOINT_FILE))?;
    Ok(ckpt)
}

pub fn read_metrics_log(path: &Path) -> Result<Vec<IterationMetrics>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m = serde_json::from_str(&line)
            .map_err(|e| Error::config(format!("{}:{}: bad metrics record: {e}", path.display(), i + 1)))?;
        out.push(m);
    }
    Ok(out)
}

/// Trailing moving average; the first entries average what is available.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        acc += values[i];
        if i >= window {
            acc -= values[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

pub const REWARD_SMOOTHING_WINDOW: usize = 20;

/// A variant's training curve for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardCurve {
    pub variant: String,
    pub iterations: Vec<usize>,
    pub mean_reward: Vec<f64>,
}

impl RewardCurve {
    pub fn from_metrics(variant: &str, log: &[IterationMetrics]) -> Self {
        Self {
            variant: variant.to_string(),
            iterations: log.iter().map(|m| m.iteration).collect(),
            mean_reward: log.iter().map(|m| m.mean_reward).collect(),
        }
    }

    pub fn smoothed(&self) -> Vec<f64> {
        smooth(&self.mean_reward, REWARD_SMOOTHING_WINDOW)
    }
}

pub const SUCCESS_FILE: &str = "success_rate.dat";
pub const KICK_STATS_FILE: &str = "kick_distance.dat";
pub const KICK_HIST_FILE: &str = "kick_histogram.dat";
pub const REWARD_FILE: &str = "reward_curves.dat";

/// Writes header-commented whitespace-separated column files into `dir`.
pub fn emit_plot_data(dir: &Path, reports: &[CampaignReport], curves: &[RewardCurve]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut success = String::from("# variant success_rate successes n_trials\n");
    let mut kick = String::from("# variant mean std n_trials success_only_mean success_only_std\n");
    let mut hist = String::from("# variant bin_lo bin_hi count\n");
    for r in reports {
        writeln!(success, "{} {} {} {}", r.variant, r.success_rate, r.successes, r.n_trials).unwrap();
        let opt = |v: Option<f64>| v.map_or("nan".to_string(), |x| x.to_string());
        writeln!(
            kick,
            "{} {} {} {} {} {}",
            r.variant,
            r.kick_distance_mean,
            r.kick_distance_std,
            r.n_trials,
            opt(r.success_kick_distance_mean),
            opt(r.success_kick_distance_std)
        )
        .unwrap();
        for (k, c) in r.histogram_counts.iter().enumerate() {
            writeln!(hist, "{} {} {} {}", r.variant, r.histogram_edges[k], r.histogram_edges[k + 1], c).unwrap();
        }
    }
    let mut rewards = String::from("# variant iteration mean_reward smoothed_reward\n");
    for c in curves {
        for ((it, r), s) in c.iterations.iter().zip(&c.mean_reward).zip(c.smoothed()) {
            writeln!(rewards, "{} {} {} {}", c.variant, it, r, s).unwrap();
        }
    }
    fs::write(dir.join(SUCCESS_FILE), success)?;
    fs::write(dir.join(KICK_STATS_FILE), kick)?;
    fs::write(dir.join(KICK_HIST_FILE), hist)?;
    fs::write(dir.join(REWARD_FILE), rewards)?;
    Ok(())
}

/// Plain-text comparison table for a suite.
pub fn comparison_table(reports: &[CampaignReport]) -> String {
    let mut s = format!(
        "{:<15} {:>8} {:>9} {:>9} {:>8} {:>6} {:>6}\n",
        "variant", "success", "kick_mu", "kick_sd", "timeout", "fell", "oob"
    );
    for r in reports {
        writeln!(
            s,
            "{:<15} {:>7.1}% {:>9.3} {:>9.3} {:>8} {:>6} {:>6}",
            r.variant,
            100.0 * r.success_rate,
            r.kick_distance_mean,
            r.kick_distance_std,
            r.failures.timeout,
            r.failures.fell,
            r.failures.out_of_bounds
        )
        .unwrap();
    }
    s
}
