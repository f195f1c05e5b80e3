//! Acceptance suite. Prints one PASS/FAIL line per criterion and a summary.
//! With `HIERKICK_ACCEPTANCE_STRICT=1` it also exits non-zero if any
//! criterion fails. Criteria 1-3 train all four variants on the small
//! profile, which takes a while on one core.

mod common;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hierkick::coach::{AblationVariant, PolicyParams, VelocityCommand, VelocityIncrement};
use hierkick::config::Config;
use hierkick::harness::{
    self, emit_plot_data, read_metrics_log, run_ablation_suite, variant_dir, CampaignReport, RewardCurve, TrialResult,
    CHECKPOINT_FILE, METRICS_FILE,
};
use hierkick::ppo::{collect_rollouts, RolloutWorker};
use hierkick::rewards::{
    phase_masks, r_alignment, r_approach, r_delta, r_dribble, r_shoot, total_reward, PhaseThresholds, RewardWeights,
    StageRewards,
};
use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRAIN_SEED: u64 = 0;
const EVAL_TRIALS: usize = 2000;
const EVAL_SEED_BASE: u64 = 1_000_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn mask_partition() -> Verdict {
    let th = PhaseThresholds::default();
    let nb = (2.0 * th.u1 * 100.0).round() as usize;
    let ng = (2.0 * th.u3 * 100.0).round() as usize;
    let mut bad = 0;
    for i in 1..=nb {
        for j in 1..=ng {
            if phase_masks(i as f64 / 100.0, j as f64 / 100.0, &th).count() != 1 {
                bad += 1;
            }
        }
    }
    verdict(bad == 0, format!("{} grid points, {bad} exceptions", nb * ng))
}

fn gae_oracle() -> Verdict {
    let t = Instant::now();
    let worst = common::gae_max_error(1000, 0x5EED);
    let secs = t.elapsed().as_secs_f64();
    verdict(worst < 1e-10 && secs < 10.0, format!("max error {worst:.2e}, {secs:.2} s"))
}

fn gradient_check() -> Verdict {
    let configs = 120;
    let worst = common::gradient_check(configs, 1e-6, 0xF1D1);
    verdict(worst < 1e-5, format!("{configs} configurations, worst relative error {worst:.2e}"))
}

fn camera_and_profile() -> Verdict {
    let worst = common::camera_roundtrip_error(10_000, 0xCA3E);
    let f = Config::faithful();
    let p = &f.ppo;
    let table = [
        ("gamma", p.gamma == 0.99),
        ("gae_lambda", p.gae_lambda == 0.95),
        ("clip_eps", p.clip_eps == 0.2),
        ("kl_target", p.kl_target == 0.01),
        ("learning_rate", p.learning_rate == 3e-4),
        ("batch_size", p.batch_size == 4096),
        ("minibatch_size", p.minibatch_size == 1024),
        ("epochs", p.epochs == 5),
        ("max_episode_seconds", p.max_episode_seconds == 20.0),
        ("actor_hidden", f.coach.actor_hidden == [512, 256, 128]),
        ("critic_hidden", f.coach.critic_hidden == [512, 256, 128]),
        ("beta", f.rewards.weights.beta == 0.5),
    ];
    let wrong: Vec<&str> = table.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    verdict(
        worst < 1e-9 && wrong.is_empty(),
        format!("10000 pairs, max error {worst:.2e}; faithful profile mismatches: {wrong:?}"),
    )
}

fn hierkick_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hierkick")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn determinism(root: &Path) -> Verdict {
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let dir = root.join(name);
        hierkick_cli(&["train", "--seed", "7", "--iterations", "10", "--quiet", "--out-dir", dir.to_str().unwrap()])?;
        std::fs::read(dir.join(CHECKPOINT_FILE)).map_err(|e| e.to_string())
    };
    let (a, b) = match (run("det_a"), run("det_b")) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => return verdict(false, format!("train failed: {:?} {:?}", a.err(), b.err())),
    };
    let ckpt = root.join("det_a").join(CHECKPOINT_FILE);
    let report = root.join("det_eval.json");
    if let Err(e) = hierkick_cli(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--trials",
        "20",
        "--seed-base",
        "300",
        "--out",
        report.to_str().unwrap(),
    ]) {
        return verdict(false, format!("eval failed: {e}"));
    }
    let recorded: Vec<TrialResult> = std::fs::read_to_string(report.with_extension("trials.jsonl"))
        .unwrap_or_default()
        .lines()
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect();
    let mut replayed_ok = 0;
    for t in &recorded {
        let out = hierkick_cli(&["replay", "--seed", &t.seed.to_string(), "--checkpoint", ckpt.to_str().unwrap()]);
        if out.ok().and_then(|s| serde_json::from_str::<TrialResult>(&s).ok()).as_ref() == Some(t) {
            replayed_ok += 1;
        }
    }
    verdict(
        a == b && recorded.len() == 20 && replayed_ok == recorded.len(),
        format!(
            "checkpoints {} ({} bytes); {replayed_ok}/{} trials replayed exactly",
            if a == b { "identical" } else { "differ" },
            a.len(),
            recorded.len()
        ),
    )
}

fn reward_points() -> Verdict {
    let th = PhaseThresholds::default();
    let w = RewardWeights::default();
    let cmd = |x, y| VelocityCommand::new(x, y, 0.0);
    let e = Vector2::new(1.0, 0.0);
    let sw = RewardWeights { mu: 0.5, alpha: 2.0, v_max: 1.5, epsilon: 1e-6, ..Default::default() };
    let survival = RewardWeights { survival_bonus: 1.0, ..Default::default() };
    let fast = cmd(1.2, 0.0);
    let mut cases: Vec<(&str, f64, f64)> = vec![
        ("approach aligned", r_approach(&cmd(1.0, 0.0), &e, true), 1.0),
        ("approach orthogonal", r_approach(&cmd(1.0, 0.0), &Vector2::new(0.0, 1.0), true), 0.0),
        ("approach 0.96", r_approach(&cmd(0.6, 0.8), &Vector2::new(0.8, 0.6), true), 0.96),
        ("alignment cos 0", r_alignment(0.0, 0.0, 0.0, w.beta, true), 1.0),
        ("alignment cos pi", r_alignment(PI, 0.0, 0.0, w.beta, true), -1.0),
        ("alignment pi/3", r_alignment(PI / 3.0, 0.4, 0.1, 0.5, true), 0.35),
        ("dribble 0.5", r_dribble(&cmd(0.5, 0.0), &e, true), 0.5),
        ("dribble masked", r_dribble(&cmd(0.7, -0.2), &e, false), 0.0),
        ("shoot at rest", r_shoot(&cmd(0.0, 0.0), &e, &sw, true), 0.0),
        ("shoot 0.5", r_shoot(&cmd(0.5, 0.0), &e, &sw, true), 0.5 / (0.5 + 1e-6) + 0.5 * 1.0),
        ("shoot saturated", r_shoot(&fast, &e, &sw, true), 1.2 / (1.2 + 1e-6) + 0.5 * 1.5),
        ("delta dead band", r_delta(&VelocityIncrement { dvx: 0.1, dvy: 0.0, dwz: 0.0 }, &w), 0.0),
        ("delta trivial", r_delta(&VelocityIncrement::default(), &w), -w.zeta2),
        (
            "delta over",
            r_delta(&VelocityIncrement { dvx: w.delta_max + 0.05, dvy: 0.0, dwz: 0.0 }, &RewardWeights { zeta1: 2.0, ..w.clone() }),
            -0.1,
        ),
        ("total survival", total_reward(&StageRewards::default(), None, true, false, &survival).total, 1.0),
        ("total fallen", total_reward(&StageRewards::default(), None, false, false, &survival).total, 0.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0xD0D);
    let mut dots = Vec::new();
    for _ in 0..1000 {
        let v = cmd(rng.random_range(-1.2..1.2), rng.random_range(-0.4..0.4));
        let a: f64 = rng.random_range(-PI..PI);
        let d = Vector2::new(a.cos(), a.sin());
        dots.push((r_dribble(&v, &d, true), v.vx * d.x + v.vy * d.y));
    }
    let masks_ok = {
        let a = phase_masks(th.u1 + 0.01, 1.0, &th);
        let s = phase_masks(th.u2, th.u3 - 0.01, &th);
        a.approach && a.count() == 1 && s.shoot && s.count() == 1
    };
    let saturated_close = (r_shoot(&fast, &e, &sw, true) - (1.0 + sw.mu * sw.v_max)).abs() < 1e-5;
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    for (name, got, want) in cases.drain(..) {
        let err = (got - want).abs();
        worst = worst.max(err);
        if err >= 1e-12 {
            failed.push(name);
        }
    }
    let dot_err = dots.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if dot_err >= 1e-12 {
        failed.push("dribble dot oracle");
    }
    if !masks_ok {
        failed.push("mask boundaries");
    }
    if !saturated_close {
        failed.push("shoot saturation");
    }
    verdict(failed.is_empty(), format!("worst point error {:.1e}, dot oracle {dot_err:.1e}, failed {failed:?}", worst))
}

fn episode_bound(eval_trials: &[TrialResult]) -> Verdict {
    let cfg = Config::small();
    let mut longest = 0;
    let mut episodes = 0;
    let policies = [
        PolicyParams::new(&[16], &[16], 0.5, &mut ChaCha8Rng::seed_from_u64(1)),
        PolicyParams::new(&[16], &[16], 0.01, &mut ChaCha8Rng::seed_from_u64(2)),
    ];
    for p in &policies {
        let mut workers = RolloutWorker::spawn(&cfg, AblationVariant::Full, 3, cfg.training.n_worlds).unwrap();
        for _ in 0..8 {
            let b = collect_rollouts(&mut workers, p, &cfg).unwrap();
            for e in &b.episodes {
                longest = longest.max(e.length);
                episodes += 1;
            }
        }
    }
    let eval_longest = eval_trials.iter().map(|t| t.decisions).max().unwrap_or(0);
    verdict(
        longest <= 100 && eval_longest <= 100 && episodes > 0,
        format!(
            "{episodes} collected episodes, longest {longest}; {} evaluation trials, longest {eval_longest}",
            eval_trials.len()
        ),
    )
}

struct Suite {
    reports: Vec<CampaignReport>,
    curves: Vec<RewardCurve>,
    trials: Vec<TrialResult>,
}

fn train_suite(root: &Path) -> hierkick::Result<Suite> {
    let cfg = Config::small();
    let iterations = cfg.training.iterations;
    for v in AblationVariant::ALL {
        let t = Instant::now();
        harness::train_variant(&cfg, v, TRAIN_SEED, iterations, &variant_dir(root, v), |_| {})?;
        eprintln!("trained {} for {iterations} iterations in {:.0} s", v.name(), t.elapsed().as_secs_f64());
    }
    let t = Instant::now();
    let reports = run_ablation_suite(&cfg, root, EVAL_TRIALS, EVAL_SEED_BASE)?;
    eprintln!("evaluated {EVAL_TRIALS} shared seeds per variant in {:.0} s", t.elapsed().as_secs_f64());
    eprint!("{}", harness::comparison_table(&reports));
    let full = harness::load_checkpoint(&variant_dir(root, AblationVariant::Full).join(CHECKPOINT_FILE), &cfg, AblationVariant::Full)?;
    let (_, trials) = harness::evaluate_checkpoint(&cfg, &full, EVAL_TRIALS, EVAL_SEED_BASE)?;
    let curves = AblationVariant::ALL
        .iter()
        .map(|v| Ok(RewardCurve::from_metrics(v.name(), &read_metrics_log(&variant_dir(root, *v).join(METRICS_FILE))?)))
        .collect::<hierkick::Result<Vec<_>>>()?;
    emit_plot_data(&root.join("plots"), &reports, &curves)?;
    Ok(Suite { reports, curves, trials })
}

fn ablation_ordering(s: &Suite) -> Verdict {
    let full = &s.reports[0];
    let best = s.reports[1..].iter().map(|r| r.success_rate).fold(f64::NEG_INFINITY, f64::max);
    let rates: Vec<String> = s.reports.iter().map(|r| format!("{} {:.1}%", r.variant, 100.0 * r.success_rate)).collect();
    let margin = 100.0 * (full.success_rate - best);
    verdict(
        full.success_rate > best && margin >= 15.0 && full.n_trials >= 2000,
        format!("{}; margin {margin:.1} pp over {} shared seeds", rates.join(", "), full.n_trials),
    )
}

fn kick_ordering(s: &Suite) -> Verdict {
    let full = &s.reports[0];
    let ok = s.reports[1..]
        .iter()
        .all(|r| full.kick_distance_mean < r.kick_distance_mean && full.kick_distance_std <= r.kick_distance_std);
    let stats: Vec<String> = s
        .reports
        .iter()
        .map(|r| format!("{} {:.3}±{:.3}", r.variant, r.kick_distance_mean, r.kick_distance_std))
        .collect();
    verdict(ok, format!("mean±std m: {}", stats.join(", ")))
}

fn reward_dominance(s: &Suite) -> Verdict {
    let smoothed: Vec<Vec<f64>> = s.curves.iter().map(|c| c.smoothed()).collect();
    let n = smoothed[0].len();
    let start = n - n / 5;
    let mut worst_gap = f64::INFINITY;
    let mut losses = 0;
    for i in start..n {
        for other in &smoothed[1..] {
            let gap = smoothed[0][i] - other[i];
            worst_gap = worst_gap.min(gap);
            if gap <= 0.0 {
                losses += 1;
            }
        }
    }
    let finals: Vec<String> =
        s.curves.iter().zip(&smoothed).map(|(c, v)| format!("{} {:.3}", c.variant, v[n - 1])).collect();
    verdict(
        losses == 0 && n > 0,
        format!(
            "iterations {}..{n}, smallest lead {worst_gap:.3}, {losses} losing points; final smoothed {}",
            start + 1,
            finals.join(", ")
        ),
    )
}

fn main() {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).expect("acceptance work directory");

    let mut results: Vec<(u32, &str, Verdict)> = vec![
        (4, "mask partition", mask_partition()),
        (5, "GAE oracle", gae_oracle()),
        (6, "gradient check", gradient_check()),
        (7, "camera round-trip and faithful profile", camera_and_profile()),
        (8, "determinism", determinism(&root)),
        (9, "reward point tests", reward_points()),
    ];
    for (id, name, v) in &results {
        println!("{} criterion {id} ({name}): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }

    let suite = train_suite(&root);
    let trained: Vec<(u32, &str, Verdict)> = match &suite {
        Ok(s) => vec![
            (1, "ablation ordering", ablation_ordering(s)),
            (2, "kick-distance ordering", kick_ordering(s)),
            (3, "reward-curve dominance", reward_dominance(s)),
            (10, "episode-length bound", episode_bound(&s.trials)),
        ],
        Err(e) => vec![
            (1, "ablation ordering", verdict(false, format!("training failed: {e}"))),
            (2, "kick-distance ordering", verdict(false, "no suite")),
            (3, "reward-curve dominance", verdict(false, "no suite")),
            (10, "episode-length bound", episode_bound(&[])),
        ],
    };
    for (id, name, v) in &trained {
        println!("{} criterion {id} ({name}): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    results.extend(trained);
    results.sort_by_key(|r| r.0);

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        if std::env::var("HIERKICK_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
