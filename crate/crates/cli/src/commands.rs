//! The four experiment drivers behind the CLI subcommands.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use sbe_control::baselines::{tune_gain, FeedbackController, GainSearch, Policy, Uncontrolled};
use sbe_control::ddpg::{EpisodeLog, Trainer, TrainingHistory};
use sbe_control::eval::{eval_seed, evaluate, rollout, EpisodeResult, Summary};
use sbe_control::rng::{Seeds, Stream};
use sbe_control::solver::run_free_evolution;
use sbe_control::{Agent, Environment};

use crate::config::ExperimentConfig;
use crate::output::{num, opt, svg_plot, CsvOut, Series};

fn prepare(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    fs::write(cfg.out_dir.join("config.txt"), cfg.serialize())?;
    Ok(())
}

#[derive(Debug)]
pub struct FreeReport {
    pub snapshots: Vec<PathBuf>,
    pub energy: PathBuf,
}

/// Unforced evolution of `u0` with snapshots at the configured times.
pub fn run_free(cfg: &ExperimentConfig) -> Result<FreeReport> {
    prepare(cfg)?;
    let env = cfg.env_config();
    let u0 = env.initial.sample(env.sbe.grid)?;
    let offsets: Vec<f64> = cfg.snapshot_times.iter().map(|t| t - cfg.t_start).collect();
    let rng = Seeds::new(cfg.seed).rng(Stream::Simulation, 0);
    let run = run_free_evolution(u0, &env.sbe, cfg.t_end - cfg.t_start, &offsets, rng)?;

    let mut snapshots = Vec::new();
    let mut series = Vec::new();
    for (&t, (_, u)) in cfg.snapshot_times.iter().zip(&run.snapshots) {
        let mut w = CsvOut::create(
            cfg.out_dir.join(format!("free_t{t}.csv")),
            cfg,
            &["t", "x", "u"],
        )?;
        let grid = u.grid();
        for (i, v) in u.values().iter().enumerate() {
            w.row([num(t), num(grid.x(i)), num(*v)])?;
        }
        snapshots.push(w.finish()?);
        series.push(Series {
            label: format!("t = {t}"),
            points: u
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| (grid.x(i), *v))
                .collect(),
            errors: None,
        });
    }

    let mut w = CsvOut::create(
        cfg.out_dir.join("free_energy.csv"),
        cfg,
        &[
            "step",
            "t",
            "momentum",
            "energy",
            "max_gradient",
            "picard_iterations",
        ],
    )?;
    for d in &run.diagnostics {
        w.row([
            d.step.to_string(),
            num(cfg.t_start + d.t),
            num(d.momentum),
            num(d.energy),
            num(d.max_gradient),
            d.picard_iterations.to_string(),
        ])?;
    }
    let energy = w.finish()?;
    if cfg.svg {
        svg_plot(
            &cfg.out_dir.join("free.svg"),
            "Free evolution",
            "x",
            "u",
            &series,
        )?;
    }
    Ok(FreeReport { snapshots, energy })
}

#[derive(Debug)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub history_path: PathBuf,
    pub eval_path: PathBuf,
    pub history: TrainingHistory,
    pub summary: Summary,
}

fn train_agent(
    cfg: &ExperimentConfig,
    k: usize,
    mut progress: impl FnMut(&EpisodeLog),
) -> Result<(Agent, TrainingHistory)> {
    let mut env = Environment::new(cfg.env_config_with_k(k))?;
    let mut trainer = Trainer::new(&env, cfg.ddpg_config(), Seeds::new(cfg.seed))?;
    let mut history = TrainingHistory::default();
    for _ in 0..cfg.episodes {
        let episode = trainer.episodes_done();
        let log = trainer
            .run_episode(&mut env)
            .with_context(|| format!("training episode {episode}"))?;
        progress(&log);
        history.episodes.push(log);
    }
    Ok((trainer.into_agent(), history))
}

fn write_history(
    path: &Path,
    cfg: &ExperimentConfig,
    history: &TrainingHistory,
) -> Result<PathBuf> {
    let mut w = CsvOut::create(
        path,
        cfg,
        &[
            "episode",
            "undiscounted",
            "discounted",
            "state_cost",
            "action_cost",
            "critic_loss",
            "actor_objective",
            "updates",
            "noise_scale",
        ],
    )?;
    for e in &history.episodes {
        w.row([
            e.episode.to_string(),
            num(e.undiscounted),
            num(e.discounted),
            num(e.state_cost),
            num(e.action_cost),
            opt(e.critic_loss),
            opt(e.actor_objective),
            e.updates.to_string(),
            num(e.noise_scale),
        ])?;
    }
    w.finish()
}

pub const EVAL_HEADER: [&str; 8] = [
    "episode",
    "seed",
    "policy",
    "undiscounted",
    "discounted",
    "state_cost",
    "action_cost",
    "steps",
];

fn write_eval(path: &Path, cfg: &ExperimentConfig, results: &[EpisodeResult]) -> Result<PathBuf> {
    let mut w = CsvOut::create(path, cfg, &EVAL_HEADER)?;
    for r in results {
        w.row([
            r.episode.to_string(),
            r.seed.to_string(),
            r.policy.clone(),
            num(r.undiscounted),
            num(r.discounted),
            num(r.state_cost),
            num(r.action_cost),
            r.steps.to_string(),
        ])?;
    }
    w.finish()
}

fn log_progress(log: &EpisodeLog) {
    if log.episode.is_multiple_of(10) {
        eprintln!(
            "episode {:>5}  return {:>12.4}  critic loss {:>12}  noise {:.4}",
            log.episode,
            log.undiscounted,
            log.critic_loss.map_or("-".into(), |l| format!("{l:.4}")),
            log.noise_scale
        );
    }
}

fn describe(s: &Summary) -> String {
    let (lo, hi) = s.ci();
    format!(
        "{:<14} mean {:>12.4}  90% CI [{:.4}, {:.4}]  n = {}{}",
        s.policy,
        s.mean,
        lo,
        hi,
        s.n,
        if s.degenerate {
            " (single episode, CI width 0)"
        } else {
            ""
        }
    )
}

/// Train an agent, save it, and evaluate it greedily.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainReport> {
    prepare(cfg)?;
    let (agent, history) = train_agent(cfg, cfg.k, log_progress)?;
    let checkpoint = cfg.out_dir.join("agent.ckpt");
    agent
        .write_to(BufWriter::new(File::create(&checkpoint)?))
        .with_context(|| format!("writing {}", checkpoint.display()))?;
    let history_path = write_history(&cfg.out_dir.join("history.csv"), cfg, &history)?;

    let env = cfg.env_config();
    let results = evaluate(&env, &agent, Seeds::new(cfg.seed), cfg.eval_episodes)?;
    let eval_path = write_eval(&cfg.out_dir.join("train_eval.csv"), cfg, &results)?;
    let summary = Summary::of(agent.name(), &results)?;
    println!("{}", describe(&summary));
    if cfg.svg && !history.episodes.is_empty() {
        svg_plot(
            &cfg.out_dir.join("history.svg"),
            "Training return",
            "episode",
            "return",
            &[Series {
                label: "undiscounted".into(),
                points: history
                    .episodes
                    .iter()
                    .map(|e| (e.episode as f64, e.undiscounted))
                    .collect(),
                errors: None,
            }],
        )?;
    }
    Ok(TrainReport {
        checkpoint,
        history_path,
        eval_path,
        history,
        summary,
    })
}

pub fn load_agent(path: &Path) -> Result<Agent> {
    let file =
        File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    Agent::read_from(std::io::BufReader::new(file))
        .with_context(|| format!("reading checkpoint {}", path.display()))
}

/// Seeds used for gain tuning, disjoint from the evaluation seeds.
pub fn tuning_seeds(cfg: &ExperimentConfig) -> Seeds {
    Seeds::new(Seeds::new(cfg.seed).seed(Stream::Simulation, 1))
}

pub fn tune_feedback(cfg: &ExperimentConfig, k: usize) -> Result<GainSearch> {
    Ok(tune_gain(
        &cfg.env_config_with_k(k),
        &cfg.feedback_gains,
        cfg.tune_episodes,
        tuning_seeds(cfg),
    )?)
}

#[derive(Debug)]
pub struct CompareReport {
    pub comparison: PathBuf,
    pub tuned_gain: f64,
    pub summaries: Vec<Summary>,
    pub results: Vec<Vec<EpisodeResult>>,
}

impl CompareReport {
    pub fn summary(&self, policy: &str) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.policy == policy)
    }
}

const SUMMARY_HEADER: [&str; 10] = [
    "policy",
    "n",
    "mean",
    "std",
    "ci_low",
    "ci_high",
    "ci_half_width",
    "degenerate",
    "mean_state_cost",
    "mean_action_cost",
];

fn summary_row(s: &Summary) -> Vec<String> {
    let (lo, hi) = s.ci();
    vec![
        s.policy.clone(),
        s.n.to_string(),
        num(s.mean),
        num(s.std),
        num(lo),
        num(hi),
        num(s.ci_half_width),
        s.degenerate.to_string(),
        num(s.mean_state_cost),
        num(s.mean_action_cost),
    ]
}

fn write_transitions(
    path: &Path,
    cfg: &ExperimentConfig,
    policy: &dyn Policy,
    k: usize,
) -> Result<()> {
    let mut header = vec![
        "episode".to_string(),
        "step".into(),
        "t".into(),
        "reward".into(),
    ];
    header.extend((0..k).map(|j| format!("a{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = CsvOut::create(path, cfg, &header)?;
    let mut env = Environment::new(cfg.env_config_with_k(k))?;
    let mut step = 0usize;
    let mut rows = Vec::new();
    rollout(
        &mut env,
        policy,
        0,
        eval_seed(Seeds::new(cfg.seed), 0),
        |tr| {
            step += 1;
            let mut row = vec!["0".to_string(), step.to_string(), num(tr.t), num(tr.reward)];
            row.extend(tr.action.iter().map(|a| num(*a)));
            rows.push(row);
        },
    )?;
    for r in rows {
        w.row(r)?;
    }
    w.finish()?;
    Ok(())
}

/// Uncontrolled, tuned feedback and (if a checkpoint is configured) the
/// agent, all on the same evaluation seeds.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<CompareReport> {
    prepare(cfg)?;
    let env = cfg.env_config();
    let agent = match &cfg.checkpoint {
        Some(path) => {
            if !path.exists() {
                bail!("checkpoint {} does not exist", path.display());
            }
            let agent = load_agent(path)?;
            if agent.action_dim() != cfg.k || agent.state_dim() != env.sbe.grid.n_points() {
                bail!(
                    "checkpoint {} has shape {}->{} but the config needs {}->{}",
                    path.display(),
                    agent.state_dim(),
                    agent.action_dim(),
                    env.sbe.grid.n_points(),
                    cfg.k
                );
            }
            Some(agent)
        }
        None => None,
    };

    let tuning = tune_feedback(cfg, cfg.k)?;
    let mut w = CsvOut::create(
        cfg.out_dir.join("feedback_tuning.csv"),
        cfg,
        &SUMMARY_HEADER
            .iter()
            .copied()
            .chain(["gain"])
            .collect::<Vec<_>>(),
    )?;
    for (g, s) in &tuning.scores {
        let mut row = summary_row(s);
        row.push(num(*g));
        w.row(row)?;
    }
    w.finish()?;

    let uncontrolled = Uncontrolled { action_dim: cfg.k };
    let feedback = FeedbackController::for_env(tuning.best, &env)?;
    let mut policies: Vec<&dyn Policy> = vec![&uncontrolled, &feedback];
    if let Some(a) = &agent {
        policies.push(a);
    }

    let seeds = Seeds::new(cfg.seed);
    let mut summaries = Vec::new();
    let mut all = Vec::new();
    for p in &policies {
        let results = evaluate(&env, *p, seeds, cfg.eval_episodes)?;
        write_eval(
            &cfg.out_dir.join(format!("eval_{}.csv", p.name())),
            cfg,
            &results,
        )?;
        if cfg.transition_log {
            write_transitions(
                &cfg.out_dir.join(format!("transitions_{}.csv", p.name())),
                cfg,
                *p,
                cfg.k,
            )?;
        }
        let s = Summary::of(p.name(), &results)?;
        println!("{}", describe(&s));
        summaries.push(s);
        all.push(results);
    }
    println!(
        "feedback gain {} (tuned over {:?})",
        tuning.best, cfg.feedback_gains
    );

    let mut w = CsvOut::create(cfg.out_dir.join("comparison.csv"), cfg, &SUMMARY_HEADER)?;
    for s in &summaries {
        w.row(summary_row(s))?;
    }
    let comparison = w.finish()?;
    if cfg.svg {
        let series: Vec<Series> = summaries
            .iter()
            .enumerate()
            .map(|(i, s)| Series {
                label: s.policy.clone(),
                points: vec![(i as f64, s.mean)],
                errors: Some(vec![s.ci_half_width]),
            })
            .collect();
        svg_plot(
            &cfg.out_dir.join("comparison.svg"),
            "Mean return, 90% CI",
            "policy",
            "return",
            &series,
        )?;
    }
    Ok(CompareReport {
        comparison,
        tuned_gain: tuning.best,
        summaries,
        results: all,
    })
}

#[derive(Debug)]
pub struct SweepRow {
    pub k: usize,
    pub agent: Summary,
    pub feedback: Summary,
    pub feedback_gain: f64,
}

#[derive(Debug)]
pub struct SweepReport {
    pub path: PathBuf,
    pub rows: Vec<SweepRow>,
}

/// Train and evaluate one agent per interval count in `sweep_k`.
pub fn run_sweep_k(cfg: &ExperimentConfig) -> Result<SweepReport> {
    prepare(cfg)?;
    if cfg.sweep_k.is_empty() {
        bail!("sweep_k is empty");
    }
    let seeds = Seeds::new(cfg.seed);
    let mut rows = Vec::new();
    for &k in &cfg.sweep_k {
        eprintln!("k = {k}");
        let (agent, history) =
            train_agent(cfg, k, log_progress).with_context(|| format!("k = {k}"))?;
        write_history(
            &cfg.out_dir.join(format!("history_k{k}.csv")),
            cfg,
            &history,
        )?;
        let env = cfg.env_config_with_k(k);
        let results = evaluate(&env, &agent, seeds, cfg.eval_episodes)?;
        write_eval(
            &cfg.out_dir.join(format!("eval_ddpg_k{k}.csv")),
            cfg,
            &results,
        )?;
        let tuning = tune_feedback(cfg, k)?;
        let fb = FeedbackController::for_env(tuning.best, &env)?;
        let fb_results = evaluate(&env, &fb, seeds, cfg.eval_episodes)?;
        let row = SweepRow {
            k,
            agent: Summary::of("ddpg", &results)?,
            feedback: Summary::of("feedback", &fb_results)?,
            feedback_gain: tuning.best,
        };
        println!("k = {k:>3}  {}", describe(&row.agent));
        rows.push(row);
    }
    let mut header: Vec<&str> = vec!["k"];
    header.extend(SUMMARY_HEADER);
    header.extend(["feedback_gain", "feedback_mean", "feedback_ci_half_width"]);
    let mut w = CsvOut::create(cfg.out_dir.join("sweep_k.csv"), cfg, &header)?;
    for r in &rows {
        let mut row = vec![r.k.to_string()];
        row.extend(summary_row(&r.agent));
        row.extend([
            num(r.feedback_gain),
            num(r.feedback.mean),
            num(r.feedback.ci_half_width),
        ]);
        w.row(row)?;
    }
    let path = w.finish()?;
    let monotone = rows.windows(2).all(|w| w[1].agent.mean >= w[0].agent.mean);
    println!(
        "mean return {} with k (reported only)",
        if monotone {
            "increases"
        } else {
            "does not increase monotonically"
        }
    );
    if cfg.svg {
        svg_plot(
            &cfg.out_dir.join("sweep_k.svg"),
            "Mean return by number of forcing intervals",
            "k",
            "return",
            &[Series {
                label: "ddpg".into(),
                points: rows.iter().map(|r| (r.k as f64, r.agent.mean)).collect(),
                errors: Some(rows.iter().map(|r| r.agent.ci_half_width).collect()),
            }],
        )?;
    }
    Ok(SweepReport { path, rows })
}
