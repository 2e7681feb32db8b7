//! Greedy evaluation episodes and their summary statistics.

use rayon::prelude::*;

use crate::baselines::Policy;
use crate::env::{episode_return, EnvConfig, Environment, Transition};
use crate::error::{Error, Result};
use crate::rng::{Seeds, Stream};

/// z-value of a two-sided 90% normal interval.
pub const Z90: f64 = 1.645;

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub episode: usize,
    /// Solver-noise seed of this episode.
    pub seed: u64,
    pub policy: String,
    pub undiscounted: f64,
    pub discounted: f64,
    /// Summed per-step state cost.
    pub state_cost: f64,
    /// Summed per-step action cost.
    pub action_cost: f64,
    pub steps: usize,
}

/// Run one episode from `seed` under `policy`, calling `observe` after
/// every transition.
pub fn rollout(
    env: &mut Environment,
    policy: &dyn Policy,
    episode: usize,
    seed: u64,
    mut observe: impl FnMut(&Transition),
) -> Result<EpisodeResult> {
    let mut state = env.reset(seed);
    let mut rewards = Vec::with_capacity(env.n_steps() as usize);
    let (mut state_cost, mut action_cost) = (0.0, 0.0);
    loop {
        let action = policy.action(&state)?;
        let tr = env.step(&action)?;
        observe(&tr);
        rewards.push(tr.reward);
        state_cost += tr.cost.state;
        action_cost += tr.cost.action;
        state = tr.next_state;
        if tr.done {
            break;
        }
    }
    let ret = episode_return(&rewards, env.config().gamma);
    Ok(EpisodeResult {
        episode,
        seed,
        policy: policy.name().to_string(),
        undiscounted: ret.undiscounted,
        discounted: ret.discounted,
        state_cost,
        action_cost,
        steps: rewards.len(),
    })
}

/// Seed of evaluation episode `i`. Every policy evaluated with the same
/// `seeds` sees the same noise realization for the same `i`.
pub fn eval_seed(seeds: Seeds, episode: usize) -> u64 {
    seeds.seed(Stream::EvalNoise, episode as u64)
}

/// `episodes` greedy episodes, run in parallel, returned in episode order.
pub fn evaluate(
    config: &EnvConfig,
    policy: &dyn Policy,
    seeds: Seeds,
    episodes: usize,
) -> Result<Vec<EpisodeResult>> {
    config.validate()?;
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut env = Environment::new(config.clone())?;
            rollout(&mut env, policy, i, eval_seed(seeds, i), |_| {})
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub policy: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when n = 1.
    pub std: f64,
    /// Half-width of the 90% interval, `1.645 s / √n`.
    pub ci_half_width: f64,
    /// Set when n = 1 and the interval is zero by convention.
    pub degenerate: bool,
    pub mean_state_cost: f64,
    pub mean_action_cost: f64,
}

impl Summary {
    pub fn of(policy: &str, results: &[EpisodeResult]) -> Result<Self> {
        Self::from_values(
            policy,
            &results.iter().map(|r| r.undiscounted).collect::<Vec<_>>(),
        )
        .map(|mut s| {
            let n = results.len() as f64;
            s.mean_state_cost = results.iter().map(|r| r.state_cost).sum::<f64>() / n;
            s.mean_action_cost = results.iter().map(|r| r.action_cost).sum::<f64>() / n;
            s
        })
    }

    pub fn from_values(policy: &str, values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::InvalidConfig(
                "cannot summarize zero episodes".into(),
            ));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            policy: policy.to_string(),
            n,
            mean,
            std,
            ci_half_width: Z90 * std / (n as f64).sqrt(),
            degenerate: n == 1,
            mean_state_cost: 0.0,
            mean_action_cost: 0.0,
        })
    }

    pub fn ci(&self) -> (f64, f64) {
        (
            self.mean - self.ci_half_width,
            self.mean + self.ci_half_width,
        )
    }

    /// True when this interval lies strictly above `other`'s.
    pub fn dominates(&self, other: &Summary) -> bool {
        self.ci().0 > other.ci().1
    }
}
