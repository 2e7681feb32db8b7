use crate::env::{episode_return, Environment};
use crate::error::{Error, Result};
use crate::rng::{Rng, Seeds, Stream};

use super::{Agent, DdpgConfig, ExplorationNoise, ReplayBuffer};

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub undiscounted: f64,
    pub discounted: f64,
    pub state_cost: f64,
    pub action_cost: f64,
    /// Mean over this episode's updates; `None` during warm-up.
    pub critic_loss: Option<f64>,
    pub actor_objective: Option<f64>,
    pub updates: usize,
    pub noise_scale: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub episodes: Vec<EpisodeLog>,
}

impl TrainingHistory {
    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.undiscounted).collect()
    }

    /// Mean undiscounted return over the last `n` episodes.
    pub fn tail_mean(&self, n: usize) -> Option<f64> {
        let n = n.min(self.episodes.len());
        if n == 0 {
            return None;
        }
        let tail = &self.episodes[self.episodes.len() - n..];
        Some(tail.iter().map(|e| e.undiscounted).sum::<f64>() / n as f64)
    }
}

/// Online DDPG loop: act with exploration noise, store, and take one update
/// per environment step once the buffer holds `warmup` transitions.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    config: DdpgConfig,
    seeds: Seeds,
    noise: ExplorationNoise,
    explore_rng: Rng,
    replay_rng: Rng,
    episode: usize,
}

impl Trainer {
    pub fn new(env: &Environment, config: DdpgConfig, seeds: Seeds) -> Result<Self> {
        config.validate()?;
        if config.gamma != env.config().gamma {
            return Err(Error::InvalidConfig(format!(
                "agent gamma {} differs from environment gamma {}",
                config.gamma,
                env.config().gamma
            )));
        }
        let agent = Agent::new(
            env.state_dim(),
            env.action_dim(),
            env.config().f_bounds,
            &config,
            &mut seeds.rng(Stream::Init, 0),
        )?;
        Self::with_agent(env, agent, config, seeds)
    }

    /// Continue from an existing agent with a fresh buffer and optimizer
    /// state as stored in `agent`.
    pub fn with_agent(
        env: &Environment,
        agent: Agent,
        config: DdpgConfig,
        seeds: Seeds,
    ) -> Result<Self> {
        config.validate()?;
        if agent.state_dim() != env.state_dim() || agent.action_dim() != env.action_dim() {
            return Err(Error::Shape(format!(
                "agent is {}->{} but environment is {}->{}",
                agent.state_dim(),
                agent.action_dim(),
                env.state_dim(),
                env.action_dim()
            )));
        }
        let capacity = config.buffer_capacity;
        Ok(Self {
            buffer: ReplayBuffer::new(capacity, env.state_dim(), env.action_dim())?,
            noise: ExplorationNoise::new(config.noise, env.action_dim()),
            explore_rng: seeds.rng(Stream::Exploration, 0),
            replay_rng: seeds.rng(Stream::ReplaySampling, 0),
            agent,
            config,
            seeds,
            episode: 0,
        })
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.config
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn into_agent(self) -> Agent {
        self.agent
    }

    pub fn run_episode(&mut self, env: &mut Environment) -> Result<EpisodeLog> {
        let episode = self.episode;
        self.noise.begin_episode(episode);
        let mut state = env.reset(self.seeds.seed(Stream::TrainNoise, episode as u64));
        let mut rewards = Vec::with_capacity(env.n_steps() as usize);
        let (mut state_cost, mut action_cost) = (0.0, 0.0);
        let (mut loss_sum, mut obj_sum, mut updates) = (0.0, 0.0, 0usize);
        loop {
            let eps = self.noise.sample(&mut self.explore_rng);
            let action = self.agent.act_with_noise(state.values(), &eps)?;
            let tr = env.step(&action)?;
            self.buffer.push(
                tr.state.values(),
                &tr.action,
                tr.reward,
                tr.next_state.values(),
                tr.done,
            )?;
            rewards.push(tr.reward);
            state_cost += tr.cost.state;
            action_cost += tr.cost.action;
            if self.buffer.len() >= self.config.warmup.max(self.config.batch_size) {
                let stats = self.agent.update(
                    &self.buffer,
                    self.config.batch_size,
                    &mut self.replay_rng,
                )?;
                loss_sum += stats.critic_loss;
                obj_sum += stats.actor_objective;
                updates += 1;
            }
            state = tr.next_state;
            if tr.done {
                break;
            }
        }
        self.episode += 1;
        let ret = episode_return(&rewards, env.config().gamma);
        let mean = |s: f64| (updates > 0).then(|| s / updates as f64);
        Ok(EpisodeLog {
            episode,
            undiscounted: ret.undiscounted,
            discounted: ret.discounted,
            state_cost,
            action_cost,
            critic_loss: mean(loss_sum),
            actor_objective: mean(obj_sum),
            updates,
            noise_scale: self.noise.scale(),
        })
    }

    pub fn train(
        &mut self,
        env: &mut Environment,
        episodes: usize,
        mut on_episode: impl FnMut(&EpisodeLog),
    ) -> Result<TrainingHistory> {
        let mut history = TrainingHistory::default();
        for _ in 0..episodes {
            let log = self.run_episode(env)?;
            on_episode(&log);
            history.episodes.push(log);
        }
        Ok(history)
    }
}
