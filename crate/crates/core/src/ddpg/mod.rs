//! Deep deterministic policy gradient over piecewise-constant forcing.
//!
//! The actor maps the sampled velocity field to `k` forcing coefficients,
//! squashed into the forcing bounds with a scaled `tanh`. The critic scores
//! the concatenation `[u, a]`. Both have slowly tracking target copies.

mod noise;
mod replay;
mod train;

use std::io::{Read, Write};

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};

use crate::baselines::Policy;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::nn::{Adam, Gradients, Mlp};
use crate::rng::Rng;

pub use noise::{ExplorationNoise, NoiseConfig, NoiseKind};
pub use replay::{Batch, ReplayBuffer, StoredTransition};
pub use train::{EpisodeLog, Trainer, TrainingHistory};

#[derive(Clone, Debug, PartialEq)]
pub struct DdpgConfig {
    /// Hidden layer widths shared by actor and critic.
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Target tracking rate τ.
    pub tau: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub buffer_capacity: usize,
    /// Multiplier applied to rewards inside the critic target only.
    pub reward_scale: f64,
    pub noise: NoiseConfig,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            hidden: vec![400, 300],
            actor_lr: 2.5e-5,
            critic_lr: 2.5e-4,
            tau: 0.1,
            gamma: 0.99,
            batch_size: 64,
            warmup: 1000,
            buffer_capacity: 1_000_000,
            reward_scale: 1.0,
            noise: NoiseConfig::default(),
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!(
                "hidden sizes must be positive, got {:?}",
                self.hidden
            ));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau must be in [0, 1], got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.buffer_capacity < self.batch_size {
            return bad(format!(
                "buffer_capacity {} is smaller than batch_size {}",
                self.buffer_capacity, self.batch_size
            ));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad(format!(
                "reward_scale must be positive, got {}",
                self.reward_scale
            ));
        }
        let n = &self.noise;
        if !(n.sigma >= 0.0 && n.floor >= 0.0 && n.decay > 0.0 && n.decay <= 1.0) {
            return bad(format!("invalid exploration schedule {n:?}"));
        }
        if let NoiseKind::OrnsteinUhlenbeck { theta } = n.kind {
            if !(0.0..=1.0).contains(&theta) {
                return bad(format!("OU theta must be in [0, 1], got {theta}"));
            }
        }
        Ok(())
    }
}

/// `a = mid + half · tanh(z)`, mapping the real line onto the forcing bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Squash {
    mid: f64,
    half: f64,
}

impl Squash {
    pub fn new(bounds: (f64, f64)) -> Self {
        Self {
            mid: 0.5 * (bounds.0 + bounds.1),
            half: 0.5 * (bounds.1 - bounds.0),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.mid - self.half, self.mid + self.half)
    }

    pub fn apply(&self, z: f64) -> f64 {
        (self.mid + self.half * z.tanh()).clamp(self.mid - self.half, self.mid + self.half)
    }

    pub fn derivative(&self, z: f64) -> f64 {
        let t = z.tanh();
        self.half * (1.0 - t * t)
    }
}

/// Anything that scores state-action batches and exposes `∂Q/∂a`.
pub trait ActionValue {
    /// Per-row `Q(s, a)` and `∂Q/∂a`.
    fn value_and_action_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)>;
}

/// A critic network over `[s, a]`.
pub struct MlpCritic<'a>(pub &'a Mlp);

impl ActionValue for MlpCritic<'_> {
    fn value_and_action_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        let input = critic_input(states, actions)?;
        let cache = self.0.forward_cached(input.view())?;
        let q = cache.output().column(0).to_owned();
        let ones = Array2::ones((input.nrows(), 1));
        let d_input = self.0.input_gradient(&cache, ones.view())?;
        let k = actions.ncols();
        let d_action = d_input
            .slice(s![.., states.ncols()..states.ncols() + k])
            .to_owned();
        Ok((q, d_action))
    }
}

fn critic_input(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
    concatenate(Axis(1), &[states, actions]).map_err(|e| Error::Shape(e.to_string()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    /// Mean squared TD error before the critic step.
    pub critic_loss: f64,
    /// Mean `Q(s, μ(s))` before the actor step.
    pub actor_objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub tau: f64,
    pub gamma: f64,
    pub reward_scale: f64,
    squash: Squash,
}

impl Agent {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        f_bounds: (f64, f64),
        config: &DdpgConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        if !(f_bounds.0 < f_bounds.1) {
            return Err(Error::InvalidConfig(format!(
                "empty forcing bounds {f_bounds:?}"
            )));
        }
        let sizes = |input: usize, output: usize| {
            std::iter::once(input)
                .chain(config.hidden.iter().copied())
                .chain(std::iter::once(output))
                .collect::<Vec<_>>()
        };
        let actor = Mlp::new(&sizes(state_dim, action_dim), rng)?;
        let critic = Mlp::new(&sizes(state_dim + action_dim, 1), rng)?;
        Ok(Self {
            actor_opt: Adam::new(&actor, config.actor_lr),
            critic_opt: Adam::new(&critic, config.critic_lr),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            tau: config.tau,
            gamma: config.gamma,
            reward_scale: config.reward_scale,
            squash: Squash::new(f_bounds),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn squash(&self) -> Squash {
        self.squash
    }

    pub fn f_bounds(&self) -> (f64, f64) {
        self.squash.bounds()
    }

    fn actions_from(&self, actor: &Mlp, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut a = actor.forward(states)?;
        a.mapv_inplace(|z| self.squash.apply(z));
        Ok(a)
    }

    /// Greedy action `μ(s)`.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        let z = self.actor.forward_one(state)?;
        Ok(z.into_iter().map(|z| self.squash.apply(z)).collect())
    }

    /// `μ(s) + noise`, clamped to the forcing bounds.
    pub fn act_with_noise(&self, state: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        let (lo, hi) = self.squash.bounds();
        Ok(self
            .act(state)?
            .into_iter()
            .zip(noise)
            .map(|(a, n)| (a + n).clamp(lo, hi))
            .collect())
    }

    pub fn q_value(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let row: Vec<f64> = state.iter().chain(action).copied().collect();
        Ok(self.critic.forward_one(&row)?[0])
    }

    pub fn target_q_value(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let row: Vec<f64> = state.iter().chain(action).copied().collect();
        Ok(self.target_critic.forward_one(&row)?[0])
    }

    /// `y = scale·r + γ·(1 - done)·Q'(s', μ'(s'))`, from target networks only.
    pub fn critic_targets(&self, batch: &Batch) -> Result<Array1<f64>> {
        if batch.is_empty() {
            return Err(Error::InsufficientReplay { len: 0, batch: 1 });
        }
        let next_actions = self.actions_from(&self.target_actor, batch.next_states.view())?;
        let input = critic_input(batch.next_states.view(), next_actions.view())?;
        let q_next = self.target_critic.forward(input.view())?;
        let mut y = Array1::zeros(batch.len());
        Zip::from(&mut y)
            .and(&batch.rewards)
            .and(&batch.dones)
            .and(q_next.column(0))
            .for_each(|y, &r, &d, &q| {
                *y = if d > 0.0 {
                    self.reward_scale * r
                } else {
                    self.reward_scale * r + self.gamma * q
                };
            });
        Ok(y)
    }

    /// One Adam step on the mean squared TD error; returns the loss before it.
    pub fn critic_step(&mut self, batch: &Batch) -> Result<f64> {
        let y = self.critic_targets(batch)?;
        let input = critic_input(batch.states.view(), batch.actions.view())?;
        let cache = self.critic.forward_cached(input.view())?;
        let q = cache.output().column(0);
        let n = batch.len() as f64;
        let diff = &q - &y;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
        let upstream = (diff * (2.0 / n)).insert_axis(Axis(1));
        let (grads, _) = self.critic.backward(&cache, upstream.view())?;
        self.critic_opt.step(&mut self.critic, &grads)?;
        Ok(loss)
    }

    /// One Adam step ascending the mean of `critic(s, μ(s))`; returns the
    /// objective before the step.
    pub fn actor_step_with(
        &mut self,
        critic: &impl ActionValue,
        states: ArrayView2<f64>,
    ) -> Result<f64> {
        actor_step(
            &mut self.actor,
            &mut self.actor_opt,
            self.squash,
            critic,
            states,
        )
    }

    /// Critic step, actor step against the updated critic, then target
    /// tracking.
    pub fn update_on_batch(&mut self, batch: &Batch) -> Result<UpdateStats> {
        let critic_loss = self.critic_step(batch)?;
        let actor_objective = actor_step(
            &mut self.actor,
            &mut self.actor_opt,
            self.squash,
            &MlpCritic(&self.critic),
            batch.states.view(),
        )?;
        self.soft_update()?;
        Ok(UpdateStats {
            critic_loss,
            actor_objective,
        })
    }

    pub fn update(
        &mut self,
        buffer: &ReplayBuffer,
        batch_size: usize,
        rng: &mut Rng,
    ) -> Result<UpdateStats> {
        let batch = buffer.sample(batch_size, rng)?;
        self.update_on_batch(&batch)
    }

    /// `θ' ← τθ + (1 - τ)θ'` for both target networks.
    pub fn soft_update(&mut self) -> Result<()> {
        self.target_actor.soft_update_from(&self.actor, self.tau)?;
        self.target_critic.soft_update_from(&self.critic, self.tau)
    }

    const MAGIC: &'static [u8; 8] = b"SBEAGT01";

    /// Agent checkpoint: header with the forcing bounds and update
    /// constants, then actor, critic and both targets in the network format.
    /// Optimizer moments are not stored.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        let (lo, hi) = self.squash.bounds();
        for v in [lo, hi, self.tau, self.gamma, self.reward_scale] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.actor_opt.lr.to_le_bytes())?;
        w.write_all(&self.critic_opt.lr.to_le_bytes())?;
        for net in [
            &self.actor,
            &self.critic,
            &self.target_actor,
            &self.target_critic,
        ] {
            net.write_to(&mut w)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Checkpoint("not an agent checkpoint".into()));
        }
        let mut header = [0.0; 7];
        for v in &mut header {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        let [lo, hi, tau, gamma, reward_scale, actor_lr, critic_lr] = header;
        let actor = Mlp::read_from(&mut r)?;
        let critic = Mlp::read_from(&mut r)?;
        let target_actor = Mlp::read_from(&mut r)?;
        let target_critic = Mlp::read_from(&mut r)?;
        if critic.input_dim() != actor.input_dim() + actor.output_dim()
            || critic.output_dim() != 1
            || target_actor.sizes() != actor.sizes()
            || target_critic.sizes() != critic.sizes()
        {
            return Err(Error::Checkpoint("actor and critic shapes disagree".into()));
        }
        if !(lo < hi) {
            return Err(Error::Checkpoint(format!(
                "bad forcing bounds [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            actor_opt: Adam::new(&actor, actor_lr),
            critic_opt: Adam::new(&critic, critic_lr),
            actor,
            critic,
            target_actor,
            target_critic,
            tau,
            gamma,
            reward_scale,
            squash: Squash::new((lo, hi)),
        })
    }
}

/// Gradient of `-mean_s critic(s, squash(actor(s)))` with respect to the
/// actor parameters, and the objective `mean Q` at the current parameters.
pub fn actor_gradient(
    actor: &Mlp,
    squash: Squash,
    critic: &impl ActionValue,
    states: ArrayView2<f64>,
) -> Result<(f64, Gradients)> {
    let cache = actor.forward_cached(states)?;
    let z = cache.output();
    let actions = z.mapv(|z| squash.apply(z));
    let (q, dq_da) = critic.value_and_action_grad(states, actions.view())?;
    let n = states.nrows() as f64;
    let objective = q.sum() / n;
    // upstream = -(1/n) ∂Q/∂a · ∂a/∂z
    let mut upstream = dq_da;
    Zip::from(&mut upstream)
        .and(z)
        .for_each(|g, &z| *g = -*g * squash.derivative(z) / n);
    let (grads, _) = actor.backward(&cache, upstream.view())?;
    Ok((objective, grads))
}

fn actor_step(
    actor: &mut Mlp,
    opt: &mut Adam,
    squash: Squash,
    critic: &impl ActionValue,
    states: ArrayView2<f64>,
) -> Result<f64> {
    let (objective, grads) = actor_gradient(actor, squash, critic, states)?;
    opt.step(actor, &grads)?;
    Ok(objective)
}

impl Policy for Agent {
    fn name(&self) -> &str {
        "ddpg"
    }

    fn action(&self, state: &Field) -> Result<Vec<f64>> {
        self.act(state.values())
    }
}
