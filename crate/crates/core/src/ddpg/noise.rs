use rand_distr::{Distribution, StandardNormal};

use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    Gaussian,
    /// Ornstein-Uhlenbeck with mean reversion `theta` per step.
    OrnsteinUhlenbeck {
        theta: f64,
    },
}

/// Exploration schedule: per-episode scale `max(sigma · decay^episode, floor)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sigma: 1.0,
            decay: 0.999,
            floor: 0.05,
        }
    }
}

impl NoiseConfig {
    pub fn scale(&self, episode: usize) -> f64 {
        (self.sigma * self.decay.powi(episode as i32)).max(self.floor)
    }
}

#[derive(Clone, Debug)]
pub struct ExplorationNoise {
    config: NoiseConfig,
    scale: f64,
    state: Vec<f64>,
}

impl ExplorationNoise {
    pub fn new(config: NoiseConfig, dim: usize) -> Self {
        Self {
            config,
            scale: config.scale(0),
            state: vec![0.0; dim],
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Set the episode's scale and reset any process memory.
    pub fn begin_episode(&mut self, episode: usize) {
        self.scale = self.config.scale(episode);
        self.state.fill(0.0);
    }

    pub fn sample(&mut self, rng: &mut Rng) -> Vec<f64> {
        let scale = self.scale;
        match self.config.kind {
            NoiseKind::Gaussian => (0..self.state.len())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    scale * z
                })
                .collect(),
            NoiseKind::OrnsteinUhlenbeck { theta } => {
                for x in &mut self.state {
                    let z: f64 = StandardNormal.sample(rng);
                    *x += -theta * *x + z;
                }
                self.state.iter().map(|x| scale * x).collect()
            }
        }
    }
}
