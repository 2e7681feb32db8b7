//! Reference controllers over the same piecewise-constant action class as
//! the agent.

use crate::env::{EnvConfig, Partition};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Summary};
use crate::grid::Field;
use crate::rng::Seeds;

/// A state-feedback policy emitting `k` forcing coefficients.
pub trait Policy: Sync {
    fn name(&self) -> &str;
    fn action(&self, state: &Field) -> Result<Vec<f64>>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn action(&self, state: &Field) -> Result<Vec<f64>> {
        (**self).action(state)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn action(&self, state: &Field) -> Result<Vec<f64>> {
        (**self).action(state)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Uncontrolled {
    pub action_dim: usize,
}

impl Policy for Uncontrolled {
    fn name(&self) -> &str {
        "uncontrolled"
    }

    fn action(&self, _state: &Field) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.action_dim])
    }
}

/// Proportional opposition to the deviation of each interval mean from the
/// spatial mean: `a_j = -κ (mean_j(u) - ū)`, clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackController {
    gain: f64,
    partition: Partition,
    f_bounds: (f64, f64),
    name: String,
}

impl FeedbackController {
    pub fn new(
        gain: f64,
        n_points: usize,
        action_dim: usize,
        f_bounds: (f64, f64),
    ) -> Result<Self> {
        if !(gain >= 0.0 && gain.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "feedback gain must be finite and >= 0, got {gain}"
            )));
        }
        if !(f_bounds.0 < f_bounds.1) {
            return Err(Error::InvalidConfig(format!(
                "empty forcing bounds {f_bounds:?}"
            )));
        }
        Ok(Self {
            gain,
            partition: Partition::new(n_points, action_dim)?,
            f_bounds,
            name: "feedback".into(),
        })
    }

    pub fn for_env(gain: f64, config: &EnvConfig) -> Result<Self> {
        Self::new(
            gain,
            config.sbe.grid.n_points(),
            config.action_dim,
            config.f_bounds,
        )
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl Policy for FeedbackController {
    fn name(&self) -> &str {
        &self.name
    }

    fn action(&self, state: &Field) -> Result<Vec<f64>> {
        let means = self.partition.interval_means(state)?;
        let ubar = state.spatial_mean()?;
        let (lo, hi) = self.f_bounds;
        Ok(means
            .into_iter()
            .map(|m| (-self.gain * (m - ubar)).clamp(lo, hi))
            .collect())
    }
}

pub const DEFAULT_GAINS: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0];

#[derive(Clone, Debug, PartialEq)]
pub struct GainSearch {
    pub best: f64,
    /// Mean return per candidate, in candidate order.
    pub scores: Vec<(f64, Summary)>,
}

/// Grid search over `gains` on shared evaluation seeds. Ties go to the
/// smallest gain.
pub fn tune_gain(
    config: &EnvConfig,
    gains: &[f64],
    episodes: usize,
    seeds: Seeds,
) -> Result<GainSearch> {
    if gains.is_empty() {
        return Err(Error::InvalidConfig("no candidate gains".into()));
    }
    let mut scores = Vec::with_capacity(gains.len());
    for &g in gains {
        let policy = FeedbackController::for_env(g, config)?;
        let results = evaluate(config, &policy, seeds, episodes)?;
        scores.push((g, Summary::of(policy.name(), &results)?));
    }
    let mut best = (f64::INFINITY, f64::NEG_INFINITY);
    for (g, s) in &scores {
        if s.mean > best.1 || (s.mean == best.1 && *g < best.0) {
            best = (*g, s.mean);
        }
    }
    Ok(GainSearch {
        best: best.0,
        scores,
    })
}
