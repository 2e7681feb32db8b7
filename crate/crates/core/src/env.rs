//! The shock-damping control problem as a discounted MDP.
//!
//! State is the sampled velocity `u(·, t)`, an action is `k` forcing
//! coefficients expanded to a piecewise-constant field, and the reward is
//!
//! ```text
//! r = -[ ½ ∫_Ωc (u - ū)² dx + ½ λ ∫_Ωc f² dx ]
//! ```
//!
//! evaluated on the post-step state with `ū` the spatial mean of `u` over
//! the control sub-domain. One MDP step is one solver step.

use std::f64::consts::TAU;
use std::ops::Range;

use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::rng::Rng;
use crate::solver::{steps_for, SbeConfig, SbeSolver, SolverState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialProfile {
    /// `offset + amplitude · sin(x)`
    Sine {
        amplitude: f64,
        offset: f64,
    },
    Constant(f64),
}

impl InitialProfile {
    pub fn sample(&self, grid: Grid) -> Result<Field> {
        match *self {
            InitialProfile::Sine { amplitude, offset } => {
                Field::from_fn(grid, |x| offset + amplitude * x.sin())
            }
            InitialProfile::Constant(c) => Field::new(grid, vec![c; grid.n_points()]),
        }
    }
}

impl Default for InitialProfile {
    fn default() -> Self {
        InitialProfile::Sine {
            amplitude: 4.0,
            offset: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub sbe: SbeConfig,
    pub t_start: f64,
    pub t_end: f64,
    /// Number of piecewise-constant forcing intervals `k`.
    pub action_dim: usize,
    pub f_bounds: (f64, f64),
    /// Action-cost weight λ.
    pub lambda: f64,
    pub gamma: f64,
    /// Controlled sub-domain `[a, b] ⊆ [0, 2π]`.
    pub control_domain: (f64, f64),
    pub initial: InitialProfile,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            sbe: SbeConfig::default(),
            t_start: 0.0,
            t_end: 2.0,
            action_dim: 4,
            f_bounds: (-10.0, 10.0),
            lambda: 0.2,
            gamma: 0.99,
            control_domain: (0.0, TAU),
            initial: InitialProfile::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.sbe.validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.action_dim < 1 || self.action_dim > self.sbe.grid.n_points() {
            return bad(format!(
                "action_dim must be in 1..={}, got {}",
                self.sbe.grid.n_points(),
                self.action_dim
            ));
        }
        if !(self.t_end > self.t_start) {
            return bad(format!(
                "t_end {} must exceed t_start {}",
                self.t_end, self.t_start
            ));
        }
        steps_for(self.t_end - self.t_start, self.sbe.dt)?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.f_bounds.0 < self.f_bounds.1) {
            return bad(format!("f bounds {:?} are empty", self.f_bounds));
        }
        self.control_nodes()?;
        self.initial.sample(self.sbe.grid)?;
        Ok(())
    }

    pub fn n_steps(&self) -> Result<u64> {
        steps_for(self.t_end - self.t_start, self.sbe.dt)
    }

    pub fn control_nodes(&self) -> Result<Range<usize>> {
        self.sbe
            .grid
            .node_range(self.control_domain.0, self.control_domain.1)
    }
}

/// Split of the grid's cells into `k` near-equal contiguous intervals:
/// interval `j` covers cells `⌊n·j/k⌋ .. ⌊n·(j+1)/k⌋`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    ranges: Vec<Range<usize>>,
}

impl Partition {
    pub fn new(n_points: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyAction);
        }
        if k > n_points {
            return Err(Error::InvalidConfig(format!(
                "{k} intervals do not fit on {n_points} cells"
            )));
        }
        let ranges = (0..k)
            .map(|j| (n_points * j / k)..(n_points * (j + 1) / k))
            .collect();
        Ok(Self { ranges })
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    /// Interval index containing node `i`.
    pub fn interval_of(&self, i: usize) -> usize {
        self.ranges.partition_point(|r| r.end <= i)
    }

    pub fn expand(&self, coeffs: &[f64], grid: Grid, f_bounds: (f64, f64)) -> Result<Field> {
        if coeffs.is_empty() {
            return Err(Error::EmptyAction);
        }
        if coeffs.len() != self.ranges.len() {
            return Err(Error::Shape(format!(
                "expected {} action coefficients, got {}",
                self.ranges.len(),
                coeffs.len()
            )));
        }
        let n = self.ranges.last().map_or(0, |r| r.end);
        if n != grid.n_points() {
            return Err(Error::Shape(format!(
                "partition covers {n} cells but the grid has {}",
                grid.n_points()
            )));
        }
        let mut values = vec![0.0; n];
        for (range, &c) in self.ranges.iter().zip(coeffs) {
            if !c.is_finite() {
                return Err(Error::NonFinite {
                    index: range.start,
                    value: c,
                });
            }
            values[range.clone()].fill(c.clamp(f_bounds.0, f_bounds.1));
        }
        Field::new(grid, values)
    }

    /// Mean of `field` over each interval.
    pub fn interval_means(&self, field: &Field) -> Result<Vec<f64>> {
        self.ranges
            .iter()
            .map(|r| field.mean_over(r.clone()))
            .collect()
    }
}

/// Expand `k` coefficients into a piecewise-constant field on `[0, 2π)`,
/// clamping each coefficient to `f_bounds` first.
pub fn expand_action(coeffs: &[f64], grid: Grid, f_bounds: (f64, f64)) -> Result<Field> {
    if coeffs.is_empty() {
        return Err(Error::EmptyAction);
    }
    Partition::new(grid.n_points(), coeffs.len())?.expand(coeffs, grid, f_bounds)
}

/// The two non-negative parts of the per-step cost.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepCost {
    /// `½ ∫_Ωc (u - ū)² dx`
    pub state: f64,
    /// `½ λ ∫_Ωc f² dx`
    pub action: f64,
}

impl StepCost {
    pub fn reward(&self) -> f64 {
        -(self.state + self.action)
    }
}

pub fn step_cost(u: &Field, f: &Field, config: &EnvConfig) -> Result<StepCost> {
    if u.grid() != f.grid() {
        return Err(Error::Shape(
            "state and forcing live on different grids".into(),
        ));
    }
    let nodes = config.control_nodes()?;
    let mean = u.mean_over(nodes.clone())?;
    Ok(StepCost {
        state: 0.5 * u.centered_l2_sq_over(nodes.clone(), mean)?,
        action: 0.5 * config.lambda * f.l2_sq_over(nodes)?,
    })
}

pub fn reward(u: &Field, f: &Field, config: &EnvConfig) -> Result<f64> {
    Ok(step_cost(u, f, config)?.reward())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Field,
    /// Coefficients actually applied, after clamping.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Field,
    pub done: bool,
    pub cost: StepCost,
    /// Time at `next_state`.
    pub t: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Returns {
    pub discounted: f64,
    pub undiscounted: f64,
}

pub fn episode_return(rewards: &[f64], gamma: f64) -> Returns {
    let mut discount = 1.0;
    let mut out = Returns::default();
    for &r in rewards {
        out.discounted += discount * r;
        out.undiscounted += r;
        discount *= gamma;
    }
    out
}

#[derive(Clone, Debug)]
pub struct Environment {
    config: EnvConfig,
    solver: SbeSolver,
    partition: Partition,
    control: Range<usize>,
    n_steps: u64,
    state: Option<SolverState>,
}

impl Environment {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let solver = SbeSolver::new(config.sbe.clone())?;
        let partition = Partition::new(config.sbe.grid.n_points(), config.action_dim)?;
        let control = config.control_nodes()?;
        let n_steps = config.n_steps()?;
        Ok(Self {
            config,
            solver,
            partition,
            control,
            n_steps,
            state: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn grid(&self) -> Grid {
        self.config.sbe.grid
    }

    pub fn state_dim(&self) -> usize {
        self.config.sbe.grid.n_points()
    }

    pub fn action_dim(&self) -> usize {
        self.config.action_dim
    }

    pub fn n_steps(&self) -> u64 {
        self.n_steps
    }

    pub fn t(&self) -> Option<f64> {
        self.state.as_ref().map(SolverState::t)
    }

    pub fn is_done(&self) -> bool {
        self.state
            .as_ref()
            .is_some_and(|s| s.steps() >= self.n_steps)
    }

    /// Start a new episode from the configured initial profile; `seed` drives
    /// the solver noise for the whole episode.
    pub fn reset(&mut self, seed: u64) -> Field {
        let u0 = self
            .config
            .initial
            .sample(self.config.sbe.grid)
            .expect("initial profile validated at construction");
        let state = self
            .solver
            .init(u0.clone(), self.config.t_start, Rng::seed_from_u64(seed))
            .expect("initial profile is on the solver grid");
        self.state = Some(state);
        u0
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Transition> {
        let done_before = self.is_done();
        let state = self.state.as_mut().ok_or(Error::NotReset)?;
        if done_before {
            return Err(Error::EpisodeFinished);
        }
        let forcing = self
            .partition
            .expand(action, self.config.sbe.grid, self.config.f_bounds)?;
        let before = state.u().clone();
        self.solver.step(state, &forcing)?;
        let next_state = state.u().clone();

        let mean = next_state.mean_over(self.control.clone())?;
        let cost = StepCost {
            state: 0.5 * next_state.centered_l2_sq_over(self.control.clone(), mean)?,
            action: 0.5 * self.config.lambda * forcing.l2_sq_over(self.control.clone())?,
        };
        let (lo, hi) = self.config.f_bounds;
        Ok(Transition {
            state: before,
            action: action.iter().map(|a| a.clamp(lo, hi)).collect(),
            reward: cost.reward(),
            next_state,
            done: state.steps() >= self.n_steps,
            cost,
            t: state.t(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::periodic(150).unwrap()
    }

    #[test]
    fn zero_coefficients_give_zero_field() {
        let f = expand_action(&[0.0; 4], grid(), (-10.0, 10.0)).unwrap();
        assert!(f.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn value_at_pi_is_third_coefficient() {
        let g = grid();
        let f = expand_action(&[1.0, 2.0, 3.0, 4.0], g, (-10.0, 10.0)).unwrap();
        let i = (PI / g.dx()).round() as usize;
        assert!((g.x(i) - PI).abs() < 1e-12);
        assert_eq!(f.values()[i], 3.0);
    }

    #[test]
    fn coefficients_are_clamped_to_forcing_bounds() {
        let f = expand_action(&[20.0, -20.0, 0.0, 0.0], grid(), (-10.0, 10.0)).unwrap();
        let p = Partition::new(150, 4).unwrap();
        assert_eq!(p.interval_means(&f).unwrap(), vec![10.0, -10.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_and_non_finite_actions_are_rejected() {
        assert!(matches!(
            expand_action(&[], grid(), (-1.0, 1.0)),
            Err(Error::EmptyAction)
        ));
        assert!(expand_action(&[f64::NAN], grid(), (-1.0, 1.0)).is_err());
    }

    #[test]
    fn seven_intervals_differ_by_at_most_one_cell() {
        let p = Partition::new(150, 7).unwrap();
        let sizes: Vec<usize> = p.ranges().iter().map(|r| r.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 150);
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(hi - lo <= 1, "{sizes:?}");
        assert_eq!(p.ranges()[0], 0..21);
        assert_eq!(p.interval_of(0), 0);
        assert_eq!(p.interval_of(149), 6);
        assert_eq!(p.interval_of(21), 1);
    }

    #[test]
    fn expansion_is_idempotent_on_interval_means() {
        let g = grid();
        let p = Partition::new(150, 7).unwrap();
        let f = p
            .expand(&[1.0, -2.0, 3.5, 0.0, -7.25, 9.0, 0.5], g, (-10.0, 10.0))
            .unwrap();
        let means = p.interval_means(&f).unwrap();
        let again = p.expand(&means, g, (-10.0, 10.0)).unwrap();
        for (a, b) in f.values().iter().zip(again.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_state_without_forcing_has_zero_reward() {
        let cfg = EnvConfig::default();
        let u = Field::constant(grid(), 2.5);
        assert_eq!(reward(&u, &Field::zeros(grid()), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn sine_state_reward_is_minus_half_pi() {
        let cfg = EnvConfig::default();
        let u = Field::from_fn(grid(), f64::sin).unwrap();
        let r = reward(&u, &Field::zeros(grid()), &cfg).unwrap();
        assert!((r + 0.5 * PI).abs() < 1e-10, "{r}");
    }

    #[test]
    fn unit_forcing_costs_lambda_pi() {
        let cfg = EnvConfig::default();
        let u = Field::constant(grid(), -1.0);
        let r = reward(&u, &Field::constant(grid(), 1.0), &cfg).unwrap();
        assert!((r + 0.2 * PI).abs() < 1e-12, "{r}");
    }

    #[test]
    fn sub_domain_restricts_both_terms() {
        let cfg = EnvConfig {
            control_domain: (0.0, PI),
            ..EnvConfig::default()
        };
        let u = Field::from_fn(grid(), |x| if x < PI { 0.0 } else { x.sin() * 5.0 }).unwrap();
        let f = Field::from_fn(grid(), |x| if x < PI { 0.0 } else { 3.0 }).unwrap();
        assert_eq!(reward(&u, &f, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn returns_discounted_and_undiscounted() {
        assert_eq!(episode_return(&[0.0; 10], 0.99), Returns::default());
        let r = episode_return(&[-1.0, -1.0], 0.99);
        assert!((r.discounted + 1.99).abs() < 1e-15);
        assert_eq!(r.undiscounted, -2.0);
    }

    #[test]
    fn reset_is_deterministic_and_starts_at_t0() {
        let mut env = Environment::new(EnvConfig::default()).unwrap();
        let a = env.reset(11);
        let b = env.reset(11);
        assert_eq!(a, b);
        assert_eq!(env.t(), Some(0.0));
        for (x, v) in grid().nodes().zip(a.values()) {
            assert!((v - 4.0 * x.sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn episode_has_two_hundred_steps() {
        let mut env = Environment::new(EnvConfig::default()).unwrap();
        env.reset(0);
        let mut n = 0;
        loop {
            let tr = env.step(&[0.0; 4]).unwrap();
            n += 1;
            assert!(tr.reward <= 0.0);
            if tr.done {
                assert!((tr.t - 2.0).abs() < 1e-12);
                break;
            }
        }
        assert_eq!(n, 200);
        assert!(matches!(env.step(&[0.0; 4]), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn stepping_before_reset_fails() {
        let mut env = Environment::new(EnvConfig::default()).unwrap();
        assert!(matches!(env.step(&[0.0; 4]), Err(Error::NotReset)));
    }

    #[test]
    fn zero_action_on_constant_state_is_a_fixed_point() {
        let cfg = EnvConfig {
            sbe: SbeConfig {
                epsilon: 0.0,
                ..SbeConfig::default()
            },
            initial: InitialProfile::Constant(1.5),
            ..EnvConfig::default()
        };
        let mut env = Environment::new(cfg).unwrap();
        let s0 = env.reset(3);
        let tr = env.step(&[0.0; 4]).unwrap();
        assert_eq!(tr.reward, 0.0);
        assert_eq!(tr.next_state, s0);
    }

    #[test]
    fn config_validation() {
        let ok = EnvConfig::default();
        ok.validate().unwrap();
        assert!(EnvConfig {
            action_dim: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(EnvConfig {
            t_end: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(EnvConfig {
            gamma: 1.5,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(EnvConfig {
            lambda: -0.1,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(EnvConfig {
            t_end: 2.005,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(EnvConfig {
            control_domain: (1.0, 9.0),
            ..ok
        }
        .validate()
        .is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-8.0..8.0f64, 150)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn reward_ignores_constant_shift(u in field(), a in prop::collection::vec(-10.0..10.0f64, 4), c in -5.0..5.0f64) {
                let cfg = EnvConfig::default();
                let g = grid();
                let f = expand_action(&a, g, cfg.f_bounds).unwrap();
                let u1 = Field::new(g, u.clone()).unwrap();
                let u2 = Field::new(g, u.iter().map(|v| v + c).collect()).unwrap();
                let (r1, r2) = (reward(&u1, &f, &cfg).unwrap(), reward(&u2, &f, &cfg).unwrap());
                prop_assert!((r1 - r2).abs() < 1e-10, "{} vs {}", r1, r2);
            }

            #[test]
            fn reward_is_translation_invariant(u in field(), f in field(), shift in -150isize..150) {
                let cfg = EnvConfig::default();
                let g = grid();
                let (u, f) = (Field::new(g, u).unwrap(), Field::new(g, f).unwrap());
                let r1 = reward(&u, &f, &cfg).unwrap();
                let r2 = reward(&u.rotated(shift), &f.rotated(shift), &cfg).unwrap();
                prop_assert!((r1 - r2).abs() < 1e-10);
            }

            #[test]
            fn action_penalty_is_separable(u in field(), f in field()) {
                let cfg = EnvConfig::default();
                let g = grid();
                let (u, f) = (Field::new(g, u).unwrap(), Field::new(g, f).unwrap());
                let lhs = reward(&u, &f, &cfg).unwrap();
                let rhs = reward(&u, &Field::zeros(g), &cfg).unwrap() - 0.5 * cfg.lambda * f.l2_sq().unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }

    #[test]
    fn reward_drops_quadratically_with_amplitude() {
        let cfg = EnvConfig::default();
        let z = Field::zeros(grid());
        let r: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|a| reward(&Field::from_fn(grid(), |x| a * x.sin()).unwrap(), &z, &cfg).unwrap())
            .collect();
        assert!(r[0] > r[1] && r[1] > r[2]);
        assert!((r[1] / r[0] - 4.0).abs() < 1e-10);
        assert!((r[2] / r[0] - 16.0).abs() < 1e-10);
    }
}
