//! Measurements shared by the crate tests and the acceptance suite. Each
//! returns numbers; the callers decide the tolerance.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use sbe_control::ddpg::{actor_gradient, ActionValue, MlpCritic, ReplayBuffer, Squash};
use sbe_control::nn::Mlp;
use sbe_control::rng::Rng;
use sbe_control::solver::{run_free_evolution, sample_noise};
use sbe_control::{Agent, DdpgConfig, Field, Grid, SbeConfig};

use super::oracles;

#[derive(Debug)]
pub struct Convergence {
    pub n: [usize; 3],
    pub errors: [f64; 3],
    pub orders: [f64; 2],
}

/// Max-norm error of the solver against a 2400-node RK4 reference for a
/// smooth viscous solution, on three nested grids.
pub fn spatial_convergence() -> Convergence {
    let (nu, amp, t_end, dt) = (0.1, 1.0, 0.5, 1e-3);
    let fine_n = 2400;
    let fine = oracles::burgers_rk4(
        |x| amp * x.sin(),
        nu,
        fine_n,
        t_end,
        oracles::rk4_dt(nu, fine_n, amp),
    );
    let n = [75, 150, 300];
    let mut errors = [0.0; 3];
    for (e, &n) in errors.iter_mut().zip(&n) {
        let grid = Grid::periodic(n).unwrap();
        let cfg = SbeConfig {
            nu,
            epsilon: 0.0,
            dt,
            grid,
            ..SbeConfig::default()
        };
        let u0 = Field::from_fn(grid, |x| amp * x.sin()).unwrap();
        let run = run_free_evolution(u0, &cfg, t_end, &[t_end], Rng::seed_from_u64(0)).unwrap();
        *e = oracles::max_error_on_coarse(run.snapshots[0].1.values(), &fine);
    }
    let orders = [
        (errors[0] / errors[1]).log2(),
        (errors[1] / errors[2]).log2(),
    ];
    Convergence { n, errors, orders }
}

#[derive(Debug)]
pub struct Conservation {
    pub steps: usize,
    pub max_momentum_change: f64,
    /// Largest step-to-step energy increase; non-positive means monotone.
    pub max_energy_increase: f64,
}

/// Deterministic, unforced evolution of `amp·sin(x)` with the default
/// viscosity over the default horizon.
pub fn conservation(amp: f64) -> Conservation {
    let cfg = SbeConfig {
        epsilon: 0.0,
        ..SbeConfig::default()
    };
    let u0 = Field::from_fn(cfg.grid, |x| amp * x.sin()).unwrap();
    let run = run_free_evolution(u0, &cfg, 2.0, &[], Rng::seed_from_u64(0)).unwrap();
    let d = &run.diagnostics;
    let mut out = Conservation {
        steps: d.len() - 1,
        max_momentum_change: 0.0,
        max_energy_increase: f64::NEG_INFINITY,
    };
    for w in d.windows(2) {
        out.max_momentum_change = out
            .max_momentum_change
            .max((w[1].momentum - w[0].momentum).abs());
        out.max_energy_increase = out.max_energy_increase.max(w[1].energy - w[0].energy);
    }
    out
}

#[derive(Debug)]
pub struct NoiseVariance {
    pub measured: f64,
    pub expected: f64,
    /// Standard error of the sample variance under the Gaussian model.
    pub standard_error: f64,
}

impl NoiseVariance {
    pub fn z(&self) -> f64 {
        (self.measured - self.expected) / self.standard_error
    }
}

/// Sample variance at node `node` over `samples` independent draws of the
/// per-step noise increment.
pub fn noise_variance(cfg: &SbeConfig, node: usize, samples: usize, seed: u64) -> NoiseVariance {
    let mut rng = Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..samples)
        .map(|_| sample_noise(cfg, &mut rng).values()[node])
        .collect();
    let (_, var) = oracles::mean_var(&xs);
    let expected = cfg.epsilon * cfg.epsilon * cfg.dt / cfg.grid.dx();
    NoiseVariance {
        measured: var,
        expected,
        standard_error: expected * (2.0 / (samples as f64 - 1.0)).sqrt(),
    }
}

#[derive(Debug)]
pub struct NoiseScaling {
    pub dts: Vec<f64>,
    pub variances: Vec<f64>,
    pub slope: f64,
    pub expected_slope: f64,
    pub r2: f64,
}

/// Pooled noise variance as a function of `dt`, with a least-squares line.
pub fn noise_dt_scaling(samples_per_dt: usize, seed: u64) -> NoiseScaling {
    let dts = vec![0.001, 0.002, 0.005, 0.01, 0.02];
    let base = SbeConfig::default();
    let variances: Vec<f64> = dts
        .iter()
        .enumerate()
        .map(|(i, &dt)| {
            let cfg = SbeConfig { dt, ..base.clone() };
            let mut rng = Rng::seed_from_u64(seed + i as u64);
            let mut xs = Vec::with_capacity(samples_per_dt * cfg.grid.n_points());
            for _ in 0..samples_per_dt {
                xs.extend_from_slice(sample_noise(&cfg, &mut rng).values());
            }
            oracles::mean_var(&xs).1
        })
        .collect();
    let (_, slope, r2) = oracles::linear_fit(&dts, &variances);
    NoiseScaling {
        expected_slope: base.epsilon * base.epsilon / base.grid.dx(),
        dts,
        variances,
        slope,
        r2,
    }
}

/// Zero biases put a whole layer's pre-activations exactly on the ReLU kink
/// whenever the previous layer is dead, where differences are one-sided.
fn randomize_biases(net: &mut Mlp, rng: &mut Rng) {
    for l in net.layers_mut() {
        l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
}

/// Pooled variance over combinations of `dt` and grid size, regressed on
/// `dt/dx`. Returns `(slope / ε², r²)`.
pub fn noise_dt_dx_scaling(samples: usize, seed: u64) -> (f64, f64) {
    let base = SbeConfig::default();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, &dt) in [0.002, 0.005, 0.01, 0.02].iter().enumerate() {
        for (j, &n) in [75usize, 150, 300].iter().enumerate() {
            let cfg = SbeConfig {
                dt,
                grid: Grid::periodic(n).unwrap(),
                ..base.clone()
            };
            let mut rng = Rng::seed_from_u64(seed + 10 * i as u64 + j as u64);
            let mut xs = Vec::with_capacity(samples * n);
            for _ in 0..samples {
                xs.extend_from_slice(sample_noise(&cfg, &mut rng).values());
            }
            x.push(dt / cfg.grid.dx());
            y.push(oracles::mean_var(&xs).1);
        }
    }
    let (_, slope, r2) = oracles::linear_fit(&x, &y);
    (slope / (base.epsilon * base.epsilon), r2)
}

/// Max-norm gap between the default-grid solver and a 1200-node RK4
/// reference for `4·sin(x)`, ν = 0.01, at time `t_end`.
pub fn shock_profile_error(t_end: f64) -> f64 {
    let cfg = SbeConfig {
        epsilon: 0.0,
        ..SbeConfig::default()
    };
    let u0 = Field::from_fn(cfg.grid, |x| 4.0 * x.sin()).unwrap();
    let run = run_free_evolution(u0, &cfg, t_end, &[t_end], Rng::seed_from_u64(0)).unwrap();
    let fine_n = 8 * cfg.grid.n_points();
    let fine = oracles::burgers_rk4(
        |x| 4.0 * x.sin(),
        cfg.nu,
        fine_n,
        t_end,
        oracles::rk4_dt(cfg.nu, fine_n, 8.0).min(cfg.dt / 10.0),
    );
    oracles::max_error_on_coarse(run.snapshots[0].1.values(), &fine)
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Denominator floor for relative gradient errors; below it the error is
/// effectively absolute.
pub const GRAD_FLOOR: f64 = 1e-4;

/// Largest relative error between backprop and central differences over
/// `n_nets` random small networks, both for parameters and inputs.
pub fn backprop_vs_fd(n_nets: usize, seed: u64) -> f64 {
    let mut rng = Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..n_nets {
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![rng.random_range(1..=5)];
        for _ in 0..depth {
            sizes.push(rng.random_range(2..=6));
        }
        sizes.push(rng.random_range(1..=3));
        let mut net = Mlp::new(&sizes, &mut rng).unwrap();
        randomize_biases(&mut net, &mut rng);
        let batch = rng.random_range(1..=4);
        let x = Array2::from_shape_fn((batch, sizes[0]), |_| rng.random_range(-2.0..2.0));
        let up = Array2::from_shape_fn((batch, *sizes.last().unwrap()), |_| {
            rng.random_range(-1.0..1.0)
        });
        let loss = |net: &Mlp, x: ArrayView2<f64>| (net.forward(x).unwrap() * &up).sum();

        let cache = net.forward_cached(x.view()).unwrap();
        let (grads, dx) = net.backward(&cache, up.view()).unwrap();
        let analytic = grads.flatten();
        let theta = net.params();
        let mut probe = net.clone();
        for (i, g) in analytic.iter().enumerate() {
            let mut p = theta.clone();
            p[i] = theta[i] + h;
            probe.set_params(&p).unwrap();
            let plus = loss(&probe, x.view());
            p[i] = theta[i] - h;
            probe.set_params(&p).unwrap();
            let minus = loss(&probe, x.view());
            worst = worst.max(rel_err(*g, (plus - minus) / (2.0 * h), GRAD_FLOOR));
        }
        for ((r, c), g) in dx.indexed_iter() {
            let mut xp = x.clone();
            xp[[r, c]] += h;
            let mut xm = x.clone();
            xm[[r, c]] -= h;
            let fd = (loss(&net, xp.view()) - loss(&net, xm.view())) / (2.0 * h);
            worst = worst.max(rel_err(*g, fd, GRAD_FLOOR));
        }
    }
    worst
}

/// Same comparison for the actor objective `-mean Q(s, squash(μ(s)))`
/// differentiated through a critic network.
pub fn actor_chain_vs_fd(n_nets: usize, seed: u64) -> f64 {
    let mut rng = Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..n_nets {
        let s_dim = rng.random_range(2..=5);
        let k = rng.random_range(1..=3);
        let hid = rng.random_range(3..=6);
        let mut actor = Mlp::new(&[s_dim, hid, hid, k], &mut rng).unwrap();
        let mut critic = Mlp::new(&[s_dim + k, hid, 1], &mut rng).unwrap();
        randomize_biases(&mut actor, &mut rng);
        randomize_biases(&mut critic, &mut rng);
        let squash = Squash::new((-2.0, 2.0));
        let states = Array2::from_shape_fn((3, s_dim), |_| rng.random_range(-1.5..1.5));
        let objective = |a: &Mlp| {
            let mut acts = a.forward(states.view()).unwrap();
            acts.mapv_inplace(|z| squash.apply(z));
            let (q, _) = MlpCritic(&critic)
                .value_and_action_grad(states.view(), acts.view())
                .unwrap();
            -q.mean().unwrap()
        };
        let (_, grads) =
            actor_gradient(&actor, squash, &MlpCritic(&critic), states.view()).unwrap();
        let theta = actor.params();
        let mut probe = actor.clone();
        for (i, g) in grads.flatten().iter().enumerate() {
            let mut p = theta.clone();
            p[i] = theta[i] + h;
            probe.set_params(&p).unwrap();
            let plus = objective(&probe);
            p[i] = theta[i] - h;
            probe.set_params(&p).unwrap();
            let minus = objective(&probe);
            worst = worst.max(rel_err(*g, (plus - minus) / (2.0 * h), GRAD_FLOOR));
        }
    }
    worst
}

/// `Q(s, a) = -‖a - a*‖²`, independent of the state.
pub struct QuadraticCritic {
    pub optimum: Vec<f64>,
}

impl ActionValue for QuadraticCritic {
    fn value_and_action_grad(
        &self,
        _states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> sbe_control::Result<(Array1<f64>, Array2<f64>)> {
        let d = &actions - &Array1::from(self.optimum.clone());
        let q = d.rows().into_iter().map(|r| -r.dot(&r)).collect();
        Ok((q, d * -2.0))
    }
}

#[derive(Debug)]
pub struct Mechanics {
    /// Largest |Q - Q'| over random probes at construction.
    pub target_gap: f64,
    /// Largest deviation from `θ' - θ = (1 - τ)(θ'_prev - θ)` with dyadic
    /// parameters and τ = 1/4.
    pub contraction_gap_dyadic: f64,
    /// Same identity, relative, for τ = 0.1 and generic parameters.
    pub contraction_rel_gap: f64,
    /// Largest |z| of per-slot sample counts over 10⁵ draws from 100 slots.
    pub replay_max_z: f64,
    pub actor_objective_start: f64,
    pub actor_objective_after_100: f64,
    /// Distance of μ(s) from the quadratic critic's optimum after training.
    pub actor_final_distance: f64,
}

pub fn ddpg_mechanics(seed: u64) -> Mechanics {
    let mut rng = Rng::seed_from_u64(seed);
    let cfg = DdpgConfig {
        hidden: vec![16, 16],
        ..DdpgConfig::default()
    };
    let mut agent = Agent::new(6, 3, (-10.0, 10.0), &cfg, &mut rng).unwrap();

    let mut target_gap: f64 = 0.0;
    for _ in 0..200 {
        let s: Vec<f64> = (0..6).map(|_| rng.random_range(-8.0..8.0)).collect();
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
        target_gap = target_gap
            .max((agent.q_value(&s, &a).unwrap() - agent.target_q_value(&s, &a).unwrap()).abs());
    }

    // Dyadic parameters make every product and sum exact.
    let dyadic = |rng: &mut Rng, n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| rng.random_range(-512i32..512) as f64 / 256.0)
            .collect()
    };
    let n = agent.actor.n_params();
    let online = dyadic(&mut rng, n);
    let target = dyadic(&mut rng, n);
    let mut a = agent.actor.clone();
    let mut t = agent.actor.clone();
    a.set_params(&online).unwrap();
    t.set_params(&target).unwrap();
    t.soft_update_from(&a, 0.25).unwrap();
    let contraction_gap_dyadic = t
        .params()
        .iter()
        .zip(&online)
        .zip(&target)
        .map(|((new, th), prev)| ((new - th) - 0.75 * (prev - th)).abs())
        .fold(0.0, f64::max);

    let online: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let target: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    a.set_params(&online).unwrap();
    t.set_params(&target).unwrap();
    t.soft_update_from(&a, 0.1).unwrap();
    let contraction_rel_gap = t
        .params()
        .iter()
        .zip(&online)
        .zip(&target)
        .map(|((new, th), prev)| {
            let want = 0.9 * (prev - th);
            ((new - th) - want).abs() / (prev - th).abs().max(1.0)
        })
        .fold(0.0, f64::max);

    let mut buf = ReplayBuffer::new(100, 1, 1).unwrap();
    for i in 0..100 {
        buf.push(&[i as f64], &[0.0], 0.0, &[0.0], false).unwrap();
    }
    let draws = 100_000;
    let mut counts = vec![0usize; 100];
    let mut replay_rng = Rng::seed_from_u64(seed ^ 0x5eed);
    for _ in 0..draws / 100 {
        for i in buf.sample_indices(100, &mut replay_rng).unwrap() {
            counts[i] += 1;
        }
    }
    let p = 0.01;
    let (mean, sd) = (draws as f64 * p, (draws as f64 * p * (1.0 - p)).sqrt());
    let replay_max_z = counts
        .iter()
        .map(|&c| (c as f64 - mean).abs() / sd)
        .fold(0.0, f64::max);

    let critic = QuadraticCritic {
        optimum: vec![3.0, -6.0, 0.5],
    };
    agent.actor_opt.lr = 1e-3;
    let states = Array2::from_shape_fn((16, 6), |_| rng.random_range(-4.0..4.0));
    let actor_objective_start = agent.actor_step_with(&critic, states.view()).unwrap();
    for _ in 1..100 {
        agent.actor_step_with(&critic, states.view()).unwrap();
    }
    let actor_objective_after_100 = agent.actor_step_with(&critic, states.view()).unwrap();
    for _ in 0..1500 {
        agent.actor_step_with(&critic, states.view()).unwrap();
    }
    let actor_final_distance = states
        .rows()
        .into_iter()
        .map(|s| {
            let x = agent.act(s.as_slice().unwrap()).unwrap();
            x.iter()
                .zip(&critic.optimum)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);

    Mechanics {
        target_gap,
        contraction_gap_dyadic,
        contraction_rel_gap,
        replay_max_z,
        actor_objective_start,
        actor_objective_after_100,
        actor_final_distance,
    }
}
