//! Crank-Nicolson time stepping of the 1D stochastic Burgers' equation
//!
//! ```text
//! u_t + (u²/2)_x = ν u_xx + ε η + f,   periodic on [0, L)
//! ```
//!
//! Space uses second-order centred differences with the convection term in
//! flux form, `(F_{i+1} - F_{i-1}) / 2dx` with `F = u²/2`. Both diffusion and
//! convection are averaged between the old and new time level. The new level
//! solves a nonlinear system which is handled by Picard iteration: each
//! sweep evaluates convection at the previous iterate explicitly and solves
//! the (linear, constant-coefficient) diffusion part with a cyclic
//! tridiagonal solve. Noise and forcing enter explicitly.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{check_finite, Field, Grid};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SbeConfig {
    /// Diffusion coefficient ν.
    pub nu: f64,
    /// Noise intensity ε.
    pub epsilon: f64,
    pub dt: f64,
    pub grid: Grid,
    /// Max-norm tolerance on successive Picard iterates.
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    /// Saturation bounds applied to `u` after every step.
    pub u_bounds: (f64, f64),
}

impl Default for SbeConfig {
    fn default() -> Self {
        Self {
            nu: 0.01,
            epsilon: 0.01,
            dt: 0.01,
            grid: Grid::from_stored_nodes(151).expect("static grid"),
            picard_tol: 1e-8,
            picard_max_iters: 500,
            u_bounds: (-8.0, 8.0),
        }
    }
}

impl SbeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            ));
        }
        if !(self.picard_tol > 0.0) {
            return bad(format!(
                "picard_tol must be positive, got {}",
                self.picard_tol
            ));
        }
        if self.picard_max_iters < 1 {
            return bad("picard_max_iters must be at least 1".into());
        }
        let (lo, hi) = self.u_bounds;
        if !(lo < hi) {
            return bad(format!("u bounds [{lo}, {hi}] are empty"));
        }
        Ok(())
    }

    /// Standard deviation of the per-node, per-step noise increment.
    pub fn noise_std(&self) -> f64 {
        self.epsilon * (self.dt / self.grid.dx()).sqrt()
    }
}

/// Per-step white-noise increment: i.i.d. `ε·√(dt/dx)·N(0,1)` per node,
/// the cell-and-step average of a Brownian-sheet derivative.
pub fn sample_noise(config: &SbeConfig, rng: &mut Rng) -> Field {
    let mut values = vec![0.0; config.grid.n_points()];
    fill_noise(config, rng, &mut values);
    Field::new(config.grid, values).expect("finite noise")
}

fn fill_noise(config: &SbeConfig, rng: &mut Rng, out: &mut [f64]) {
    if config.epsilon == 0.0 {
        out.fill(0.0);
        return;
    }
    let scale = config.noise_std();
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = scale * z;
    }
}

#[derive(Clone, Debug)]
pub struct SolverState {
    u: Field,
    t: f64,
    steps: u64,
    rng: Rng,
}

impl SolverState {
    pub fn new(u0: Field, t0: f64, rng: Rng) -> Self {
        Self {
            u: u0,
            t: t0,
            steps: 0,
            rng,
        }
    }

    pub fn u(&self) -> &Field {
        &self.u
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Pre-factored solver for one configuration.
#[derive(Clone, Debug)]
pub struct SbeSolver {
    config: SbeConfig,
    diffusion: CyclicTridiagonal,
    t0: f64,
    scratch: Scratch,
}

#[derive(Clone, Debug, Default)]
struct Scratch {
    fixed: Vec<f64>,
    rhs: Vec<f64>,
    iterate: Vec<f64>,
    next: Vec<f64>,
    noise: Vec<f64>,
}

impl SbeSolver {
    pub fn new(config: SbeConfig) -> Result<Self> {
        config.validate()?;
        let n = config.grid.n_points();
        let r = 0.5 * config.nu * config.dt / (config.grid.dx() * config.grid.dx());
        let diffusion = CyclicTridiagonal::new(n, 1.0 + 2.0 * r, -r);
        Ok(Self {
            config,
            diffusion,
            t0: 0.0,
            scratch: Scratch {
                fixed: vec![0.0; n],
                rhs: vec![0.0; n],
                iterate: vec![0.0; n],
                next: vec![0.0; n],
                noise: vec![0.0; n],
            },
        })
    }

    pub fn config(&self) -> &SbeConfig {
        &self.config
    }

    pub fn init(&mut self, u0: Field, t0: f64, rng: Rng) -> Result<SolverState> {
        if u0.grid() != &self.config.grid {
            return Err(Error::Shape("initial field is on a different grid".into()));
        }
        self.t0 = t0;
        Ok(SolverState::new(u0, t0, rng))
    }

    /// Advance one step with `forcing` held constant over `dt`.
    pub fn step(&mut self, state: &mut SolverState, forcing: &Field) -> Result<StepReport> {
        self.step_inner(state, forcing, None)
    }

    /// As [`step`](Self::step), also recording the residual of every Picard sweep.
    pub fn step_traced(
        &mut self,
        state: &mut SolverState,
        forcing: &Field,
        residuals: &mut Vec<f64>,
    ) -> Result<StepReport> {
        self.step_inner(state, forcing, Some(residuals))
    }

    fn step_inner(
        &mut self,
        state: &mut SolverState,
        forcing: &Field,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<StepReport> {
        let cfg = &self.config;
        if forcing.grid() != &cfg.grid || state.u.grid() != &cfg.grid {
            return Err(Error::Shape(
                "forcing or state is on a different grid".into(),
            ));
        }
        let n = cfg.grid.n_points();
        let dx = cfg.grid.dx();
        let dt = cfg.dt;
        let r = 0.5 * cfg.nu * dt / (dx * dx);
        // (dt/2) · 1/(2dx); the ½ of F = u²/2 is applied at each use.
        let c = 0.25 * dt / dx;

        let Scratch {
            fixed,
            rhs,
            iterate,
            next,
            noise,
        } = &mut self.scratch;
        let u = state.u.values();
        let f = forcing.values();
        fill_noise(cfg, &mut state.rng, noise);

        // Solve for the increment δ = u_new - u_old so that exact steady
        // states (constants) produce an exactly zero right-hand side:
        //   (I - r D2) δ = 2 r D2 u_old - c D1F(u_old) - c D1F(u_new) + dt f + ξ
        for i in 0..n {
            let (l, rr) = (u[(i + n - 1) % n], u[(i + 1) % n]);
            let flux = 0.5 * (rr * rr - l * l);
            fixed[i] = 2.0 * r * ((l - u[i]) + (rr - u[i])) - c * flux + dt * f[i] + noise[i];
        }

        iterate.copy_from_slice(u);
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < cfg.picard_max_iters {
            iterations += 1;
            for i in 0..n {
                let (l, rr) = (iterate[(i + n - 1) % n], iterate[(i + 1) % n]);
                rhs[i] = fixed[i] - c * 0.5 * (rr * rr - l * l);
            }
            self.diffusion.solve(rhs, next);
            residual = 0.0;
            for ((nx, it), u_old) in next.iter_mut().zip(iterate.iter()).zip(u) {
                *nx += u_old;
                residual = f64::max(residual, (*nx - it).abs());
            }
            std::mem::swap(iterate, next);
            if let Some(trace) = trace.as_deref_mut() {
                trace.push(residual);
            }
            if !residual.is_finite() || residual <= cfg.picard_tol {
                break;
            }
        }
        check_finite(iterate)?;
        if residual > cfg.picard_tol {
            return Err(Error::PicardNotConverged {
                iterations,
                residual,
            });
        }

        let (lo, hi) = cfg.u_bounds;
        let values = iterate.iter().map(|v| v.clamp(lo, hi)).collect();
        state.u = Field::new(cfg.grid, values)?;
        state.steps += 1;
        state.t = self.t0 + state.steps as f64 * dt;
        Ok(StepReport {
            iterations,
            residual,
        })
    }
}

/// Symmetric circulant tridiagonal system with constant `diag` and `off`
/// entries, solved by the Sherman-Morrison form of the Thomas algorithm.
#[derive(Clone, Debug)]
struct CyclicTridiagonal {
    off: f64,
    gamma: f64,
    // Thomas forward-sweep factors of the corner-modified matrix.
    c_prime: Vec<f64>,
    denom: Vec<f64>,
    // Solution of the modified system against the rank-one correction vector.
    z: Vec<f64>,
    z_factor: f64,
}

impl CyclicTridiagonal {
    fn new(n: usize, diag: f64, off: f64) -> Self {
        let gamma = -diag;
        let mut b = vec![diag; n];
        b[0] = diag - gamma;
        b[n - 1] = diag - off * off / gamma;

        let mut c_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = b[0];
        c_prime[0] = off / b[0];
        for i in 1..n {
            denom[i] = b[i] - off * c_prime[i - 1];
            c_prime[i] = off / denom[i];
        }
        let mut this = Self {
            off,
            gamma,
            c_prime,
            denom,
            z: vec![0.0; n],
            z_factor: 0.0,
        };
        let mut corr = vec![0.0; n];
        corr[0] = gamma;
        corr[n - 1] = off;
        let mut z = vec![0.0; n];
        this.thomas(&corr, &mut z);
        this.z_factor = 1.0 + z[0] + off * z[n - 1] / gamma;
        this.z = z;
        this
    }

    fn thomas(&self, rhs: &[f64], x: &mut [f64]) {
        let n = rhs.len();
        x[0] = rhs[0] / self.denom[0];
        for i in 1..n {
            x[i] = (rhs[i] - self.off * x[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.c_prime[i] * x[i + 1];
        }
    }

    fn solve(&self, rhs: &[f64], x: &mut [f64]) {
        let n = rhs.len();
        self.thomas(rhs, x);
        let k = (x[0] + self.off * x[n - 1] / self.gamma) / self.z_factor;
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi -= k * zi;
        }
    }
}

/// Per-step diagnostics recorded by [`run_free_evolution`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub step: u64,
    pub t: f64,
    /// `∫u dx`
    pub momentum: f64,
    /// `∫u² dx`
    pub energy: f64,
    pub max_gradient: f64,
    pub picard_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct FreeEvolution {
    /// `(t, u)` at each requested snapshot time, in request order.
    pub snapshots: Vec<(f64, Field)>,
    /// Entry 0 is the initial condition, then one entry per step.
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Convert a time offset into a whole number of steps.
pub fn steps_for(duration: f64, dt: f64) -> Result<u64> {
    let steps = duration / dt;
    let rounded = steps.round();
    if duration < 0.0 || (steps - rounded).abs() > 1e-6 * rounded.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "time {duration} is not a non-negative multiple of dt = {dt}"
        )));
    }
    Ok(rounded as u64)
}

/// Unforced evolution from `u0` over `[0, t_end]`, returning the requested
/// snapshots and per-step conservation diagnostics.
pub fn run_free_evolution(
    u0: Field,
    config: &SbeConfig,
    t_end: f64,
    snapshot_times: &[f64],
    rng: Rng,
) -> Result<FreeEvolution> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    let total = steps_for(t_end, config.dt)?;
    let wanted = snapshot_times
        .iter()
        .map(|&t| {
            let s = steps_for(t, config.dt)?;
            if s > total {
                return Err(Error::InvalidConfig(format!(
                    "snapshot time {t} is after t_end = {t_end}"
                )));
            }
            Ok(s)
        })
        .collect::<Result<Vec<u64>>>()?;

    let mut solver = SbeSolver::new(config.clone())?;
    let mut state = solver.init(u0, 0.0, rng)?;
    let zero = Field::zeros(config.grid);
    let mut snapshots: Vec<Option<(f64, Field)>> = vec![None; wanted.len()];
    let mut diagnostics = Vec::with_capacity(total as usize + 1);

    let mut record =
        |state: &SolverState, iters: usize, snaps: &mut Vec<Option<(f64, Field)>>| -> Result<()> {
            for (slot, &s) in snaps.iter_mut().zip(&wanted) {
                if s == state.steps() {
                    *slot = Some((state.t(), state.u().clone()));
                }
            }
            diagnostics.push(StepDiagnostics {
                step: state.steps(),
                t: state.t(),
                momentum: state.u().integrate()?,
                energy: state.u().l2_sq()?,
                max_gradient: state.u().max_abs_gradient(),
                picard_iterations: iters,
            });
            Ok(())
        };

    record(&state, 0, &mut snapshots)?;
    for _ in 0..total {
        let report = solver.step(&mut state, &zero)?;
        record(&state, report.iterations, &mut snapshots)?;
    }
    Ok(FreeEvolution {
        snapshots: snapshots
            .into_iter()
            .map(|s| s.expect("every snapshot step is visited"))
            .collect(),
        diagnostics,
    })
}
