//! Distributed control of the 1D stochastic Burgers' equation with DDPG.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: periodic grids, sampled fields and quadrature.
//! - [`solver`]: Crank-Nicolson / Picard time stepping with additive
//!   space-time white noise and distributed forcing.
//! - [`env`]: the control problem as a discounted MDP with
//!   piecewise-constant forcing actions.
//! - [`nn`]: dense ReLU networks, backpropagation and Adam.
//! - [`ddpg`]: actor/critic agent, replay buffer, exploration and training.
//! - [`baselines`]: uncontrolled and proportional-feedback reference policies.
//! - [`eval`]: seeded policy evaluation with confidence intervals.

pub mod baselines;
pub mod ddpg;
pub mod env;
pub mod error;
pub mod eval;
pub mod grid;
pub mod nn;
pub mod rng;
pub mod solver;

pub use baselines::{FeedbackController, Policy, Uncontrolled};
pub use ddpg::{Agent, DdpgConfig, Trainer};
pub use env::{EnvConfig, Environment, Transition};
pub use error::{Error, Result};
pub use eval::{evaluate, EpisodeResult, Summary};
pub use grid::{Field, Grid};
pub use rng::{Seeds, Stream};
pub use solver::{SbeConfig, SbeSolver, SolverState};
