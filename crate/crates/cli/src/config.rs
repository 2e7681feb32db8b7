//! Flat `key = value` experiment configuration.
//!
//! Layering, lowest first: built-in defaults, a config file, `SBE_<KEY>`
//! environment variables, command-line flags.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use sbe_control::ddpg::{NoiseConfig, NoiseKind};
use sbe_control::env::InitialProfile;
use sbe_control::{DdpgConfig, EnvConfig, Grid, SbeConfig};

pub const ENV_PREFIX: &str = "SBE_";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {value:?} ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub nu: f64,
    pub epsilon: f64,
    pub dt: f64,
    /// Stored grid nodes including the duplicated periodic endpoint.
    pub n_x: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub k: usize,
    pub control_start: f64,
    pub control_end: f64,
    pub u0: InitialProfile,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub warmup: usize,
    pub buffer_capacity: usize,
    pub reward_scale: f64,
    pub noise: NoiseKind,
    pub noise_sigma: f64,
    pub noise_decay: f64,
    pub noise_floor: f64,
    pub episodes: usize,
    pub eval_episodes: usize,
    pub feedback_gains: Vec<f64>,
    pub tune_episodes: usize,
    pub snapshot_times: Vec<f64>,
    pub sweep_k: Vec<usize>,
    /// Agent checkpoint for `compare`; `None` compares the baselines only.
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub svg: bool,
    pub transition_log: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sbe = SbeConfig::default();
        let env = EnvConfig::default();
        let ddpg = DdpgConfig::default();
        Self {
            seed: 0,
            nu: sbe.nu,
            epsilon: sbe.epsilon,
            dt: sbe.dt,
            n_x: 151,
            t_start: env.t_start,
            t_end: env.t_end,
            u_min: sbe.u_bounds.0,
            u_max: sbe.u_bounds.1,
            f_min: env.f_bounds.0,
            f_max: env.f_bounds.1,
            lambda: env.lambda,
            gamma: env.gamma,
            k: env.action_dim,
            control_start: env.control_domain.0,
            control_end: env.control_domain.1,
            u0: env.initial,
            picard_tol: sbe.picard_tol,
            picard_max_iters: sbe.picard_max_iters,
            hidden: ddpg.hidden,
            actor_lr: ddpg.actor_lr,
            critic_lr: ddpg.critic_lr,
            tau: ddpg.tau,
            batch_size: ddpg.batch_size,
            warmup: ddpg.warmup,
            buffer_capacity: ddpg.buffer_capacity,
            reward_scale: ddpg.reward_scale,
            noise: ddpg.noise.kind,
            noise_sigma: ddpg.noise.sigma,
            noise_decay: ddpg.noise.decay,
            noise_floor: ddpg.noise.floor,
            episodes: 500,
            eval_episodes: 100,
            feedback_gains: sbe_control::baselines::DEFAULT_GAINS.to_vec(),
            tune_episodes: 20,
            snapshot_times: vec![0.0, 0.5, 1.0, 2.0],
            sweep_k: vec![4, 7, 10],
            checkpoint: None,
            out_dir: PathBuf::from("out"),
            svg: false,
            transition_log: false,
        }
    }
}

/// Every key with its help text, in serialization order.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed for every random stream"),
    ("nu", "viscosity ν"),
    ("epsilon", "noise amplitude ε"),
    ("dt", "time step"),
    ("n_x", "stored grid nodes on [0, 2π], endpoint included"),
    ("t_start", "episode start time"),
    ("t_end", "episode end time"),
    ("u_min", "lower state clamp"),
    ("u_max", "upper state clamp"),
    ("f_min", "lower forcing bound"),
    ("f_max", "upper forcing bound"),
    ("lambda", "action cost weight λ"),
    ("gamma", "discount factor"),
    ("k", "number of forcing intervals"),
    ("control_start", "start of the controlled sub-domain"),
    ("control_end", "end of the controlled sub-domain"),
    (
        "u0",
        "initial profile: sine:<amp>[:<offset>] or constant:<value>",
    ),
    ("picard_tol", "nonlinear iteration tolerance (max norm)"),
    ("picard_max_iters", "nonlinear iteration cap per step"),
    ("hidden", "hidden layer widths, comma separated"),
    ("actor_lr", "actor learning rate"),
    ("critic_lr", "critic learning rate"),
    ("tau", "target network tracking rate"),
    ("batch_size", "minibatch size"),
    ("warmup", "transitions stored before the first update"),
    ("buffer_capacity", "replay buffer capacity"),
    ("reward_scale", "reward multiplier inside critic targets"),
    ("noise", "exploration process: gaussian or ou:<theta>"),
    ("noise_sigma", "initial exploration scale"),
    ("noise_decay", "per-episode exploration decay"),
    ("noise_floor", "minimum exploration scale"),
    ("episodes", "training episodes"),
    ("eval_episodes", "greedy evaluation episodes"),
    (
        "feedback_gains",
        "candidate feedback gains, comma separated",
    ),
    ("tune_episodes", "episodes per candidate gain"),
    (
        "snapshot_times",
        "free-evolution snapshot times, comma separated",
    ),
    ("sweep_k", "interval counts for sweep-k, comma separated"),
    (
        "checkpoint",
        "agent checkpoint for compare (empty for none)",
    ),
    ("out_dir", "output directory"),
    ("svg", "also write SVG plots (true/false)"),
    (
        "transition_log",
        "write per-step transition logs in compare (true/false)",
    ),
];

fn list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn parse_profile(s: &str) -> Result<InitialProfile, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| e.to_string());
    match parts.as_slice() {
        ["sine", a] => Ok(InitialProfile::Sine {
            amplitude: num(a)?,
            offset: 0.0,
        }),
        ["sine", a, o] => Ok(InitialProfile::Sine {
            amplitude: num(a)?,
            offset: num(o)?,
        }),
        ["constant", c] => Ok(InitialProfile::Constant(num(c)?)),
        _ => Err("expected sine:<amp>[:<offset>] or constant:<value>".into()),
    }
}

fn format_profile(p: &InitialProfile) -> String {
    match *p {
        InitialProfile::Sine { amplitude, offset } if offset == 0.0 => format!("sine:{amplitude}"),
        InitialProfile::Sine { amplitude, offset } => format!("sine:{amplitude}:{offset}"),
        InitialProfile::Constant(c) => format!("constant:{c}"),
    }
}

fn parse_noise(s: &str) -> Result<NoiseKind, String> {
    match s.split_once(':') {
        None if s == "gaussian" => Ok(NoiseKind::Gaussian),
        Some(("ou", theta)) => Ok(NoiseKind::OrnsteinUhlenbeck {
            theta: theta
                .trim()
                .parse()
                .map_err(|e: std::num::ParseFloatError| e.to_string())?,
        }),
        _ => Err("expected gaussian or ou:<theta>".into()),
    }
}

fn format_noise(n: &NoiseKind) -> String {
    match n {
        NoiseKind::Gaussian => "gaussian".into(),
        NoiseKind::OrnsteinUhlenbeck { theta } => format!("ou:{theta}"),
    }
}

impl ExperimentConfig {
    pub fn get(&self, key: &str) -> Result<String, ConfigError> {
        Ok(match key {
            "seed" => self.seed.to_string(),
            "nu" => self.nu.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "dt" => self.dt.to_string(),
            "n_x" => self.n_x.to_string(),
            "t_start" => self.t_start.to_string(),
            "t_end" => self.t_end.to_string(),
            "u_min" => self.u_min.to_string(),
            "u_max" => self.u_max.to_string(),
            "f_min" => self.f_min.to_string(),
            "f_max" => self.f_max.to_string(),
            "lambda" => self.lambda.to_string(),
            "gamma" => self.gamma.to_string(),
            "k" => self.k.to_string(),
            "control_start" => self.control_start.to_string(),
            "control_end" => self.control_end.to_string(),
            "u0" => format_profile(&self.u0),
            "picard_tol" => self.picard_tol.to_string(),
            "picard_max_iters" => self.picard_max_iters.to_string(),
            "hidden" => list(&self.hidden),
            "actor_lr" => self.actor_lr.to_string(),
            "critic_lr" => self.critic_lr.to_string(),
            "tau" => self.tau.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "warmup" => self.warmup.to_string(),
            "buffer_capacity" => self.buffer_capacity.to_string(),
            "reward_scale" => self.reward_scale.to_string(),
            "noise" => format_noise(&self.noise),
            "noise_sigma" => self.noise_sigma.to_string(),
            "noise_decay" => self.noise_decay.to_string(),
            "noise_floor" => self.noise_floor.to_string(),
            "episodes" => self.episodes.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "feedback_gains" => list(&self.feedback_gains),
            "tune_episodes" => self.tune_episodes.to_string(),
            "snapshot_times" => list(&self.snapshot_times),
            "sweep_k" => list(&self.sweep_k),
            "checkpoint" => self
                .checkpoint
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "out_dir" => self.out_dir.display().to_string(),
            "svg" => self.svg.to_string(),
            "transition_log" => self.transition_log.to_string(),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let bad = |reason: String| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason,
        };
        fn f(v: &str) -> Result<f64, String> {
            v.parse::<f64>().map_err(|e| e.to_string())
        }
        fn u(v: &str) -> Result<usize, String> {
            v.parse::<usize>().map_err(|e| e.to_string())
        }
        match key {
            "seed" => self.seed = v.parse::<u64>().map_err(|e| bad(e.to_string()))?,
            "nu" => self.nu = f(v).map_err(bad)?,
            "epsilon" => self.epsilon = f(v).map_err(bad)?,
            "dt" => self.dt = f(v).map_err(bad)?,
            "n_x" => self.n_x = u(v).map_err(bad)?,
            "t_start" => self.t_start = f(v).map_err(bad)?,
            "t_end" => self.t_end = f(v).map_err(bad)?,
            "u_min" => self.u_min = f(v).map_err(bad)?,
            "u_max" => self.u_max = f(v).map_err(bad)?,
            "f_min" => self.f_min = f(v).map_err(bad)?,
            "f_max" => self.f_max = f(v).map_err(bad)?,
            "lambda" => self.lambda = f(v).map_err(bad)?,
            "gamma" => self.gamma = f(v).map_err(bad)?,
            "k" => self.k = u(v).map_err(bad)?,
            "control_start" => self.control_start = f(v).map_err(bad)?,
            "control_end" => self.control_end = f(v).map_err(bad)?,
            "u0" => self.u0 = parse_profile(v).map_err(bad)?,
            "picard_tol" => self.picard_tol = f(v).map_err(bad)?,
            "picard_max_iters" => self.picard_max_iters = u(v).map_err(bad)?,
            "hidden" => self.hidden = parse_list(v).map_err(bad)?,
            "actor_lr" => self.actor_lr = f(v).map_err(bad)?,
            "critic_lr" => self.critic_lr = f(v).map_err(bad)?,
            "tau" => self.tau = f(v).map_err(bad)?,
            "batch_size" => self.batch_size = u(v).map_err(bad)?,
            "warmup" => self.warmup = u(v).map_err(bad)?,
            "buffer_capacity" => self.buffer_capacity = u(v).map_err(bad)?,
            "reward_scale" => self.reward_scale = f(v).map_err(bad)?,
            "noise" => self.noise = parse_noise(v).map_err(bad)?,
            "noise_sigma" => self.noise_sigma = f(v).map_err(bad)?,
            "noise_decay" => self.noise_decay = f(v).map_err(bad)?,
            "noise_floor" => self.noise_floor = f(v).map_err(bad)?,
            "episodes" => self.episodes = u(v).map_err(bad)?,
            "eval_episodes" => self.eval_episodes = u(v).map_err(bad)?,
            "feedback_gains" => self.feedback_gains = parse_list(v).map_err(bad)?,
            "tune_episodes" => self.tune_episodes = u(v).map_err(bad)?,
            "snapshot_times" => self.snapshot_times = parse_list(v).map_err(bad)?,
            "sweep_k" => self.sweep_k = parse_list(v).map_err(bad)?,
            "checkpoint" => self.checkpoint = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "svg" => self.svg = parse_bool(v).map_err(bad)?,
            "transition_log" => self.transition_log = parse_bool(v).map_err(bad)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Apply every `SBE_<KEY>` variable found in `vars`.
    pub fn apply_env(
        &mut self,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<(), ConfigError> {
        for (name, value) in vars {
            if let Some(key) = name.strip_prefix(ENV_PREFIX) {
                let key = key.to_ascii_lowercase();
                if KEYS.iter().any(|(k, _)| *k == key) {
                    self.set(&key, &value)?;
                }
            }
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the serialized config, leaving
    /// out `out_dir` so that reruns into different directories agree.
    pub fn hash(&self) -> String {
        let text: String = self
            .serialize()
            .lines()
            .filter(|l| !l.starts_with("out_dir "))
            .map(|l| format!("{l}\n"))
            .collect();
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn env_config(&self) -> EnvConfig {
        self.env_config_with_k(self.k)
    }

    pub fn env_config_with_k(&self, k: usize) -> EnvConfig {
        let grid = Grid::from_stored_nodes(self.n_x)
            .unwrap_or_else(|_| Grid::periodic(3).expect("3-point grid"));
        EnvConfig {
            sbe: SbeConfig {
                nu: self.nu,
                epsilon: self.epsilon,
                dt: self.dt,
                grid,
                picard_tol: self.picard_tol,
                picard_max_iters: self.picard_max_iters,
                u_bounds: (self.u_min, self.u_max),
            },
            t_start: self.t_start,
            t_end: self.t_end,
            action_dim: k,
            f_bounds: (self.f_min, self.f_max),
            lambda: self.lambda,
            gamma: self.gamma,
            control_domain: (self.control_start, self.control_end),
            initial: self.u0,
        }
    }

    pub fn ddpg_config(&self) -> DdpgConfig {
        DdpgConfig {
            hidden: self.hidden.clone(),
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            tau: self.tau,
            gamma: self.gamma,
            batch_size: self.batch_size,
            warmup: self.warmup,
            buffer_capacity: self.buffer_capacity,
            reward_scale: self.reward_scale,
            noise: NoiseConfig {
                kind: self.noise,
                sigma: self.noise_sigma,
                decay: self.noise_decay,
                floor: self.noise_floor,
            },
        }
    }

    /// Check every field; all failures are reported together.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, key: &str, what: &str| {
            if !ok {
                errs.push(format!(
                    "{key}: {what} (got {})",
                    self.get(key).unwrap_or_default()
                ));
            }
        };
        let pos = |x: f64| x > 0.0 && x.is_finite();
        need(pos(self.nu), "nu", "must be positive");
        need(
            self.epsilon >= 0.0 && self.epsilon.is_finite(),
            "epsilon",
            "must be non-negative",
        );
        need(pos(self.dt), "dt", "must be positive");
        need(self.n_x >= 4, "n_x", "needs at least 4 stored nodes");
        need(
            self.t_start.is_finite() && self.t_start >= 0.0,
            "t_start",
            "must be non-negative",
        );
        need(
            self.t_end > self.t_start && self.t_end.is_finite(),
            "t_end",
            "must exceed t_start",
        );
        need(self.u_min < self.u_max, "u_max", "must exceed u_min");
        need(self.f_min < self.f_max, "f_max", "must exceed f_min");
        need(
            self.lambda >= 0.0 && self.lambda.is_finite(),
            "lambda",
            "must be non-negative",
        );
        need(
            (0.0..=1.0).contains(&self.gamma),
            "gamma",
            "must be in [0, 1]",
        );
        need(self.k >= 1 && self.k < self.n_x, "k", "must be in 1..n_x");
        need(
            0.0 <= self.control_start
                && self.control_start < self.control_end
                && self.control_end <= TAU,
            "control_end",
            "sub-domain must satisfy 0 <= control_start < control_end <= 2π",
        );
        need(pos(self.picard_tol), "picard_tol", "must be positive");
        need(
            self.picard_max_iters >= 1,
            "picard_max_iters",
            "must be at least 1",
        );
        need(
            !self.hidden.is_empty() && !self.hidden.contains(&0),
            "hidden",
            "needs positive widths",
        );
        need(pos(self.actor_lr), "actor_lr", "must be positive");
        need(pos(self.critic_lr), "critic_lr", "must be positive");
        need((0.0..=1.0).contains(&self.tau), "tau", "must be in [0, 1]");
        need(self.batch_size >= 1, "batch_size", "must be at least 1");
        need(
            self.buffer_capacity >= self.batch_size,
            "buffer_capacity",
            "must be at least batch_size",
        );
        need(pos(self.reward_scale), "reward_scale", "must be positive");
        need(
            self.noise_sigma >= 0.0,
            "noise_sigma",
            "must be non-negative",
        );
        need(
            self.noise_decay > 0.0 && self.noise_decay <= 1.0,
            "noise_decay",
            "must be in (0, 1]",
        );
        need(
            self.noise_floor >= 0.0,
            "noise_floor",
            "must be non-negative",
        );
        if let NoiseKind::OrnsteinUhlenbeck { theta } = self.noise {
            need(
                (0.0..=1.0).contains(&theta),
                "noise",
                "OU theta must be in [0, 1]",
            );
        }
        need(
            self.eval_episodes >= 1,
            "eval_episodes",
            "must be at least 1",
        );
        need(
            !self.feedback_gains.is_empty()
                && self
                    .feedback_gains
                    .iter()
                    .all(|g| *g >= 0.0 && g.is_finite()),
            "feedback_gains",
            "needs at least one non-negative gain",
        );
        need(
            self.tune_episodes >= 1,
            "tune_episodes",
            "must be at least 1",
        );
        need(
            self.snapshot_times
                .iter()
                .all(|t| *t >= self.t_start && *t <= self.t_end),
            "snapshot_times",
            "must lie in [t_start, t_end]",
        );
        need(
            self.sweep_k.iter().all(|k| *k >= 1 && *k < self.n_x),
            "sweep_k",
            "entries must be in 1..n_x",
        );
        if errs.is_empty() {
            if let Err(e) = self.env_config().validate() {
                errs.push(format!("environment: {e}"));
            }
            if let Err(e) = self.ddpg_config().validate() {
                errs.push(format!("agent: {e}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}
