use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};

use sbe_control_cli::commands;
use sbe_control_cli::{ExperimentConfig, ENV_PREFIX, KEYS};

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

fn with_keys(cmd: Command) -> Command {
    KEYS.iter().fold(cmd, |cmd, (key, help)| {
        cmd.arg(
            Arg::new(*key)
                .long(flag(key))
                .value_name("VALUE")
                .help(*help)
                .allow_hyphen_values(true)
                .action(ArgAction::Set),
        )
    })
}

fn cli() -> Command {
    let sub = |name: &'static str, about: &'static str| with_keys(Command::new(name).about(about));
    Command::new("sbe-control")
        .version(clap::crate_version!())
        .about("Shock damping of the stochastic Burgers' equation with DDPG")
        .after_help(format!(
            "Settings are layered: defaults, then --config, then {ENV_PREFIX}<KEY> environment variables, then flags."
        ))
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .global(true)
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value config file"),
        )
        .subcommand(sub("free", "Unforced evolution snapshots and energy history"))
        .subcommand(sub("train", "Train an agent, save a checkpoint, evaluate it"))
        .subcommand(sub("compare", "Evaluate baselines and an optional checkpoint on shared seeds"))
        .subcommand(sub("sweep-k", "Train and evaluate agents for several interval counts"))
}

fn load(m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = m.get_one::<PathBuf>("config") {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    cfg.apply_env(std::env::vars())?;
    for (key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run() -> Result<()> {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let cfg = load(sub)?;
    match name {
        "free" => {
            let r = commands::run_free(&cfg)?;
            println!(
                "wrote {} snapshots and {}",
                r.snapshots.len(),
                r.energy.display()
            );
        }
        "train" => {
            let r = commands::run_train(&cfg)?;
            println!(
                "wrote {} and {}",
                r.checkpoint.display(),
                r.history_path.display()
            );
        }
        "compare" => {
            let r = commands::run_compare(&cfg)?;
            println!("wrote {}", r.comparison.display());
        }
        "sweep-k" => {
            let r = commands::run_sweep_k(&cfg)?;
            println!("wrote {}", r.path.display());
        }
        _ => unreachable!("unknown subcommand"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
