use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cfsim::config::{Preset, SimConfig};
use cfsim::deployment::Role;
use cfsim::error::Error;
use cfsim::harness::{emit, run_campaign, run_oracle, Bound, Link, ORACLES};

/// Cell-free and user-centric massive MIMO simulator for ground users and UAVs.
#[derive(Parser)]
#[command(name = "cfsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign of independent drops and write CDFs, rates and a manifest.
    Run {
        /// TOML file; with --preset its keys override the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        drops: Option<usize>,
        /// Master seed; replaces the one in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// paper, desk or mmimo.
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
        /// Also dump path gains, estimates, serving sets and solver traces.
        #[arg(long)]
        debug: bool,
    },
    /// Check a config file and print it fully resolved.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare a sampled quantity with its closed form.
    Oracle {
        /// fourth-moment, uatf-dl or uatf-ul.
        name: String,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() {
        2
    } else if e.is_numerical() {
        3
    } else {
        1
    }
}

/// Reading the config file counts as part of configuration.
fn load(config: Option<&PathBuf>, preset: Option<Preset>) -> Result<SimConfig, Error> {
    let as_config = |e: Error| match e {
        Error::Io { path, source } => Error::config("config", format!("{}: {source}", path.display())),
        other => other,
    };
    match (config, preset) {
        (Some(path), Some(p)) => SimConfig::from_file_over(&p.config(), path).map_err(as_config),
        (Some(path), None) => SimConfig::from_file(path).map_err(as_config),
        (None, Some(p)) => Ok(p.config()),
        (None, None) => Err(Error::config("config", "give --config, --preset or both")),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            drops,
            seed,
            preset,
            out,
            jobs,
            debug,
        } => {
            let mut cfg = load(config.as_ref(), preset)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let drops = drops.unwrap_or_else(|| preset.unwrap_or(Preset::Paper).default_drops());
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let result = run_campaign(&cfg, drops, jobs)?;
            for path in emit(&result, &out, debug)? {
                log::info!("wrote {}", path.display());
            }
            println!("{drops} drops, seed {}, output in {}", cfg.seed, out.display());
            for role in [Role::Gue, Role::Uav] {
                for link in Link::ALL {
                    if let Some(p) = result.percentiles(role, link, Bound::Lb) {
                        println!(
                            "{:>3} {} lower bound: 1% {:.3e}  5% {:.3e}  median {:.3e} bit/s",
                            role.as_str(),
                            link.as_str(),
                            p.p1,
                            p.p5,
                            p.median
                        );
                    }
                }
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load(Some(&config), None)?;
            print!("{}", cfg.to_toml_string());
            Ok(())
        }
        Command::Oracle { name, samples, seed } => {
            let lines = run_oracle(&name, samples, seed)?;
            let mut all_ok = true;
            for l in &lines {
                let ok = l.within(3.0);
                all_ok &= ok;
                println!(
                    "{} {:<28} sampled {:.6e} ± {:.2e}  analytic {:.6e}  z = {:.2}",
                    if ok { "PASS" } else { "FAIL" },
                    l.label,
                    l.sampled,
                    l.stderr,
                    l.analytic,
                    l.z()
                );
            }
            if all_ok {
                Ok(())
            } else {
                Err(Error::Numerical(format!(
                    "oracle `{name}` disagrees beyond 3 standard errors (known: {})",
                    ORACLES.join(", ")
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
