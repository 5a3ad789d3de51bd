//! Command-line front end: `run | scaling | exact | normalize | bounds`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sopsim::harness::{
    cmd_bounds, cmd_exact, cmd_normalize, cmd_run, cmd_scaling, load_snapshot, ExperimentSpec, HarnessError, Initial,
    Mode, ScalingSpec, TargetRule,
};
use sopsim::{Configuration, Direction};

#[derive(Parser)]
#[command(name = "sopsim", version, about = "Particle compression simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Chain,
    Async,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 4.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1_000_000)]
    steps: u64,
    /// Time horizon for async runs.
    #[arg(long)]
    time: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    snapshot_every: u64,
    /// `line` or a snapshot file.
    #[arg(long, default_value = "line")]
    initial: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn initial(&self) -> Initial {
        if self.initial == "line" {
            Initial::Line
        } else {
            Initial::Snapshot(PathBuf::from(&self.initial))
        }
    }

    fn configuration(&self) -> Result<Configuration, HarnessError> {
        match self.initial() {
            Initial::Line => Ok(Configuration::line(self.n, Direction::E)),
            Initial::Snapshot(p) => load_snapshot(&p),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the chain or the async engine, writing metrics and snapshots.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Engine::Chain)]
        engine: Engine,
    },
    /// Steps to compression over several sizes.
    Scaling {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "20,40,80")]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Use perimeter <= ratio*4*sqrt(n) instead of 10*ceil(sqrt(n)).
        #[arg(long)]
        target_ratio: Option<f64>,
    },
    /// Exact stationarity and ergodicity checks on the full state space.
    Exact {
        #[command(flatten)]
        common: Common,
    },
    /// Reduce a configuration to a line and audit the move log.
    Normalize {
        #[command(flatten)]
        common: Common,
        /// Snapshot to normalize (overrides --initial).
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Partition-function lower bounds and the polygon check.
    Bounds {
        #[command(flatten)]
        common: Common,
    },
}

fn spec(c: &Common, mode: Mode) -> ExperimentSpec {
    ExperimentSpec {
        mode,
        n: c.n,
        lambda: c.lambda,
        steps: c.steps,
        time: c.time,
        seed: c.seed,
        snapshot_every: c.snapshot_every,
        initial: c.initial(),
        out: c.out.clone(),
    }
}

fn execute(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Run { common, engine } => {
            let mode = match engine {
                Engine::Chain => Mode::Chain,
                Engine::Async => Mode::Async,
            };
            let summary = cmd_run(&spec(&common, mode))?;
            let last = summary.rows.last().expect("initial row");
            println!("{} snapshots; final step {} perimeter {}", summary.snapshots, last.step, last.perimeter);
            Ok(true)
        }
        Command::Scaling { common, ns, reps, target_ratio } => {
            let target = target_ratio.map_or(TargetRule::TenCeilSqrt, TargetRule::Ratio);
            let spec = ScalingSpec { ns, lambda: common.lambda, reps, budget: common.steps, seed: common.seed, target };
            let table = cmd_scaling(&spec);
            let csv = table.to_csv();
            std::fs::create_dir_all(&common.out)?;
            std::fs::write(common.out.join("scaling.csv"), &csv)?;
            print!("{csv}");
            Ok(true)
        }
        Command::Exact { common } => {
            let r = cmd_exact(common.n, common.lambda, Some(&common.out))?;
            println!("states {}", r.states);
            println!("stationary residual {:.3e}", r.residual);
            println!("detailed balance residual {:.3e}", r.balance_residual);
            println!("weight form deviation {:.3e}", r.weight_form_deviation);
            println!("irreducible {} support symmetric {}", r.irreducible, r.support_symmetric);
            Ok(r.ok())
        }
        Command::Normalize { common, input } => {
            let cfg = match input {
                Some(p) => load_snapshot(&p)?,
                None => common.configuration()?,
            };
            let r = cmd_normalize(&cfg, common.lambda, Some(&common.out))?;
            if r.ok {
                println!("all {} moves valid", r.moves);
            } else {
                println!("audit failed after {} moves", r.moves);
            }
            Ok(r.ok)
        }
        Command::Bounds { common } => {
            let (b, saw) = cmd_bounds(common.n, common.lambda)?;
            let flag = |lb: f64| if lb <= b.z_exact { "OK" } else { "FAIL" };
            println!("Z exact {:.6e}", b.z_exact);
            println!("(sqrt2/lambda)^pmax {:.6e} {}", b.z_lb_sqrt2, flag(b.z_lb_sqrt2));
            for (name, lb) in [("0.12(1.67/lambda)^pmax", b.z_lb_167), ("0.13(2.17/lambda)^pmax", b.z_lb_217)] {
                match lb {
                    Some(v) => println!("{name} {v:.6e} {}", flag(v)),
                    None => println!("{name} not applicable"),
                }
            }
            println!("polygon check {}", if saw { "OK" } else { "FAIL" });
            Ok(b.holds() && saw)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
