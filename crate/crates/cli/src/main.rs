//! `riemobs`: metric condition checks, geodesics and observer simulation
//! from a problem file.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Flags;

#[derive(Debug, Parser)]
#[command(name = "riemobs", version, about = "Riemannian-metric observer analysis")]
struct Cli {
    /// Problem file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every sampling step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the checker tolerance (integration tolerance for simulations).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Directory for the JSON report and CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the JSON report instead of the summary.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Endpoints {
    /// Start point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    from: Point,
    /// End point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    to: Point,
}

#[derive(Debug, Clone, Default, clap::Args)]
struct ObserverArgs {
    /// Final time.
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Constant observer gain.
    #[arg(long = "kE")]
    k_e: Option<f64>,
    /// Decay rate (fitted when omitted).
    #[arg(long)]
    q: Option<f64>,
    /// Distance bound of the checked region (default 1.1 d(0)).
    #[arg(long = "E")]
    e: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Checks listed in `checks.run` (positive definiteness by default).
    CheckMetric,
    /// Conditional negativity of the Lie derivative on the output kernel.
    CheckNegativity,
    /// Fit rho on the grid and find the largest feasible q.
    FitRhoQ {
        #[arg(long)]
        q: Option<f64>,
    },
    /// Totally geodesic output level sets.
    CheckTotallyGeodesic,
    /// Geodesic convexity spot check on `checks.convexity_pairs`.
    CheckConvexity,
    /// Exponential stability of the linearization with the metric gain.
    CheckDetectability {
        #[command(flatten)]
        obs: ObserverArgs,
    },
    /// Minimal geodesic between two points.
    Geodesic {
        #[command(flatten)]
        ends: Endpoints,
    },
    /// Riemannian distance between two points.
    Distance {
        #[command(flatten)]
        ends: Endpoints,
    },
    /// Simulate system and metric observer; writes trace.csv.
    Simulate {
        #[command(flatten)]
        obs: ObserverArgs,
    },
    /// Simulate and check the distance decay bound.
    VerifyDecay {
        #[command(flatten)]
        obs: ObserverArgs,
    },
    /// Built-in two-state example with its reference observer.
    DemoExample1 {
        #[arg(long = "T")]
        t_end: Option<f64>,
    },
}

/// Comma-separated coordinates.
#[derive(Debug, Clone)]
struct Point(Vec<f64>);

impl std::str::FromStr for Point {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<_, _>>()
            .map(Point)
    }
}

impl Command {
    fn name_and_flags(&self, mut flags: Flags) -> (&'static str, Flags) {
        let apply_obs = |flags: &mut Flags, o: &ObserverArgs| {
            flags.t_end = o.t_end;
            flags.k_e = o.k_e;
            flags.q = o.q;
            flags.e = o.e;
        };
        let name = match self {
            Command::CheckMetric => "check-metric",
            Command::CheckNegativity => "check-negativity",
            Command::FitRhoQ { q } => {
                flags.q = *q;
                "fit-rho-q"
            }
            Command::CheckTotallyGeodesic => "check-totally-geodesic",
            Command::CheckConvexity => "check-convexity",
            Command::CheckDetectability { obs } => {
                apply_obs(&mut flags, obs);
                "check-detectability"
            }
            Command::Geodesic { ends } | Command::Distance { ends } => {
                flags.from = Some(ends.from.0.clone());
                flags.to = Some(ends.to.0.clone());
                if matches!(self, Command::Geodesic { .. }) {
                    "geodesic"
                } else {
                    "distance"
                }
            }
            Command::Simulate { obs } => {
                apply_obs(&mut flags, obs);
                "simulate"
            }
            Command::VerifyDecay { obs } => {
                apply_obs(&mut flags, obs);
                "verify-decay"
            }
            Command::DemoExample1 { t_end } => {
                flags.t_end = *t_end;
                "demo-example1"
            }
        };
        debug_assert!(commands::COMMANDS.contains(&name));
        (name, flags)
    }
}

fn execute(cli: &Cli) -> anyhow::Result<i32> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let cfg = match &cli.config {
        Some(p) => Some(config::load_config(p)?),
        None => None,
    };
    let base = Flags {
        seed: cli.seed,
        tol: cli.tol,
        ..Default::default()
    };
    let (name, flags) = cli.command.name_and_flags(base);
    let run = commands::run(name, cfg.as_ref(), &flags)?;
    let json = serde_json::to_string_pretty(&run)? + "\n";
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{name}.json")), &json)?;
        for (file, body) in &run.artifacts {
            std::fs::write(dir.join(file), body)?;
        }
    }
    if cli.json {
        print!("{json}");
    } else {
        print!("{}", output::human(&run));
    }
    Ok(run.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
