use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use cusp_core::harness::experiment::{limit_samples, write_atomic, LIMIT_FILE};
use cusp_core::harness::properties::write_properties;
use cusp_core::harness::report::render_text;
use cusp_core::harness::{build_report, property_suite, run_experiment, write_report, ExperimentConfig, Status};
use cusp_core::limit_law::{moments_of, write_limit_samples};
use cusp_core::model::{simulate_sde, simulate_wiener, solve_limit_ode};
use cusp_core::{CuspError, NoiseStream};

#[derive(Parser)]
#[command(name = "cusp", version, about = "Cusp location estimation in small-noise diffusions")]
struct Cli {
    /// Override the configured worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and the model conditions.
    Validate { config: PathBuf },
    /// Write sample observation paths and the limit path as CSV.
    Simulate {
        config: PathBuf,
        /// Paths per noise level.
        #[arg(long, default_value_t = 1)]
        paths: u32,
    },
    /// Run the Monte Carlo experiment and write the report.
    Estimate { config: PathBuf },
    /// Sample the limit law and write moment goldens.
    LimitLaw {
        config: PathBuf,
        /// Moment order.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Rebuild the report from an output directory.
    Report { dir: PathBuf },
    /// Run the property checks.
    Properties { config: PathBuf },
}

enum Failure {
    Config(String),
    Check(String),
    Runtime(String),
}

impl From<CuspError> for Failure {
    fn from(e: CuspError) -> Self {
        match e {
            CuspError::Config(_) | CuspError::InvalidModel(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(path: &FsPath, workers: Option<usize>) -> Result<ExperimentConfig, Failure> {
    let mut c = ExperimentConfig::load(path)?;
    if let Some(w) = workers {
        c.workers = w;
    }
    c.validate()?;
    Ok(c)
}

#[derive(Serialize)]
struct Golden {
    #[serde(rename = "H")]
    hurst: f64,
    #[serde(rename = "U")]
    half_width: f64,
    n: usize,
    p: f64,
    mean: f64,
    se: f64,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { config } => {
            let c = ExperimentConfig::load(&config)?;
            let problems = c.problems()?;
            if problems.is_empty() {
                let r = c.model_report()?;
                println!(
                    "ok: H = {:.6}, x_T(theta) at Θ ends = {:?}",
                    c.model.hurst(),
                    r.x_t_at_endpoints
                );
                Ok(())
            } else {
                Err(Failure::Config(problems.join("\n")))
            }
        }
        Command::Simulate { config, paths } => {
            let c = load(&config, cli.workers)?;
            let dir = c.out_dir.join("paths");
            fs::create_dir_all(&dir).map_err(CuspError::from)?;
            for (i, &eps) in c.eps_list.iter().enumerate() {
                let n = c.n_steps(eps);
                let mut buf = Vec::new();
                solve_limit_ode(&c.model, c.theta0, n)?.write_csv(&mut buf)?;
                write_atomic(&dir.join(format!("limit_eps{i}.csv")), &buf)?;
                for r in 0..paths {
                    let w = simulate_wiener(
                        NoiseStream::for_replicate(c.master_seed, i as u32, r),
                        n,
                        c.model.horizon,
                    );
                    let x = simulate_sde(&c.model, c.theta0, eps, &w)?;
                    let mut buf = Vec::new();
                    x.write_csv(&mut buf)?;
                    write_atomic(&dir.join(format!("path_eps{i}_rep{r}.csv")), &buf)?;
                }
            }
            println!("wrote paths to {}", dir.display());
            Ok(())
        }
        Command::Estimate { config } => {
            let c = load(&config, cli.workers)?;
            let report = run_experiment(&c)?;
            print!("{}", render_text(&report));
            Ok(())
        }
        Command::LimitLaw { config, p } => {
            let c = load(&config, cli.workers)?;
            fs::create_dir_all(&c.out_dir).map_err(CuspError::from)?;
            let samples = rayon::ThreadPoolBuilder::new()
                .num_threads(c.workers)
                .build()
                .map_err(|e| Failure::Runtime(e.to_string()))?
                .install(|| limit_samples(&c))?;
            let mut buf = Vec::new();
            write_limit_samples(&samples, &mut buf)?;
            write_atomic(&c.out_dir.join(LIMIT_FILE), &buf)?;
            let l = &c.limit;
            let m = moments_of(&samples, c.model.hurst(), l.half_width, l.n_per_side, p)?;
            for (name, e) in [("u_hat", m.u_hat), ("u_tilde", m.u_tilde)] {
                let g = Golden {
                    hurst: m.hurst,
                    half_width: m.half_width,
                    n: e.n,
                    p,
                    mean: e.mean,
                    se: e.se,
                };
                let json = serde_json::to_string_pretty(&g).map_err(|e| Failure::Runtime(e.to_string()))?;
                write_atomic(&c.out_dir.join(format!("golden_{name}.json")), json.as_bytes())?;
                println!("E|{name}|^{p} = {:.6} ± {:.6} (n = {})", e.mean, e.se, e.n);
            }
            println!("truncation-suspect samples: {}", m.truncation_suspect);
            Ok(())
        }
        Command::Report { dir } => {
            let report = build_report(&dir)?;
            write_report(&dir, &report)?;
            print!("{}", render_text(&report));
            Ok(())
        }
        Command::Properties { config } => {
            let c = load(&config, cli.workers)?;
            let outcomes = property_suite(&c)?;
            write_properties(&c.out_dir, &outcomes)?;
            for o in &outcomes {
                println!("{}", o.line());
            }
            let failed: Vec<&str> = outcomes
                .iter()
                .filter(|o| o.status == Status::Fail)
                .map(|o| o.name.as_str())
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Check(format!("failed: {}", failed.join(", "))))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration invalid: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Check(m)) => {
            eprintln!("{m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
