use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rmobo::driver::{
    cached_reference_front, check_proposition1, load_front, run_problem, score_run, suite,
    write_avd_history, AcqKind, Method, ReferenceSettings, RunConfig, RunRecord, SuiteConfig,
    SCORE_MC_SAMPLES,
};
use rmobo::problem::Problem;

#[derive(Parser)]
#[command(
    name = "rmobo",
    version,
    about = "Robust multi-objective Bayesian optimization under input noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization and write its record directory.
    Run {
        /// Key-value run config; other flags override its entries.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        problem: Option<String>,
        /// rmobo, mobo or ea-gp-os
        #[arg(long)]
        method: Option<String>,
        /// ehvi or qehvi
        #[arg(long)]
        acq: Option<String>,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ke_samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute (or load from cache) the robust reference front of a benchmark.
    ReferenceFront {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long, default_value_t = SCORE_MC_SAMPLES)]
        n_mc: usize,
    },
    /// Write the AVD history of a run against a reference front.
    Score {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Output CSV; defaults to avd.csv inside the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark protocol described by a key-value file.
    Suite {
        #[arg(long)]
        config: PathBuf,
    },
    /// Grid-search the maximizers of f and of its Bayes risk per objective.
    CheckProp1 {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = SCORE_MC_SAMPLES)]
        n_mc: usize,
    },
}

fn run_command(cmd: Command) -> rmobo::Result<bool> {
    match cmd {
        Command::Run {
            config,
            problem,
            method,
            acq,
            q,
            iters,
            seed,
            ke_samples,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => RunConfig::load(&path)?,
                None => {
                    let problem = problem.clone().ok_or_else(|| {
                        rmobo::Error::InvalidArgument(
                            "--problem is required without --config".into(),
                        )
                    })?;
                    let iters = iters.ok_or_else(|| {
                        rmobo::Error::InvalidArgument("--iters is required".into())
                    })?;
                    RunConfig::new(&problem, Method::Rmobo, AcqKind::Ehvi, 1, iters, 0)
                }
            };
            if let Some(p) = problem {
                cfg.problem = p;
            }
            if let Some(m) = method {
                cfg.method = Method::from_name(&m)?;
            }
            if let Some(a) = acq {
                cfg.acquisition = AcqKind::from_name(&a)?;
            }
            if let Some(q) = q {
                cfg.q = q;
            }
            if let Some(n) = iters {
                cfg.n_iter = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = ke_samples {
                cfg.ke_samples = n;
            }
            if out.is_some() {
                cfg.out = out;
            }
            if cfg.out.is_none() {
                return Err(rmobo::Error::InvalidArgument("--out is required".into()));
            }
            cfg.validate()?;
            let problem = Problem::benchmark(&cfg.problem)?;
            let rec = run_problem(&problem, &cfg)?;
            println!(
                "{} {} on {}: {} evaluations, {} front points, {:.1} s -> {}",
                cfg.method,
                cfg.acquisition,
                cfg.problem,
                rec.n_evaluations(),
                rec.recommendation.len(),
                rec.total_wall_time,
                cfg.out
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default()
            );
            if let rmobo::driver::RunStatus::Aborted { iteration, reason } = &rec.status {
                eprintln!("run aborted at iteration {iteration}: {reason}");
                return Ok(false);
            }
        }
        Command::ReferenceFront {
            problem,
            seed,
            out,
            generations,
            n_mc,
        } => {
            let problem = Problem::benchmark(&problem)?;
            let mut settings = ReferenceSettings::new(seed);
            settings.n_mc = n_mc;
            if let Some(g) = generations {
                settings.ea.generations = g;
            }
            let (front, path) = cached_reference_front(&problem, &settings, &out)?;
            println!("{} points -> {}", front.len(), path.display());
        }
        Command::Score {
            run,
            reference,
            out,
        } => {
            let rec = RunRecord::load(&run)?;
            let problem = Problem::benchmark(&rec.config.problem)?;
            if !reference.exists() {
                return Err(rmobo::Error::MissingReference(
                    reference.display().to_string(),
                ));
            }
            let front = load_front(&reference)?;
            let history = score_run(&problem, &rec, &front)?;
            let path = out.unwrap_or_else(|| run.join("avd.csv"));
            write_avd_history(&path, &history)?;
            if let Some(last) = history.last() {
                println!(
                    "final AVD {:.6} after {} evaluations -> {}",
                    last.avd,
                    last.n_evaluations,
                    path.display()
                );
            }
        }
        Command::Suite { config } => {
            let cfg = SuiteConfig::load(&config)?;
            let rows = suite(&cfg)?;
            for (i, r) in rows.iter().enumerate() {
                let last = rows.get(i + 1).is_none_or(|n| {
                    (&n.problem, n.method, n.acquisition) != (&r.problem, r.method, r.acquisition)
                });
                if last {
                    println!(
                        "{:<16} {:<9} {:<6} final AVD median {:.4} [{:.4}, {:.4}]",
                        r.problem, r.method, r.acquisition, r.median, r.q1, r.q3
                    );
                }
            }
            println!("summary -> {}", cfg.out.join("summary.csv").display());
        }
        Command::CheckProp1 { problem, n_mc } => {
            let problem = Problem::benchmark(&problem)?;
            println!("{}", check_proposition1(&problem, n_mc)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run_command(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
