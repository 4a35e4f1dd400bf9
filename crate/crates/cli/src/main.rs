//! `dmgd-sim`: validation, analysis and experiment entry point.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use dmgd_core::chain::{self, FiniteMarkovChain, TrajectoryCursor};
use dmgd_core::config::{keys_help, RunConfig, WorkloadKind};
use dmgd_core::harness::{self, Setup, Workload};
use dmgd_core::objective::gradcheck;
use dmgd_core::rng::{self, Purpose};
use dmgd_core::textio::{self, fmt_g17};
use dmgd_core::topology::{self, CommGraph, MIXING_TOL};
use dmgd_core::{exec, Error, Exec};

#[derive(Parser, Debug)]
#[command(
    name = "dmgd-sim",
    version,
    about = "Decentralized Markov-chain gradient descent simulator"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file (flat key=value lines)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Run seed; overrides the config and DMGD_SIM_SEED
    #[arg(long, global = true, value_name = "U64", env = "DMGD_SIM_SEED")]
    seed: Option<u64>,
    /// Worker threads for parallel sections
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Metric cadence; overrides the config
    #[arg(long, global = true, value_name = "N")]
    cadence: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a mixing matrix: graph pattern, symmetry, null space, spectrum
    ValidateMixing {
        /// Matrix file (whitespace-separated rows). Without it, the Metropolis
        /// matrix of the config's topology is checked.
        matrix: Option<PathBuf>,
    },
    /// Validate a transition matrix and print its stationary law and spectrum
    ChainSpectra {
        /// Transition matrix file. Without it, the config's component chain is used.
        matrix: Option<PathBuf>,
        /// Also write a trajectory of this many steps to <out>/trajectory.txt
        #[arg(long, value_name = "STEPS")]
        trajectory: Option<usize>,
    },
    /// Run one configuration and emit its metrics CSV
    Run,
    /// Compare DMGD, MCGD and DSGD-T (T = 1, 2, 4, 8, 16) under a shared sample budget
    Figure1,
    /// Compare component gradients against central finite differences
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        probes: usize,
    },
}

fn main() -> ExitCode {
    let help = keys_help();
    let cmd = Cli::command().mut_subcommands(|s| s.after_help(help.clone()));
    let matches = match cmd.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation_failure() { 1 } else { 2 })
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    if let Some(jobs) = cli.common.jobs {
        exec::configure_threads(jobs)?;
    }
    let c = &cli.common;
    match &cli.command {
        Command::ValidateMixing { matrix } => validate_mixing(c, matrix.as_deref()),
        Command::ChainSpectra { matrix, trajectory } => chain_spectra(c, matrix.as_deref(), *trajectory),
        Command::Run => run(c),
        Command::Figure1 => figure1(c),
        Command::Gradcheck { probes } => grad_check(c, *probes),
    }
}

/// Loads the config (or defaults when `required` is false and none is given)
/// and applies flag overrides.
fn load_config(c: &Common, required: bool) -> Result<RunConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            text.parse::<RunConfig>()?
        }
        None if required => return Err(Error::Config("--config is required for this subcommand".into())),
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(k) = c.cadence {
        cfg.cadence = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn validate_mixing(c: &Common, matrix: Option<&Path>) -> Result<ExitCode, Error> {
    let (w, g) = match matrix {
        Some(path) => {
            let w = textio::read_matrix(path)?;
            let g = match &c.config {
                Some(_) => graph_from_config(&load_config(c, false)?)?,
                None => CommGraph::from_support(&w, MIXING_TOL)?,
            };
            (w, g)
        }
        None => {
            let g = graph_from_config(&load_config(c, false)?)?;
            (topology::metropolis_weights(&g).matrix().clone(), g)
        }
    };
    let report = topology::validate_mixing(&w, &g)?;
    print!("{report}");
    if report.passed() {
        let lambda2 = topology::MixingMatrix::from_matrix(w)?.lambda2();
        println!("lambda2: {}", fmt_g17(lambda2));
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn graph_from_config(cfg: &RunConfig) -> Result<CommGraph, Error> {
    topology::build_graph(cfg.topology, cfg.nodes, cfg.workload_seed(), cfg.edge_prob)
}

fn chain_spectra(c: &Common, matrix: Option<&Path>, trajectory: Option<usize>) -> Result<ExitCode, Error> {
    let chain: FiniteMarkovChain = match matrix {
        Some(path) => {
            let h = textio::read_matrix(path)?;
            let report = chain::validate_chain(&h);
            if !report.passed() {
                eprint!("{report}");
                return Ok(ExitCode::from(1));
            }
            print!("{report}");
            chain::build_explicit_chain(h)?
        }
        None => {
            let cfg = load_config(c, false)?;
            if cfg.workload != WorkloadKind::Quadratic {
                return Err(Error::Config(
                    "chain-spectra needs a finite chain (quadratic workload or a matrix file)".into(),
                ));
            }
            let setup = Setup::build(&cfg)?;
            let chain = setup.chain.expect("quadratic setups carry a chain");
            print!("{}", chain::validate_chain(chain.transition()));
            Arc::try_unwrap(chain).unwrap_or_else(|a| (*a).clone())
        }
    };
    let join = |v: &mut dyn Iterator<Item = f64>| v.map(fmt_g17).collect::<Vec<_>>().join(" ");
    println!("stationary: {}", join(&mut chain.stationary().iter().copied()));
    let eig: Vec<String> = chain
        .eigenvalues()
        .iter()
        .map(|z| {
            if z.im == 0.0 {
                fmt_g17(z.re)
            } else {
                format!("{}{:+}i", fmt_g17(z.re), z.im)
            }
        })
        .collect();
    println!("eigenvalues: {}", eig.join(" "));
    println!("lambda2: {}", fmt_g17(chain.lambda2()));
    println!("lambda_min: {}", fmt_g17(chain.lambda_min()));
    println!("lambda_hat: {}", fmt_g17(chain.lambda_hat()));
    println!("fitted_c: {}", fmt_g17(chain::fit_deviation_constant(&chain, 50)));
    if let Some(steps) = trajectory {
        let dir = c
            .out
            .as_deref()
            .ok_or_else(|| Error::Config("--trajectory needs --out".into()))?;
        let seed = c.seed.unwrap_or(0);
        let mut cursor = TrajectoryCursor::new(Arc::new(chain), 0, rng::stream(seed, Purpose::Chain, 0))?;
        let states = cursor.trajectory(steps);
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        textio::write_trajectory(&dir.join("trajectory.txt"), &states)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run(c: &Common) -> Result<ExitCode, Error> {
    let cfg = load_config(c, true)?;
    let setup = Setup::build(&cfg)?;
    let record = harness::run_on(&cfg, &setup)?;
    match &c.out {
        Some(dir) => {
            let path = dir.join(format!("{}_seed{}.csv", cfg.algorithm.label(), cfg.seed));
            harness::emit_csv(&record, &path)?;
            if let Workload::Logistic(l) = &setup.workload {
                l.export_batch(&dir.join("reference_batch.bin"))?;
            }
            eprintln!("wrote {}", path.display());
        }
        None => print!("{}", harness::format_csv(&record)),
    }
    Ok(ExitCode::SUCCESS)
}

fn figure1(c: &Common) -> Result<ExitCode, Error> {
    let cfg = load_config(c, true)?;
    let summary = harness::figure1_experiment(&cfg, c.out.as_deref(), Exec::default())?;
    print!("{}", harness::format_summary(&summary));
    Ok(ExitCode::SUCCESS)
}

fn grad_check(c: &Common, probes: usize) -> Result<ExitCode, Error> {
    let cfg = load_config(c, false)?;
    let setup = Setup::build(&cfg)?;
    let report = match &setup.workload {
        Workload::Quadratic(q) => gradcheck(q, probes, cfg.radius, cfg.seed),
        Workload::Logistic(l) => gradcheck(l, probes, cfg.radius, cfg.seed),
    };
    println!(
        "probes: {}\nfailures: {}\nworst_relative_error: {}",
        report.probes,
        report.failures,
        fmt_g17(report.worst_relative_error)
    );
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
