//! Metrics, CSV records, single runs, seeded repetitions and the
//! multi-algorithm comparison experiment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::chain::{self, FiniteMarkovChain, Trajectory, TrajectoryCursor};
use crate::config::{ChainKind, RunConfig, Scale, WorkloadKind};
use crate::objective::{norm, LogisticSpec, Objective, QuadraticSum, StreamingLogistic};
use crate::optim::{Algorithm, Driver, NodeStateMatrix};
use crate::rng::{self, Purpose};
use crate::stats::median;
use crate::textio::{self, fmt_g17};
use crate::topology::{self, CommGraph, MixingMatrix, TopologyKind};
use crate::{Error, Exec, Result};

pub const CSV_HEADER: &str = "k,gamma,consensus_error,grad_norm,objective_error,samples_per_node,wall_ms";

/// `(1/m) Σ_i ‖x(i) − x̄‖₂`.
pub fn consensus_error(state: &NodeStateMatrix) -> f64 {
    let mean = state.mean();
    let m = state.nodes();
    (0..m)
        .map(|i| {
            state
                .row(i)
                .iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / m as f64
}

/// `‖∇f(x̄)‖₂`; `budget` is the per-node sample budget for streaming workloads.
pub fn grad_norm_at_mean<O: Objective>(state: &NodeStateMatrix, obj: &O, budget: Option<usize>) -> Result<f64> {
    Ok(norm(&obj.mean_gradient(&state.mean(), budget)?.gradient))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub k: u64,
    pub gamma: f64,
    pub consensus_error: f64,
    pub grad_norm: f64,
    pub objective_error: f64,
    pub samples_per_node: u64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub fingerprint: String,
    pub rows: Vec<MetricRow>,
}

impl RunRecord {
    pub fn last(&self) -> Option<&MetricRow> {
        self.rows.last()
    }

    /// Smallest grad norm seen on rows with `k ≥ 1`.
    pub fn running_min_grad_norm(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.k >= 1)
            .map(|r| r.grad_norm)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn format_csv(record: &RunRecord) -> String {
    let mut out = format!("# config_sha256={}\n{CSV_HEADER}\n", record.fingerprint);
    for r in &record.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.k,
            fmt_g17(r.gamma),
            fmt_g17(r.consensus_error),
            fmt_g17(r.grad_norm),
            fmt_g17(r.objective_error),
            r.samples_per_node,
            fmt_g17(r.wall_ms)
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<RunRecord> {
    let mut lines = text.lines();
    let fingerprint = lines
        .next()
        .and_then(|l| l.strip_prefix("# config_sha256="))
        .ok_or_else(|| Error::Parse("missing config_sha256 comment line".into()))?
        .to_string();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse("missing or unexpected CSV header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::Parse(format!(
                "row {}: expected 7 fields, got {}",
                i + 1,
                f.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("row {}: bad number {s:?}", i + 1)))
        };
        let int = |s: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| Error::Parse(format!("row {}: bad integer {s:?}", i + 1)))
        };
        rows.push(MetricRow {
            k: int(f[0])?,
            gamma: num(f[1])?,
            consensus_error: num(f[2])?,
            grad_norm: num(f[3])?,
            objective_error: num(f[4])?,
            samples_per_node: int(f[5])?,
            wall_ms: num(f[6])?,
        });
    }
    Ok(RunRecord { fingerprint, rows })
}

pub fn emit_csv(record: &RunRecord, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, format_csv(record)).map_err(|e| Error::io(path, e))
}

/// Rows are recorded at `k = 0`, `k = 1`, every multiple of `cadence` and the
/// final iteration.
pub fn should_record(k: usize, cadence: usize, last: usize) -> bool {
    k <= 1 || k % cadence == 0 || k == last
}

/// Incremental `√m·B·Σ_{j<k} γ_j λ₂^{k−1−j}`: the consensus error bound after
/// `k` rounds from identical initial rows.
#[derive(Clone, Debug)]
pub struct ConsensusBound {
    lambda2: f64,
    scale: f64,
    sum: f64,
}

impl ConsensusBound {
    pub fn new(m: usize, b: f64, lambda2: f64) -> Self {
        ConsensusBound {
            lambda2,
            scale: (m as f64).sqrt() * b,
            sum: 0.0,
        }
    }

    /// Accounts for one round taken with step `gamma`.
    pub fn push(&mut self, gamma: f64) {
        self.sum = self.lambda2 * self.sum + gamma;
    }

    pub fn bound(&self) -> f64 {
        self.scale * self.sum
    }
}

// ---------------------------------------------------------------------------
// Run setup

pub enum Workload {
    Quadratic(QuadraticSum),
    Logistic(StreamingLogistic),
}

/// Everything a run needs that does not depend on the run seed or the
/// algorithm: graph, mixing matrix, workload and sampling chain.
pub struct Setup {
    pub graph: CommGraph,
    pub mixing: MixingMatrix,
    pub workload: Workload,
    /// Finite chain over quadratic components (`None` for the AR workload).
    pub chain: Option<Arc<FiniteMarkovChain>>,
}

impl Setup {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let graph = topology::build_graph(cfg.topology, cfg.nodes, cfg.workload_seed(), cfg.edge_prob)?;
        let mixing = topology::metropolis_weights(&graph);
        let (workload, chain) = match cfg.workload {
            WorkloadKind::Quadratic => {
                let q = QuadraticSum::balanced(
                    cfg.nodes,
                    cfg.dim,
                    cfg.components,
                    cfg.spread,
                    cfg.radius,
                    cfg.workload_seed(),
                )?;
                (Workload::Quadratic(q), Some(Arc::new(component_chain(cfg)?)))
            }
            WorkloadKind::Logistic => {
                let spec = LogisticSpec {
                    nodes: cfg.nodes,
                    dim: cfg.dim,
                    clip: cfg.clip,
                    ref_samples: cfg.ref_samples,
                };
                (
                    Workload::Logistic(StreamingLogistic::generate(&spec, cfg.workload_seed(), cfg.exec)?),
                    None,
                )
            }
        };
        Ok(Setup {
            graph,
            mixing,
            workload,
            chain,
        })
    }
}

fn component_chain(cfg: &RunConfig) -> Result<FiniteMarkovChain> {
    let states = cfg.components;
    let walk = |kind| chain::build_random_walk_chain(&topology::build_graph(kind, states, 0, None)?);
    match cfg.chain_kind() {
        ChainKind::LazyPath => walk(TopologyKind::Path),
        ChainKind::LazyRing => walk(TopologyKind::Ring),
        ChainKind::LazyComplete => walk(TopologyKind::Complete),
        ChainKind::Uniform => chain::uniform_chain(states),
        ChainKind::File => {
            let path = cfg.chain_file.as_ref().expect("validated");
            let h = textio::read_matrix(path)?;
            if h.nrows() != states {
                return Err(Error::Config(format!(
                    "chain_file has {} states but components={states}",
                    h.nrows()
                )));
            }
            chain::build_explicit_chain(h)
        }
        ChainKind::Ar => unreachable!("validated: ar chain implies logistic workload"),
    }
}

/// Runs one configuration on a prepared setup.
pub fn run_on(cfg: &RunConfig, setup: &Setup) -> Result<RunRecord> {
    let fingerprint = cfg.fingerprint();
    match &setup.workload {
        Workload::Quadratic(q) => {
            let chain = setup.chain.clone().expect("quadratic setups carry a chain");
            let cursors = (0..cfg.nodes)
                .map(|i| {
                    TrajectoryCursor::new(
                        chain.clone(),
                        cfg.chain_init,
                        rng::stream(cfg.seed, Purpose::Chain, i as u64),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            drive(cfg, q, &setup.mixing, cursors, None, fingerprint)
        }
        Workload::Logistic(l) => {
            let cursors = (0..cfg.nodes)
                .map(|i| l.trajectory(i, rng::stream(cfg.seed, Purpose::Chain, i as u64)))
                .collect();
            let budget = cfg.grad_budget.unwrap_or(cfg.ref_samples);
            drive(cfg, l, &setup.mixing, cursors, Some(budget), fingerprint)
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<RunRecord> {
    run_on(cfg, &Setup::build(cfg)?)
}

fn drive<O, S>(
    cfg: &RunConfig,
    obj: &O,
    mixing: &MixingMatrix,
    cursors: Vec<S>,
    budget: Option<usize>,
    fingerprint: String,
) -> Result<RunRecord>
where
    O: Objective,
    S: Trajectory<Sample = O::Sample>,
{
    let start = Instant::now();
    let schedule = cfg.schedule()?;
    let mut driver = Driver::new(
        obj,
        mixing,
        cursors,
        cfg.algorithm,
        schedule,
        &cfg.initial_point(),
        cfg.seed,
        cfg.exec,
    )?;
    let iterations = cfg.effective_iterations();
    let mut rows = Vec::new();
    for k in 0..=iterations {
        if k > 0 {
            driver.step()?;
        }
        if should_record(k, cfg.cadence, iterations) {
            let state = &driver.state;
            let mean = state.mean();
            let row = MetricRow {
                k: k as u64,
                gamma: schedule.gamma(k),
                consensus_error: consensus_error(state),
                grad_norm: grad_norm_at_mean(state, obj, budget).map_err(|e| e.at(k))?,
                objective_error: obj.objective_error(&mean).map_err(|e| e.at(k))?,
                samples_per_node: driver.samples_per_node,
                wall_ms: if cfg.timing {
                    start.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                },
            };
            if !(row.consensus_error.is_finite() && row.grad_norm.is_finite() && row.objective_error.is_finite()) {
                return Err(Error::NonFinite("recorded metrics".into()).at(k));
            }
            rows.push(row);
        }
    }
    Ok(RunRecord { fingerprint, rows })
}

/// One run per seed, sharing `setup`; seeds run concurrently under
/// [`Exec::Parallel`]. Results are in seed order.
pub fn run_seeds(cfg: &RunConfig, setup: &Setup, seeds: &[u64], exec: Exec) -> Vec<Result<RunRecord>> {
    exec.map(seeds, |&s| {
        let mut c = cfg.clone();
        c.workload_seed = Some(cfg.workload_seed());
        c.seed = s;
        run_on(&c, setup)
    })
}

// ---------------------------------------------------------------------------
// Comparison experiment

/// Algorithms compared by [`figure1_experiment`].
pub fn figure1_algorithms() -> Vec<Algorithm> {
    let mut v = vec![Algorithm::Dmgd, Algorithm::Mcgd];
    v.extend([1, 2, 4, 8, 16].map(Algorithm::DsgdT));
    v
}

pub fn figure1_sizes(scale: Scale) -> Vec<(usize, usize)> {
    match scale {
        Scale::Desk => vec![(5, 10)],
        Scale::Paper => vec![(10, 50), (20, 100)],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub nodes: usize,
    pub dim: usize,
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub samples_per_node: u64,
    pub median_objective_error: f64,
    pub median_grad_norm: f64,
}

/// Per-algorithm config: same fields as `base` except the algorithm tag and
/// `t`, with the metric cadence scaled so that rows fall on comparable sample
/// counts.
pub fn figure1_config(base: &RunConfig, algorithm: Algorithm, nodes: usize, dim: usize) -> RunConfig {
    let mut c = base.clone();
    c.algorithm = algorithm;
    c.nodes = nodes;
    c.dim = dim;
    c.workload_seed = Some(base.workload_seed());
    if c.sample_budget.is_none() {
        c.sample_budget = Some(base.iterations as u64);
    }
    c.cadence = (base.cadence / algorithm.samples_per_iteration() as usize).max(1);
    c
}

/// Runs every algorithm of [`figure1_algorithms`] for `base.seeds` seeds
/// (`base.seed`, `base.seed + 1`, …) at each size of `base.scale`, under a
/// shared per-node sample budget. Writes
/// `out/m{m}_n{n}/{algorithm}_seed{s}.csv` and `out/summary.csv`.
pub fn figure1_experiment(base: &RunConfig, out: Option<&Path>, exec: Exec) -> Result<Vec<SummaryRow>> {
    let seeds: Vec<u64> = (0..base.seeds as u64).map(|i| base.seed + i).collect();
    let mut summary = Vec::new();
    for (m, n) in figure1_sizes(base.scale) {
        let mut shared = base.clone();
        shared.nodes = m;
        shared.dim = n;
        let setup = Setup::build(&shared)?;
        let jobs: Vec<(Algorithm, u64)> = figure1_algorithms()
            .into_iter()
            .flat_map(|a| seeds.iter().map(move |&s| (a, s)))
            .collect();
        let records = exec.map(&jobs, |&(a, s)| {
            let mut c = figure1_config(base, a, m, n);
            c.seed = s;
            run_on(&c, &setup)
        });
        let records = records.into_iter().collect::<Result<Vec<_>>>()?;
        if let Some(dir) = out {
            for ((a, s), r) in jobs.iter().zip(&records) {
                emit_csv(r, &figure1_csv_path(dir, m, n, *a, *s))?;
            }
        }
        for (ai, a) in figure1_algorithms().into_iter().enumerate() {
            let recs = &records[ai * seeds.len()..(ai + 1) * seeds.len()];
            let finals: Vec<&MetricRow> = recs.iter().filter_map(|r| r.last()).collect();
            let last = finals[0];
            summary.push(SummaryRow {
                nodes: m,
                dim: n,
                algorithm: a,
                iterations: last.k as usize,
                samples_per_node: last.samples_per_node,
                median_objective_error: median(&finals.iter().map(|r| r.objective_error).collect::<Vec<_>>()),
                median_grad_norm: median(&finals.iter().map(|r| r.grad_norm).collect::<Vec<_>>()),
            });
        }
    }
    if let Some(dir) = out {
        let path = dir.join("summary.csv");
        emit_text(&path, &format_summary(&summary))?;
    }
    Ok(summary)
}

pub fn figure1_csv_path(dir: &Path, m: usize, n: usize, a: Algorithm, seed: u64) -> PathBuf {
    dir.join(format!("m{m}_n{n}"))
        .join(format!("{}_seed{seed}.csv", a.label()))
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out =
        String::from("nodes,dim,algorithm,iterations,samples_per_node,median_objective_error,median_grad_norm\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.nodes,
            r.dim,
            r.algorithm.label(),
            r.iterations,
            r.samples_per_node,
            fmt_g17(r.median_objective_error),
            fmt_g17(r.median_grad_norm)
        );
    }
    out
}

fn emit_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consensus_error_examples() {
        let s = NodeStateMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(consensus_error(&s), 1.0);
        let same = NodeStateMatrix::uniform(4, &[1.0, -2.0]);
        assert_eq!(consensus_error(&same), 0.0);
        let shifted = NodeStateMatrix::from_rows(&[vec![5.0], vec![7.0]]).unwrap();
        assert_eq!(consensus_error(&shifted), 1.0);
    }

    #[test]
    fn grad_norm_single_quadratic() {
        // ½(x − 3)² as ½x² − 3x.
        let c = crate::objective::QuadComponent {
            q: vec![1.0],
            b: vec![3.0],
        };
        let q = QuadraticSum::new(vec![vec![c]], 10.0).unwrap();
        let s = NodeStateMatrix::uniform(1, &[0.0]);
        assert!((grad_norm_at_mean(&s, &q, None).unwrap() - 3.0).abs() < 1e-15);
        let at_min = NodeStateMatrix::uniform(1, q.minimizer().unwrap());
        assert!(grad_norm_at_mean(&at_min, &q, None).unwrap() < 1e-10);
    }

    #[test]
    fn cadence_rule() {
        let ks: Vec<usize> = (0..=25).filter(|&k| should_record(k, 10, 25)).collect();
        assert_eq!(ks, vec![0, 1, 10, 20, 25]);
        assert!(should_record(0, 10, 0));
    }

    #[test]
    fn zero_iteration_run_has_one_row() {
        let cfg: RunConfig = "iterations=0\nnodes=3\ndim=2\ncomponents=2".parse().unwrap();
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.rows.len(), 1);
        let text = format_csv(&rec);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_csv(&text).unwrap(), rec);
    }

    #[test]
    fn bound_recursion() {
        let mut b = ConsensusBound::new(4, 2.0, 0.5);
        b.push(1.0);
        b.push(1.0);
        // 2·2·(0.5 + 1)
        assert!((b.bound() - 6.0).abs() < 1e-15);
    }

    #[test]
    fn figure1_configs_differ_only_in_algorithm() {
        let base: RunConfig = "workload=logistic\nsample_budget=64\ncadence=16".parse().unwrap();
        let a = figure1_config(&base, Algorithm::Dmgd, 5, 10);
        let b = figure1_config(&base, Algorithm::DsgdT(16), 5, 10);
        assert_eq!(a.effective_iterations(), 64);
        assert_eq!(b.effective_iterations(), 4);
        let strip = |c: &RunConfig| {
            c.render()
                .lines()
                .filter(|l| !l.starts_with("algorithm=") && !l.starts_with("t=") && !l.starts_with("cadence="))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(&a), strip(&b));
    }
}
