//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! per criterion and exits nonzero if any failed.

use std::sync::Arc;
use std::time::{Duration, Instant};

use dmgd_core::chain::{self, TrajectoryCursor};
use dmgd_core::config::RunConfig;
use dmgd_core::harness::{self, consensus_error, figure1_config, run_on, ConsensusBound, Setup, Workload};
use dmgd_core::objective::{
    estimate_bounds, gradcheck, LogisticSpec, Objective, QuadComponent, QuadraticSum, StreamingLogistic,
};
use dmgd_core::optim::{zo_estimate, Algorithm, Driver};
use dmgd_core::rng::{self, Purpose};
use dmgd_core::stats::{mann_whitney, median};
use dmgd_core::topology::{build_graph, metropolis_weights, power_deviation, TopologyKind};
use dmgd_core::{Exec, Result};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn sci(v: &[f64], digits: usize) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.digits$e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Result<Outcome>)> = vec![
        (
            "1 mixing-matrix contraction",
            Duration::from_secs(1),
            mixing_contraction,
        ),
        ("2 chain deviation decay", Duration::from_secs(1), chain_deviation),
        ("3 stationary-law sampling", Duration::from_secs(5), stationary_sampling),
        ("4 gradient oracles", Duration::from_secs(1), gradient_oracles),
        ("5 zeroth-order estimator", Duration::from_secs(2), zeroth_order),
        ("6 mean dynamics and displacement", Duration::MAX, mean_dynamics),
        ("7 consensus bound", Duration::from_secs(10), consensus_bound),
        ("8 convergence trend", Duration::from_secs(30), convergence_trend),
        ("9 reduction identity", Duration::from_secs(60), reduction_identity),
        ("10 sample-budget ordering", Duration::from_secs(300), figure1_ordering),
        ("11 determinism", Duration::MAX, determinism),
    ];
    let mut failed = 0;
    for (name, limit, f) in criteria {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && elapsed < limit, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let limit_text = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" / limit {:.0?}", limit)
        };
        println!(
            "criterion {name}: {} ({:.2?}{limit_text}) {detail}",
            if passed { "PASS" } else { "FAIL" },
            elapsed
        );
        if !passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}

fn mixing_contraction() -> Result<Outcome> {
    let graphs = [
        build_graph(TopologyKind::Path, 5, 0, None)?,
        build_graph(TopologyKind::Ring, 6, 0, None)?,
        build_graph(TopologyKind::ErdosRenyi, 8, 11, Some(0.4))?,
    ];
    let mut worst = f64::NEG_INFINITY;
    for g in &graphs {
        let w = metropolis_weights(g);
        let l2 = w.lambda2();
        for k in 1..=200u32 {
            worst = worst.max(power_deviation(&w, k) - l2.powi(k as i32));
        }
    }
    Ok(outcome(
        worst <= 1e-10,
        format!("max(‖W^k−P‖ − λ₂^k) = {worst:.3e} over path-5, ring-6, ER(8,0.4), k=1..200"),
    ))
}

fn chain_deviation() -> Result<Outcome> {
    let two = chain::build_explicit_chain(DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]))?;
    let mut ratio_err: f64 = 0.0;
    for k in 1..=50u32 {
        ratio_err = ratio_err.max((two.deviation_sup(k + 1) / two.deviation_sup(k) - 0.7).abs());
    }
    let path4 = chain::build_random_walk_chain(&build_graph(TopologyKind::Path, 4, 0, None)?)?;
    let c = chain::fit_deviation_constant(&path4, 50);
    let lh = path4.lambda_hat();
    let mut slack = f64::INFINITY;
    for k in 51..=500u32 {
        slack = slack.min(c * lh.powi(k as i32) - path4.deviation_sup(k));
    }
    Ok(outcome(
        ratio_err <= 1e-10 && c.is_finite() && slack >= 0.0,
        format!("max |ratio − 0.7| = {ratio_err:.2e}; path-4 C = {c:.4}, λ̂ = {lh}, min slack on 51..500 = {slack:.2e}"),
    ))
}

fn stationary_sampling() -> Result<Outcome> {
    let chain = Arc::new(chain::build_random_walk_chain(&build_graph(
        TopologyKind::Path,
        3,
        0,
        None,
    )?)?);
    let steps = 1_000_000u64;
    let mut cursor = TrajectoryCursor::new(chain.clone(), 0, rng::stream(2024, Purpose::Chain, 0))?;
    let mut counts = [0u64; 3];
    for _ in 0..steps {
        counts[cursor.step()] += 1;
    }
    let se = chain.visit_std_errors(steps);
    let target = [0.25, 0.5, 0.25];
    let z: Vec<f64> = (0..3)
        .map(|i| (counts[i] as f64 / steps as f64 - target[i]).abs() / se[i])
        .collect();
    Ok(outcome(
        z.iter().all(|&v| v <= 3.0),
        format!(
            "|freq − π*| / SE = {} (autocorrelation-aware SE {})",
            sci(&z, 3),
            sci(&se, 2)
        ),
    ))
}

fn gradient_oracles() -> Result<Outcome> {
    let logistic = StreamingLogistic::generate(
        &LogisticSpec {
            nodes: 5,
            dim: 10,
            clip: None,
            ref_samples: 2000,
        },
        3,
        Exec::Sequential,
    )?;
    let quad = QuadraticSum::balanced(5, 10, 4, 0.5, 10.0, 3)?;
    let a = gradcheck(&logistic, 100, 3.0, 1);
    let b = gradcheck(&quad, 100, 10.0, 1);
    Ok(outcome(
        a.passed() && b.passed(),
        format!(
            "logistic {}/{} ok (worst rel {:.2e}); quadratic {}/{} ok (worst rel {:.2e})",
            a.probes - a.failures,
            a.probes,
            a.worst_relative_error,
            b.probes - b.failures,
            b.probes,
            b.worst_relative_error
        ),
    ))
}

fn zeroth_order() -> Result<Outcome> {
    // f = ⟨a, x⟩ through a quadratic with Q = 0 and b = −a. Equal-magnitude
    // entries make the relative 2% tolerance equally tight on every
    // coordinate; the sphere stream seed is fixed.
    let n = 10;
    let a: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let obj = QuadraticSum::new(
        vec![vec![QuadComponent {
            q: vec![0.0; n * n],
            b: a.iter().map(|v| -v).collect(),
        }]],
        1.0,
    )?;
    let draws = 100_000;
    let mut rng = rng::stream(0, Purpose::Sphere, 0);
    let x = vec![0.1; n];
    let mut sum = vec![0.0; n];
    for _ in 0..draws {
        let h = rng::unit_sphere(n, &mut rng);
        let est = zo_estimate(&obj, 0, &0, &x, 1e-3, &h)?;
        sum.iter_mut().zip(&est).for_each(|(s, e)| *s += e);
    }
    let rel: Vec<f64> = sum
        .iter()
        .zip(&a)
        .map(|(s, ai)| (s / draws as f64 - ai).abs() / ai.abs())
        .collect();
    let worst = rel.iter().cloned().fold(0.0, f64::max);
    Ok(outcome(
        worst <= 0.02,
        format!(
            "worst per-coordinate relative error {:.3}% over {draws} draws",
            worst * 100.0
        ),
    ))
}

/// Per-run checks of the mean recursion and displacement bound.
struct MeanCheck {
    max_recursion_err: f64,
    max_displacement_ratio: f64,
    max_iterate_norm: f64,
}

/// Drives a DMGD run directly, checking every round. `b` must bound the
/// component gradients wherever the iterates go; callers confirm that with
/// `max_iterate_norm`.
fn checked_dmgd<O, S>(
    obj: &O,
    setup: &Setup,
    cursors: Vec<S>,
    cfg: &RunConfig,
    b: f64,
    mut on_row: impl FnMut(usize, &Driver<'_, O, S>),
) -> Result<MeanCheck>
where
    O: Objective,
    S: dmgd_core::chain::Trajectory<Sample = O::Sample>,
{
    let schedule = cfg.schedule()?;
    let mut d = Driver::new(
        obj,
        &setup.mixing,
        cursors,
        Algorithm::Dmgd,
        schedule,
        &cfg.initial_point(),
        cfg.seed,
        cfg.exec,
    )?;
    let m = obj.nodes() as f64;
    let mut check = MeanCheck {
        max_recursion_err: 0.0,
        max_displacement_ratio: 0.0,
        max_iterate_norm: 0.0,
    };
    let iterations = cfg.effective_iterations();
    on_row(0, &d);
    for k in 0..iterations {
        let before = d.state.mean();
        let gamma = schedule.gamma(k);
        let round = d.step()?;
        let after = d.state.mean();
        let mut disp = 0.0;
        for c in 0..before.len() {
            let g: f64 = round.directions.iter().map(|row| row[c]).sum();
            let predicted = before[c] - gamma / m * g;
            check.max_recursion_err = check.max_recursion_err.max((after[c] - predicted).abs());
            disp += (after[c] - before[c]).powi(2);
        }
        check.max_displacement_ratio = check.max_displacement_ratio.max(disp.sqrt() / (b * gamma));
        for i in 0..d.state.nodes() {
            let r = d.state.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            check.max_iterate_norm = check.max_iterate_norm.max(r);
        }
        if harness::should_record(k + 1, cfg.cadence, iterations) {
            on_row(k + 1, &d);
        }
    }
    Ok(check)
}

fn quad_cursors(cfg: &RunConfig, setup: &Setup) -> Result<Vec<TrajectoryCursor>> {
    let chain = setup.chain.clone().expect("quadratic setup");
    (0..cfg.nodes)
        .map(|i| {
            TrajectoryCursor::new(
                chain.clone(),
                cfg.chain_init,
                rng::stream(cfg.seed, Purpose::Chain, i as u64),
            )
        })
        .collect()
}

fn quad(setup: &Setup) -> &QuadraticSum {
    match &setup.workload {
        Workload::Quadratic(q) => q,
        Workload::Logistic(_) => unreachable!(),
    }
}

fn mean_dynamics() -> Result<Outcome> {
    let configs = [
        "topology=ring\nnodes=6\ndim=10\niterations=2000",
        "topology=path\nnodes=5\ndim=10\nchain=lazy_path\niterations=2000\nseed=3",
        "topology=erdos_renyi\nedge_prob=0.4\nnodes=8\ndim=5\nchain=uniform\niterations=2000\nseed=4",
        "topology=star\nnodes=5\ndim=10\nchain=lazy_ring\ncomponents=5\niterations=2000\nx0=1",
    ];
    let mut worst_err: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let mut inside = true;
    let mut b_note = Vec::new();
    for text in configs {
        let cfg: RunConfig = text.parse()?;
        let setup = Setup::build(&cfg)?;
        let q = quad(&setup);
        let b = q.grad_bound().expect("closed form");
        let (b_hat, _) = estimate_bounds(q, 200, q.radius(), 1)?;
        b_note.push(format!("{b_hat:.2}≤{b:.2}"));
        let c = checked_dmgd(q, &setup, quad_cursors(&cfg, &setup)?, &cfg, b, |_, _| {})?;
        worst_err = worst_err.max(c.max_recursion_err);
        worst_ratio = worst_ratio.max(c.max_displacement_ratio);
        inside &= c.max_iterate_norm <= q.radius();
    }
    // Streaming workload: B = clip radius bounds every sample gradient.
    let cfg: RunConfig = "workload=logistic\nref_samples=2000\niterations=2000".parse()?;
    let setup = Setup::build(&cfg)?;
    if let Workload::Logistic(l) = &setup.workload {
        let cursors = (0..cfg.nodes)
            .map(|i| l.trajectory(i, rng::stream(cfg.seed, Purpose::Chain, i as u64)))
            .collect();
        let b = l.grad_bound().expect("clip radius");
        let c = checked_dmgd(l, &setup, cursors, &cfg, b, |_, _| {})?;
        worst_err = worst_err.max(c.max_recursion_err);
        worst_ratio = worst_ratio.max(c.max_displacement_ratio);
    }
    Ok(outcome(
        worst_err <= 1e-12 && worst_ratio <= 1.0 && inside,
        format!(
            "max mean-recursion error {worst_err:.2e}; max ‖Δx̄‖/(Bγ) = {worst_ratio:.3}; iterates inside domain: {inside}; B̂≤B: {}",
            b_note.join(", ")
        ),
    ))
}

fn consensus_bound() -> Result<Outcome> {
    let cfg: RunConfig = "topology=ring\nnodes=6\ndim=10\ntheta=0.51\niterations=5000".parse()?;
    let setup = Setup::build(&cfg)?;
    let q = quad(&setup);
    let b = q.grad_bound().expect("closed form");
    let schedule = cfg.schedule()?;
    let mut bound = ConsensusBound::new(cfg.nodes, b, setup.mixing.lambda2());
    let mut pushed = 0;
    let mut rows = 0;
    let mut worst_ratio: f64 = 0.0;
    let check = checked_dmgd(q, &setup, quad_cursors(&cfg, &setup)?, &cfg, b, |k, d| {
        while pushed < k {
            bound.push(schedule.gamma(pushed));
            pushed += 1;
        }
        rows += 1;
        let ce = consensus_error(&d.state);
        if k > 0 {
            worst_ratio = worst_ratio.max(ce / bound.bound());
        } else if ce != 0.0 {
            worst_ratio = f64::INFINITY;
        }
    })?;
    let inside = check.max_iterate_norm <= q.radius();
    Ok(outcome(
        worst_ratio <= 1.0 && inside,
        format!(
            "{rows} recorded rows; max consensus_error / bound = {worst_ratio:.3e}; iterates inside domain: {inside}"
        ),
    ))
}

fn convergence_trend() -> Result<Outcome> {
    let base: RunConfig =
        "nodes=5\ndim=10\ncomponents=4\nchain=lazy_path\ntheta=0.51\niterations=10000\ncadence=1".parse()?;
    let setup = Setup::build(&base)?;
    let q = quad(&setup);
    let b = q.grad_bound().expect("closed form");
    let mut mins = Vec::new();
    let mut worst_err: f64 = 0.0;
    for seed in 0..5 {
        let mut cfg = base.clone();
        cfg.seed = seed;
        let mut running = f64::INFINITY;
        let c = checked_dmgd(q, &setup, quad_cursors(&cfg, &setup)?, &cfg, b, |k, d| {
            if k >= 1 {
                let g = harness::grad_norm_at_mean(&d.state, q, None).expect("finite-sum gradient");
                running = running.min(g);
            }
        })?;
        worst_err = worst_err.max(c.max_recursion_err);
        mins.push(running);
    }
    let med = median(&mins);
    Ok(outcome(
        med < 1e-2 && worst_err <= 1e-12,
        format!(
            "median running-min ‖∇f(x̄)‖ by k=10⁴: {med:.3e} (seeds {})",
            sci(&mins, 2)
        ),
    ))
}

fn reduction_identity() -> Result<Outcome> {
    let base: RunConfig =
        "nodes=5\ndim=10\ncomponents=4\nchain=uniform\niterations=1000\ncadence=1000\nworkload_seed=0".parse()?;
    let setup = Setup::build(&base)?;
    let final_errors = |alg: Algorithm, seeds: std::ops::Range<u64>| -> Result<Vec<f64>> {
        let mut cfg = base.clone();
        cfg.algorithm = alg;
        let seeds: Vec<u64> = seeds.collect();
        harness::run_seeds(&cfg, &setup, &seeds, Exec::Parallel)
            .into_iter()
            .map(|r| r.map(|rec| rec.last().expect("final row").objective_error))
            .collect()
    };
    // Independent seed ranges per arm; with shared seeds the two arms draw
    // identical samples and the test would be vacuous.
    let dmgd = final_errors(Algorithm::Dmgd, 0..50)?;
    let dsgd = final_errors(Algorithm::DsgdT(1), 1000..1050)?;
    let t = mann_whitney(&dmgd, &dsgd);
    Ok(outcome(
        t.p > 0.01,
        format!(
            "Mann–Whitney U = {}, p = {:.3}; medians {:.3e} vs {:.3e}",
            t.u,
            t.p,
            median(&dmgd),
            median(&dsgd)
        ),
    ))
}

/// Per-node sample budget for the ordering check. Below roughly 300 samples
/// DSGD-16 has taken too few steps to beat DSGD-4's restart bias; this is
/// the regime where the ordering is stated.
const FIGURE1_BUDGET: u64 = 128;

fn figure1_ordering() -> Result<Outcome> {
    let base: RunConfig = format!(
        "workload=logistic\ntopology=ring\ntheta=0.51\nsample_budget={FIGURE1_BUDGET}\ncadence=16\nseeds=5\nref_samples=100000"
    )
    .parse()?;
    let summary = harness::figure1_experiment(&base, None, Exec::Parallel)?;
    let err = |a: Algorithm| {
        summary
            .iter()
            .find(|r| r.algorithm == a)
            .map(|r| r.median_objective_error)
            .expect("algorithm in summary")
    };
    let (dmgd, d1, d4, d16) = (
        err(Algorithm::Dmgd),
        err(Algorithm::DsgdT(1)),
        err(Algorithm::DsgdT(4)),
        err(Algorithm::DsgdT(16)),
    );
    let samples_ok = summary.iter().all(|r| r.samples_per_node == FIGURE1_BUDGET);
    let k16 = figure1_config(&base, Algorithm::DsgdT(16), 5, 10).effective_iterations();
    Ok(outcome(
        dmgd <= d4 && d4 <= d16 && d1 > dmgd && samples_ok,
        format!(
            "budget {FIGURE1_BUDGET} samples/node: DMGD {dmgd:.3e} ≤ DSGD-4 {d4:.3e} ≤ DSGD-16 {d16:.3e} (K={k16}); DSGD-1 {d1:.3e} > DMGD"
        ),
    ))
}

fn determinism() -> Result<Outcome> {
    let configs = [
        "algorithm=dmgd\ntopology=ring\nnodes=6\niterations=300\nseed=5",
        "algorithm=zo_dmgd\ntheta=0.7\nrho=0.6\niterations=300\nseed=6",
        "algorithm=dsgd_t\nt=4\nworkload=logistic\nref_samples=5000\niterations=100\nseed=7",
        "algorithm=mcgd\nworkload=logistic\nref_samples=5000\niterations=100\nseed=8",
    ];
    let mut all_equal = true;
    let mut hashes = Vec::new();
    for text in configs {
        let mut digests = Vec::new();
        for exec in [Exec::Sequential, Exec::Sequential, Exec::Parallel] {
            let mut cfg: RunConfig = text.parse()?;
            let fingerprint = cfg.fingerprint();
            cfg.exec = exec;
            let mut rec = run_on(&cfg, &Setup::build(&cfg)?)?;
            // Execution mode is a config key; compare against the
            // sequential fingerprint so only the data rows can differ.
            rec.fingerprint = fingerprint;
            digests.push(hex::encode(Sha256::digest(harness::format_csv(&rec).as_bytes())));
        }
        all_equal &= digests.windows(2).all(|w| w[0] == w[1]);
        hashes.push(digests[0][..12].to_string());
    }
    Ok(outcome(
        all_equal,
        format!(
            "sha256 equal across repeats and exec modes for 4 runs ({})",
            hashes.join(" ")
        ),
    ))
}
