//! Finite-state time-homogeneous Markov chains: construction, validation,
//! spectral diagnostics, deviation decay and trajectory cursors.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;

use crate::rng::StreamRng;
use crate::topology::CommGraph;
use crate::{Error, Result};

/// Row-sum tolerance accepted by [`build_explicit_chain`].
pub const STOCHASTIC_TOL: f64 = 1e-10;

/// A per-node sample source advancing along one chain trajectory.
///
/// Cursors are single-owner: one worker advances a given cursor, different
/// cursors advance independently.
pub trait Trajectory: Send {
    type Sample: Send + Sync;

    /// Takes one chain step and returns the new state.
    fn advance(&mut self) -> &Self::Sample;

    fn current(&self) -> &Self::Sample;

    /// Jumps back to the configured initial state. The random stream is not
    /// rewound.
    fn restart(&mut self);

    /// Chain steps taken so far (restarts do not reset the count).
    fn steps(&self) -> u64;
}

#[derive(Clone, Debug)]
pub struct FiniteMarkovChain {
    h: DMatrix<f64>,
    pi: Vec<f64>,
    /// Sorted by real part, nonincreasing; the unit eigenvalue comes first.
    eigenvalues: Vec<Complex<f64>>,
    lambda2: f64,
    lambda_min: f64,
    lambda2_abs: f64,
    lambda_hat: f64,
}

impl FiniteMarkovChain {
    pub fn transition(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn states(&self) -> usize {
        self.h.nrows()
    }

    pub fn stationary(&self) -> &[f64] {
        &self.pi
    }

    pub fn eigenvalues(&self) -> &[Complex<f64>] {
        &self.eigenvalues
    }

    /// Real part of the largest non-unit eigenvalue (by real part).
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    /// Real part of the smallest eigenvalue.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// Largest modulus over the non-unit eigenvalues.
    pub fn lambda2_abs(&self) -> f64 {
        self.lambda2_abs
    }

    /// Geometric decay rate `(max non-unit modulus + 1) / 2` of the deviation
    /// `Π* − H^k`.
    pub fn lambda_hat(&self) -> f64 {
        self.lambda_hat
    }

    /// The matrix `Π*` whose rows all equal the stationary law.
    pub fn stationary_matrix(&self) -> DMatrix<f64> {
        let m = self.states();
        DMatrix::from_fn(m, m, |_, j| self.pi[j])
    }

    /// Maximum entrywise `|Π* − H^k|`.
    ///
    /// Uses `H^k − Π* = (H − Π*)^k` for `k ≥ 1` so the result keeps relative
    /// precision far below machine epsilon.
    pub fn deviation_sup(&self, k: u32) -> f64 {
        let m = self.states();
        let pi = self.stationary_matrix();
        if k == 0 {
            return (DMatrix::identity(m, m) - pi).amax();
        }
        crate::topology::matrix_power(&(&self.h - pi), k).amax()
    }

    /// Per-state standard error of the empirical visit frequency after
    /// `steps` steps, from the asymptotic variance
    /// `π_i(1 − π_i) + 2 π_i (Z_ii − 1)` with fundamental matrix
    /// `Z = (I − H + Π*)⁻¹`. Accounts for autocorrelation along the chain.
    pub fn visit_std_errors(&self, steps: u64) -> Vec<f64> {
        let m = self.states();
        let z = (DMatrix::identity(m, m) - &self.h + self.stationary_matrix())
            .try_inverse()
            .expect("fundamental matrix of an ergodic chain is invertible");
        (0..m)
            .map(|i| {
                let p = self.pi[i];
                let var = p * (1.0 - p) + 2.0 * p * (z[(i, i)] - 1.0);
                (var.max(0.0) / steps as f64).sqrt()
            })
            .collect()
    }
}

/// Lazy random walk on a connected state graph: stay with probability 1/2,
/// otherwise move to a uniformly chosen neighbor.
pub fn build_random_walk_chain(g: &CommGraph) -> Result<FiniteMarkovChain> {
    if !g.is_connected() {
        return Err(Error::Reducible);
    }
    let m = g.node_count();
    let mut h = DMatrix::zeros(m, m);
    for i in 0..m {
        let deg = g.degree(i);
        if deg == 0 {
            h[(i, i)] = 1.0;
            continue;
        }
        h[(i, i)] = 0.5;
        for &j in g.neighbors(i) {
            h[(i, j)] = 0.5 / deg as f64;
        }
    }
    build_explicit_chain(h)
}

/// Every row equal to the uniform law: i.i.d. uniform sampling.
pub fn uniform_chain(states: usize) -> Result<FiniteMarkovChain> {
    if states == 0 {
        return Err(Error::InvalidParameter("chain needs at least one state".into()));
    }
    build_explicit_chain(DMatrix::from_element(states, states, 1.0 / states as f64))
}

/// Validates `h` (stochastic, irreducible, aperiodic) and computes the
/// stationary law and spectral quantities.
pub fn build_explicit_chain(h: DMatrix<f64>) -> Result<FiniteMarkovChain> {
    check_stochastic(&h)?;
    let report = validate_chain(&h);
    if report.irreducible != CheckStatus::Pass {
        return Err(Error::Reducible);
    }
    if report.aperiodic != CheckStatus::Pass {
        return Err(Error::Periodic(period(&h)));
    }
    let pi = stationary_law(&h)?;
    let m = h.nrows();

    let mut eigenvalues: Vec<Complex<f64>> = if m == 1 {
        vec![Complex::new(h[(0, 0)], 0.0)]
    } else {
        h.complex_eigenvalues().iter().copied().collect()
    };
    let unit = eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).norm().total_cmp(&(b.1 - 1.0).norm()))
        .map(|(i, _)| i)
        .unwrap();
    let one = eigenvalues.remove(unit);
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re));
    let lambda2_abs = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lambda2 = eigenvalues.first().map_or(0.0, |z| z.re);
    let lambda_min = eigenvalues.last().map_or(0.0, |z| z.re);
    eigenvalues.insert(0, one);

    Ok(FiniteMarkovChain {
        h,
        pi,
        eigenvalues,
        lambda2,
        lambda_min,
        lambda2_abs,
        lambda_hat: (lambda2_abs + 1.0) / 2.0,
    })
}

fn check_stochastic(h: &DMatrix<f64>) -> Result<()> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            got: h.ncols(),
        });
    }
    if h.nrows() == 0 {
        return Err(Error::InvalidParameter("chain needs at least one state".into()));
    }
    for i in 0..h.nrows() {
        let row = h.row(i);
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NotStochastic(format!("row {i} has entry {v}")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotStochastic(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// Solves `π H = π`, `Σπ = 1`.
fn stationary_law(h: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = h.nrows();
    let mut a = h.transpose() - DMatrix::identity(m, m);
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(m);
    rhs[m - 1] = 1.0;
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("stationary system is singular".into()))?;
    let total: f64 = x.iter().sum();
    let pi: Vec<f64> = x.iter().map(|v| v / total).collect();
    if pi.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Reducible);
    }
    Ok(pi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Not meaningful because an earlier check failed.
    Skipped,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIPPED",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainReport {
    pub stochastic: CheckStatus,
    pub irreducible: CheckStatus,
    pub aperiodic: CheckStatus,
    pub detail: Vec<String>,
}

impl ChainReport {
    pub fn passed(&self) -> bool {
        [self.stochastic, self.irreducible, self.aperiodic]
            .iter()
            .all(|s| *s == CheckStatus::Pass)
    }
}

impl fmt::Display for ChainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "row-stochastic: {}", self.stochastic)?;
        writeln!(f, "irreducibility: {}", self.irreducible)?;
        writeln!(f, "aperiodicity: {}", self.aperiodic)?;
        for d in &self.detail {
            writeln!(f, "  {d}")?;
        }
        Ok(())
    }
}

/// Irreducibility is strong connectivity of the positive-entry digraph.
/// Aperiodicity of an irreducible chain is primitivity: entrywise positivity
/// of `H^w` with the Wielandt exponent `w = (M − 1)² + 1`, evaluated on the
/// boolean support so no underflow can hide a positive entry.
pub fn validate_chain(h: &DMatrix<f64>) -> ChainReport {
    let mut detail = Vec::new();
    let stochastic = match check_stochastic(h) {
        Ok(()) => CheckStatus::Pass,
        Err(e) => {
            detail.push(e.to_string());
            CheckStatus::Fail
        }
    };
    if h.nrows() != h.ncols() || h.nrows() == 0 {
        return ChainReport {
            stochastic,
            irreducible: CheckStatus::Skipped,
            aperiodic: CheckStatus::Skipped,
            detail,
        };
    }
    let support = Support::of(h);
    let irreducible = if support.strongly_connected() {
        CheckStatus::Pass
    } else {
        detail.push("positive-entry digraph is not strongly connected".into());
        CheckStatus::Fail
    };
    let aperiodic = if irreducible != CheckStatus::Pass {
        CheckStatus::Skipped
    } else {
        let m = h.nrows();
        let w = (m - 1) * (m - 1) + 1;
        if support.power(w).all_true() {
            CheckStatus::Pass
        } else {
            detail.push(format!("H^{w} has zero entries; period {}", period(h)));
            CheckStatus::Fail
        }
    };
    ChainReport {
        stochastic,
        irreducible,
        aperiodic,
        detail,
    }
}

/// Period of state 0's communicating class, from BFS levels:
/// gcd over support edges `u → v` inside the class of `level(u) + 1 − level(v)`.
pub fn period(h: &DMatrix<f64>) -> usize {
    let m = h.nrows();
    let support = Support::of(h);
    let mut level = vec![usize::MAX; m];
    level[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for v in 0..m {
            if support.get(u, v) && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0usize;
    for u in 0..m {
        for v in 0..m {
            if support.get(u, v) && level[u] != usize::MAX && level[v] != usize::MAX {
                let diff = (level[u] + 1).abs_diff(level[v]);
                g = gcd(g, diff);
            }
        }
    }
    g.max(1)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone)]
struct Support {
    m: usize,
    bits: Vec<bool>,
}

impl Support {
    fn of(h: &DMatrix<f64>) -> Self {
        let m = h.nrows();
        let mut bits = vec![false; m * m];
        for i in 0..m {
            for j in 0..m {
                bits[i * m + j] = h[(i, j)] > 0.0;
            }
        }
        Support { m, bits }
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.m + j]
    }

    fn mul(&self, other: &Support) -> Support {
        let m = self.m;
        let mut bits = vec![false; m * m];
        for i in 0..m {
            for k in 0..m {
                if self.get(i, k) {
                    for j in 0..m {
                        if other.get(k, j) {
                            bits[i * m + j] = true;
                        }
                    }
                }
            }
        }
        Support { m, bits }
    }

    fn power(&self, mut e: usize) -> Support {
        let mut result: Option<Support> = None;
        let mut base = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => r.mul(&base),
                });
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result.expect("exponent is positive")
    }

    fn all_true(&self) -> bool {
        self.bits.iter().all(|b| *b)
    }

    fn reachable(&self, start: usize, transpose: bool) -> usize {
        let mut seen = vec![false; self.m];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for v in 0..self.m {
                let edge = if transpose { self.get(v, u) } else { self.get(u, v) };
                if edge && !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count
    }

    fn strongly_connected(&self) -> bool {
        self.reachable(0, false) == self.m && self.reachable(0, true) == self.m
    }
}

/// `C = max_{k ∈ 0..=horizon} deviation_sup(k) / λ̂^k`, the smallest constant
/// making `deviation_sup(k) ≤ C λ̂^k` hold on the fitting window.
pub fn fit_deviation_constant(chain: &FiniteMarkovChain, horizon: u32) -> f64 {
    let lam = chain.lambda_hat();
    (0..=horizon)
        .map(|k| chain.deviation_sup(k) / lam.powi(k as i32))
        .fold(0.0, f64::max)
}

/// Mixing index
/// `min{ max{ ⌈ln(k / (2 C_H B²)) / ln(1/λ̂)⌉, K_H }, k }`.
pub fn mixing_index(k: u64, c_h: f64, b: f64, lambda_hat: f64, k_h: u64) -> Result<u64> {
    if k < 1 {
        return Err(Error::InvalidParameter("mixing index needs k >= 1".into()));
    }
    if !(c_h > 0.0) || !(b > 0.0) {
        return Err(Error::InvalidParameter("C_H and B must be positive".into()));
    }
    if !(lambda_hat > 0.0 && lambda_hat < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must lie in (0, 1), got {lambda_hat}"
        )));
    }
    let raw = ((k as f64 / (2.0 * c_h * b * b)).ln() / (1.0 / lambda_hat).ln()).ceil();
    // Negative logarithms fall below K_H anyway.
    let horizon = if raw <= 0.0 { 0 } else { raw as u64 };
    Ok(horizon.max(k_h).min(k))
}

/// Trajectory over a finite chain.
#[derive(Clone, Debug)]
pub struct TrajectoryCursor {
    chain: Arc<FiniteMarkovChain>,
    initial: usize,
    state: usize,
    rng: StreamRng,
    steps: u64,
}

impl TrajectoryCursor {
    pub fn new(chain: Arc<FiniteMarkovChain>, initial: usize, rng: StreamRng) -> Result<Self> {
        if initial >= chain.states() {
            return Err(Error::InvalidParameter(format!(
                "initial state {initial} out of range for {} states",
                chain.states()
            )));
        }
        Ok(TrajectoryCursor {
            chain,
            initial,
            state: initial,
            rng,
            steps: 0,
        })
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Draws the next state from row `H[state]`.
    pub fn step(&mut self) -> usize {
        let h = self.chain.transition();
        let u: f64 = self.rng.random();
        let m = h.ncols();
        let mut acc = 0.0;
        let mut next = m - 1;
        for j in 0..m {
            acc += h[(self.state, j)];
            if u < acc {
                next = j;
                break;
            }
        }
        // Rounding in the cumulative sum can leave u above the final total;
        // fall back to the last state with positive mass.
        if u >= acc {
            next = (0..m).rev().find(|&j| h[(self.state, j)] > 0.0).unwrap_or(next);
        }
        self.state = next;
        self.steps += 1;
        next
    }

    pub fn trajectory(&mut self, len: usize) -> Vec<usize> {
        (0..len).map(|_| self.step()).collect()
    }
}

impl Trajectory for TrajectoryCursor {
    type Sample = usize;

    fn advance(&mut self) -> &usize {
        self.step();
        &self.state
    }

    fn current(&self) -> &usize {
        &self.state
    }

    fn restart(&mut self) {
        self.state = self.initial;
    }

    fn steps(&self) -> u64 {
        self.steps
    }
}
