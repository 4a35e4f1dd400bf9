//! Synchronous-round iteration schemes.
//!
//! Every round reads all nodes' current iterates, evaluates one sampled
//! gradient per node at that node's own pre-update iterate, then applies
//! `x ← W x − γ_k u` with `u` the stacked gradients. Per-node work may run
//! in parallel; the mixing product is the barrier.

use std::fmt;
use std::str::FromStr;

use crate::chain::Trajectory;
use crate::objective::{dot, norm, Objective};
use crate::rng::{self, StreamRng};
use crate::topology::MixingMatrix;
use crate::{Error, Exec, Result};

/// `γ_k = 1/(k+1)^θ` with `1/2 < θ < 1`; zeroth-order runs add
/// `δ_k = 1/(k+1)^ρ` with `θ + ρ > 1` so that `Σ γ_k δ_k < ∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule {
    theta: f64,
    rho: Option<f64>,
}

impl StepSchedule {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.5 && theta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "theta must satisfy 1/2 < theta < 1, got {theta}"
            )));
        }
        Ok(StepSchedule { theta, rho: None })
    }

    pub fn zeroth_order(theta: f64, rho: f64) -> Result<Self> {
        let s = Self::new(theta)?;
        if !(rho > 0.0) || !(theta + rho > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "zeroth-order schedule needs rho > 0 and theta + rho > 1, got theta={theta} rho={rho}"
            )));
        }
        Ok(StepSchedule { rho: Some(rho), ..s })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn rho(&self) -> Option<f64> {
        self.rho
    }

    pub fn gamma(&self, k: usize) -> f64 {
        (k as f64 + 1.0).powf(-self.theta)
    }

    pub fn delta(&self, k: usize) -> Option<f64> {
        self.rho.map(|r| (k as f64 + 1.0).powf(-r))
    }
}

/// `m × n` stack of node iterates, row `i` is node `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeStateMatrix {
    m: usize,
    n: usize,
    x: Vec<f64>,
    k: usize,
}

impl NodeStateMatrix {
    /// Every row set to `x0`.
    pub fn uniform(m: usize, x0: &[f64]) -> Self {
        let n = x0.len();
        NodeStateMatrix {
            m,
            n,
            x: x0.iter().copied().cycle().take(m * n).collect(),
            k: 0,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("rows must be nonempty and equal length".into()));
        }
        Ok(NodeStateMatrix {
            m,
            n,
            x: rows.concat(),
            k: 0,
        })
    }

    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    /// `x̄ = (1/m) Σ_j x(j)`.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n];
        for i in 0..self.m {
            mean.iter_mut().zip(self.row(i)).for_each(|(a, b)| *a += b);
        }
        mean.iter_mut().for_each(|v| *v /= self.m as f64);
        mean
    }

    fn check(&self, w: Option<&MixingMatrix>, cursors: usize) -> Result<()> {
        if let Some(w) = w {
            if w.size() != self.m {
                return Err(Error::DimensionMismatch {
                    expected: self.m,
                    got: w.size(),
                });
            }
        }
        if cursors != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: cursors,
            });
        }
        Ok(())
    }

    /// `x ← W x − γ u`.
    fn mix_and_descend(&mut self, w: &MixingMatrix, gamma: f64, grads: &[Vec<f64>]) {
        let (m, n) = (self.m, self.n);
        let mut next = vec![0.0; m * n];
        for i in 0..m {
            let out = &mut next[i * n..(i + 1) * n];
            for l in 0..m {
                let wil = w.weight(i, l);
                if wil != 0.0 {
                    out.iter_mut()
                        .zip(&self.x[l * n..(l + 1) * n])
                        .for_each(|(o, v)| *o += wil * v);
                }
            }
            out.iter_mut().zip(&grads[i]).for_each(|(o, g)| *o -= gamma * g);
        }
        self.x = next;
        self.k += 1;
    }
}

/// What a round consumed.
#[derive(Clone, Debug, PartialEq)]
pub struct Round {
    /// Row `i`: the direction node `i` descended along (sampled gradient or
    /// zeroth-order estimate).
    pub directions: Vec<Vec<f64>>,
    /// Chain samples charged to each node in this round.
    pub samples_per_node: u64,
}

fn ensure_finite(node: usize, g: &[f64]) -> Result<()> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("gradient at node {node}")));
    }
    Ok(())
}

/// One DMGD round: each cursor advances once and node `i` uses
/// `∇f^i_{j_{i,k}}(x^k(i))`.
pub fn dmgd_step<O, S>(
    state: &mut NodeStateMatrix,
    w: &MixingMatrix,
    cursors: &mut [S],
    obj: &O,
    gamma: f64,
    exec: Exec,
) -> Result<Round>
where
    O: Objective,
    S: Trajectory<Sample = O::Sample>,
{
    state.check(Some(w), cursors.len())?;
    let st = &*state;
    let grads = exec.map_mut(cursors, |i, cur| {
        let s = cur.advance();
        let mut g = vec![0.0; st.n];
        obj.gradient_into(i, s, st.row(i), &mut g);
        ensure_finite(i, &g).map(|_| g)
    });
    let grads = grads.into_iter().collect::<Result<Vec<_>>>()?;
    state.mix_and_descend(w, gamma, &grads);
    Ok(Round {
        directions: grads,
        samples_per_node: 1,
    })
}

/// Two-point estimate `n (f(x + δh) − f(x)) / δ · h` for one component.
pub fn zo_estimate<O: Objective>(
    obj: &O,
    node: usize,
    sample: &O::Sample,
    x: &[f64],
    delta: f64,
    h: &[f64],
) -> Result<Vec<f64>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let n = obj.dim();
    if x.len() != n || h.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if x.len() != n { x.len() } else { h.len() },
        });
    }
    if (norm(h) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("direction must have unit norm".into()));
    }
    Ok(zo_unchecked(obj, node, sample, x, delta, h))
}

fn zo_unchecked<O: Objective>(obj: &O, node: usize, sample: &O::Sample, x: &[f64], delta: f64, h: &[f64]) -> Vec<f64> {
    let shifted: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + delta * b).collect();
    let diff = obj.value(node, sample, &shifted) - obj.value(node, sample, x);
    let scale = x.len() as f64 * diff / delta;
    h.iter().map(|v| scale * v).collect()
}

/// One zeroth-order DMGD round; node `i` draws its own direction from
/// `sphere[i]`.
#[allow(clippy::too_many_arguments)]
pub fn zo_dmgd_step<O, S>(
    state: &mut NodeStateMatrix,
    w: &MixingMatrix,
    cursors: &mut [S],
    sphere: &mut [StreamRng],
    obj: &O,
    gamma: f64,
    delta: f64,
    exec: Exec,
) -> Result<Round>
where
    O: Objective,
    S: Trajectory<Sample = O::Sample>,
{
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    state.check(Some(w), cursors.len())?;
    state.check(None, sphere.len())?;
    let st = &*state;
    let mut workers: Vec<(&mut S, &mut StreamRng)> = cursors.iter_mut().zip(sphere.iter_mut()).collect();
    let grads = exec.map_mut(&mut workers, |i, (cur, rng)| {
        let s = cur.advance();
        let h = rng::unit_sphere(st.n, *rng);
        let g = zo_unchecked(obj, i, s, st.row(i), delta, &h);
        ensure_finite(i, &g).map(|_| g)
    });
    let grads = grads.into_iter().collect::<Result<Vec<_>>>()?;
    state.mix_and_descend(w, gamma, &grads);
    Ok(Round {
        directions: grads,
        samples_per_node: 1,
    })
}

/// One DSGD-T round: every node restarts its chain from the initial state,
/// runs `t` steps and uses only the last state.
pub fn dsgd_t_step<O, S>(
    state: &mut NodeStateMatrix,
    w: &MixingMatrix,
    cursors: &mut [S],
    obj: &O,
    gamma: f64,
    t: usize,
    exec: Exec,
) -> Result<Round>
where
    O: Objective,
    S: Trajectory<Sample = O::Sample>,
{
    if t == 0 {
        return Err(Error::InvalidParameter("DSGD-T needs T >= 1".into()));
    }
    state.check(Some(w), cursors.len())?;
    let st = &*state;
    let grads = exec.map_mut(cursors, |i, cur| {
        cur.restart();
        for _ in 1..t {
            cur.advance();
        }
        let s = cur.advance();
        let mut g = vec![0.0; st.n];
        obj.gradient_into(i, s, st.row(i), &mut g);
        ensure_finite(i, &g).map(|_| g)
    });
    let grads = grads.into_iter().collect::<Result<Vec<_>>>()?;
    state.mix_and_descend(w, gamma, &grads);
    Ok(Round {
        directions: grads,
        samples_per_node: t as u64,
    })
}

/// Centralized Markov-chain gradient descent on one shared vector:
/// `x ← x − γ (1/m) Σ_i ∇F(x; ξ^k(i))`, each node's chain advanced once.
pub fn mcgd_step<O, S>(x: &mut [f64], cursors: &mut [S], obj: &O, gamma: f64, exec: Exec) -> Result<Round>
where
    O: Objective,
    S: Trajectory<Sample = O::Sample>,
{
    if cursors.len() != obj.nodes() {
        return Err(Error::DimensionMismatch {
            expected: obj.nodes(),
            got: cursors.len(),
        });
    }
    let point: &[f64] = x;
    let grads = exec.map_mut(cursors, |i, cur| {
        let s = cur.advance();
        let mut g = vec![0.0; point.len()];
        obj.gradient_into(i, s, point, &mut g);
        ensure_finite(i, &g).map(|_| g)
    });
    let grads = grads.into_iter().collect::<Result<Vec<_>>>()?;
    let m = grads.len() as f64;
    for g in &grads {
        x.iter_mut().zip(g).for_each(|(a, b)| *a -= gamma * b / m);
    }
    Ok(Round {
        directions: grads,
        samples_per_node: 1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Dmgd,
    ZoDmgd,
    /// Restart length `T`.
    DsgdT(usize),
    Mcgd,
}

impl Algorithm {
    pub fn samples_per_iteration(self) -> u64 {
        match self {
            Algorithm::DsgdT(t) => t as u64,
            _ => 1,
        }
    }

    /// Short label used in file names, e.g. `dsgd_t8`.
    pub fn label(self) -> String {
        match self {
            Algorithm::Dmgd => "dmgd".into(),
            Algorithm::ZoDmgd => "zo_dmgd".into(),
            Algorithm::DsgdT(t) => format!("dsgd_t{t}"),
            Algorithm::Mcgd => "mcgd".into(),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Dmgd => "dmgd",
            Algorithm::ZoDmgd => "zo_dmgd",
            Algorithm::DsgdT(_) => "dsgd_t",
            Algorithm::Mcgd => "mcgd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dmgd" => Algorithm::Dmgd,
            "zo_dmgd" => Algorithm::ZoDmgd,
            "dsgd_t" => Algorithm::DsgdT(1),
            "mcgd" => Algorithm::Mcgd,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown algorithm {other:?} (expected dmgd, zo_dmgd, dsgd_t, mcgd)"
                )))
            }
        })
    }
}

/// Owns everything a run mutates and advances it one round at a time.
///
/// For [`Algorithm::Mcgd`] the state holds a single row (the shared vector)
/// and the mixing matrix is unused.
pub struct Driver<'a, O: Objective, S> {
    pub obj: &'a O,
    pub mixing: &'a MixingMatrix,
    pub cursors: Vec<S>,
    pub sphere: Vec<StreamRng>,
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    pub exec: Exec,
    pub state: NodeStateMatrix,
    pub samples_per_node: u64,
}

impl<'a, O, S> Driver<'a, O, S>
where
    O: Objective,
    S: Trajectory<Sample = O::Sample>,
{
    /// All nodes start from `x0`. Sphere streams are derived from `seed`.
    pub fn new(
        obj: &'a O,
        mixing: &'a MixingMatrix,
        cursors: Vec<S>,
        algorithm: Algorithm,
        schedule: StepSchedule,
        x0: &[f64],
        seed: u64,
        exec: Exec,
    ) -> Result<Self> {
        let m = obj.nodes();
        if cursors.len() != m || mixing.size() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: if cursors.len() != m {
                    cursors.len()
                } else {
                    mixing.size()
                },
            });
        }
        if x0.len() != obj.dim() {
            return Err(Error::DimensionMismatch {
                expected: obj.dim(),
                got: x0.len(),
            });
        }
        if algorithm == Algorithm::ZoDmgd && schedule.rho().is_none() {
            return Err(Error::InvalidParameter(
                "zeroth-order runs need a delta schedule".into(),
            ));
        }
        let rows = if algorithm == Algorithm::Mcgd { 1 } else { m };
        let sphere = (0..m)
            .map(|i| rng::stream(seed, rng::Purpose::Sphere, i as u64))
            .collect();
        Ok(Driver {
            obj,
            mixing,
            cursors,
            sphere,
            algorithm,
            schedule,
            exec,
            state: NodeStateMatrix::uniform(rows, x0),
            samples_per_node: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.state.iteration()
    }

    pub fn step(&mut self) -> Result<Round> {
        let k = self.state.iteration();
        let gamma = self.schedule.gamma(k);
        let round = match self.algorithm {
            Algorithm::Dmgd => dmgd_step(
                &mut self.state,
                self.mixing,
                &mut self.cursors,
                self.obj,
                gamma,
                self.exec,
            ),
            Algorithm::ZoDmgd => {
                let delta = self.schedule.delta(k).expect("checked at construction");
                zo_dmgd_step(
                    &mut self.state,
                    self.mixing,
                    &mut self.cursors,
                    &mut self.sphere,
                    self.obj,
                    gamma,
                    delta,
                    self.exec,
                )
            }
            Algorithm::DsgdT(t) => dsgd_t_step(
                &mut self.state,
                self.mixing,
                &mut self.cursors,
                self.obj,
                gamma,
                t,
                self.exec,
            ),
            Algorithm::Mcgd => {
                let r = mcgd_step(&mut self.state.x, &mut self.cursors, self.obj, gamma, self.exec);
                if r.is_ok() {
                    self.state.k += 1;
                }
                r
            }
        }
        .map_err(|e| e.at(k))?;
        self.samples_per_node += round.samples_per_node;
        Ok(round)
    }
}

/// `Σ_k γ_k` and `Σ_k ln²(k+1) γ_k²` up to `k < terms`, used to check the
/// step-size conditions numerically.
pub fn schedule_partial_sums(schedule: &StepSchedule, terms: usize) -> (f64, f64) {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for k in 0..terms {
        let g = schedule.gamma(k);
        let l = ((k + 1) as f64).ln();
        s1 += g;
        s2 += l * l * g * g;
    }
    (s1, s2)
}

#[doc(hidden)]
pub fn inner(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b)
}
