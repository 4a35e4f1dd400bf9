//! Autoregressive data chain with noisy linear-threshold labels.
//!
//! Each node runs `ξ¹_t = A ξ¹_{t−1} + e₁ w_t`, `w_t ~ N(0, 1)`, with `A`
//! strictly subdiagonal. The clean label is `1` iff `⟨u, ξ¹_t⟩ > 0`; the
//! observed label keeps it with probability 0.8 and flips it otherwise.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::chain::Trajectory;
use crate::rng::{self, StreamRng};
use crate::{Error, Result};

pub const LABEL_FLIP_PROB: f64 = 0.2;
pub const SUBDIAGONAL_RANGE: (f64, f64) = (0.8, 0.99);

/// Per-node process parameters: the subdiagonal of `A` and the shared unit
/// vector `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArParams {
    /// `sub[l - 1] = A[l][l - 1]` for `l = 1..n`.
    sub: Vec<f64>,
    u: Vec<f64>,
}

impl ArParams {
    pub fn new(sub: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if u.is_empty() || sub.len() + 1 != u.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len().saturating_sub(1),
                got: sub.len(),
            });
        }
        if sub.iter().chain(&u).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("AR parameter".into()));
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("u must have unit norm, got {norm}")));
        }
        Ok(ArParams { sub, u })
    }

    /// Subdiagonal entries i.i.d. `U[0.8, 0.99]`.
    pub fn random_matrix<R: Rng + ?Sized>(u: Vec<f64>, rng: &mut R) -> Result<Self> {
        let (lo, hi) = SUBDIAGONAL_RANGE;
        let sub = (1..u.len()).map(|_| rng.random_range(lo..=hi)).collect();
        Self::new(sub, u)
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn subdiagonal(&self) -> &[f64] {
        &self.sub
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Dense `A` (row-major), mostly for inspection.
    pub fn matrix(&self) -> Vec<f64> {
        let n = self.dim();
        let mut a = vec![0.0; n * n];
        for l in 1..n {
            a[l * n + l - 1] = self.sub[l - 1];
        }
        a
    }
}

/// Draws the ground-truth unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    rng::unit_sphere(n, rng)
}

#[derive(Clone, Debug)]
pub struct ArChainState {
    params: Arc<ArParams>,
    pub xi1: Vec<f64>,
    /// Noise-free label `1{⟨u, ξ¹⟩ > 0}`.
    pub clean_label: f64,
    /// Observed label.
    pub xi2: f64,
}

impl ArChainState {
    pub fn new(params: Arc<ArParams>, xi1: Vec<f64>) -> Result<Self> {
        if xi1.len() != params.dim() {
            return Err(Error::DimensionMismatch {
                expected: params.dim(),
                got: xi1.len(),
            });
        }
        let clean = label(&params.u, &xi1);
        Ok(ArChainState {
            params,
            xi1,
            clean_label: clean,
            xi2: clean,
        })
    }

    pub fn params(&self) -> &Arc<ArParams> {
        &self.params
    }

    /// One transition with a fresh innovation and flip decision.
    pub fn ar_step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let w: f64 = rng.sample(StandardNormal);
        let flip = rng.random::<f64>() < LABEL_FLIP_PROB;
        self.apply(w, flip);
    }

    /// One transition with a given innovation `w` and flip decision.
    pub fn apply(&mut self, w: f64, flip: bool) {
        let n = self.xi1.len();
        for l in (1..n).rev() {
            self.xi1[l] = self.params.sub[l - 1] * self.xi1[l - 1];
        }
        self.xi1[0] = w;
        self.clean_label = label(&self.params.u, &self.xi1);
        self.xi2 = if flip { 1.0 - self.clean_label } else { self.clean_label };
    }
}

fn label(u: &[f64], xi1: &[f64]) -> f64 {
    let s: f64 = u.iter().zip(xi1).map(|(a, b)| a * b).sum();
    if s > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// One labelled observation as seen by the loss: features are `ξ¹` clipped to
/// the workload's ball.
#[derive(Clone, Debug, PartialEq)]
pub struct ArSample {
    pub features: Vec<f64>,
    pub label: f64,
}

/// Scales `v` into the closed ball of radius `r`.
pub fn clip_to_ball(v: &mut [f64], r: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > r {
        let s = r / norm;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Per-node trajectory of the AR chain.
#[derive(Clone, Debug)]
pub struct ArTrajectory {
    state: ArChainState,
    initial: Vec<f64>,
    clip: f64,
    sample: ArSample,
    rng: StreamRng,
    steps: u64,
}

impl ArTrajectory {
    pub fn new(params: Arc<ArParams>, initial: Vec<f64>, clip: f64, rng: StreamRng) -> Result<Self> {
        if !(clip > 0.0) {
            return Err(Error::InvalidParameter("clip radius must be positive".into()));
        }
        let state = ArChainState::new(params, initial.clone())?;
        let mut t = ArTrajectory {
            sample: ArSample {
                features: Vec::new(),
                label: 0.0,
            },
            state,
            initial,
            clip,
            rng,
            steps: 0,
        };
        t.refresh();
        Ok(t)
    }

    pub fn state(&self) -> &ArChainState {
        &self.state
    }

    fn refresh(&mut self) {
        self.sample.features.clone_from(&self.state.xi1);
        clip_to_ball(&mut self.sample.features, self.clip);
        self.sample.label = self.state.xi2;
    }
}

impl Trajectory for ArTrajectory {
    type Sample = ArSample;

    fn advance(&mut self) -> &ArSample {
        self.state.ar_step(&mut self.rng);
        self.steps += 1;
        self.refresh();
        &self.sample
    }

    fn current(&self) -> &ArSample {
        &self.sample
    }

    fn restart(&mut self) {
        let params = self.state.params.clone();
        self.state = ArChainState::new(params, self.initial.clone()).expect("dimension checked");
        self.refresh();
    }

    fn steps(&self) -> u64 {
        self.steps
    }
}
