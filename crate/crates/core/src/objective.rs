//! Component-function workloads with exact gradient oracles.
//!
//! Node `j` owns components `f_j^i`; a sample selects the component (finite
//! sums) or carries the observation (streaming). The global objective is
//! `f = (1/m) Σ_j f_j` with `f_j` the uniform average over node `j`'s
//! components, or its stationary expectation for streaming data.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ar::{self, ArParams, ArSample, ArTrajectory};
use crate::chain::Trajectory;
use crate::rng::{self, Purpose, StreamRng};
use crate::{Error, Exec, Result};

/// Central-difference step used by [`gradcheck`].
pub const FD_STEP: f64 = 1e-6;
/// Relative tolerance used by [`gradcheck`].
pub const FD_REL_TOL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct MeanGradient {
    pub gradient: Vec<f64>,
    /// Samples per node consumed by the estimate (0 for exact sums).
    pub samples: usize,
}

pub trait Objective: Send + Sync {
    type Sample: Clone + Send + Sync;

    fn nodes(&self) -> usize;
    fn dim(&self) -> usize;

    fn value(&self, node: usize, sample: &Self::Sample, x: &[f64]) -> f64;

    /// Writes `∇f_node^sample(x)` into `out`.
    fn gradient_into(&self, node: usize, sample: &Self::Sample, x: &[f64], out: &mut [f64]);

    /// Uniform gradient bound on the workload's domain, if known in closed form.
    fn grad_bound(&self) -> Option<f64>;
    fn lipschitz(&self) -> Option<f64>;

    /// A sample distributed according to node `node`'s stationary law.
    fn random_sample(&self, node: usize, rng: &mut StreamRng) -> Self::Sample;

    fn check_sample(&self, _node: usize, _sample: &Self::Sample) -> Result<()> {
        Ok(())
    }

    /// `∇f(x)`. Streaming objectives need a per-node sample budget.
    fn mean_gradient(&self, x: &[f64], budget: Option<usize>) -> Result<MeanGradient>;

    /// `f(x) − f_ref`, with `f_ref` the workload's reference optimum.
    fn objective_error(&self, x: &[f64]) -> Result<f64>;

    /// Checked gradient of one component.
    fn grad_component(&self, node: usize, sample: &Self::Sample, x: &[f64]) -> Result<Vec<f64>> {
        if node >= self.nodes() {
            return Err(Error::InvalidParameter(format!("node {node} out of range")));
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient query point".into()));
        }
        self.check_sample(node, sample)?;
        let mut out = vec![0.0; self.dim()];
        self.gradient_into(node, sample, x, &mut out);
        Ok(out)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Finite-sum quadratic

#[derive(Clone, Debug, PartialEq)]
pub struct QuadComponent {
    /// Symmetric PSD, row-major `n × n`.
    pub q: Vec<f64>,
    pub b: Vec<f64>,
}

impl QuadComponent {
    fn value(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut quad = 0.0;
        for r in 0..n {
            quad += x[r] * dot(&self.q[r * n..(r + 1) * n], x);
        }
        0.5 * quad - dot(&self.b, x)
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for r in 0..n {
            out[r] = dot(&self.q[r * n..(r + 1) * n], x) - self.b[r];
        }
    }
}

/// `f_j^i(x) = ½ xᵀ Q_j^i x − ⟨b_j^i, x⟩`. Gradient metadata holds on the
/// ball of radius `radius`.
#[derive(Clone, Debug)]
pub struct QuadraticSum {
    n: usize,
    components: Vec<Vec<QuadComponent>>,
    radius: f64,
    grad_bound: f64,
    lipschitz: f64,
    minimizer: Option<Vec<f64>>,
    min_value: Option<f64>,
}

impl QuadraticSum {
    pub fn new(components: Vec<Vec<QuadComponent>>, radius: f64) -> Result<Self> {
        let m = components.len();
        if m == 0 || components[0].is_empty() {
            return Err(Error::InvalidParameter("need at least one node and component".into()));
        }
        let per_node = components[0].len();
        if components.iter().any(|c| c.len() != per_node) {
            return Err(Error::InvalidParameter(
                "every node needs the same component count".into(),
            ));
        }
        let n = components[0][0].b.len();
        if n == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter("domain radius must be positive".into()));
        }
        let mut qsum = DMatrix::<f64>::zeros(n, n);
        let mut bsum = DVector::<f64>::zeros(n);
        let mut grad_bound: f64 = 0.0;
        let mut lipschitz: f64 = 0.0;
        for c in components.iter().flatten() {
            if c.q.len() != n * n || c.b.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.b.len(),
                });
            }
            let q = DMatrix::from_row_slice(n, n, &c.q);
            if (&q - q.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidParameter("component Q must be symmetric".into()));
            }
            let eig = nalgebra::SymmetricEigen::new(q.clone()).eigenvalues;
            if eig.iter().any(|&l| l < -1e-12) {
                return Err(Error::InvalidParameter("component Q must be PSD".into()));
            }
            let qnorm = eig.iter().fold(0.0f64, |a, l| a.max(l.abs()));
            lipschitz = lipschitz.max(qnorm);
            grad_bound = grad_bound.max(qnorm * radius + norm(&c.b));
            qsum += q;
            bsum += DVector::from_column_slice(&c.b);
        }
        let count = (m * per_node) as f64;
        qsum /= count;
        bsum /= count;
        let (minimizer, min_value) = match qsum.clone().cholesky() {
            Some(ch) => {
                let x = ch.solve(&bsum);
                let v = 0.5 * x.dot(&(&qsum * &x)) - bsum.dot(&x);
                (Some(x.iter().copied().collect()), Some(v))
            }
            None => (None, None),
        };
        Ok(QuadraticSum {
            n,
            components,
            radius,
            grad_bound,
            lipschitz,
            minimizer,
            min_value,
        })
    }

    /// `f_j^i = ½‖x‖²` for every node and component.
    pub fn isotropic(m: usize, n: usize, per_node: usize, radius: f64) -> Result<Self> {
        let mut q = vec![0.0; n * n];
        for r in 0..n {
            q[r * n + r] = 1.0;
        }
        let c = QuadComponent { q, b: vec![0.0; n] };
        Self::new(vec![vec![c; per_node]; m], radius)
    }

    /// Random heterogeneous workload whose node objectives do not depend on
    /// how a palindromic stationary law weights the components.
    ///
    /// Node `j` gets `Q_j = R diag(s) Rᵀ` with `s ~ U[0.5, 1.5]` and a random
    /// rotation `R`, a center `μ_j ~ N(0, I/n)`, and component centers
    /// `μ_j ± spread·d` paired as `(i, M−1−i)`. With `b = Q_j c_i`, any
    /// weighting that is symmetric under `i ↦ M−1−i` (uniform, or the
    /// stationary law of a lazy walk on a path or ring) yields
    /// `f_j(x) = ½(x − μ_j)ᵀ Q_j (x − μ_j) + const`.
    pub fn balanced(m: usize, n: usize, per_node: usize, spread: f64, radius: f64, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 || per_node == 0 {
            return Err(Error::InvalidParameter("m, n and M must be positive".into()));
        }
        if !(spread >= 0.0) {
            return Err(Error::InvalidParameter("spread must be nonnegative".into()));
        }
        let scale = 1.0 / (n as f64).sqrt();
        let mut components = Vec::with_capacity(m);
        for j in 0..m {
            let mut rng = rng::stream(seed, Purpose::Workload, j as u64);
            let gauss = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let rot = gauss.qr().q();
            let spectrum = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
            let q = &rot * DMatrix::from_diagonal(&spectrum) * rot.transpose();
            let q = (&q + q.transpose()) * 0.5;
            let mu: Vec<f64> = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            let mut offsets = vec![vec![0.0; n]; per_node];
            for i in 0..per_node / 2 {
                let d: Vec<f64> = (0..n)
                    .map(|_| spread * scale * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                offsets[per_node - 1 - i] = d.iter().map(|v| -v).collect();
                offsets[i] = d;
            }
            let q_rows: Vec<f64> = (0..n)
                .flat_map(|r| (0..n).map(move |c| (r, c)))
                .map(|(r, c)| q[(r, c)])
                .collect();
            let node = offsets
                .into_iter()
                .map(|d| {
                    let center = DVector::from_iterator(n, mu.iter().zip(&d).map(|(a, b)| a + b));
                    let b = &q * center;
                    QuadComponent {
                        q: q_rows.clone(),
                        b: b.iter().copied().collect(),
                    }
                })
                .collect();
            components.push(node);
        }
        Self::new(components, radius)
    }

    pub fn components_per_node(&self) -> usize {
        self.components[0].len()
    }

    pub fn component(&self, node: usize, i: usize) -> &QuadComponent {
        &self.components[node][i]
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn minimizer(&self) -> Option<&[f64]> {
        self.minimizer.as_deref()
    }

    /// `f(x) = (1/(mM)) Σ_{j,i} f_j^i(x)`.
    pub fn full_value(&self, x: &[f64]) -> f64 {
        let count = (self.components.len() * self.components_per_node()) as f64;
        self.components.iter().flatten().map(|c| c.value(x)).sum::<f64>() / count
    }
}

impl Objective for QuadraticSum {
    type Sample = usize;

    fn nodes(&self) -> usize {
        self.components.len()
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, node: usize, sample: &usize, x: &[f64]) -> f64 {
        self.components[node][*sample].value(x)
    }

    fn gradient_into(&self, node: usize, sample: &usize, x: &[f64], out: &mut [f64]) {
        self.components[node][*sample].gradient_into(x, out)
    }

    fn grad_bound(&self) -> Option<f64> {
        Some(self.grad_bound)
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn random_sample(&self, _node: usize, rng: &mut StreamRng) -> usize {
        rng.random_range(0..self.components_per_node())
    }

    fn check_sample(&self, _node: usize, sample: &usize) -> Result<()> {
        if *sample >= self.components_per_node() {
            return Err(Error::InvalidParameter(format!("component {sample} out of range")));
        }
        Ok(())
    }

    fn mean_gradient(&self, x: &[f64], _budget: Option<usize>) -> Result<MeanGradient> {
        let mut g = vec![0.0; self.n];
        let mut tmp = vec![0.0; self.n];
        for c in self.components.iter().flatten() {
            c.gradient_into(x, &mut tmp);
            g.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
        }
        let count = (self.components.len() * self.components_per_node()) as f64;
        g.iter_mut().for_each(|v| *v /= count);
        Ok(MeanGradient {
            gradient: g,
            samples: 0,
        })
    }

    fn objective_error(&self, x: &[f64]) -> Result<f64> {
        let fstar = self
            .min_value
            .ok_or_else(|| Error::InvalidParameter("quadratic has no unique minimizer".into()))?;
        Ok(self.full_value(x) - fstar)
    }
}

// ---------------------------------------------------------------------------
// Streaming logistic regression on AR data

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ℓ(x; ξ¹, ξ²) = −ξ² log σ(t) − (1 − ξ²) log(1 − σ(t))`, `t = ⟨x, ξ¹⟩`,
/// evaluated as `softplus(t) − ξ² t`.
pub fn logistic_loss(x: &[f64], features: &[f64], label: f64) -> f64 {
    let t = dot(x, features);
    let softplus = if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    };
    softplus - label * t
}

#[derive(Clone, Debug)]
pub struct LogisticSpec {
    pub nodes: usize,
    pub dim: usize,
    /// Feature clip radius; `None` means `10·√n`.
    pub clip: Option<f64>,
    /// Frozen reference samples per node.
    pub ref_samples: usize,
}

/// Samples per chunk for batch passes; fixes the summation order.
const BATCH_CHUNK: usize = 4096;

#[derive(Clone, Debug)]
pub struct StreamingLogistic {
    m: usize,
    n: usize,
    clip: f64,
    u: Vec<f64>,
    params: Vec<Arc<ArParams>>,
    /// Per node: `ref_samples × n` features, row-major.
    batch_features: Vec<Vec<f64>>,
    batch_labels: Vec<Vec<f64>>,
    reference: Vec<f64>,
    reference_value: f64,
    exec: Exec,
}

impl StreamingLogistic {
    /// Generates `u`, the per-node AR matrices and the frozen batch from
    /// `seed`, then solves for the batch minimizer.
    pub fn generate(spec: &LogisticSpec, seed: u64, exec: Exec) -> Result<Self> {
        let (m, n) = (spec.nodes, spec.dim);
        if m == 0 || n == 0 || spec.ref_samples == 0 {
            return Err(Error::InvalidParameter(
                "nodes, dim and ref_samples must be positive".into(),
            ));
        }
        let clip = spec.clip.unwrap_or(10.0 * (n as f64).sqrt());
        let mut rng = rng::stream(seed, Purpose::Workload, 0);
        let u = ar::random_unit_vector(n, &mut rng);
        let params = (0..m)
            .map(|j| {
                let mut r = rng::stream(seed, Purpose::Workload, 1 + j as u64);
                ArParams::random_matrix(u.clone(), &mut r).map(Arc::new)
            })
            .collect::<Result<Vec<_>>>()?;
        let batches = exec.map_range(m, |j| {
            let mut t = ArTrajectory::new(
                params[j].clone(),
                vec![0.0; n],
                clip,
                rng::stream(seed, Purpose::Reference, j as u64),
            )
            .expect("valid trajectory");
            // A is nilpotent, so n steps from zero reach the stationary law.
            for _ in 0..n {
                t.advance();
            }
            let mut feats = Vec::with_capacity(spec.ref_samples * n);
            let mut labels = Vec::with_capacity(spec.ref_samples);
            for _ in 0..spec.ref_samples {
                let s = t.advance();
                feats.extend_from_slice(&s.features);
                labels.push(s.label);
            }
            (feats, labels)
        });
        let (batch_features, batch_labels) = batches.into_iter().unzip();
        let mut obj = StreamingLogistic {
            m,
            n,
            clip,
            u,
            params,
            batch_features,
            batch_labels,
            reference: vec![0.0; n],
            reference_value: 0.0,
            exec,
        };
        obj.reference = obj.solve_reference(1e-10, 100)?;
        obj.reference_value = obj.batch_loss(&obj.reference, None);
        Ok(obj)
    }

    pub fn params(&self, node: usize) -> &Arc<ArParams> {
        &self.params[node]
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn ref_samples(&self) -> usize {
        self.batch_labels[0].len()
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.exec = exec;
    }

    /// Per-node trajectory starting from `ξ¹ = 0`.
    pub fn trajectory(&self, node: usize, rng: StreamRng) -> ArTrajectory {
        ArTrajectory::new(self.params[node].clone(), vec![0.0; self.n], self.clip, rng).expect("valid trajectory")
    }

    fn chunks(&self, limit: Option<usize>) -> Vec<(usize, usize, usize)> {
        let s = limit.map_or(self.ref_samples(), |l| l.min(self.ref_samples()));
        let mut out = Vec::new();
        for j in 0..self.m {
            let mut start = 0;
            while start < s {
                let end = (start + BATCH_CHUNK).min(s);
                out.push((j, start, end));
                start = end;
            }
        }
        out
    }

    /// Batch loss `(1/m) Σ_j mean_s ℓ` over the first `limit` samples per node.
    pub fn batch_loss(&self, x: &[f64], limit: Option<usize>) -> f64 {
        let chunks = self.chunks(limit);
        let s = limit.map_or(self.ref_samples(), |l| l.min(self.ref_samples()));
        let parts = self.exec.map(&chunks, |&(j, a, b)| {
            let f = &self.batch_features[j];
            let l = &self.batch_labels[j];
            (a..b)
                .map(|t| logistic_loss(x, &f[t * self.n..(t + 1) * self.n], l[t]))
                .sum::<f64>()
        });
        parts.iter().sum::<f64>() / (self.m * s) as f64
    }

    fn batch_gradient(&self, x: &[f64], limit: Option<usize>) -> (Vec<f64>, usize) {
        let n = self.n;
        let chunks = self.chunks(limit);
        let s = limit.map_or(self.ref_samples(), |l| l.min(self.ref_samples()));
        let parts = self.exec.map(&chunks, |&(j, a, b)| {
            let f = &self.batch_features[j];
            let l = &self.batch_labels[j];
            let mut g = vec![0.0; n];
            for t in a..b {
                let xi = &f[t * n..(t + 1) * n];
                let r = sigmoid(dot(x, xi)) - l[t];
                g.iter_mut().zip(xi).for_each(|(gi, v)| *gi += r * v);
            }
            g
        });
        let mut g = vec![0.0; n];
        for p in parts {
            g.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
        let denom = (self.m * s) as f64;
        g.iter_mut().for_each(|v| *v /= denom);
        (g, s)
    }

    fn batch_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let chunks = self.chunks(None);
        let parts = self.exec.map(&chunks, |&(j, a, b)| {
            let f = &self.batch_features[j];
            let mut h = vec![0.0; n * n];
            for t in a..b {
                let xi = &f[t * n..(t + 1) * n];
                let p = sigmoid(dot(x, xi));
                let w = p * (1.0 - p);
                for r in 0..n {
                    let wr = w * xi[r];
                    for c in 0..n {
                        h[r * n + c] += wr * xi[c];
                    }
                }
            }
            h
        });
        let mut h = vec![0.0; n * n];
        for p in parts {
            h.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
        let denom = (self.m * self.ref_samples()) as f64;
        DMatrix::from_row_slice(n, n, &h) / denom
    }

    /// Damped Newton iterations on the frozen batch loss until the gradient
    /// norm drops below `tol`.
    fn solve_reference(&self, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.n];
        let mut fx = self.batch_loss(&x, None);
        for _ in 0..max_iter {
            let (g, _) = self.batch_gradient(&x, None);
            if norm(&g) < tol {
                return Ok(x);
            }
            let h = self.batch_hessian(&x);
            let gv = DVector::from_column_slice(&g);
            let dir = match h.clone().cholesky() {
                Some(ch) => ch.solve(&gv),
                None => gv.clone(),
            };
            let slope = gv.dot(&dir);
            let mut step = 1.0;
            loop {
                let cand: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a - step * d).collect();
                let fc = self.batch_loss(&cand, None);
                if fc <= fx - 1e-4 * step * slope || step < 1e-12 {
                    x = cand;
                    fx = fc;
                    break;
                }
                step *= 0.5;
            }
        }
        let (g, _) = self.batch_gradient(&x, None);
        if norm(&g) < 1e-8 {
            Ok(x)
        } else {
            Err(Error::NonFinite(format!(
                "reference solve stalled at gradient norm {:.3e}",
                norm(&g)
            )))
        }
    }

    /// Writes the frozen batch: rows are `(features…, label)`, node-major.
    pub fn export_batch(&self, path: &Path) -> Result<()> {
        let rows = self.m * self.ref_samples();
        let cols = self.n + 1;
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..self.m {
            for t in 0..self.ref_samples() {
                data.extend_from_slice(&self.batch_features[j][t * self.n..(t + 1) * self.n]);
                data.push(self.batch_labels[j][t]);
            }
        }
        crate::textio::write_f64_batch(path, rows, cols, &data)
    }
}

impl Objective for StreamingLogistic {
    type Sample = ArSample;

    fn nodes(&self) -> usize {
        self.m
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, _node: usize, s: &ArSample, x: &[f64]) -> f64 {
        logistic_loss(x, &s.features, s.label)
    }

    fn gradient_into(&self, _node: usize, s: &ArSample, x: &[f64], out: &mut [f64]) {
        let r = sigmoid(dot(x, &s.features)) - s.label;
        out.iter_mut().zip(&s.features).for_each(|(o, v)| *o = r * v);
    }

    fn grad_bound(&self) -> Option<f64> {
        Some(self.clip)
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.clip * self.clip / 4.0)
    }

    fn random_sample(&self, node: usize, rng: &mut StreamRng) -> ArSample {
        let sub = rng.random::<u64>();
        let mut t = self.trajectory(node, rng::stream(sub, Purpose::Probe, node as u64));
        for _ in 0..self.n {
            t.advance();
        }
        t.advance().clone()
    }

    fn check_sample(&self, _node: usize, s: &ArSample) -> Result<()> {
        if s.features.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: s.features.len(),
            });
        }
        Ok(())
    }

    fn mean_gradient(&self, x: &[f64], budget: Option<usize>) -> Result<MeanGradient> {
        let budget = match budget {
            Some(b) if b > 0 => b,
            _ => {
                return Err(Error::InvalidParameter(
                    "streaming mean gradient needs a positive sample budget".into(),
                ))
            }
        };
        let (gradient, samples) = self.batch_gradient(x, Some(budget));
        Ok(MeanGradient { gradient, samples })
    }

    fn objective_error(&self, x: &[f64]) -> Result<f64> {
        Ok(self.batch_loss(x, None) - self.reference_value)
    }
}

// ---------------------------------------------------------------------------
// Diagnostics

/// Monte-Carlo estimates `(B̂, L̂)`: the largest probed gradient norm and the
/// largest probed difference quotient, over points uniform in the ball of
/// the given radius and samples drawn from each node's stationary law.
pub fn estimate_bounds<O: Objective>(obj: &O, probe_count: usize, radius: f64, seed: u64) -> Result<(f64, f64)> {
    if probe_count < 2 {
        return Err(Error::InvalidParameter("probe_count must be at least 2".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter("probe radius must be positive".into()));
    }
    let n = obj.dim();
    let mut rng = rng::stream(seed, Purpose::Probe, u64::from(u32::MAX));
    let mut b_hat: f64 = 0.0;
    let mut l_hat: f64 = 0.0;
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    for _ in 0..probe_count {
        let node = rng.random_range(0..obj.nodes());
        let s = obj.random_sample(node, &mut rng);
        let x = rng::in_ball(n, radius, &mut rng);
        let y = rng::in_ball(n, radius, &mut rng);
        obj.gradient_into(node, &s, &x, &mut gx);
        obj.gradient_into(node, &s, &y, &mut gy);
        b_hat = b_hat.max(norm(&gx)).max(norm(&gy));
        let dxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dxy > 0.0 {
            let dg: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            l_hat = l_hat.max(dg / dxy);
        }
    }
    Ok((b_hat, l_hat))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub probes: usize,
    pub failures: usize,
    /// Largest `|fd − g|_∞ / max(1, |g|_∞)` seen.
    pub worst_relative_error: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Compares analytic component gradients with central differences
/// (step [`FD_STEP`]) at random points in the ball of radius `radius`.
/// A probe fails when any coordinate differs by more than
/// `FD_REL_TOL · max(1, ‖g‖_∞)`.
pub fn gradcheck<O: Objective>(obj: &O, probes: usize, radius: f64, seed: u64) -> GradcheckReport {
    let n = obj.dim();
    let mut rng = rng::stream(seed, Purpose::Probe, u64::from(u32::MAX) - 1);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut g = vec![0.0; n];
    for _ in 0..probes {
        let node = rng.random_range(0..obj.nodes());
        let s = obj.random_sample(node, &mut rng);
        let x = rng::in_ball(n, radius, &mut rng);
        obj.gradient_into(node, &s, &x, &mut g);
        let scale = g.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let mut xp = x.clone();
        let mut err: f64 = 0.0;
        for d in 0..n {
            xp[d] = x[d] + FD_STEP;
            let fp = obj.value(node, &s, &xp);
            xp[d] = x[d] - FD_STEP;
            let fm = obj.value(node, &s, &xp);
            xp[d] = x[d];
            let fd = (fp - fm) / (2.0 * FD_STEP);
            err = err.max((fd - g[d]).abs() / scale);
        }
        worst = worst.max(err);
        if err > FD_REL_TOL {
            failures += 1;
        }
    }
    GradcheckReport {
        probes,
        failures,
        worst_relative_error: worst,
    }
}
