//! Communication graphs and mixing matrices.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Absolute tolerance for every structural check on a mixing matrix.
pub const MIXING_TOL: f64 = 1e-10;

/// Erdős–Rényi draws attempted before giving up on connectivity.
pub const ER_MAX_DRAWS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TopologyKind {
    Ring,
    Path,
    Complete,
    Star,
    ErdosRenyi,
    /// Explicit edge list, e.g. recovered from the support of a matrix.
    Custom,
}

impl TopologyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Ring => "ring",
            TopologyKind::Path => "path",
            TopologyKind::Complete => "complete",
            TopologyKind::Star => "star",
            TopologyKind::ErdosRenyi => "erdos_renyi",
            TopologyKind::Custom => "custom",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ring" => TopologyKind::Ring,
            "path" => TopologyKind::Path,
            "complete" => TopologyKind::Complete,
            "star" => TopologyKind::Star,
            "erdos_renyi" | "er" => TopologyKind::ErdosRenyi,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown topology {other:?} (expected ring, path, complete, star, erdos_renyi)"
                )))
            }
        })
    }
}

/// Undirected connected graph on nodes `0..m` without self-loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommGraph {
    m: usize,
    kind: TopologyKind,
    /// Unordered pairs stored as `(i, l)` with `i < l`.
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Builds a graph from an explicit edge list. Self-loops are rejected,
    /// duplicate and reversed pairs are merged, and the result must be
    /// connected.
    pub fn from_edges(m: usize, kind: TopologyKind, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let g = Self::unchecked(m, kind, edges)?;
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    fn unchecked(m: usize, kind: TopologyKind, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= m || b >= m {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a},{b}) out of range for {m} nodes"
                )));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut neighbors = vec![Vec::new(); m];
        for &(a, b) in &set {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(CommGraph {
            m,
            kind,
            edges: set,
            neighbors,
        })
    }

    /// Graph whose edges are the off-diagonal nonzeros of `w`
    /// (`|w_il| > tol` or `|w_li| > tol`).
    pub fn from_support(w: &DMatrix<f64>, tol: f64) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::DimensionMismatch {
                expected: w.nrows(),
                got: w.ncols(),
            });
        }
        let m = w.nrows();
        let mut edges = Vec::new();
        for i in 0..m {
            for l in i + 1..m {
                if w[(i, l)].abs() > tol || w[(l, i)].abs() > tol {
                    edges.push((i, l));
                }
            }
        }
        Self::from_edges(m, TopologyKind::Custom, edges)
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.m];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &self.neighbors[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.m
    }

    /// 0/1 adjacency matrix.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.m, self.m);
        for &(i, l) in &self.edges {
            a[(i, l)] = 1.0;
            a[(l, i)] = 1.0;
        }
        a
    }
}

/// Builds a connected graph of the requested family on `m` nodes.
///
/// `edge_prob` is required for Erdős–Rényi and ignored otherwise. Erdős–Rényi
/// graphs are redrawn from the seeded stream until connected, at most
/// [`ER_MAX_DRAWS`] times.
pub fn build_graph(kind: TopologyKind, m: usize, seed: u64, edge_prob: Option<f64>) -> Result<CommGraph> {
    if m == 0 {
        return Err(Error::InvalidParameter("graph needs at least one node".into()));
    }
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Path => (1..m).map(|i| (i - 1, i)).collect(),
        TopologyKind::Ring => {
            let mut e: Vec<_> = (1..m).map(|i| (i - 1, i)).collect();
            if m >= 3 {
                e.push((m - 1, 0));
            }
            e
        }
        TopologyKind::Complete => (0..m).flat_map(|i| (i + 1..m).map(move |l| (i, l))).collect(),
        TopologyKind::Star => (1..m).map(|i| (0, i)).collect(),
        TopologyKind::ErdosRenyi => {
            let p = match edge_prob {
                Some(p) if p > 0.0 && p <= 1.0 => p,
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "erdos_renyi needs 0 < edge_prob <= 1, got {other:?}"
                    )))
                }
            };
            let mut rng = rng::stream(seed, Purpose::Topology, 0);
            for _ in 0..ER_MAX_DRAWS {
                let mut e = Vec::new();
                for i in 0..m {
                    for l in i + 1..m {
                        if rng.random::<f64>() < p {
                            e.push((i, l));
                        }
                    }
                }
                let g = CommGraph::unchecked(m, kind, e)?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            return Err(Error::RetriesExhausted(ER_MAX_DRAWS));
        }
        TopologyKind::Custom => {
            return Err(Error::InvalidParameter(
                "custom graphs are built from an explicit edge list".into(),
            ))
        }
    };
    CommGraph::from_edges(m, kind, edges)
}

/// Symmetric mixing matrix together with its spectrum.
#[derive(Clone, Debug)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    /// Real eigenvalues sorted nonincreasing.
    eigenvalues: Vec<f64>,
    lambda2: f64,
}

impl MixingMatrix {
    /// Wraps an arbitrary symmetric matrix. No Definition-style property is
    /// enforced here; use [`validate_mixing`] for that.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::DimensionMismatch {
                expected: w.nrows(),
                got: w.ncols(),
            });
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("mixing matrix entry".into()));
        }
        if max_asymmetry(&w) > MIXING_TOL {
            return Err(Error::InvalidParameter("mixing matrix is not symmetric".into()));
        }
        let eigenvalues = symmetric_spectrum(&w);
        let lambda2 = eigenvalues.iter().skip(1).map(|l| l.abs()).fold(0.0, f64::max);
        Ok(MixingMatrix {
            w,
            eigenvalues,
            lambda2,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn size(&self) -> usize {
        self.w.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Largest eigenvalue magnitude after the leading unit eigenvalue, i.e.
    /// `max(|λ_2|, |λ_m|)`. Zero for a single node.
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn weight(&self, i: usize, l: usize) -> f64 {
        self.w[(i, l)]
    }

    pub fn to_text(&self) -> String {
        crate::textio::format_matrix(&self.w)
    }
}

/// Metropolis–Hastings weights: `w_il = 1 / (1 + max(deg_i, deg_l))` on
/// edges and `w_ii = 1 - Σ_{l≠i} w_il`.
pub fn metropolis_weights(g: &CommGraph) -> MixingMatrix {
    let m = g.node_count();
    let mut w = DMatrix::zeros(m, m);
    for (i, l) in g.edges() {
        let v = 1.0 / (1 + g.degree(i).max(g.degree(l))) as f64;
        w[(i, l)] = v;
        w[(l, i)] = v;
    }
    for i in 0..m {
        let off: f64 = g.neighbors(i).iter().map(|&l| w[(i, l)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_matrix(w).expect("Metropolis weights are symmetric and finite")
}

fn max_asymmetry(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for l in i + 1..n {
            worst = worst.max((w[(i, l)] - w[(l, i)]).abs());
        }
    }
    worst
}

fn symmetric_spectrum(w: &DMatrix<f64>) -> Vec<f64> {
    let sym = (w + w.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Largest measured violation (0 when the property holds exactly).
    pub violation: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingReport {
    pub checks: Vec<PropertyCheck>,
}

impl MixingReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for MixingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{}: {} (violation {:.3e}) {}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.violation,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Checks the four mixing-matrix properties (graph pattern, symmetry,
/// null space of `I - W` equal to span{1}, and `I ⪰ W ≻ -I`) at
/// [`MIXING_TOL`].
///
/// The spectral property is evaluated on the symmetric part of `w`, which is
/// what the quadratic-form ordering depends on.
pub fn validate_mixing(w: &DMatrix<f64>, g: &CommGraph) -> Result<MixingReport> {
    let m = g.node_count();
    if w.nrows() != m || w.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: if w.nrows() != m { w.nrows() } else { w.ncols() },
        });
    }
    let tol = MIXING_TOL;

    let mut graph_violation: f64 = 0.0;
    let mut graph_detail = String::new();
    for i in 0..m {
        for l in 0..m {
            if i == l {
                continue;
            }
            let v = w[(i, l)];
            let bad = if g.has_edge(i, l) {
                // Must be strictly positive on edges.
                if v > tol {
                    0.0
                } else {
                    tol - v + f64::EPSILON
                }
            } else {
                (v.abs() - tol).max(0.0)
            };
            if bad > graph_violation {
                graph_violation = bad;
                graph_detail = format!("worst entry ({i},{l}) = {v}");
            }
        }
    }

    let asym = max_asymmetry(w);

    let ones = DMatrix::from_element(m, 1, 1.0);
    let residual = (DMatrix::identity(m, m) - w) * &ones;
    let row_sum_err = residual.amax();
    let singular = (DMatrix::identity(m, m) - w).singular_values();
    let null_dim = singular.iter().filter(|s| **s <= tol).count();
    let null_ok = row_sum_err <= tol && null_dim == 1;

    let spectrum = symmetric_spectrum(w);
    let top = spectrum[0];
    let bottom = *spectrum.last().unwrap();
    let upper_violation = (top - 1.0 - tol).max(0.0);
    let lower_violation = if bottom > -1.0 + tol {
        0.0
    } else {
        -1.0 + tol - bottom + f64::EPSILON
    };

    Ok(MixingReport {
        checks: vec![
            PropertyCheck {
                name: "graph",
                passed: graph_violation == 0.0,
                violation: graph_violation,
                detail: graph_detail,
            },
            PropertyCheck {
                name: "symmetry",
                passed: asym <= tol,
                violation: asym,
                detail: String::new(),
            },
            PropertyCheck {
                name: "null-space",
                passed: null_ok,
                violation: row_sum_err.max(if null_dim == 1 { 0.0 } else { 1.0 }),
                detail: format!("max |(I-W)1| = {row_sum_err:.3e}, dim null(I-W) = {null_dim}"),
            },
            PropertyCheck {
                name: "spectral",
                passed: upper_violation == 0.0 && lower_violation == 0.0,
                violation: upper_violation.max(lower_violation),
                detail: format!("eigenvalues in [{bottom}, {top}]"),
            },
        ],
    })
}

impl MixingMatrix {
    pub fn validate(&self, g: &CommGraph) -> Result<MixingReport> {
        validate_mixing(&self.w, g)
    }
}

/// Spectral norm of `W^k - P`, `P = 11ᵀ/m`.
///
/// For `k ≥ 1` this equals `‖(W - P)^k‖₂` because `WP = PW = P`; powering the
/// deviation directly keeps relative accuracy when the value is tiny.
pub fn power_deviation(w: &MixingMatrix, k: u32) -> f64 {
    let m = w.size();
    let p = DMatrix::from_element(m, m, 1.0 / m as f64);
    if k == 0 {
        return spectral_norm(&(DMatrix::identity(m, m) - p));
    }
    let d = w.matrix() - p;
    spectral_norm(&matrix_power(&d, k))
}

pub(crate) fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Square-and-multiply power, `k ≥ 1`.
pub(crate) fn matrix_power(a: &DMatrix<f64>, k: u32) -> DMatrix<f64> {
    assert!(k >= 1);
    let mut result: Option<DMatrix<f64>> = None;
    let mut base = a.clone();
    let mut e = k;
    loop {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r * &base,
            });
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        base = &base * &base;
    }
    result.unwrap()
}
