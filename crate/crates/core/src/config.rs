//! Flat `key=value` run configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored and
//! unknown keys are errors. [`CONFIG_KEYS`] documents every key.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::optim::{Algorithm, StepSchedule};
use crate::topology::TopologyKind;
use crate::{Error, Exec, Result};

/// `(key, default, description)` for every accepted key.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("algorithm", "dmgd", "dmgd | zo_dmgd | dsgd_t | mcgd"),
    ("t", "1", "DSGD-T restart length T (>= 1)"),
    ("iterations", "1000", "iteration budget K"),
    ("sample_budget", "", "samples per node; when set, K = sample_budget / samples per iteration"),
    ("theta", "0.51", "step size exponent, gamma_k = 1/(k+1)^theta with 1/2 < theta < 1"),
    ("rho", "0.6", "zeroth-order smoothing exponent, delta_k = 1/(k+1)^rho, theta + rho > 1"),
    ("seed", "0", "run seed (chains, sphere directions)"),
    ("workload_seed", "", "seed for workload and random topology (defaults to seed)"),
    ("topology", "ring", "ring | path | complete | star | erdos_renyi"),
    ("nodes", "5", "number of nodes m"),
    ("edge_prob", "", "edge probability for erdos_renyi"),
    ("workload", "quadratic", "quadratic | logistic"),
    ("dim", "10", "parameter dimension n"),
    ("components", "4", "quadratic components per node M (= chain states)"),
    ("spread", "0.5", "quadratic component heterogeneity"),
    ("radius", "10", "quadratic domain radius used for gradient bounds"),
    ("clip", "", "logistic feature clip radius (defaults to 10*sqrt(n))"),
    ("ref_samples", "100000", "logistic frozen reference samples per node"),
    ("grad_budget", "", "logistic samples per node for the gradient-norm metric (defaults to ref_samples)"),
    ("chain", "", "lazy_path | lazy_ring | lazy_complete | uniform | file | ar (default: lazy_path for quadratic, ar for logistic)"),
    ("chain_file", "", "transition matrix file when chain=file"),
    ("chain_init", "0", "initial chain state (also the DSGD-T restart state)"),
    ("x0", "0", "initial iterate: one value for every coordinate, or a comma-separated vector"),
    ("cadence", "10", "record metrics every N iterations (plus k = 0, 1 and the last)"),
    ("timing", "false", "fill the wall_ms column (breaks byte-identical output)"),
    ("exec", "sequential", "per-round node execution: sequential | parallel"),
    ("scale", "desk", "figure1 scale: desk (m=5, n=10) | paper (m=10, n=50 and m=20, n=100)"),
    ("seeds", "5", "figure1 repetitions"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkloadKind {
    Quadratic,
    Logistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainKind {
    LazyPath,
    LazyRing,
    LazyComplete,
    Uniform,
    File,
    Ar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub sample_budget: Option<u64>,
    pub theta: f64,
    pub rho: f64,
    pub seed: u64,
    pub workload_seed: Option<u64>,
    pub topology: TopologyKind,
    pub nodes: usize,
    pub edge_prob: Option<f64>,
    pub workload: WorkloadKind,
    pub dim: usize,
    pub components: usize,
    pub spread: f64,
    pub radius: f64,
    pub clip: Option<f64>,
    pub ref_samples: usize,
    pub grad_budget: Option<usize>,
    pub chain: Option<ChainKind>,
    pub chain_file: Option<PathBuf>,
    pub chain_init: usize,
    pub x0: Vec<f64>,
    pub cadence: usize,
    pub timing: bool,
    pub exec: Exec,
    pub scale: Scale,
    pub seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: Algorithm::Dmgd,
            iterations: 1000,
            sample_budget: None,
            theta: 0.51,
            rho: 0.6,
            seed: 0,
            workload_seed: None,
            topology: TopologyKind::Ring,
            nodes: 5,
            edge_prob: None,
            workload: WorkloadKind::Quadratic,
            dim: 10,
            components: 4,
            spread: 0.5,
            radius: 10.0,
            clip: None,
            ref_samples: 100_000,
            grad_budget: None,
            chain: None,
            chain_file: None,
            chain_init: 0,
            x0: vec![0.0],
            cadence: 10,
            timing: false,
            exec: Exec::Sequential,
            scale: Scale::Desk,
            seeds: 5,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        let mut t = 1usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), lineno).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            match key {
                "algorithm" => cfg.algorithm = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
                "t" => t = parse(key, value)?,
                "iterations" => cfg.iterations = parse(key, value)?,
                "sample_budget" => cfg.sample_budget = Some(parse(key, value)?),
                "theta" => cfg.theta = parse(key, value)?,
                "rho" => cfg.rho = parse(key, value)?,
                "seed" => cfg.seed = parse(key, value)?,
                "workload_seed" => cfg.workload_seed = Some(parse(key, value)?),
                "topology" => cfg.topology = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
                "nodes" => cfg.nodes = parse(key, value)?,
                "edge_prob" => cfg.edge_prob = Some(parse(key, value)?),
                "workload" => {
                    cfg.workload = match value {
                        "quadratic" => WorkloadKind::Quadratic,
                        "logistic" => WorkloadKind::Logistic,
                        v => return Err(Error::Config(format!("workload: unknown {v:?}"))),
                    }
                }
                "dim" => cfg.dim = parse(key, value)?,
                "components" => cfg.components = parse(key, value)?,
                "spread" => cfg.spread = parse(key, value)?,
                "radius" => cfg.radius = parse(key, value)?,
                "clip" => cfg.clip = Some(parse(key, value)?),
                "ref_samples" => cfg.ref_samples = parse(key, value)?,
                "grad_budget" => cfg.grad_budget = Some(parse(key, value)?),
                "chain" => {
                    cfg.chain = Some(match value {
                        "lazy_path" => ChainKind::LazyPath,
                        "lazy_ring" => ChainKind::LazyRing,
                        "lazy_complete" => ChainKind::LazyComplete,
                        "uniform" => ChainKind::Uniform,
                        "file" => ChainKind::File,
                        "ar" => ChainKind::Ar,
                        v => return Err(Error::Config(format!("chain: unknown {v:?}"))),
                    })
                }
                "chain_file" => cfg.chain_file = Some(PathBuf::from(value)),
                "chain_init" => cfg.chain_init = parse(key, value)?,
                "x0" => {
                    cfg.x0 = value
                        .split(',')
                        .map(|v| parse::<f64>(key, v.trim()))
                        .collect::<Result<Vec<_>>>()?
                }
                "cadence" => cfg.cadence = parse(key, value)?,
                "timing" => cfg.timing = parse(key, value)?,
                "exec" => {
                    cfg.exec = match value {
                        "sequential" => Exec::Sequential,
                        "parallel" => Exec::Parallel,
                        v => return Err(Error::Config(format!("exec: unknown {v:?}"))),
                    }
                }
                "scale" => {
                    cfg.scale = match value {
                        "desk" => Scale::Desk,
                        "paper" => Scale::Paper,
                        v => return Err(Error::Config(format!("scale: unknown {v:?}"))),
                    }
                }
                "seeds" => cfg.seeds = parse(key, value)?,
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        if let Algorithm::DsgdT(_) = cfg.algorithm {
            cfg.algorithm = Algorithm::DsgdT(t);
        } else if seen.contains_key("t") && t != 1 {
            return Err(Error::Config("t is only meaningful for algorithm=dsgd_t".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let Err(e) = self.schedule() {
            return bad(e.to_string());
        }
        if let Algorithm::DsgdT(0) = self.algorithm {
            return bad("t must be >= 1".into());
        }
        if self.sample_budget == Some(0) {
            return bad("sample_budget must be >= 1".into());
        }
        if self.nodes == 0 || self.dim == 0 || self.components == 0 {
            return bad("nodes, dim and components must be >= 1".into());
        }
        if self.cadence == 0 {
            return bad("cadence must be >= 1".into());
        }
        if self.seeds == 0 {
            return bad("seeds must be >= 1".into());
        }
        if self.x0.len() != 1 && self.x0.len() != self.dim {
            return bad(format!("x0 needs 1 or {} values, got {}", self.dim, self.x0.len()));
        }
        if self.topology == TopologyKind::ErdosRenyi && self.edge_prob.is_none() {
            return bad("topology=erdos_renyi needs edge_prob".into());
        }
        match (self.workload, self.chain_kind()) {
            (WorkloadKind::Logistic, ChainKind::Ar) => {}
            (WorkloadKind::Logistic, _) => return bad("the logistic workload samples from chain=ar".into()),
            (WorkloadKind::Quadratic, ChainKind::Ar) => return bad("chain=ar needs workload=logistic".into()),
            (WorkloadKind::Quadratic, ChainKind::File) if self.chain_file.is_none() => {
                return bad("chain=file needs chain_file".into())
            }
            _ => {}
        }
        if self.workload == WorkloadKind::Quadratic && self.chain_init >= self.components {
            return bad("chain_init must be < components".into());
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        if self.algorithm == Algorithm::ZoDmgd {
            StepSchedule::zeroth_order(self.theta, self.rho)
        } else {
            StepSchedule::new(self.theta)
        }
    }

    pub fn chain_kind(&self) -> ChainKind {
        self.chain.unwrap_or(match self.workload {
            WorkloadKind::Quadratic => ChainKind::LazyPath,
            WorkloadKind::Logistic => ChainKind::Ar,
        })
    }

    pub fn workload_seed(&self) -> u64 {
        self.workload_seed.unwrap_or(self.seed)
    }

    pub fn initial_point(&self) -> Vec<f64> {
        if self.x0.len() == 1 {
            vec![self.x0[0]; self.dim]
        } else {
            self.x0.clone()
        }
    }

    /// Iterations actually executed.
    pub fn effective_iterations(&self) -> usize {
        match self.sample_budget {
            Some(b) => (b / self.algorithm.samples_per_iteration()) as usize,
            None => self.iterations,
        }
    }

    /// Canonical rendering: every key in [`CONFIG_KEYS`] order, with
    /// defaults filled in. Parsing it yields the same config.
    pub fn render(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut out = String::new();
        for (key, _, _) in CONFIG_KEYS {
            let value = match *key {
                "algorithm" => self.algorithm.tag().to_string(),
                "t" => match self.algorithm {
                    Algorithm::DsgdT(t) => t.to_string(),
                    _ => "1".into(),
                },
                "iterations" => self.iterations.to_string(),
                "sample_budget" => opt(self.sample_budget.map(|v| v.to_string())),
                "theta" => crate::textio::fmt_g17(self.theta),
                "rho" => crate::textio::fmt_g17(self.rho),
                "seed" => self.seed.to_string(),
                "workload_seed" => self.workload_seed().to_string(),
                "topology" => self.topology.to_string(),
                "nodes" => self.nodes.to_string(),
                "edge_prob" => opt(self.edge_prob.map(crate::textio::fmt_g17)),
                "workload" => match self.workload {
                    WorkloadKind::Quadratic => "quadratic".into(),
                    WorkloadKind::Logistic => "logistic".into(),
                },
                "dim" => self.dim.to_string(),
                "components" => self.components.to_string(),
                "spread" => crate::textio::fmt_g17(self.spread),
                "radius" => crate::textio::fmt_g17(self.radius),
                "clip" => opt(self.clip.map(crate::textio::fmt_g17)),
                "ref_samples" => self.ref_samples.to_string(),
                "grad_budget" => opt(self.grad_budget.map(|v| v.to_string())),
                "chain" => match self.chain_kind() {
                    ChainKind::LazyPath => "lazy_path",
                    ChainKind::LazyRing => "lazy_ring",
                    ChainKind::LazyComplete => "lazy_complete",
                    ChainKind::Uniform => "uniform",
                    ChainKind::File => "file",
                    ChainKind::Ar => "ar",
                }
                .into(),
                "chain_file" => opt(self.chain_file.as_ref().map(|p| p.display().to_string())),
                "chain_init" => self.chain_init.to_string(),
                "x0" => self
                    .x0
                    .iter()
                    .map(|v| crate::textio::fmt_g17(*v))
                    .collect::<Vec<_>>()
                    .join(","),
                "cadence" => self.cadence.to_string(),
                "timing" => self.timing.to_string(),
                "exec" => match self.exec {
                    Exec::Sequential => "sequential",
                    Exec::Parallel => "parallel",
                }
                .into(),
                "scale" => match self.scale {
                    Scale::Desk => "desk",
                    Scale::Paper => "paper",
                }
                .into(),
                "seeds" => self.seeds.to_string(),
                _ => unreachable!("key table and renderer out of sync"),
            };
            if !value.is_empty() {
                let _ = writeln!(out, "{key}={value}");
            }
        }
        out
    }

    /// Hex SHA-256 of [`RunConfig::render`].
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }
}

/// Help text listing every key, for CLI `--help`.
pub fn keys_help() -> String {
    let mut out = String::from("Config keys (key=value per line, # comments):\n");
    for (k, d, desc) in CONFIG_KEYS {
        let d = if d.is_empty() { "unset" } else { d };
        let _ = writeln!(out, "  {k:<14} {desc} [default: {d}]");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg: RunConfig = "# comment\nalgorithm=dsgd_t\nt=8\n\nnodes = 6\n".parse().unwrap();
        assert_eq!(cfg.algorithm, Algorithm::DsgdT(8));
        assert_eq!(cfg.nodes, 6);
        assert_eq!(cfg.theta, 0.51);
    }

    #[test]
    fn rejects_bad_theta_with_constraint_message() {
        let err = "theta=0.4".parse::<RunConfig>().unwrap_err().to_string();
        assert!(err.contains("1/2 < theta < 1"), "{err}");
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!("bogus=1".parse::<RunConfig>().is_err());
        assert!("seed=1\nseed=2".parse::<RunConfig>().is_err());
        assert!("seed".parse::<RunConfig>().is_err());
        assert!("algorithm=dsgd_t\nt=0".parse::<RunConfig>().is_err());
        assert!("algorithm=zo_dmgd\nrho=0.3".parse::<RunConfig>().is_err());
        assert!("workload=logistic\nchain=lazy_path".parse::<RunConfig>().is_err());
    }

    #[test]
    fn render_round_trips() {
        let cfg: RunConfig = "algorithm=zo_dmgd\nworkload=logistic\nclip=3.5\nx0=0.25\nseed=9"
            .parse()
            .unwrap();
        let again: RunConfig = cfg.render().parse().unwrap();
        assert_eq!(cfg.render(), again.render());
        assert_eq!(cfg.fingerprint(), again.fingerprint());
    }

    #[test]
    fn every_key_is_documented_and_parseable() {
        let help = keys_help();
        for (k, _, _) in CONFIG_KEYS {
            assert!(help.contains(k));
        }
        let rendered = RunConfig::default().render();
        assert!(rendered.parse::<RunConfig>().is_ok());
    }

    #[test]
    fn sample_budget_sets_iterations() {
        let cfg: RunConfig = "algorithm=dsgd_t\nt=4\nsample_budget=1000".parse().unwrap();
        assert_eq!(cfg.effective_iterations(), 250);
    }
}
