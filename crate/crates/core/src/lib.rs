//! Simulation library for decentralized stochastic optimization in which every
//! node draws its gradient samples along a Markov-chain trajectory.
//!
//! The crate is organized bottom-up:
//!
//! * [`topology`]: communication graphs, Metropolis mixing matrices and their
//!   spectral diagnostics.
//! * [`chain`] and [`ar`]: finite-state chains (construction, validation,
//!   deviation decay, trajectory cursors) and the autoregressive data chain.
//! * [`objective`]: component-function workloads with gradient oracles.
//! * [`optim`]: DMGD, zeroth-order DMGD, DSGD-T and centralized MCGD rounds.
//! * [`harness`]: metrics, CSV records, repetitions and the sample-budget
//!   comparison experiment.
//!
//! Data-parallel loops go through [`exec::Exec`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise. Results are
//! identical either way.

pub mod ar;
pub mod chain;
pub mod config;
pub mod error;
pub mod exec;
pub mod harness;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod stats;
pub mod textio;
pub mod topology;

pub use error::{Error, Result};
pub use exec::Exec;
