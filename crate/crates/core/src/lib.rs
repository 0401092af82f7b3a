//! Bootstrapped graph latents (BGRL) and the neighbor-supported BLNN
//! extension, built on a small reverse-mode autodiff engine.
//!
//! The pipeline: [`graph`] loads or [`synth`] generates a graph,
//! [`augment`] produces two stochastic views, [`encoder`] maps them through
//! the online and target GCNs, [`objective`] scores node-neighbor pairs and
//! builds the loss, and [`trainer`] runs the optimization with EMA target
//! updates from [`bootstrap`]. [`eval`] scores frozen embeddings.

pub mod ablation;
pub mod augment;
pub mod autodiff;
pub mod bootstrap;
pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod gradcheck;
pub mod matrix;
pub mod objective;
pub mod optim;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
