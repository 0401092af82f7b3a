//! Stochastic block model graphs with Gaussian class-conditional features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{Labels, SparseGraph};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct SbmConfig {
    pub n_nodes: usize,
    pub n_classes: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub feature_dim: usize,
    /// Typical Euclidean distance between two class means.
    pub class_mean_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        SbmConfig {
            n_nodes: 300,
            n_classes: 3,
            p_intra: 0.05,
            p_inter: 0.005,
            feature_dim: 32,
            class_mean_separation: 1.0,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.n_nodes < self.n_classes {
            return Err(Error::Config(format!(
                "need at least one node per class ({} nodes, {} classes)",
                self.n_nodes, self.n_classes
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if !(0.0 <= self.p_inter && self.p_inter <= self.p_intra && self.p_intra <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= p_inter <= p_intra <= 1, got p_inter {} and p_intra {}",
                self.p_inter, self.p_intra
            )));
        }
        if !(self.noise_std >= 0.0) || !(self.class_mean_separation >= 0.0) {
            return Err(Error::Config("noise_std and class_mean_separation must be nonnegative".into()));
        }
        Ok(())
    }

    /// Expected degree of a node in a class of average size.
    pub fn expected_degree(&self) -> f64 {
        let m = self.n_nodes as f64 / self.n_classes as f64;
        self.p_intra * (m - 1.0) + self.p_inter * (self.n_nodes as f64 - m)
    }
}

/// Class of node `i`: contiguous blocks whose sizes differ by at most one.
fn class_of(i: usize, n: usize, k: usize) -> usize {
    i * k / n
}

pub fn generate_sbm(cfg: &SbmConfig) -> Result<(SparseGraph, Labels)> {
    cfg.validate()?;
    let deg = cfg.expected_degree();
    if deg < 1.0 {
        log::warn!("expected degree {deg:.3} is below 1; the graph will be mostly isolated nodes");
    }
    let (n, k, p) = (cfg.n_nodes, cfg.n_classes, cfg.feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // E‖μ_a − μ_b‖² = 2pσ², so σ = sep/√(2p) puts the means about `sep` apart.
    let sigma = cfg.class_mean_separation / (2.0 * p as f64).sqrt();
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..p).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let classes: Vec<usize> = (0..n).map(|i| class_of(i, n, k)).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let prob = if classes[i] == classes[j] { cfg.p_intra } else { cfg.p_inter };
            if rng.random::<f64>() < prob {
                edges.push((i, j));
            }
        }
    }

    let mut x = Matrix::zeros(n, p);
    for (i, &c) in classes.iter().enumerate() {
        for (v, &mu) in x.row_mut(i).iter_mut().zip(&means[c]) {
            *v = mu + cfg.noise_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let g = SparseGraph::from_edges(n, &edges, x)?;
    Ok((g, Labels::from_classes(&classes)))
}
