//! Stochastic graph views: column-wise feature masking and edge dropping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::matrix::Matrix;

/// Masking and dropping probabilities for the two views.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub p_m1: f64,
    pub p_d1: f64,
    pub p_m2: f64,
    pub p_d2: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p_m1: 0.2,
            p_d1: 0.2,
            p_m2: 0.2,
            p_d2: 0.2,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        AugmentConfig {
            p_m1: 0.0,
            p_d1: 0.0,
            p_m2: 0.0,
            p_d2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_m1", self.p_m1),
            ("p_d1", self.p_d1),
            ("p_m2", self.p_m2),
            ("p_d2", self.p_d2),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Zeroes whole feature columns: one Bernoulli(1 − p_m) keep-mask is drawn
/// per column and shared by every row.
pub fn feature_mask<R: Rng + ?Sized>(x: &Matrix, p_m: f64, rng: &mut R) -> Matrix {
    if p_m == 0.0 {
        return x.clone();
    }
    let keep: Vec<bool> = (0..x.cols()).map(|_| rng.random::<f64>() >= p_m).collect();
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (v, &k) in out.row_mut(r).iter_mut().zip(&keep) {
            if !k {
                *v = 0.0;
            }
        }
    }
    out
}

/// Keeps each undirected edge independently with probability `1 − p_d`.
/// Both directions of an edge survive or vanish together.
pub fn edge_drop<R: Rng + ?Sized>(g: &SparseGraph, p_d: f64, rng: &mut R) -> SparseGraph {
    if p_d == 0.0 {
        return g.clone();
    }
    g.filter_edges(|_, _| rng.random::<f64>() >= p_d)
}

/// Draws two independently augmented views. Each view gets its own RNG
/// stream seeded from `rng`.
pub fn sample_views<R: Rng + ?Sized>(
    g: &SparseGraph,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> (SparseGraph, SparseGraph) {
    let mut rng1 = ChaCha8Rng::seed_from_u64(rng.next_u64());
    let mut rng2 = ChaCha8Rng::seed_from_u64(rng.next_u64());
    let view = |p_m: f64, p_d: f64, r: &mut ChaCha8Rng| {
        let dropped = edge_drop(g, p_d, r);
        let masked = feature_mask(g.features(), p_m, r);
        dropped
            .with_features(masked)
            .expect("masking preserves the feature shape")
    };
    let v1 = view(cfg.p_m1, cfg.p_d1, &mut rng1);
    let v2 = view(cfg.p_m2, cfg.p_d2, &mut rng2);
    (v1, v2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn k(n: usize) -> SparseGraph {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let feats = Matrix::from_vec(n, 3, (0..3 * n).map(|v| v as f64 + 1.0).collect()).unwrap();
        SparseGraph::from_edges(n, &edges, feats).unwrap()
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let g = k(5);
        assert_eq!(feature_mask(g.features(), 0.0, &mut rng(1)), *g.features());
        assert_eq!(edge_drop(&g, 0.0, &mut rng(1)), g);
        let (a, b) = sample_views(&g, &AugmentConfig::identity(), &mut rng(1));
        assert_eq!((a, b), (g.clone(), g));
    }

    #[test]
    fn masked_columns_are_zero_in_every_row() {
        let x = Matrix::filled(50, 40, 1.5);
        let m = feature_mask(&x, 0.5, &mut rng(4));
        for c in 0..40 {
            let col: Vec<f64> = (0..50).map(|r| m[(r, c)]).collect();
            assert!(col.iter().all(|&v| v == 0.0) || col.iter().all(|&v| v == 1.5));
        }
    }

    #[test]
    fn surviving_columns_concentrate() {
        // Binomial(10000, 0.5) has standard deviation 50; ±200 is 4 sigma.
        let x = Matrix::filled(1, 10_000, 1.0);
        for seed in 0..20 {
            let kept = feature_mask(&x, 0.5, &mut rng(seed)).sum();
            assert!((4800.0..=5200.0).contains(&kept), "{kept}");
        }
    }

    #[test]
    fn heavy_drop_on_k4_stays_symmetric() {
        let g = k(4);
        let mut small = 0;
        for seed in 0..200 {
            let d = edge_drop(&g, 0.99, &mut rng(seed));
            for i in 0..4 {
                for &j in d.neighbors(i) {
                    assert!(d.has_edge(j, i));
                    assert!(g.has_edge(i, j));
                }
            }
            small += usize::from(d.n_undirected_edges() <= 1);
        }
        assert!(small >= 195, "{small}");
    }

    #[test]
    fn kept_edges_concentrate() {
        // 10000 disjoint edges on 20000 nodes.
        let edges: Vec<_> = (0..10_000).map(|i| (2 * i, 2 * i + 1)).collect();
        let g = SparseGraph::from_edges(20_000, &edges, Matrix::zeros(20_000, 1)).unwrap();
        for seed in 0..10 {
            let kept = edge_drop(&g, 0.5, &mut rng(seed)).n_undirected_edges();
            assert!((4800..=5200).contains(&kept), "{kept}");
        }
    }

    #[test]
    fn views_are_deterministic_per_seed_and_differ_between_views() {
        let g = k(12);
        let cfg = AugmentConfig {
            p_m1: 0.3,
            p_d1: 0.3,
            p_m2: 0.3,
            p_d2: 0.3,
        };
        assert_eq!(sample_views(&g, &cfg, &mut rng(7)), sample_views(&g, &cfg, &mut rng(7)));
        let differing = (0..50)
            .filter(|&s| {
                let (a, b) = sample_views(&g, &cfg, &mut rng(s));
                a != b
            })
            .count();
        assert!(differing >= 49, "{differing}");
    }

    #[test]
    fn config_rejects_probability_one() {
        let mut cfg = AugmentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.p_d2 = 1.0;
        assert!(cfg.validate().is_err());
    }
}
