use blnn::eval::{compactness, evaluate, homophily_profile, s_at_k, EvalOptions};
use blnn::graph::Labels;
use blnn::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(n, d, (0..n * d).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian one.
fn rotation(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let g = gaussian(d, d, rng);
    let mut q: Vec<Vec<f64>> = Vec::new();
    for r in g.iter_rows() {
        let mut v = r.to_vec();
        for u in &q {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        q.push(v.into_iter().map(|x| x / n).collect());
    }
    Matrix::from_rows(&q).unwrap()
}

#[test]
fn similarity_metrics_ignore_rotation_and_row_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let (n, d) = (rng.random_range(8..30), rng.random_range(2..6));
        let h = gaussian(n, d, &mut rng);
        let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let mut rotated = h.matmul(&rotation(d, &mut rng)).unwrap();
        for r in 0..n {
            let s = rng.random_range(0.1..10.0);
            rotated.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        for k in [1, 3, 5] {
            let a = s_at_k(&h, &y, k).unwrap();
            let b = s_at_k(&rotated, &y, k).unwrap();
            assert!((a - b).abs() < 1e-12, "k={k}: {a} vs {b}");
        }
        let a = compactness(&h, &y, false).unwrap();
        let b = compactness(&rotated, &y, false).unwrap();
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn random_embeddings_probe_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 1000;
    let h = gaussian(n, 16, &mut rng);
    let classes: Vec<usize> = (0..n).map(|i| i % 10).collect();
    let labels = Labels::from_classes(&classes);
    let opts = EvalOptions {
        n_splits: 3,
        ..EvalOptions::default()
    };
    for r in evaluate(&h, &labels, &opts).unwrap() {
        assert!((r.accuracy - 0.1).abs() < 0.05, "{}", r.accuracy);
        assert!(r.nmi < 0.05);
    }
}

#[test]
fn profile_of_uninformative_keys_is_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 500;
    let classes: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let labels = Labels::from_classes(&classes);
    let pairs: Vec<(usize, usize)> = (0..5000).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
    let keys: Vec<f64> = pairs.iter().map(|_| rng.random()).collect();
    let global = pairs.iter().filter(|&&(i, j)| classes[i] == classes[j]).count() as f64 / pairs.len() as f64;
    for bin in homophily_profile(&keys, &pairs, &labels, 4).unwrap() {
        assert!((bin - global).abs() < 0.1, "{bin} vs {global}");
    }
}

#[test]
fn profile_of_label_keyed_pairs_is_sorted() {
    let classes = [0usize, 0, 1, 1];
    let labels = Labels::from_classes(&classes);
    let pairs = [(0, 1), (0, 2), (2, 3), (1, 3)];
    // Intra pairs get the high keys.
    let keys = [0.9, 0.1, 0.8, 0.2];
    assert_eq!(homophily_profile(&keys, &pairs, &labels, 2).unwrap(), vec![1.0, 0.0]);
}
