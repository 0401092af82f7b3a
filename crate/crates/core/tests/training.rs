use blnn::autodiff::Tape;
use blnn::config::TrainConfig;
use blnn::encoder::Architecture;
use blnn::graph::{neighbor_list, SparseGraph};
use blnn::matrix::{cosine, Matrix};
use blnn::objective::{bgrl_loss, blnn_loss, uniform_scores, Variant};
use blnn::synth::{generate_sbm, SbmConfig};
use blnn::trainer::{embed_graph, train};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn node_loss(z: &Matrix, h: &Matrix) -> f64 {
    let mut t = Tape::new();
    let (z, h) = (t.constant(z.clone()), t.constant(h.clone()));
    let l = bgrl_loss(&mut t, z, h).unwrap();
    t.value(l).item()
}

#[test]
fn node_loss_bounds_and_scale_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let z = random(7, 4, &mut rng);
        let h = random(7, 4, &mut rng);
        assert!((node_loss(&z, &z) + 1.0).abs() < 1e-12);
        assert!((node_loss(&z, &z.scaled(-1.0)) - 1.0).abs() < 1e-12);
        let l = node_loss(&z, &h);
        assert!((-1.0..=1.0).contains(&l));
        assert!((node_loss(&z.scaled(3.5), &h) - l).abs() < 1e-12);
    }
}

#[test]
fn neighbor_term_counts_non_isolated_anchors() {
    // Path 0-1-2 plus isolated node 3, all embeddings equal.
    let g = SparseGraph::from_edges(4, &[(0, 1), (1, 2)], Matrix::zeros(4, 1)).unwrap();
    let nbrs = neighbor_list(&g);
    let z = Matrix::filled(4, 3, 0.7);
    let mut t = Tape::new();
    let (zv, hv) = (t.constant(z.clone()), t.constant(z));
    let terms = blnn_loss(&mut t, zv, hv, &nbrs, &uniform_scores(&nbrs), 1.0).unwrap();
    assert!((t.value(terms.node).item() + 1.0).abs() < 1e-12);
    assert!((t.value(terms.neighbor.unwrap()).item() + 0.75).abs() < 1e-12);
    assert!((t.value(terms.total).item() + 1.75).abs() < 1e-12);
}

fn block_means(xs: &[f64], block: usize) -> Vec<f64> {
    xs.chunks(block).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

fn pairwise_cosine_std(h: &Matrix) -> f64 {
    let mut cs = Vec::new();
    for i in 0..h.rows() {
        for j in i + 1..h.rows() {
            cs.push(cosine(h.row(i), h.row(j), 1e-12));
        }
    }
    let m = cs.iter().sum::<f64>() / cs.len() as f64;
    (cs.iter().map(|c| (c - m).powi(2)).sum::<f64>() / cs.len() as f64).sqrt()
}

#[test]
fn sbm_training_decreases_loss_without_collapse() {
    let (g, labels) = generate_sbm(&SbmConfig::default()).unwrap();
    for variant in [Variant::Bgrl, Variant::Blnn] {
        let mut cfg = TrainConfig {
            epochs: 500,
            eval_every: 0,
            arch: Architecture {
                encoder_dims: vec![64, 32],
                predictor_hidden: 64,
                ..Architecture::default()
            },
            ..TrainConfig::default()
        };
        cfg.loss.variant = variant;
        let out = train(&g, Some(&labels), &cfg).unwrap();
        let losses: Vec<f64> = out.log.rows.iter().map(|r| r.loss).collect();
        assert!(losses.iter().all(|l| l.is_finite()));
        let early = block_means(&losses[..50], 10);
        assert!(early.windows(2).all(|w| w[1] < w[0]), "{variant}: {early:?}");
        let h = embed_graph(&out.state, &g).unwrap();
        let std = pairwise_cosine_std(&h);
        assert!(std > 0.01, "{variant}: {std}");
    }
}
