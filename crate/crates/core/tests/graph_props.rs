use blnn::graph::{edge_homophily, load_graph, normalize_adjacency, save_graph, Labels, SparseGraph};
use blnn::matrix::Matrix;
use blnn::synth::{generate_sbm, SbmConfig};
use proptest::prelude::*;

fn arb_graph() -> impl Strategy<Value = (SparseGraph, Option<Labels>)> {
    (1usize..12, 1usize..4).prop_flat_map(|(n, d)| {
        let edges = prop::collection::vec((0..n, 0..n), 0..3 * n);
        let feats = prop::collection::vec(-1e6f64..1e6, n * d);
        let labels = prop::option::of(prop::collection::vec(-1i64..3, n));
        (Just(n), Just(d), edges, feats, labels).prop_map(|(n, d, e, f, l)| {
            let g = SparseGraph::from_edges(n, &e, Matrix::from_vec(n, d, f).unwrap()).unwrap();
            (g, l.map(|v| Labels::new(v, 3).unwrap()))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn directory_round_trip_is_exact((g, labels) in arb_graph()) {
        let dir = tempfile::tempdir().unwrap();
        save_graph(dir.path(), &g, labels.as_ref()).unwrap();
        let ds = load_graph(dir.path()).unwrap();
        prop_assert_eq!(&ds.graph, &g);
        prop_assert_eq!(ds.labels, labels);
    }

    #[test]
    fn adjacency_is_symmetric_without_self_loops((g, _) in arb_graph()) {
        for i in 0..g.n_nodes() {
            prop_assert!(!g.has_edge(i, i));
            for &j in g.neighbors(i) {
                prop_assert!(g.has_edge(j, i));
            }
        }
        prop_assert_eq!(g.n_edges(), 2 * g.n_undirected_edges());
    }

    #[test]
    fn normalization_matches_closed_form((g, _) in arb_graph()) {
        let a = normalize_adjacency(&g).to_dense();
        let n = g.n_nodes();
        for i in 0..n {
            for j in 0..n {
                let linked = i == j || g.has_edge(i, j);
                let expect = if linked {
                    1.0 / (((g.degree(i) + 1) * (g.degree(j) + 1)) as f64).sqrt()
                } else {
                    0.0
                };
                prop_assert!((a.row(i)[j] - expect).abs() < 1e-15);
                prop_assert_eq!(a.row(i)[j], a.row(j)[i]);
            }
        }
    }

    #[test]
    fn normalization_commutes_with_relabeling((g, _) in arb_graph(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = g.n_nodes();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let edges: Vec<(usize, usize)> = g.undirected_edges().map(|(i, j)| (perm[i], perm[j])).collect();
        let pg = SparseGraph::from_edges(n, &edges, Matrix::zeros(n, 1)).unwrap();
        let a = normalize_adjacency(&g).to_dense();
        let pa = normalize_adjacency(&pg).to_dense();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a.row(i)[j], pa.row(perm[i])[perm[j]]);
            }
        }
    }
}

#[test]
fn normalized_rows_of_a_star() {
    // Hub 0 with three leaves: hub degree 4 with the self loop, leaves 2.
    let g = SparseGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3)], Matrix::zeros(4, 1)).unwrap();
    let a = normalize_adjacency(&g).to_dense();
    assert_eq!(a.row(0)[0], 0.25);
    assert!((a.row(0)[1] - 1.0 / 8f64.sqrt()).abs() < 1e-16);
    assert_eq!(a.row(1)[1], 0.5);
    assert_eq!(a.row(1)[2], 0.0);
}

#[test]
fn sbm_without_structure_has_chance_homophily() {
    let cfg = SbmConfig {
        n_nodes: 1000,
        n_classes: 4,
        p_intra: 0.01,
        p_inter: 0.01,
        feature_dim: 2,
        ..SbmConfig::default()
    };
    let (g, labels) = generate_sbm(&cfg).unwrap();
    let h = edge_homophily(&g, &labels).unwrap();
    assert!((h - 0.25).abs() < 0.05, "{h}");
}

#[test]
fn sbm_default_homophily_matches_expectation() {
    // Expected intra fraction: p_in·(n/k − 1) / (p_in·(n/k − 1) + p_out·(n − n/k)).
    let (n, k, p_in, p_out) = (300.0, 3.0, 0.05, 0.005);
    let intra = p_in * (n / k - 1.0);
    let expect = intra / (intra + p_out * (n - n / k));
    for seed in 0..5 {
        let (g, labels) = generate_sbm(&SbmConfig { seed, ..SbmConfig::default() }).unwrap();
        let h = edge_homophily(&g, &labels).unwrap();
        assert!((h - expect).abs() < 0.05, "seed {seed}: {h} vs {expect}");
    }
}
