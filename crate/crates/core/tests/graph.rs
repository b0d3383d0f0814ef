use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use set_twister::autodiff::{mlp_forward, Activation, Tensor};
use set_twister::graph::{
    generate_synthetic_graph, load_graph, masked_aggregate, node_rep_deepsets, node_rep_set_twister, save_graph, Graph,
    GraphFiles, NodeModel, SyntheticGraphConfig,
};
use set_twister::setrep::{
    pool_bank, Architecture, CoefficientMode, CoefficientTable, Pooling, RhoSpec, SetModelParams, SetTwisterConfig,
};
use set_twister::tasks::Split;

fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64, d: usize) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let labels = (0..n).map(|_| rng.random_range(0..3)).collect();
    Graph::new(n, &edges, Tensor::from_rows(&x).unwrap(), labels, vec![Some(Split::Train); n]).unwrap()
}

fn head_config(m: usize, k: usize, pooling: Pooling) -> SetTwisterConfig {
    SetTwisterConfig::new(m, k, 3, 2)
        .with_phi_hidden(vec![4])
        .with_pooling(pooling)
        .with_rho(RhoSpec::Mlp {
            hidden: vec![5],
            out: 3,
            activation: Activation::Tanh,
            bias: true,
        })
}

#[test]
fn neighborhood_lengths_equal_degree_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = random_graph(&mut rng, 40, 0.1, 2);
    let mut degree = vec![0usize; 40];
    for (u, v) in g.edges() {
        degree[u] += 1;
        degree[v] += 1;
    }
    for v in 0..40 {
        assert_eq!(g.neighborhood_sequence(v).unwrap().len(), degree[v]);
        assert_eq!(g.degree(v).unwrap(), degree[v]);
    }
    assert_eq!(*g.offsets().last().unwrap(), g.num_directed_edges());
    assert!(g.neighborhood_sequence(40).is_err());
}

#[test]
fn deepsets_head_is_a_composition_of_its_parts() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = random_graph(&mut rng, 15, 0.3, 3);
    let config = head_config(1, 1, Pooling::Sum);
    let model = NodeModel::init(Architecture::DeepSets, config.clone(), &mut rng).unwrap();
    let rho_spec = config.rho.mlp_spec(model.rho_input()).unwrap();
    for v in 0..15 {
        let h = g.neighborhood_sequence(v).unwrap();
        if h.is_empty() {
            continue;
        }
        let mut input = mlp_forward(&config.phi_spec(), &model.params.phi[0], &Tensor::vector(g.features.row(v).to_vec()))
            .unwrap()
            .into_data();
        input.extend(pool_bank(&config, &model.params, &h).unwrap().remove(0));
        let want = mlp_forward(&rho_spec, model.params.rho.as_ref().unwrap(), &Tensor::vector(input)).unwrap();
        let got = node_rep_deepsets(&g, &config, &model.params, v).unwrap();
        assert_eq!(got, want.into_data());
    }
}

#[test]
fn unit_twister_head_equals_deepsets_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = random_graph(&mut rng, 12, 0.3, 3);
    for pooling in [Pooling::Sum, Pooling::Mean] {
        let config = head_config(1, 1, pooling);
        let ds = NodeModel::init(Architecture::DeepSets, config.clone(), &mut rng).unwrap();
        let st_params = SetModelParams {
            alpha: Some(CoefficientTable::ones(CoefficientMode::Simplex, 1, 1, 2).unwrap()),
            ..ds.params.clone()
        };
        for v in 0..12 {
            let a = node_rep_deepsets(&g, &config, &ds.params, v).unwrap();
            let b = node_rep_set_twister(&g, &config, &st_params, v).unwrap();
            assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
        let st = NodeModel {
            arch: Architecture::SetTwister,
            config: config.clone(),
            params: st_params,
        };
        assert_eq!(ds.predict_all(&g).unwrap().data(), st.predict_all(&g).unwrap().data());
    }
}

#[test]
fn batched_and_per_node_paths_agree() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let g = random_graph(&mut rng, 25, 0.15, 3);
        let (m, k) = [(1, 1), (2, 1), (2, 2), (3, 2), (3, 3)][seed as usize % 5];
        let pooling = if seed % 2 == 0 { Pooling::Sum } else { Pooling::Mean };
        let arch = if m == 1 && seed % 3 == 0 { Architecture::DeepSets } else { Architecture::SetTwister };
        let model = NodeModel::init(arch, head_config(m, k, pooling), &mut rng).unwrap();
        let all = model.predict_all(&g).unwrap();
        for v in 0..25 {
            let one = model.node_rep(&g, v).unwrap();
            for (a, b) in one.iter().zip(all.row(v)) {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "seed {seed} node {v}");
            }
        }
    }
}

#[test]
fn masked_aggregate_matches_loop() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 30, 0.1, 2);
        let banks: Vec<Tensor> = (0..2)
            .map(|_| Tensor::matrix(30, 3, (0..90).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap())
            .collect();
        for pooling in [Pooling::Sum, Pooling::Mean] {
            let agg = masked_aggregate(&g, &banks, pooling).unwrap();
            for (bank, out) in banks.iter().zip(&agg) {
                for v in 0..30 {
                    let nbrs = g.neighbors(v).unwrap();
                    let mut want = vec![0.0; 3];
                    for &u in nbrs {
                        want.iter_mut().zip(bank.row(u)).for_each(|(a, b)| *a += b);
                    }
                    if pooling == Pooling::Mean && !nbrs.is_empty() {
                        want.iter_mut().for_each(|a| *a /= nbrs.len() as f64);
                    }
                    for (a, b) in out.row(v).iter().zip(&want) {
                        assert!((a - b).abs() <= 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn removing_an_edge_moves_only_its_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = random_graph(&mut rng, 30, 0.15, 3);
    let model = NodeModel::init(Architecture::SetTwister, head_config(2, 2, Pooling::Sum), &mut rng).unwrap();
    let before = model.predict_all(&g).unwrap();
    for (u, v) in g.edges().into_iter().take(10) {
        let cut = g.without_edge(u, v).unwrap();
        let after = model.predict_all(&cut).unwrap();
        for w in 0..30 {
            let moved = before.row(w) != after.row(w);
            assert_eq!(moved, w == u || w == v, "edge ({u},{v}) node {w}");
        }
    }
}

#[test]
fn default_synthetic_degree_near_expectation() {
    let cfg = SyntheticGraphConfig::default();
    let g = generate_synthetic_graph(&cfg).unwrap();
    let mean = g.num_directed_edges() as f64 / g.num_nodes() as f64;
    let n = cfg.num_nodes as f64;
    let c = cfg.num_classes as f64;
    let want = n * (cfg.intra_p / c + cfg.inter_p * (c - 1.0) / c);
    assert!((mean - want).abs() <= 0.2 * want, "{mean} vs {want}");
    g.check().unwrap();
}

#[test]
fn triangle_with_duplicates_loads_to_six_entries() {
    let dir = tempfile::tempdir().unwrap();
    let files = GraphFiles::in_dir(dir.path());
    std::fs::write(&files.edges, "# triangle\n0 1\n1 2\n2 0\n1 0\n2 2\n").unwrap();
    std::fs::write(&files.features, "0 1.0\n1 2.0\n2 3.0\n").unwrap();
    std::fs::write(&files.labels, "0 0\n1 1\n2 0\n").unwrap();
    std::fs::write(&files.split, "0 train\n1 validation\n2 test\n").unwrap();
    let g = load_graph(&files).unwrap();
    assert_eq!(g.num_nodes(), 3);
    assert_eq!(g.num_directed_edges(), 6);

    let again = GraphFiles::in_dir(&dir.path().join("copy"));
    std::fs::create_dir_all(dir.path().join("copy")).unwrap();
    save_graph(&g, &again).unwrap();
    assert_eq!(load_graph(&again).unwrap(), g);
}

/// The same graph with node `w` renamed `perm[w]`.
fn relabel(g: &Graph, perm: &[usize]) -> Graph {
    let n = g.num_nodes();
    let edges: Vec<(usize, usize)> = g.edges().into_iter().map(|(a, b)| (perm[a], perm[b])).collect();
    let mut rows = vec![Vec::new(); n];
    let mut labels = vec![0; n];
    for w in 0..n {
        rows[perm[w]] = g.features.row(w).to_vec();
        labels[perm[w]] = g.labels[w];
    }
    Graph::new(n, &edges, Tensor::from_rows(&rows).unwrap(), labels, vec![Some(Split::Train); n]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn node_heads_ignore_neighbor_order(seed in any::<u64>(), m in 1usize..=3, mean in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 10, 0.4, 3);
        let pooling = if mean { Pooling::Mean } else { Pooling::Sum };
        let k = rng.random_range(1..=m);
        for arch in [Architecture::SetTwister, Architecture::DeepSets] {
            let (m, k) = if arch == Architecture::DeepSets { (1, 1) } else { (m, k) };
            let model = NodeModel::init(arch, head_config(m, k, pooling), &mut rng).unwrap();
            let mut perm: Vec<usize> = (0..10).collect();
            perm.shuffle(&mut rng);
            let moved = relabel(&g, &perm);
            for v in 0..10 {
                let a = model.node_rep(&g, v).unwrap();
                let b = model.node_rep(&moved, perm[v]).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() <= 1e-9);
                }
            }
        }
    }
}
