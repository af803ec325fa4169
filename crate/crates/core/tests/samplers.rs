mod common;

use std::collections::BTreeSet;

use common::*;
use granet_core::graph::{Graph, Split};
use granet_core::rng::seeded;
use granet_core::sampler::*;
use granet_core::tensor::Matrix;

fn saint_cfg(roots: usize) -> SamplerConfig {
    SamplerConfig {
        kind: SamplerKind::SaintRw,
        roots,
        norm_samples_per_node: 20,
        ..SamplerConfig::default()
    }
}

fn edges_belong_to_parent(s: &SubgraphSample, g: &Graph) -> bool {
    s.graph.edges().all(|(a, b)| g.has_edge(s.nodes[a], s.nodes[b]))
}

#[test]
fn inclusion_frequencies_match_monte_carlo_oracle() {
    let g = random_graph(5, 50, 2, 0.06, 2);
    let cfg = saint_cfg(25);
    let pool = g.split_nodes(Split::Train);
    let draws = 10_000;
    let norm = vec![1.0; 50];
    let mut rng = seeded(99, 0);
    let mut hits = vec![0usize; 50];
    for _ in 0..draws {
        let s = saint_rw_sample(&g, &cfg, Split::Train, &norm, &mut rng).unwrap();
        assert!(edges_belong_to_parent(&s, &g));
        for v in s.nodes {
            hits[v] += 1;
        }
    }
    let oracle = walk_inclusion_oracle(&g, &pool, 25, 2, draws, 12345);
    for v in 0..50 {
        let p = hits[v] as f64 / draws as f64;
        assert!((p - oracle[v]).abs() <= 0.05 * oracle[v], "node {v}: {p} vs {}", oracle[v]);
    }
}

#[test]
fn complete_graph_weights_are_even() {
    let n = 12;
    let edges: Vec<_> = (0..n).flat_map(|s| (0..n).filter(move |&d| d != s).map(move |d| (s, d))).collect();
    let g = graph_from(&edges, Matrix::zeros(n, 1), vec![0; n], n);
    let mut cfg = saint_cfg(3);
    cfg.norm_samples_per_node = 300;
    // Loss nodes are the train nodes, but walks may land anywhere.
    let w = saint_norm_estimate(&g, &cfg, Split::Train).unwrap();
    let train = g.split_nodes(Split::Train);
    let (lo, hi) = train.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &v| (lo.min(w[v]), hi.max(w[v])));
    assert!(hi / lo < 1.1, "{lo} {hi}");
    assert!(w.iter().all(|x| x.is_finite() && *x > 0.0));
}

#[test]
fn star_hub_weight_below_leaf_weight() {
    let n = 9;
    let edges: Vec<_> = (1..n).flat_map(|l| [(0, l), (l, 0)]).collect();
    let g = graph_from(&edges, Matrix::zeros(n, 1), vec![0; n], n);
    let cfg = saint_cfg(2);
    // Split everything into train so every node can be a root.
    let g = granet_core::graph::build_graph(
        &g.edges().collect::<Vec<_>>(),
        Matrix::zeros(n, 1),
        vec![0; n],
        vec![Split::Train; n],
        n,
        Default::default(),
    )
    .unwrap();
    let w = saint_norm_estimate(&g, &cfg, Split::Train).unwrap();
    for leaf in 1..n {
        assert!(w[0] < w[leaf], "hub {} leaf {}", w[0], w[leaf]);
    }
}

#[test]
fn partitions_cover_split_exactly() {
    for seed in 0..20u64 {
        let g = random_graph(seed, 40, 2, 0.1, 3);
        for split in Split::ALL {
            let pool: BTreeSet<usize> = g.split_nodes(split).into_iter().collect();
            let cfg = SamplerConfig {
                kind: SamplerKind::RandomNode,
                partitions: 1 + (seed as usize % pool.len()),
                ..SamplerConfig::default()
            };
            let parts = random_node_partition(&g, &cfg, split, seed).unwrap();
            let mut seen = BTreeSet::new();
            let sizes: Vec<usize> = parts.iter().map(|p| p.nodes.len()).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for p in &parts {
                assert!(edges_belong_to_parent(p, &g));
                assert_eq!(p.graph, g.induced_subgraph(&p.nodes).unwrap().0);
                for &v in &p.nodes {
                    assert!(seen.insert(v), "node {v} in two partitions");
                }
            }
            assert_eq!(seen, pool);
        }
    }
}

#[test]
fn neighbour_fanouts_respect_min_rule_exhaustively() {
    let g = random_graph(8, 60, 2, 0.3, 2);
    let cfg = SamplerConfig {
        kind: SamplerKind::Neighbour,
        fanouts: vec![25, 10],
        ..SamplerConfig::default()
    };
    let mut rng = seeded(4, 0);
    use rand::seq::index::sample;
    for _ in 0..100 {
        let batch: Vec<usize> = sample(&mut rng, 60, 6).into_vec();
        let s = neighbour_sample(&g, &cfg, &batch, &mut rng).unwrap();
        assert!(edges_belong_to_parent(&s, &g));
        let roots: BTreeSet<usize> = batch.iter().copied().collect();
        assert_eq!(s.seed_nodes, roots.iter().copied().collect::<Vec<_>>());
        for (l, &v) in s.nodes.iter().enumerate() {
            let got = s.graph.in_degree(l);
            let deg = g.in_degree(v);
            if roots.contains(&v) {
                assert_eq!(got, deg.min(25), "root {v}");
            } else {
                assert!(got == 0 || got == deg.min(10), "node {v}: {got} of {deg}");
            }
        }
    }
}

#[test]
fn samples_are_pure_functions_of_inputs() {
    let g = random_graph(3, 40, 2, 0.1, 2);
    for kind in [SamplerKind::SaintRw, SamplerKind::RandomNode, SamplerKind::Neighbour, SamplerKind::Full] {
        let cfg = SamplerConfig {
            kind,
            roots: 6,
            partitions: 4,
            batch_size: 7,
            norm_samples_per_node: 10,
            ..SamplerConfig::default()
        };
        let a = Sampler::new(&g, cfg.clone(), Split::Train).unwrap();
        let b = Sampler::new(&g, cfg, Split::Train).unwrap();
        for e in 0..3 {
            let (x, y) = (a.epoch(e).unwrap(), b.epoch(e).unwrap());
            assert_eq!(x.len(), y.len());
            for (s, t) in x.iter().zip(&y) {
                assert_eq!(s.nodes, t.nodes);
                assert_eq!(s.graph, t.graph);
                assert_eq!(s.loss_weights, t.loss_weights);
                assert_eq!(s.seed_nodes, t.seed_nodes);
                assert!(s.loss_weights.iter().all(|w| w.is_finite() && *w > 0.0));
                assert!(s.seed_nodes.iter().all(|v| s.nodes.binary_search(v).is_ok()));
            }
        }
    }
}
