mod common;

use common::*;
use granet_core::graph::Graph;
use granet_core::nn::*;
use granet_core::rng::seeded;
use granet_core::tensor::{param_grad_check, Adam, Matrix, Tape, Tensor};
use proptest::prelude::*;

fn spec(kind: LayerKind, fi: usize, fo: usize, act: Activation) -> LayerSpec {
    LayerSpec::new(kind, fi, fo, act)
}

fn layer(s: LayerSpec, seed: u64) -> Layer {
    Layer::new(s, &mut seeded(seed, 0)).unwrap()
}

fn run(layer: &Layer, g: &Graph) -> Matrix {
    let ctx = GraphCtx::new(g);
    let mut tape = Tape::new();
    let x = tape.constant(g.features().clone());
    let y = layer.forward(&mut tape, &ctx, x).unwrap();
    tape.value(y).clone()
}

fn alphas_by_edge(tape: &Tape, ctx: &GraphCtx, alpha: Tensor) -> Vec<((usize, usize), Vec<f64>)> {
    let e = ctx.looped();
    let m = tape.value(alpha);
    (0..e.len()).map(|k| ((e.src[k], e.dst[k]), m.row(k).to_vec())).collect()
}

fn set(layer: &Layer, name: &str, m: Matrix) {
    layer.param(name).unwrap().set_value(m);
}

fn all_kinds(fi: usize, fo: usize) -> Vec<LayerSpec> {
    use LayerKind::*;
    vec![
        spec(Mlp, fi, fo, Activation::LeakyRelu),
        spec(Gcn, fi, fo, Activation::LeakyRelu),
        spec(Gat, fi, fo, Activation::LeakyRelu),
        spec(Gat, fi, fo, Activation::None).with_heads(2, HeadCombine::Concat),
        spec(Gatv2, fi, fo, Activation::LeakyRelu),
        spec(Gatv2, fi, fo, Activation::None).with_heads(3, HeadCombine::Mean),
        spec(Sage, fi, fo, Activation::LeakyRelu),
        spec(GranetGat, fi, fo, Activation::LeakyRelu),
        spec(GranetLinearAttn, fi, fo, Activation::None),
        spec(GranetSage, fi, fo, Activation::Relu),
    ]
}

#[test]
fn every_kind_matches_per_node_oracle() {
    for (t, s) in all_kinds(3, 4).into_iter().enumerate() {
        for seed in 0..4u64 {
            let g = random_graph(seed, 6, 3, 0.35, 2);
            let l = layer(s, seed);
            randomize(&l, 100 + seed, 0.8);
            let got = run(&l, &g);
            let want = layer_oracle(&l, &g, g.features());
            assert!(got.max_abs_diff(&want) < 1e-12, "kind #{t} {:?}: {}", s.kind, got.max_abs_diff(&want));
        }
    }
}

#[test]
fn empty_graph_leaves_only_self_term() {
    let g = graph_from(&[], Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap(), vec![0, 1], 2);
    let l = layer(spec(LayerKind::Sage, 2, 2, Activation::None), 1);
    set(&l, "w_self", Matrix::identity(2));
    assert_eq!(run(&l, &g), *g.features());
}

#[test]
fn single_edge_aggregates_source_message() {
    let x = Matrix::from_rows(&[vec![3.0, -1.0], vec![0.0, 0.0]]).unwrap();
    let g = graph_from(&[(0, 1)], x, vec![0, 1], 2);
    let l = layer(spec(LayerKind::Sage, 2, 2, Activation::None), 1);
    set(&l, "w_self", Matrix::zeros(2, 2));
    set(&l, "w_neigh", Matrix::identity(2));
    let out = run(&l, &g);
    assert_eq!(out.row(1), &[3.0, -1.0]);
    assert_eq!(out.row(0), &[0.0, 0.0]);
}

#[test]
fn sage_trivial_cases() {
    let x = Matrix::from_rows(&[vec![1.5, -2.0]]).unwrap();
    let l = layer(spec(LayerKind::Sage, 2, 2, Activation::None), 2);
    set(&l, "w_self", Matrix::identity(2));
    let g = graph_from(&[], x.clone(), vec![0], 1);
    assert_eq!(run(&l, &g), x);
    set(&l, "w_neigh", Matrix::identity(2));
    let g = graph_from(&[(0, 0)], x.clone(), vec![0], 1);
    assert_eq!(run(&l, &g), x.map(|v| 2.0 * v));
}

#[test]
fn gcn_trivial_cases() {
    let l = layer(spec(LayerKind::Gcn, 2, 2, Activation::None), 3);
    set(&l, "w", Matrix::identity(2));

    let x = Matrix::from_rows(&[vec![0.3, -0.7]]).unwrap();
    let g = graph_from(&[(0, 0)], x.clone(), vec![0], 1);
    let ctx = GraphCtx::new(&g);
    let mut tape = Tape::new();
    let h = tape.constant(x.clone());
    let y = gcn_forward(&mut tape, &l, &ctx, h).unwrap();
    assert_eq!(tape.value(y), &x);

    let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 4.0]]).unwrap();
    let g = graph_from(&[(0, 1), (1, 0)], x, vec![0, 1], 2).add_self_loops();
    let out = run(&l, &g);
    let want = Matrix::from_rows(&[vec![0.5, 2.0], vec![0.5, 2.0]]).unwrap();
    assert!(out.max_abs_diff(&want) < 1e-15);
}

#[test]
fn gcn_requires_self_loops() {
    let g = random_graph(5, 4, 2, 0.5, 2);
    let l = layer(spec(LayerKind::Gcn, 2, 2, Activation::None), 3);
    let ctx = GraphCtx::new(&g);
    let mut tape = Tape::new();
    let h = tape.constant(g.features().clone());
    assert!(gcn_forward(&mut tape, &l, &ctx, h).is_err());
    let g = g.add_self_loops();
    let ctx = GraphCtx::new(&g);
    let mut tape = Tape::new();
    let h = tape.constant(g.features().clone());
    let y = gcn_forward(&mut tape, &l, &ctx, h).unwrap();
    assert!(tape.value(y).max_abs_diff(&gcn_dense_oracle(&l, &g, g.features())) < 1e-12);
}

#[test]
fn gcn_random_graph_matches_dense_oracle() {
    for seed in 0..5 {
        let g = random_graph(seed, 10, 4, 0.3, 2).add_self_loops();
        let l = layer(spec(LayerKind::Gcn, 4, 3, Activation::None), seed);
        let got = run(&l, &g);
        assert!(got.max_abs_diff(&gcn_dense_oracle(&l, &g, g.features())) < 1e-12);
    }
}

fn attention_of(l: &Layer, g: &Graph) -> (Tape, GraphCtx, Vec<Tensor>) {
    let ctx = GraphCtx::new(g);
    let mut tape = Tape::new();
    let h = tape.constant(g.features().clone());
    let alphas = match l.kind() {
        LayerKind::Gat => gat_attention(&mut tape, l, &ctx, h).unwrap(),
        LayerKind::Gatv2 => gatv2_attention(&mut tape, l, &ctx, h).unwrap(),
        LayerKind::GranetGat => vec![granet_gat_attention(&mut tape, l, &ctx, h).unwrap()],
        LayerKind::GranetLinearAttn => vec![granet_linear_attention(&mut tape, l, &ctx, h).unwrap()],
        k => panic!("{k}"),
    };
    (tape, ctx, alphas)
}

const ATTENTION: [LayerKind; 4] = [
    LayerKind::Gat,
    LayerKind::Gatv2,
    LayerKind::GranetGat,
    LayerKind::GranetLinearAttn,
];

#[test]
fn single_in_edge_gets_full_weight() {
    // Node 0 has no in-edges, so its neighbourhood is the self-loop alone.
    let g = graph_from(&[(0, 1)], Matrix::from_rows(&[vec![0.2, 1.0], vec![-0.4, 0.1]]).unwrap(), vec![0, 1], 2);
    for kind in ATTENTION {
        let l = layer(spec(kind, 2, 2, Activation::None), 4);
        randomize(&l, 9, 1.0);
        let (tape, ctx, alphas) = attention_of(&l, &g);
        for ((s, d), a) in alphas_by_edge(&tape, &ctx, alphas[0]) {
            if (s, d) == (0, 0) {
                assert!(a.iter().all(|&v| v == 1.0), "{kind}: {a:?}");
            }
        }
    }
}

#[test]
fn identical_neighbours_get_equal_weight() {
    // Nodes 0 and 1 share features and both point at node 2, whose own
    // features also match, so all three coefficients coincide.
    let x = Matrix::from_rows(&[vec![0.5, -0.3], vec![0.5, -0.3], vec![0.5, -0.3]]).unwrap();
    let g = graph_from(&[(0, 2), (1, 2)], x, vec![0, 0, 0], 3);
    for kind in ATTENTION {
        let l = layer(spec(kind, 2, 2, Activation::None), 5);
        randomize(&l, 11, 1.0);
        let (tape, ctx, alphas) = attention_of(&l, &g);
        for (_, a) in alphas_by_edge(&tape, &ctx, alphas[0]).into_iter().filter(|((_, d), _)| *d == 2) {
            for v in a {
                assert!((v - 1.0 / 3.0).abs() < 1e-15, "{kind}: {v}");
            }
        }
    }
}

#[test]
fn symmetric_pair_splits_evenly_under_gatv2() {
    let x = Matrix::from_rows(&[vec![0.7, 0.7], vec![0.7, 0.7]]).unwrap();
    let g = graph_from(&[(0, 1), (1, 0)], x, vec![0, 0], 2);
    let l = layer(spec(LayerKind::Gatv2, 2, 3, Activation::None), 6);
    let (tape, ctx, alphas) = attention_of(&l, &g);
    for (_, a) in alphas_by_edge(&tape, &ctx, alphas[0]) {
        assert!((a[0] - 0.5).abs() < 1e-15);
    }
}

#[test]
fn attention_matches_scalar_oracle() {
    for kind in ATTENTION {
        for seed in 0..4u64 {
            let g = random_graph(40 + seed, 5, 3, 0.45, 2);
            let s = spec(kind, 3, 3, Activation::None);
            let s = if kind.supports_heads() { s.with_heads(3, HeadCombine::Concat) } else { s };
            let l = layer(s, seed);
            randomize(&l, 7 * seed + 1, 1.2);
            let want = alpha_oracle(&l, &g, g.features());
            let (tape, ctx, alphas) = attention_of(&l, &g);
            assert_eq!(alphas.len(), want.len());
            for (head, &alpha) in alphas.iter().enumerate() {
                let got = alphas_by_edge(&tape, &ctx, alpha);
                assert_eq!(got.len(), want[head].len());
                for (key, a) in got {
                    let w = &want[head][&key];
                    for (x, y) in a.iter().zip(w) {
                        assert!((x - y).abs() < 1e-13, "{kind} {key:?}: {x} vs {y}");
                    }
                }
            }
        }
    }
}

#[test]
fn attention_update_trivial_cases() {
    let x = Matrix::from_rows(&[vec![0.1, -0.2, 0.3]]).unwrap();
    let g = graph_from(&[], x.clone(), vec![0], 1);
    let ctx = GraphCtx::new(&g);
    let l = layer(spec(LayerKind::Gat, 3, 3, Activation::None), 7);
    set(&l, "w.0", Matrix::identity(3));
    let mut tape = Tape::new();
    let h = tape.constant(x.clone());
    let alphas = gat_attention(&mut tape, &l, &ctx, h).unwrap();
    let y = attention_update(&mut tape, &l, &ctx, h, &alphas).unwrap();
    assert_eq!(tape.value(y), &x);

    let g = random_graph(3, 5, 3, 0.4, 2);
    let l = layer(spec(LayerKind::Gatv2, 3, 8, Activation::LeakyRelu).with_heads(2, HeadCombine::Concat), 8);
    assert_eq!(run(&l, &g).shape(), (5, 8));
    assert!(Layer::new(spec(LayerKind::Gat, 3, 7, Activation::None).with_heads(2, HeadCombine::Concat), &mut seeded(0, 0)).is_err());
}

#[test]
fn mean_combine_is_mean_of_single_heads() {
    for kind in [LayerKind::Gat, LayerKind::Gatv2] {
        let g = random_graph(12, 6, 3, 0.4, 2);
        let l = layer(spec(kind, 3, 4, Activation::LeakyRelu).with_heads(3, HeadCombine::Mean), 9);
        randomize(&l, 3, 1.0);
        let combined = run(&l, &g);
        let mut mean = Matrix::zeros(6, 4);
        for k in 0..3 {
            let single = layer(spec(kind, 3, 4, Activation::LeakyRelu), 0);
            for name in ["w", "a", "b"] {
                set(&single, &format!("{name}.0"), l.param(&format!("{name}.{k}")).unwrap().value().clone());
            }
            let out = run(&single, &g);
            mean.add_assign(&out.map(|v| v / 3.0));
        }
        assert!(combined.max_abs_diff(&mean) < 1e-14, "{kind}");
    }
}

#[test]
fn attention_update_accepts_external_coefficients() {
    let g = random_graph(21, 6, 3, 0.4, 2);
    for kind in ATTENTION {
        let l = layer(spec(kind, 3, 3, Activation::LeakyRelu), 2);
        randomize(&l, 5, 1.0);
        let (mut tape, ctx, alphas) = attention_of(&l, &g);
        let h = tape.constant(g.features().clone());
        let y = attention_update(&mut tape, &l, &ctx, h, &alphas).unwrap();
        assert!(tape.value(y).max_abs_diff(&run(&l, &g)) < 1e-15, "{kind}");
    }
}

#[test]
fn granet_with_only_self_loops_is_inner_mlp() {
    let x = random_matrix(&mut rng(1), 5, 3, 1.0);
    let g = graph_from(&[], x.clone(), vec![0; 5], 5);
    for kind in [LayerKind::GranetGat, LayerKind::GranetLinearAttn] {
        let l = layer(spec(kind, 3, 4, Activation::LeakyRelu), 1);
        randomize(&l, 2, 1.0);
        let inner = l.inner().unwrap();
        let mlp = layer(spec(LayerKind::Mlp, 3, 4, Activation::LeakyRelu), 0);
        set(&mlp, "w", inner.param("w").unwrap().value().clone());
        set(&mlp, "b", inner.param("b").unwrap().value().clone());
        assert_eq!(run(&l, &g), run(&mlp, &g), "{kind}");
    }
}

#[test]
fn frozen_inner_gets_no_gradient() {
    let g = random_graph(2, 6, 3, 0.4, 2);
    for kind in [LayerKind::GranetGat, LayerKind::GranetLinearAttn, LayerKind::GranetSage] {
        let l = layer(spec(kind, 3, 3, Activation::LeakyRelu).with_frozen(FreezeMode::Inner), 1);
        let ctx = GraphCtx::new(&g);
        let mut tape = Tape::new();
        let h = tape.constant(g.features().clone());
        let y = l.forward(&mut tape, &ctx, h).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        for (name, p) in l.named_params() {
            if name.starts_with("inner.") {
                assert!(p.grad().is_none(), "{kind} {name}");
            } else {
                assert!(p.grad().is_some(), "{kind} {name}");
            }
        }
    }
}

#[test]
fn granet_equals_two_stage_materialization() {
    for kind in [LayerKind::GranetGat, LayerKind::GranetLinearAttn, LayerKind::GranetSage] {
        let g = random_graph(77, 6, 3, 0.4, 2);
        let l = layer(spec(kind, 3, 4, Activation::LeakyRelu), 4);
        randomize(&l, 8, 1.0);
        let inner = l.inner().unwrap();
        let z = mlp_oracle(inner, g.features());
        // Plain graph part on the materialized features, through the library.
        let ctx = GraphCtx::new(&g);
        let mut tape = Tape::new();
        let zt = tape.constant(z.clone());
        let staged = l.forward_on_embeddings(&mut tape, &ctx, zt).unwrap();
        let staged = tape.value(staged).clone();
        let direct = run(&l, &g);
        assert!(direct.max_abs_diff(&staged) < 1e-12, "{kind}");
        assert!(direct.max_abs_diff(&layer_oracle(&l, &g, g.features())) < 1e-12, "{kind}");
    }
}

#[test]
fn granet_sage_matches_plain_sage_on_embeddings() {
    let g = random_graph(13, 7, 3, 0.35, 2);
    let l = layer(spec(LayerKind::GranetSage, 3, 4, Activation::Relu).with_frozen(FreezeMode::Inner), 1);
    randomize(&l, 4, 1.0);
    let plain = layer(spec(LayerKind::Sage, 4, 4, Activation::Relu), 0);
    for name in ["w_self", "w_neigh", "b"] {
        set(&plain, name, l.param(name).unwrap().value().clone());
    }
    let z = run(l.inner().unwrap(), &g);
    let staged = run(&plain, &g.with_features(z).unwrap());
    assert!(run(&l, &g).max_abs_diff(&staged) < 1e-12);
}

#[test]
fn linear_attention_collapses_to_scalar_attention() {
    let g = random_graph(31, 6, 3, 0.5, 2);
    let lin = layer(spec(LayerKind::GranetLinearAttn, 3, 4, Activation::None), 1);
    let gat = layer(spec(LayerKind::GranetGat, 3, 4, Activation::None), 2);
    randomize(&gat, 3, 1.0);
    for name in ["inner.w", "inner.b"] {
        set(&lin, name, gat.param(name).unwrap().value().clone());
    }
    let a = gat.param("attn").unwrap().value().clone();
    set(&lin, "attn", Matrix::from_fn(8, 4, |r, _| a[(r, 0)]));
    let (t1, ctx, al) = attention_of(&lin, &g);
    let (t2, _, ag) = attention_of(&gat, &g);
    let v1 = t1.value(al[0]);
    let v2 = t2.value(ag[0]);
    for e in 0..ctx.looped().len() {
        for c in 0..4 {
            assert!((v1[(e, c)] - v2[(e, 0)]).abs() < 1e-15);
        }
    }
    assert!(run(&lin, &g).max_abs_diff(&run(&gat, &g)) < 1e-14);
}

#[test]
fn blend_shares_parameters_and_composes() {
    let g = random_graph(8, 6, 3, 0.4, 2);
    // Identity MLP in front of a GNN changes nothing.
    let id = Model::from_specs("id", &[spec(LayerKind::Mlp, 3, 3, Activation::None)], 1).unwrap();
    set(&id.layers()[0], "w", Matrix::identity(3));
    let gnn = Model::from_specs("gnn", &[spec(LayerKind::Gatv2, 3, 2, Activation::None)], 2).unwrap();
    let h = blend_models(&id, &gnn, &[(Side::F, 0), (Side::G, 0)]).unwrap();
    assert!(h.predict(&g).unwrap().max_abs_diff(&gnn.predict(&g).unwrap()) < 1e-15);
    assert!(h.params().iter().any(|p| p.ptr_eq(&gnn.params()[0])));

    // Two-layer MLP backbone and a sage head against manual composition.
    let f = Model::from_specs(
        "mlp",
        &[spec(LayerKind::Mlp, 3, 5, Activation::Relu), spec(LayerKind::Mlp, 5, 4, Activation::None)],
        3,
    )
    .unwrap();
    let s = Model::from_specs("sage", &[spec(LayerKind::Sage, 4, 2, Activation::None)], 4).unwrap();
    randomize(&s.layers()[0], 5, 1.0);
    let h = blend_models(&f, &s, &[(Side::F, 0), (Side::F, 1), (Side::G, 0)]).unwrap();
    let z = mlp_oracle(&f.layers()[1], &mlp_oracle(&f.layers()[0], g.features()));
    let want = layer_oracle(&s.layers()[0], &g, &z);
    assert!(h.predict(&g).unwrap().max_abs_diff(&want) < 1e-12);

    // Freezing the backbone leaves only the head with gradients.
    set_frozen(&f, &[0, 1], true).unwrap();
    let mut tape = Tape::new();
    let y = h.forward_graph(&mut tape, &g).unwrap();
    let loss = tape.sum(y);
    tape.backward(loss).unwrap();
    assert!(f.params().iter().all(|p| p.grad().is_none()));
    assert!(s.params().iter().all(|p| p.grad().is_some()));

    assert!(blend_models(&f, &s, &[(Side::F, 0), (Side::G, 0)]).is_err());
    assert!(blend_models(&f, &s, &[(Side::F, 5)]).is_err());
}

fn toy_task() -> Graph {
    let mut r = rng(17);
    let x = Matrix::from_fn(40, 2, |_, _| 0.0);
    let mut x = x;
    let mut labels = Vec::new();
    for i in 0..40 {
        let c = i % 2;
        x[(i, 0)] = if c == 0 { 1.0 } else { -1.0 } + 0.3 * random_matrix(&mut r, 1, 1, 1.0)[(0, 0)];
        x[(i, 1)] = random_matrix(&mut r, 1, 1, 1.0)[(0, 0)];
        labels.push(c);
    }
    graph_from(&[], x, labels, 40)
}

fn toy_loss(m: &Model, g: &Graph) -> (Tape, Tensor) {
    let mut tape = Tape::new();
    let y = m.forward_graph(&mut tape, g).unwrap();
    let loss = tape.cross_entropy(y, g.labels()).unwrap();
    (tape, loss)
}

#[test]
fn set_frozen_controls_updates() {
    let g = toy_task();
    let specs = [spec(LayerKind::Mlp, 2, 4, Activation::LeakyRelu), spec(LayerKind::Mlp, 4, 2, Activation::None)];

    let m = Model::from_specs("m", &specs, 1).unwrap();
    set_frozen(&m, &[0, 1], true).unwrap();
    let before: Vec<Matrix> = m.params().iter().map(|p| p.value().clone()).collect();
    let mut opt = Adam::new(m.params());
    let (mut tape, loss) = toy_loss(&m, &g);
    tape.backward(loss).unwrap();
    opt.step(0.1).unwrap();
    let after: Vec<Matrix> = m.params().iter().map(|p| p.value().clone()).collect();
    assert_eq!(before, after);

    let m = Model::from_specs("m", &specs, 1).unwrap();
    let mut opt = Adam::new(m.params());
    let (mut tape, loss) = toy_loss(&m, &g);
    tape.backward(loss).unwrap();
    opt.step(0.1).unwrap();
    for (p, b) in m.params().iter().zip(&before) {
        assert_ne!(&*p.value(), b, "{}", p.name());
    }

    let m = Model::from_specs("m", &specs, 1).unwrap();
    set_frozen(&m, &[0], true).unwrap();
    let frozen_w = m.layers()[0].param("w").unwrap().value().clone();
    let mut opt = Adam::new(m.params());
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..60 {
        let (mut tape, loss) = toy_loss(&m, &g);
        last = tape.value(loss)[(0, 0)];
        first.get_or_insert(last);
        tape.backward(loss).unwrap();
        opt.step(0.05).unwrap();
    }
    assert!(last < 0.5 * first.unwrap(), "{first:?} -> {last}");
    assert_eq!(*m.layers()[0].param("w").unwrap().value(), frozen_w);
    assert!(set_frozen(&m, &[2], true).is_err());
}

#[test]
fn every_kind_passes_gradient_check() {
    for (t, s) in all_kinds(3, 4).into_iter().enumerate() {
        for seed in 0..2u64 {
            let g = random_graph(90 + seed, 7, 3, 0.35, 2);
            let l = layer(s, seed);
            randomize(&l, 300 + seed, 0.9);
            let ctx = GraphCtx::new(&g);
            let weights = random_matrix(&mut rng(seed), 7, 4, 1.0);
            let err = param_grad_check(
                &l.params(),
                |tape| {
                    let x = tape.constant(g.features().clone());
                    let y = l.forward(tape, &ctx, x)?;
                    let w = tape.constant(weights.clone());
                    let yw = tape.mul(y, w)?;
                    Ok(tape.sum(yw))
                },
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-5, "kind #{t} {:?}: {err}", s.kind);
        }
    }
}

#[test]
fn checkpoint_roundtrip_and_inner_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mlp = Model::from_specs("mlp", &[spec(LayerKind::Mlp, 3, 4, Activation::Relu)], 1).unwrap();
    randomize(&mlp.layers()[0], 1, 1.0);
    mlp.save_checkpoint(&path).unwrap();
    let copy = Model::from_specs("mlp", &[spec(LayerKind::Mlp, 3, 4, Activation::Relu)], 2).unwrap();
    assert_eq!(copy.load_checkpoint(&path).unwrap(), 2);
    assert_eq!(copy.params()[0].value().clone(), mlp.params()[0].value().clone());

    let gn = Model::from_specs("gn", &[spec(LayerKind::GranetGat, 3, 4, Activation::Relu)], 3).unwrap();
    assert_eq!(gn.load_checkpoint(&path).unwrap(), 2);
    assert_eq!(*gn.layers()[0].param("inner.w").unwrap().value(), *mlp.params()[0].value());

    let other = Model::from_specs("o", &[spec(LayerKind::Mlp, 5, 4, Activation::Relu)], 3).unwrap();
    assert!(other.load_checkpoint(&path).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coefficients_sum_to_one(seed in any::<u64>(), n in 1usize..9, p in 0.0f64..0.8, k in 0usize..4) {
        let kind = ATTENTION[k];
        let g = random_graph(seed, n, 3, p, 2);
        let l = layer(spec(kind, 3, 3, Activation::None), seed);
        randomize(&l, seed ^ 1, 2.0);
        let (tape, ctx, alphas) = attention_of(&l, &g);
        let e = ctx.looped();
        let m = tape.value(alphas[0]);
        let mut sums = Matrix::zeros(n, m.cols());
        for idx in 0..e.len() {
            for c in 0..m.cols() {
                sums[(e.dst[idx], c)] += m[(idx, c)];
            }
        }
        prop_assert!(sums.as_slice().iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn layers_are_permutation_equivariant(seed in any::<u64>(), n in 2usize..9, k in 0usize..10) {
        let s = all_kinds(3, 4)[k];
        let g = random_graph(seed, n, 3, 0.4, 2);
        let l = layer(s, seed);
        randomize(&l, seed ^ 7, 1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng(seed ^ 3));
        let out = run(&l, &g);
        let out_p = run(&l, &g.relabel(&perm).unwrap());
        for v in 0..n {
            for c in 0..out.cols() {
                prop_assert!((out[(v, c)] - out_p[(perm[v], c)]).abs() < 1e-12);
            }
        }
    }
}
