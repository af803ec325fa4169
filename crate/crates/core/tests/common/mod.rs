//! Reference implementations written with plain loops over node lists,
//! independent of the tape and the edge-array layout used by the library.
#![allow(dead_code)]

use std::collections::BTreeMap;

use granet_core::graph::{build_graph, BuildOptions, Graph, Split};
use granet_core::nn::{Activation, HeadCombine, Layer, LayerKind};
use granet_core::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SLOPE: f64 = 0.2;

pub fn lrelu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        SLOPE * x
    }
}

pub fn act(x: f64, a: Activation) -> f64 {
    match a {
        Activation::LeakyRelu => lrelu(x),
        Activation::Relu => x.max(0.0),
        Activation::None => x,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.random_range(-scale..scale))
}

/// Directed graph without self-loops; each ordered pair present with `p`.
pub fn random_graph(seed: u64, n: usize, f: usize, p: f64, classes: usize) -> Graph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && r.random::<f64>() < p {
                edges.push((s, d));
            }
        }
    }
    let x = random_matrix(&mut r, n, f, 1.0);
    let labels = (0..n).map(|v| v % classes).collect();
    graph_from(&edges, x, labels, n)
}

pub fn graph_from(edges: &[(usize, usize)], x: Matrix, labels: Vec<usize>, n: usize) -> Graph {
    let splits = (0..n)
        .map(|v| match v % 5 {
            0..=2 => Split::Train,
            3 => Split::Val,
            _ => Split::Test,
        })
        .collect();
    build_graph(edges, x, labels, splits, n, BuildOptions::default()).unwrap()
}

/// Replaces every parameter (inner ones included) with random values, so
/// biases are non-zero too.
pub fn randomize(layer: &Layer, seed: u64, scale: f64) {
    let mut r = rng(seed);
    for (_, p) in layer.named_params() {
        let (rows, cols) = p.shape();
        p.set_value(random_matrix(&mut r, rows, cols, scale));
    }
}

fn pv(layer: &Layer, name: &str) -> Matrix {
    layer.param(name).unwrap().value().clone()
}

/// `x · W` for a row vector.
pub fn vecmat(x: &[f64], w: &Matrix) -> Vec<f64> {
    assert_eq!(x.len(), w.rows());
    (0..w.cols())
        .map(|c| x.iter().enumerate().map(|(r, v)| v * w[(r, c)]).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn col(m: &Matrix, c: usize) -> Vec<f64> {
    (0..m.rows()).map(|r| m[(r, c)]).collect()
}

/// In-neighbours of `i`, with `i` added when `looped`.
pub fn neighbours(g: &Graph, i: usize, looped: bool) -> Vec<usize> {
    let mut out: Vec<usize> = g.in_neighbourhood(i).unwrap().to_vec();
    if looped && !out.contains(&i) {
        out.push(i);
        out.sort_unstable();
    }
    out
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

fn rows_of(h: &Matrix) -> Vec<Vec<f64>> {
    (0..h.rows()).map(|i| h.row(i).to_vec()).collect()
}

fn to_matrix(rows: Vec<Vec<f64>>) -> Matrix {
    Matrix::from_rows(&rows).unwrap()
}

/// Attention coefficients keyed by `(src, dst)`, one map per head. Each
/// value holds one entry for scalar attention or one per feature.
pub type Alphas = Vec<BTreeMap<(usize, usize), Vec<f64>>>;

pub fn mlp_oracle(layer: &Layer, h: &Matrix) -> Matrix {
    let (w, b) = (pv(layer, "w"), pv(layer, "b"));
    to_matrix(
        rows_of(h)
            .iter()
            .map(|x| {
                vecmat(x, &w)
                    .iter()
                    .zip(b.row(0))
                    .map(|(v, bb)| act(v + bb, layer.activation()))
                    .collect()
            })
            .collect(),
    )
}

/// Dense `D^-1/2 (A + I) D^-1/2 H W + b`.
pub fn gcn_dense_oracle(layer: &Layer, g: &Graph, h: &Matrix) -> Matrix {
    let n = g.num_nodes();
    let mut a = Matrix::zeros(n, n);
    for (s, d) in g.edges() {
        a[(d, s)] = 1.0;
    }
    for i in 0..n {
        a[(i, i)] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let norm = Matrix::from_fn(n, n, |i, j| a[(i, j)] / (deg[i] * deg[j]).sqrt());
    let hw = h.matmul(&pv(layer, "w")).unwrap();
    let mut out = norm.matmul(&hw).unwrap();
    let b = pv(layer, "b");
    for i in 0..n {
        for c in 0..out.cols() {
            out[(i, c)] = act(out[(i, c)] + b[(0, c)], layer.activation());
        }
    }
    out
}

pub fn sage_oracle_on(layer: &Layer, g: &Graph, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (ws, wn, b) = (pv(layer, "w_self"), pv(layer, "w_neigh"), pv(layer, "b"));
    let width = x[0].len();
    (0..g.num_nodes())
        .map(|i| {
            let nb = neighbours(g, i, false);
            let mut mean = vec![0.0; width];
            for &j in &nb {
                for (m, v) in mean.iter_mut().zip(&x[j]) {
                    *m += v / nb.len() as f64;
                }
            }
            let own = vecmat(&x[i], &ws);
            let ng = vecmat(&mean, &wn);
            (0..own.len())
                .map(|c| act(own[c] + ng[c] + b[(0, c)], layer.activation()))
                .collect()
        })
        .collect()
}

/// Attention coefficients and per-head node values computed pair by pair.
pub fn attention_oracle_on(layer: &Layer, g: &Graph, x: &[Vec<f64>]) -> (Alphas, Vec<Vec<Vec<f64>>>) {
    let n = g.num_nodes();
    let f = x[0].len();
    let mut alphas = Vec::new();
    let mut values = Vec::new();
    for k in 0..layer.heads() {
        let mut map = BTreeMap::new();
        let vals: Vec<Vec<f64>>;
        match layer.kind() {
            LayerKind::Gat => {
                let (w, a) = (pv(layer, &format!("w.{k}")), col(&pv(layer, &format!("a.{k}")), 0));
                let z: Vec<Vec<f64>> = x.iter().map(|r| vecmat(r, &w)).collect();
                for i in 0..n {
                    let nb = neighbours(g, i, true);
                    let s: Vec<f64> = nb.iter().map(|&j| lrelu(dot(&a, &cat(&z[i], &z[j])))).collect();
                    for (&j, al) in nb.iter().zip(softmax(&s)) {
                        map.insert((j, i), vec![al]);
                    }
                }
                vals = z;
            }
            LayerKind::Gatv2 => {
                let (w, a) = (pv(layer, &format!("w.{k}")), col(&pv(layer, &format!("a.{k}")), 0));
                for i in 0..n {
                    let nb = neighbours(g, i, true);
                    let s: Vec<f64> = nb
                        .iter()
                        .map(|&j| {
                            let t = vecmat(&cat(&x[i], &x[j]), &w);
                            dot(&a, &t.iter().map(|&v| lrelu(v)).collect::<Vec<_>>())
                        })
                        .collect();
                    for (&j, al) in nb.iter().zip(softmax(&s)) {
                        map.insert((j, i), vec![al]);
                    }
                }
                let zeros = vec![0.0; f];
                vals = x.iter().map(|r| vecmat(&cat(&zeros, r), &w)).collect();
            }
            LayerKind::GranetGat => {
                let a = col(&pv(layer, "attn"), 0);
                for i in 0..n {
                    let nb = neighbours(g, i, true);
                    let s: Vec<f64> = nb
                        .iter()
                        .map(|&j| dot(&a, &cat(&x[i], &x[j]).iter().map(|&v| lrelu(v)).collect::<Vec<_>>()))
                        .collect();
                    for (&j, al) in nb.iter().zip(softmax(&s)) {
                        map.insert((j, i), vec![al]);
                    }
                }
                vals = x.to_vec();
            }
            LayerKind::GranetLinearAttn => {
                let am = pv(layer, "attn");
                for i in 0..n {
                    let nb = neighbours(g, i, true);
                    let s: Vec<Vec<f64>> = nb
                        .iter()
                        .map(|&j| vecmat(&cat(&x[i], &x[j]).iter().map(|&v| lrelu(v)).collect::<Vec<_>>(), &am))
                        .collect();
                    let mut per_edge = vec![vec![0.0; f]; nb.len()];
                    for c in 0..f {
                        let column: Vec<f64> = s.iter().map(|v| v[c]).collect();
                        for (e, al) in softmax(&column).into_iter().enumerate() {
                            per_edge[e][c] = al;
                        }
                    }
                    for (&j, al) in nb.iter().zip(per_edge) {
                        map.insert((j, i), al);
                    }
                }
                vals = x.to_vec();
            }
            other => panic!("{other} has no attention"),
        }
        alphas.push(map);
        values.push(vals);
    }
    (alphas, values)
}

fn attention_output(layer: &Layer, g: &Graph, alphas: &Alphas, values: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut heads_out = Vec::new();
    for k in 0..layer.heads() {
        let d = values[k][0].len();
        let bias = match layer.kind() {
            LayerKind::Gat | LayerKind::Gatv2 => pv(layer, &format!("b.{k}")).row(0).to_vec(),
            _ => vec![0.0; d],
        };
        let mut out = vec![vec![0.0; d]; n];
        for (&(j, i), al) in &alphas[k] {
            for c in 0..d {
                let a = if al.len() == 1 { al[0] } else { al[c] };
                out[i][c] += a * values[k][j][c];
            }
        }
        for row in &mut out {
            for (v, b) in row.iter_mut().zip(&bias) {
                *v = act(*v + b, layer.activation());
            }
        }
        heads_out.push(out);
    }
    (0..n)
        .map(|i| match layer.head_combine() {
            HeadCombine::Concat => heads_out.iter().flat_map(|h| h[i].clone()).collect(),
            HeadCombine::Mean => {
                let d = heads_out[0][i].len();
                (0..d)
                    .map(|c| heads_out.iter().map(|h| h[i][c]).sum::<f64>() / heads_out.len() as f64)
                    .collect()
            }
        })
        .collect()
}

/// Full layer output, computed node by node.
pub fn layer_oracle(layer: &Layer, g: &Graph, h: &Matrix) -> Matrix {
    match layer.kind() {
        LayerKind::Mlp => mlp_oracle(layer, h),
        LayerKind::Gcn => gcn_dense_oracle(layer, g, h),
        LayerKind::Sage => to_matrix(sage_oracle_on(layer, g, &rows_of(h))),
        LayerKind::GranetSage => {
            let z = rows_of(&mlp_oracle(layer.inner().unwrap(), h));
            to_matrix(sage_oracle_on(layer, g, &z))
        }
        LayerKind::Gat | LayerKind::Gatv2 => {
            let x = rows_of(h);
            let (al, vals) = attention_oracle_on(layer, g, &x);
            to_matrix(attention_output(layer, g, &al, &vals))
        }
        LayerKind::GranetGat | LayerKind::GranetLinearAttn => {
            let z = rows_of(&mlp_oracle(layer.inner().unwrap(), h));
            let (al, vals) = attention_oracle_on(layer, g, &z);
            to_matrix(attention_output(layer, g, &al, &vals))
        }
    }
}

/// Attention coefficients for the raw input `h`, applying the inner layer
/// first for graph-connected kinds.
pub fn alpha_oracle(layer: &Layer, g: &Graph, h: &Matrix) -> Alphas {
    let x = match layer.inner() {
        Some(inner) => rows_of(&mlp_oracle(inner, h)),
        None => rows_of(h),
    };
    attention_oracle_on(layer, g, &x).0
}

/// Per-node probability of appearing in one random-walk subgraph, estimated
/// with its own generator and traversal code.
pub fn walk_inclusion_oracle(
    g: &Graph,
    pool: &[usize],
    roots: usize,
    walk_length: usize,
    draws: usize,
    seed: u64,
) -> Vec<f64> {
    use rand::rngs::StdRng;
    let mut r = StdRng::seed_from_u64(seed);
    let n = g.num_nodes();
    let mut hits = vec![0usize; n];
    let mut stamp = vec![usize::MAX; n];
    for draw in 0..draws {
        for _ in 0..roots {
            let root = *pool.get(r.random_range(0..pool.len())).unwrap();
            let mut at = root;
            for step in 0..=walk_length {
                if step > 0 {
                    let outs: Vec<usize> = g.edges().filter(|&(s, _)| s == at).map(|(_, d)| d).collect();
                    at = if outs.is_empty() { root } else { outs[r.random_range(0..outs.len())] };
                }
                if stamp[at] != draw {
                    stamp[at] = draw;
                    hits[at] += 1;
                }
            }
        }
    }
    hits.iter().map(|&h| h as f64 / draws as f64).collect()
}
