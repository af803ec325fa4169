use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{build_graph, BuildOptions, Graph, Split};
use crate::error::{invalid_arg, Result};
use crate::rng::{seeded, STREAM_EDGES, STREAM_FEATURES, STREAM_SPLIT};
use crate::tensor::Matrix;

/// Parameters of the stochastic block model benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub homophily: f64,
    pub feature_noise: f64,
    pub intra_degree: f64,
    pub inter_degree: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_nodes: 2000,
            num_classes: 4,
            homophily: 0.9,
            feature_noise: 1.0,
            intra_degree: 40.0,
            inter_degree: 40.0,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    /// Probability of the directed edge `(u, v)` for a same-class pair.
    pub fn p_same(&self) -> f64 {
        self.intra_degree * self.homophily / self.num_nodes as f64
    }

    /// Probability of the directed edge `(u, v)` for a cross-class pair.
    pub fn p_cross(&self) -> f64 {
        self.inter_degree * (1.0 - self.homophily) / self.num_nodes as f64
    }

    pub fn class_of(&self, v: usize) -> usize {
        v % self.num_classes
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 {
            return Err(invalid_arg!("synthetic graph needs at least one node"));
        }
        if self.num_classes < 2 {
            return Err(invalid_arg!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if !(0.0..=1.0).contains(&self.homophily) {
            return Err(invalid_arg!("homophily must lie in [0, 1], got {}", self.homophily));
        }
        if !(self.feature_noise >= 0.0) || !self.feature_noise.is_finite() {
            return Err(invalid_arg!("feature_noise must be finite and non-negative"));
        }
        if !(self.intra_degree >= 0.0) || !(self.inter_degree >= 0.0) {
            return Err(invalid_arg!("expected degrees must be non-negative"));
        }
        for p in [self.p_same(), self.p_cross()] {
            if p > 1.0 {
                return Err(invalid_arg!(
                    "edge probability {p} exceeds 1; lower the degrees or raise num_nodes"
                ));
            }
        }
        Ok(())
    }
}

/// Samples a stochastic block model graph. Nodes get classes round-robin,
/// features are `one_hot(class) + N(0, feature_noise^2)` and the split is a
/// seeded 70/15/15 shuffle. Output depends only on `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Graph> {
    spec.validate()?;
    let n = spec.num_nodes;
    let c = spec.num_classes;
    let (p_same, p_cross) = (spec.p_same(), spec.p_cross());

    let mut rng = seeded(spec.seed, STREAM_EDGES);
    let mut edges = Vec::new();
    for dst in 0..n {
        for src in 0..n {
            if src == dst {
                continue;
            }
            let p = if spec.class_of(src) == spec.class_of(dst) {
                p_same
            } else {
                p_cross
            };
            if rng.random::<f64>() < p {
                edges.push((src, dst));
            }
        }
    }

    let mut rng = seeded(spec.seed, STREAM_FEATURES);
    let noise = Normal::new(0.0, spec.feature_noise).expect("validated noise scale");
    let mut features = Matrix::zeros(n, c);
    for v in 0..n {
        for j in 0..c {
            let hot = if j == spec.class_of(v) { 1.0 } else { 0.0 };
            features[(v, j)] = hot + noise.sample(&mut rng);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(spec.seed, STREAM_SPLIT));
    let n_train = n * 70 / 100;
    let n_val = n * 15 / 100;
    let mut splits = vec![Split::Test; n];
    for (rank, &v) in order.iter().enumerate() {
        splits[v] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let labels = (0..n).map(|v| spec.class_of(v)).collect();
    build_graph(
        &edges,
        features,
        labels,
        splits,
        n,
        BuildOptions {
            num_classes: Some(c),
            ..Default::default()
        },
    )
}
