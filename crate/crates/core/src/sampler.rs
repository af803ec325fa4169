//! Mini-batch construction: GraphSAINT random walks, random node partitions
//! and layered neighbour sampling.

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use crate::error::{invalid_arg, Error, Result};
use crate::graph::{Graph, Split};
use crate::rng::{seeded, Rng, STREAM_NORM, STREAM_SAMPLER};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    SaintRw,
    RandomNode,
    Neighbour,
    /// The whole graph as a single batch.
    Full,
}

impl SamplerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::SaintRw => "saint_rw",
            SamplerKind::RandomNode => "random_node",
            SamplerKind::Neighbour => "neighbour",
            SamplerKind::Full => "full",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saint_rw" => Ok(SamplerKind::SaintRw),
            "random_node" => Ok(SamplerKind::RandomNode),
            "neighbour" | "neighbor" => Ok(SamplerKind::Neighbour),
            "full" => Ok(SamplerKind::Full),
            _ => Err(invalid_arg!("unknown sampler kind {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Random-walk roots per subgraph.
    pub roots: usize,
    pub walk_length: usize,
    pub walks_per_root: usize,
    /// Random-walk subgraphs drawn per epoch.
    pub steps: usize,
    pub partitions: usize,
    pub fanouts: Vec<usize>,
    pub batch_size: usize,
    /// Pre-sampling budget for loss normalization, in node visits per node.
    pub norm_samples_per_node: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::SaintRw,
            roots: 6000,
            walk_length: 2,
            walks_per_root: 1,
            steps: 5,
            partitions: 512,
            fanouts: vec![25, 10],
            batch_size: 512,
            norm_samples_per_node: 100,
            seed: 42,
        }
    }
}

impl SamplerConfig {
    /// Per-split defaults of the reference setup.
    pub fn for_split(kind: SamplerKind, split: Split) -> Self {
        let (roots, partitions, batch_size) = match split {
            Split::Train => (6000, 512, 512),
            Split::Val => (1250, 128, 128),
            Split::Test => (2000, 256, 256),
        };
        Self {
            kind,
            roots,
            partitions,
            batch_size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(invalid_arg!("sampler.{name} must be positive"))
            } else {
                Ok(())
            }
        };
        match self.kind {
            SamplerKind::SaintRw => {
                positive("roots", self.roots)?;
                positive("walks_per_root", self.walks_per_root)?;
                positive("steps", self.steps)?;
                positive("norm_samples_per_node", self.norm_samples_per_node)?;
            }
            SamplerKind::RandomNode => positive("partitions", self.partitions)?,
            SamplerKind::Neighbour => {
                positive("batch_size", self.batch_size)?;
                if self.fanouts.is_empty() {
                    return Err(invalid_arg!("sampler.fanouts must not be empty"));
                }
                for &f in &self.fanouts {
                    positive("fanouts entry", f)?;
                }
            }
            SamplerKind::Full => {}
        }
        Ok(())
    }
}

/// One mini-batch. `graph` is local: node `i` of `graph` is `nodes[i]`.
#[derive(Clone, Debug)]
pub struct SubgraphSample {
    /// Global ids, ascending.
    pub nodes: Vec<usize>,
    pub graph: Graph,
    /// One positive weight per local node.
    pub loss_weights: Vec<f64>,
    /// Global ids of the nodes the loss is computed on.
    pub seed_nodes: Vec<usize>,
}

impl SubgraphSample {
    /// Local indices of `seed_nodes`.
    pub fn seed_local(&self) -> Vec<usize> {
        self.seed_nodes
            .iter()
            .map(|v| self.nodes.binary_search(v).expect("seed nodes are sample nodes"))
            .collect()
    }
}

fn split_nodes_nonempty(g: &Graph, split: Split) -> Result<Vec<usize>> {
    let nodes = g.split_nodes(split);
    if nodes.is_empty() {
        return Err(invalid_arg!("the {split} split has no nodes"));
    }
    Ok(nodes)
}

/// Nodes visited by the walks of one random-walk subgraph, ascending.
fn walk_node_set(g: &Graph, pool: &[usize], cfg: &SamplerConfig, rng: &mut Rng) -> Vec<usize> {
    let mut seen = vec![false; g.num_nodes()];
    let mut out = Vec::new();
    let mut visit = |v: usize, out: &mut Vec<usize>| {
        if !seen[v] {
            seen[v] = true;
            out.push(v);
        }
    };
    for _ in 0..cfg.roots {
        let root = pool[rng.random_range(0..pool.len())];
        visit(root, &mut out);
        for _ in 0..cfg.walks_per_root {
            let mut cur = root;
            for _ in 0..cfg.walk_length {
                let next = g.out_neighbours(cur);
                cur = if next.is_empty() {
                    root
                } else {
                    next[rng.random_range(0..next.len())]
                };
                visit(cur, &mut out);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Loss weights `S / (count_v + 1)` from pre-sampled walk subgraphs, where
/// sampling continues until the subgraph sizes add up to
/// `norm_samples_per_node * N` and `S` is the number of subgraphs drawn.
pub fn saint_norm_estimate(g: &Graph, cfg: &SamplerConfig, split: Split) -> Result<Vec<f64>> {
    cfg.validate()?;
    let pool = split_nodes_nonempty(g, split)?;
    let mut rng = seeded(cfg.seed, STREAM_NORM);
    let budget = cfg.norm_samples_per_node * g.num_nodes();
    let mut counts = vec![0usize; g.num_nodes()];
    let (mut visits, mut subgraphs) = (0usize, 0usize);
    while visits < budget {
        let nodes = walk_node_set(g, &pool, cfg, &mut rng);
        visits += nodes.len();
        subgraphs += 1;
        for v in nodes {
            counts[v] += 1;
        }
    }
    Ok(counts
        .iter()
        .map(|&c| subgraphs as f64 / (c as f64 + 1.0))
        .collect())
}

/// One random-walk subgraph. Roots are drawn with replacement from `split`;
/// loss is taken over the sampled nodes that belong to `split`, weighted by
/// `norm` (from [`saint_norm_estimate`]).
pub fn saint_rw_sample(
    g: &Graph,
    cfg: &SamplerConfig,
    split: Split,
    norm: &[f64],
    rng: &mut Rng,
) -> Result<SubgraphSample> {
    cfg.validate()?;
    if norm.len() != g.num_nodes() {
        return Err(invalid_arg!("normalization has {} weights for {} nodes", norm.len(), g.num_nodes()));
    }
    let pool = split_nodes_nonempty(g, split)?;
    let nodes = walk_node_set(g, &pool, cfg, rng);
    let (graph, nodes) = g.induced_subgraph(&nodes)?;
    let seed_nodes = nodes
        .iter()
        .copied()
        .filter(|&v| g.splits()[v] == split)
        .collect();
    let loss_weights = nodes.iter().map(|&v| norm[v]).collect();
    Ok(SubgraphSample {
        nodes,
        graph,
        loss_weights,
        seed_nodes,
    })
}

/// Shuffles the split with `epoch_seed` and cuts it into `cfg.partitions`
/// groups whose sizes differ by at most one.
pub fn random_node_partition(
    g: &Graph,
    cfg: &SamplerConfig,
    split: Split,
    epoch_seed: u64,
) -> Result<Vec<SubgraphSample>> {
    if cfg.partitions == 0 {
        return Err(invalid_arg!("sampler.partitions must be positive"));
    }
    let mut pool = split_nodes_nonempty(g, split)?;
    if cfg.partitions > pool.len() {
        return Err(invalid_arg!(
            "{} partitions for {} {split} nodes",
            cfg.partitions,
            pool.len()
        ));
    }
    pool.shuffle(&mut seeded(epoch_seed, STREAM_SAMPLER));
    let (base, extra) = (pool.len() / cfg.partitions, pool.len() % cfg.partitions);
    let mut out = Vec::with_capacity(cfg.partitions);
    let mut start = 0;
    for p in 0..cfg.partitions {
        let len = base + usize::from(p < extra);
        let (graph, nodes) = g.induced_subgraph(&pool[start..start + len])?;
        start += len;
        out.push(SubgraphSample {
            loss_weights: vec![1.0; nodes.len()],
            seed_nodes: nodes.clone(),
            nodes,
            graph,
        });
    }
    Ok(out)
}

/// Layered expansion from `batch`: level `k` draws `min(fanouts[k], degree)`
/// distinct in-edges of every node first reached at level `k - 1`. The
/// sample keeps exactly the drawn edges.
pub fn neighbour_sample(
    g: &Graph,
    cfg: &SamplerConfig,
    batch: &[usize],
    rng: &mut Rng,
) -> Result<SubgraphSample> {
    if cfg.fanouts.is_empty() {
        return Err(invalid_arg!("sampler.fanouts must not be empty"));
    }
    if batch.is_empty() {
        return Err(invalid_arg!("neighbour sampling needs a non-empty batch"));
    }
    let n = g.num_nodes();
    if let Some(&bad) = batch.iter().find(|&&v| v >= n) {
        return Err(invalid_arg!("batch node {bad} out of range [0, {n})"));
    }
    let mut seeds = batch.to_vec();
    seeds.sort_unstable();
    seeds.dedup();

    let mut seen = vec![false; n];
    for &v in &seeds {
        seen[v] = true;
    }
    let mut nodes = seeds.clone();
    let mut frontier = seeds.clone();
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    for &fanout in &cfg.fanouts {
        let mut next = Vec::new();
        for &v in &frontier {
            let nbrs = g.in_neighbours(v);
            let take = fanout.min(nbrs.len());
            let mut picked = index::sample(rng, nbrs.len(), take).into_vec();
            picked.sort_unstable();
            for k in picked {
                let u = nbrs[k];
                edges.push((u, v, g.in_offsets()[v] + k));
                if !seen[u] {
                    seen[u] = true;
                    nodes.push(u);
                    next.push(u);
                }
            }
        }
        frontier = next;
    }

    nodes.sort_unstable();
    let local = |v: usize| nodes.binary_search(&v).expect("endpoints are sample nodes");
    let local_edges: Vec<(usize, usize)> = edges.iter().map(|&(u, v, _)| (local(u), local(v))).collect();
    let edge_features = g.edge_features().map(|ef| {
        let rows: Vec<usize> = edges.iter().map(|&(_, _, e)| e).collect();
        ef.select_rows(&rows)
    });
    let graph = g.subgraph_with_edges(&nodes, &local_edges, edge_features)?;
    Ok(SubgraphSample {
        loss_weights: vec![1.0; nodes.len()],
        nodes,
        graph,
        seed_nodes: seeds,
    })
}

/// The whole graph with loss on `split`.
pub fn full_sample(g: &Graph, split: Split) -> Result<SubgraphSample> {
    let seed_nodes = split_nodes_nonempty(g, split)?;
    Ok(SubgraphSample {
        nodes: (0..g.num_nodes()).collect(),
        graph: g.clone(),
        loss_weights: vec![1.0; g.num_nodes()],
        seed_nodes,
    })
}

/// Draws the batches of each epoch for one split. Batches depend only on
/// the graph structure, the config and the epoch number.
#[derive(Debug)]
pub struct Sampler<'g> {
    graph: &'g Graph,
    cfg: SamplerConfig,
    split: Split,
    norm: OnceCell<Vec<f64>>,
}

impl<'g> Sampler<'g> {
    pub fn new(graph: &'g Graph, cfg: SamplerConfig, split: Split) -> Result<Self> {
        cfg.validate()?;
        split_nodes_nonempty(graph, split)?;
        Ok(Self {
            graph,
            cfg,
            split,
            norm: OnceCell::new(),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    /// Random-walk loss weights, computed on first use.
    pub fn norm(&self) -> Result<&[f64]> {
        if let Some(n) = self.norm.get() {
            return Ok(n);
        }
        let n = saint_norm_estimate(self.graph, &self.cfg, self.split)?;
        Ok(self.norm.get_or_init(|| n))
    }

    fn epoch_seed(&self, epoch: usize) -> u64 {
        // SplitMix64 finalizer over (seed, epoch).
        let mut z = self.cfg.seed ^ (epoch as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn epoch(&self, epoch: usize) -> Result<Vec<SubgraphSample>> {
        let seed = self.epoch_seed(epoch);
        let g = self.graph;
        match self.cfg.kind {
            SamplerKind::SaintRw => {
                let norm = self.norm()?;
                let mut rng = seeded(seed, STREAM_SAMPLER);
                (0..self.cfg.steps)
                    .map(|_| saint_rw_sample(g, &self.cfg, self.split, norm, &mut rng))
                    .collect()
            }
            SamplerKind::RandomNode => random_node_partition(g, &self.cfg, self.split, seed),
            SamplerKind::Neighbour => {
                let mut rng = seeded(seed, STREAM_SAMPLER);
                let mut pool = g.split_nodes(self.split);
                pool.shuffle(&mut rng);
                pool.chunks(self.cfg.batch_size)
                    .map(|batch| neighbour_sample(g, &self.cfg, batch, &mut rng))
                    .collect()
            }
            SamplerKind::Full => Ok(vec![full_sample(g, self.split)?]),
        }
    }
}
