//! Immutable node-classification graphs in destination-grouped CSR form.

mod io;
mod synthetic;

use std::fmt;
use std::str::FromStr;

pub use io::{
    load_dataset, load_edge_list, load_labels, load_splits, write_dataset, DatasetFiles,
    LoadOptions,
};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::error::{invalid_arg, shape_err, Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(invalid_arg!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    /// Drop repeated `(src, dst)` pairs instead of rejecting them.
    pub deduplicate: bool,
    /// One row per input edge, in input order.
    pub edge_features: Option<Matrix>,
    /// Class count; defaults to `max(label) + 1`.
    pub num_classes: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            deduplicate: true,
            edge_features: None,
            num_classes: None,
        }
    }
}

/// Directed graph with node features, labels and a split tag per node.
///
/// Edges are stored grouped by destination, sources ascending, so that
/// `in_neighbourhood(v)` is a contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    in_offsets: Vec<usize>,
    in_sources: Vec<usize>,
    out_offsets: Vec<usize>,
    out_targets: Vec<usize>,
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    splits: Vec<Split>,
    edge_features: Option<Matrix>,
}

/// Validates and assembles a [`Graph`].
pub fn build_graph(
    edges: &[(usize, usize)],
    features: Matrix,
    labels: Vec<usize>,
    splits: Vec<Split>,
    num_nodes: usize,
    opts: BuildOptions,
) -> Result<Graph> {
    if features.rows() != num_nodes {
        return Err(shape_err!(
            "feature matrix has {} rows for {num_nodes} nodes",
            features.rows()
        ));
    }
    if labels.len() != num_nodes {
        return Err(Error::InvalidGraph(format!(
            "{} labels for {num_nodes} nodes",
            labels.len()
        )));
    }
    if splits.len() != num_nodes {
        return Err(Error::InvalidGraph(format!(
            "{} split tags for {num_nodes} nodes",
            splits.len()
        )));
    }
    if let Some(&(s, d)) = edges.iter().find(|&&(s, d)| s >= num_nodes || d >= num_nodes) {
        return Err(Error::InvalidGraph(format!(
            "edge ({s}, {d}) references a node outside [0, {num_nodes})"
        )));
    }
    if let Some(ef) = &opts.edge_features {
        if ef.rows() != edges.len() {
            return Err(shape_err!(
                "{} edge feature rows for {} edges",
                ef.rows(),
                edges.len()
            ));
        }
    }
    let observed = labels.iter().max().map_or(0, |m| m + 1);
    let num_classes = opts.num_classes.unwrap_or(observed);
    if observed > num_classes {
        return Err(Error::InvalidGraph(format!(
            "label {} outside [0, {num_classes})",
            observed - 1
        )));
    }

    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by_key(|&k| (edges[k].1, edges[k].0, k));
    let mut kept = Vec::with_capacity(order.len());
    for k in order {
        if let Some(&prev) = kept.last() {
            if edges[prev] == edges[k] {
                if opts.deduplicate {
                    continue;
                }
                let (s, d) = edges[k];
                return Err(Error::InvalidGraph(format!("duplicate edge ({s}, {d})")));
            }
        }
        kept.push(k);
    }

    let mut in_offsets = vec![0usize; num_nodes + 1];
    for &k in &kept {
        in_offsets[edges[k].1 + 1] += 1;
    }
    for v in 0..num_nodes {
        in_offsets[v + 1] += in_offsets[v];
    }
    let in_sources: Vec<usize> = kept.iter().map(|&k| edges[k].0).collect();
    let edge_features = opts.edge_features.map(|ef| ef.select_rows(&kept));

    let (out_offsets, out_targets) = transpose_csr(num_nodes, &in_offsets, &in_sources);
    Ok(Graph {
        num_nodes,
        in_offsets,
        in_sources,
        out_offsets,
        out_targets,
        features,
        labels,
        num_classes,
        splits,
        edge_features,
    })
}

fn transpose_csr(n: usize, offsets: &[usize], sources: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut out_offsets = vec![0usize; n + 1];
    for &s in sources {
        out_offsets[s + 1] += 1;
    }
    for v in 0..n {
        out_offsets[v + 1] += out_offsets[v];
    }
    let mut cursor = out_offsets.clone();
    let mut targets = vec![0usize; sources.len()];
    // Destinations are visited in ascending order, so each target list ends
    // up sorted.
    for d in 0..n {
        for &s in &sources[offsets[d]..offsets[d + 1]] {
            targets[cursor[s]] = d;
            cursor[s] += 1;
        }
    }
    (out_offsets, targets)
}

impl Graph {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.in_sources.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    /// Sources of the edges ending at `v`, ascending.
    pub fn in_neighbourhood(&self, v: usize) -> Result<&[usize]> {
        if v >= self.num_nodes {
            return Err(invalid_arg!("node {v} out of range [0, {})", self.num_nodes));
        }
        Ok(self.in_neighbours(v))
    }

    #[inline]
    pub(crate) fn in_neighbours(&self, v: usize) -> &[usize] {
        &self.in_sources[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    /// Targets of the edges leaving `v`, ascending.
    #[inline]
    pub fn out_neighbours(&self, v: usize) -> &[usize] {
        &self.out_targets[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_offsets[v + 1] - self.in_offsets[v]
    }

    pub fn in_offsets(&self) -> &[usize] {
        &self.in_offsets
    }

    /// All edges as `(src, dst)` in storage order (destination-major).
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |d| self.in_neighbours(d).iter().map(move |&s| (s, d)))
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        dst < self.num_nodes && self.in_neighbours(dst).binary_search(&src).is_ok()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn edge_features(&self) -> Option<&Matrix> {
        self.edge_features.as_ref()
    }

    /// Nodes tagged with `split`, ascending.
    pub fn split_nodes(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes).filter(|&v| self.splits[v] == split).collect()
    }

    pub fn has_all_self_loops(&self) -> bool {
        (0..self.num_nodes).all(|v| self.has_edge(v, v))
    }

    /// Adds `(v, v)` for every node lacking one. Edge features of new loops
    /// are zero.
    pub fn add_self_loops(&self) -> Graph {
        if self.has_all_self_loops() {
            return self.clone();
        }
        let mut edges: Vec<(usize, usize)> = self.edges().collect();
        let missing: Vec<usize> = (0..self.num_nodes).filter(|&v| !self.has_edge(v, v)).collect();
        edges.extend(missing.iter().map(|&v| (v, v)));
        let edge_features = self.edge_features.as_ref().map(|ef| {
            let mut rows: Vec<Vec<f64>> = (0..ef.rows()).map(|i| ef.row(i).to_vec()).collect();
            rows.extend(missing.iter().map(|_| vec![0.0; ef.cols()]));
            Matrix::from_rows(&rows).expect("uniform rows")
        });
        self.rebuild(&edges, edge_features)
    }

    /// Adds the reverse of every edge.
    pub fn symmetrize(&self) -> Graph {
        let mut edges: Vec<(usize, usize)> = self.edges().collect();
        edges.extend(self.edges().map(|(s, d)| (d, s)));
        // Reversed copies have no features of their own.
        self.rebuild(&edges, None)
    }

    fn rebuild(&self, edges: &[(usize, usize)], edge_features: Option<Matrix>) -> Graph {
        build_graph(
            edges,
            self.features.clone(),
            self.labels.clone(),
            self.splits.clone(),
            self.num_nodes,
            BuildOptions {
                deduplicate: true,
                edge_features,
                num_classes: Some(self.num_classes),
            },
        )
        .expect("edges of a valid graph stay valid")
    }

    /// Same topology and labels with a new feature matrix (e.g. embeddings
    /// computed elsewhere).
    pub fn with_features(&self, features: Matrix) -> Result<Graph> {
        if features.rows() != self.num_nodes {
            return Err(shape_err!(
                "{} feature rows for {} nodes",
                features.rows(),
                self.num_nodes
            ));
        }
        Ok(Graph {
            features,
            ..self.clone()
        })
    }

    /// Subgraph on `nodes` (deduplicated, ascending) keeping exactly the
    /// edges with both ends inside. Returns the local-to-global id map.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<(Graph, Vec<usize>)> {
        let mut ids = nodes.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(invalid_arg!("induced subgraph of an empty node set"));
        }
        if let Some(&bad) = ids.iter().find(|&&v| v >= self.num_nodes) {
            return Err(invalid_arg!("node {bad} out of range [0, {})", self.num_nodes));
        }
        let mut edges = Vec::new();
        let mut kept_rows = Vec::new();
        for (ld, &gd) in ids.iter().enumerate() {
            let base = self.in_offsets[gd];
            for (k, &gs) in self.in_neighbours(gd).iter().enumerate() {
                if let Ok(ls) = ids.binary_search(&gs) {
                    edges.push((ls, ld));
                    kept_rows.push(base + k);
                }
            }
        }
        let edge_features = self.edge_features.as_ref().map(|ef| ef.select_rows(&kept_rows));
        let sub = self.subgraph_with_edges(&ids, &edges, edge_features)?;
        Ok((sub, ids))
    }

    /// Builds a graph over `ids` (global, ascending, distinct) with the given
    /// local edges, carrying node data over from `self`.
    pub(crate) fn subgraph_with_edges(
        &self,
        ids: &[usize],
        local_edges: &[(usize, usize)],
        edge_features: Option<Matrix>,
    ) -> Result<Graph> {
        build_graph(
            local_edges,
            self.features.select_rows(ids),
            ids.iter().map(|&v| self.labels[v]).collect(),
            ids.iter().map(|&v| self.splits[v]).collect(),
            ids.len(),
            BuildOptions {
                deduplicate: true,
                edge_features,
                num_classes: Some(self.num_classes),
            },
        )
    }

    /// Relabels node `v` as `perm[v]`, permuting every per-node array.
    pub fn relabel(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid_arg!("relabel needs a permutation of [0, {n})"));
        }
        let mut inverse = vec![0usize; n];
        for (v, &p) in perm.iter().enumerate() {
            inverse[p] = v;
        }
        let edges: Vec<(usize, usize)> = self.edges().map(|(s, d)| (perm[s], perm[d])).collect();
        build_graph(
            &edges,
            self.features.select_rows(&inverse),
            inverse.iter().map(|&v| self.labels[v]).collect(),
            inverse.iter().map(|&v| self.splits[v]).collect(),
            n,
            BuildOptions {
                deduplicate: true,
                edge_features: self.edge_features.clone(),
                num_classes: Some(self.num_classes),
            },
        )
    }
}
