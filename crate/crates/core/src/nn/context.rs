use std::rc::Rc;

use crate::graph::Graph;
use crate::tensor::Matrix;

/// Edge arrays in destination-major order.
#[derive(Clone, Debug)]
pub struct EdgeIndex {
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
}

impl EdgeIndex {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Per-forward view of a graph: the raw in-edges, the same edges with a
/// self-loop on every node, and symmetric GCN coefficients for the latter.
#[derive(Clone, Debug)]
pub struct GraphCtx {
    num_nodes: usize,
    raw: EdgeIndex,
    looped: EdgeIndex,
    gcn_norm: Matrix,
    raw_has_self_loops: bool,
    edge_features: Option<Matrix>,
}

impl GraphCtx {
    pub fn new(g: &Graph) -> Self {
        let n = g.num_nodes();
        let (mut src, mut dst) = (Vec::with_capacity(g.num_edges()), Vec::with_capacity(g.num_edges()));
        let (mut lsrc, mut ldst) = (Vec::with_capacity(g.num_edges() + n), Vec::with_capacity(g.num_edges() + n));
        let mut all_loops = true;
        for v in 0..n {
            let nbrs = g.in_neighbours(v);
            let mut placed = false;
            for &u in nbrs {
                src.push(u);
                dst.push(v);
                if !placed && u >= v {
                    if u > v {
                        lsrc.push(v);
                        ldst.push(v);
                    }
                    placed = true;
                }
                lsrc.push(u);
                ldst.push(v);
            }
            if !placed {
                lsrc.push(v);
                ldst.push(v);
            }
            all_loops &= nbrs.binary_search(&v).is_ok();
        }

        let mut deg = vec![0.0f64; n];
        for &d in &ldst {
            deg[d] += 1.0;
        }
        let gcn_norm = Matrix::from_fn(lsrc.len(), 1, |e, _| {
            1.0 / (deg[lsrc[e]].sqrt() * deg[ldst[e]].sqrt())
        });

        Self {
            num_nodes: n,
            raw: EdgeIndex {
                src: src.into(),
                dst: dst.into(),
            },
            looped: EdgeIndex {
                src: lsrc.into(),
                dst: ldst.into(),
            },
            gcn_norm,
            raw_has_self_loops: all_loops,
            edge_features: g.edge_features().cloned(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// The graph's own edges.
    pub fn raw(&self) -> &EdgeIndex {
        &self.raw
    }

    /// Edges over `N(i) ∪ {i}`.
    pub fn looped(&self) -> &EdgeIndex {
        &self.looped
    }

    /// `1 / sqrt(d_src * d_dst)` per looped edge, with in-degrees counted
    /// on the looped graph.
    pub fn gcn_norm(&self) -> &Matrix {
        &self.gcn_norm
    }

    pub fn raw_has_self_loops(&self) -> bool {
        self.raw_has_self_loops
    }

    /// Carried for completeness; none of the shipped layers read them.
    pub fn edge_features(&self) -> Option<&Matrix> {
        self.edge_features.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, BuildOptions, Split};

    #[test]
    fn looped_edges_stay_sorted_per_destination() {
        let g = build_graph(
            &[(2, 0), (0, 1), (1, 1), (0, 2)],
            Matrix::zeros(3, 1),
            vec![0; 3],
            vec![Split::Train; 3],
            3,
            BuildOptions::default(),
        )
        .unwrap();
        let ctx = GraphCtx::new(&g);
        let pairs: Vec<_> = ctx.looped.src.iter().zip(ctx.looped.dst.iter()).map(|(&s, &d)| (s, d)).collect();
        assert_eq!(pairs, vec![(0, 0), (2, 0), (0, 1), (1, 1), (0, 2), (2, 2)]);
        assert_eq!(ctx.raw().len(), 4);
        assert!(!ctx.raw_has_self_loops());
        let ctx = GraphCtx::new(&g.add_self_loops());
        assert!(ctx.raw_has_self_loops());
        assert_eq!(ctx.raw().len(), ctx.looped().len());
    }
}
