use std::rc::Rc;

use super::matrix::gemm_acc;
use super::{Matrix, Param};
use crate::error::{invalid_arg, shape_err, Result};

/// Handle to a value recorded on a [`Tape`].
///
/// Handles are only meaningful for the tape that produced them and become
/// stale after [`Tape::reset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tensor {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Tensor {
    #[inline]
    pub fn id(self) -> usize {
        self.id
    }

    #[inline]
    pub fn rows(self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Per-destination reduction used by [`Tape::segment_reduce`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Tensor, Tensor),
    Add(Tensor, Tensor),
    AddRow(Tensor, Tensor),
    Mul(Tensor, Tensor),
    MulCol(Tensor, Tensor),
    Scale(Tensor, f64),
    LeakyRelu(Tensor, f64),
    ConcatCols(Tensor, Tensor),
    SliceCols(Tensor, usize),
    SliceRows(Tensor, usize),
    GatherRows(Tensor, Rc<[usize]>),
    SegmentSoftmax(Tensor, Rc<[usize]>),
    SegmentSum(Tensor, Rc<[usize]>),
    SegmentMean(Tensor, Rc<[usize]>, Vec<f64>),
    /// Winning input row for every (segment, column); `usize::MAX` when empty.
    SegmentMax(Tensor, Vec<usize>),
    CrossEntropy {
        logits: Tensor,
        targets: Vec<usize>,
        /// Row weights already divided by their total.
        weights: Vec<f64>,
        probs: Matrix,
    },
    Sum(Tensor),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
    param: Option<Param>,
}

/// Linear record of a computation, replayed in reverse by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded value and gradient.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Tensor {
        let (rows, cols) = value.shape();
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
            param: None,
        });
        Tensor { id, rows, cols }
    }

    fn rg(&self, t: Tensor) -> bool {
        self.nodes[t.id].requires_grad
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Tensor {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Matrix) -> Tensor {
        self.leaf(value, false)
    }

    /// Records the current value of `param`. Gradients reaching this node are
    /// forwarded to the parameter unless it is frozen, in which case the
    /// node does not require a gradient at all.
    pub fn param(&mut self, param: &Param) -> Tensor {
        let value = param.value().clone();
        let t = self.leaf(value, !param.is_frozen());
        self.nodes[t.id].param = Some(param.clone());
        t
    }

    pub fn value(&self, t: Tensor) -> &Matrix {
        &self.nodes[t.id].value
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.rg(t)
    }

    /// Gradient accumulated on a leaf by previous backward passes.
    pub fn grad(&self, t: Tensor) -> Option<&Matrix> {
        self.nodes[t.id].grad.as_ref()
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.cols != b.rows {
            return Err(shape_err!(
                "matmul {}x{} by {}x{}",
                a.rows,
                a.cols,
                b.rows,
                b.cols
            ));
        }
        let mut out = Matrix::zeros(a.rows, b.cols);
        gemm_acc(self.value(a), false, self.value(b), false, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(shape_err!("add {:?} and {:?}", a.shape(), b.shape()));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Tensor, row: Tensor) -> Result<Tensor> {
        if row.rows != 1 || row.cols != a.cols {
            return Err(shape_err!("add_row {:?} with {:?}", a.shape(), row.shape()));
        }
        let mut out = self.value(a).clone();
        let r = self.value(row).as_slice();
        for i in 0..out.rows() {
            for (v, b) in out.row_mut(i).iter_mut().zip(r) {
                *v += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(shape_err!("mul {:?} and {:?}", a.shape(), b.shape()));
        }
        let data = self
            .value(a)
            .as_slice()
            .iter()
            .zip(self.value(b).as_slice())
            .map(|(x, y)| x * y)
            .collect();
        let out = Matrix::from_vec(a.rows, a.cols, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Scales row `i` of `a` by `col[i]`, where `col` is `rows x 1`.
    pub fn mul_col(&mut self, a: Tensor, col: Tensor) -> Result<Tensor> {
        if col.cols != 1 || col.rows != a.rows {
            return Err(shape_err!("mul_col {:?} with {:?}", a.shape(), col.shape()));
        }
        let mut out = self.value(a).clone();
        let w = self.value(col).as_slice();
        for (i, &s) in w.iter().enumerate() {
            for v in out.row_mut(i) {
                *v *= s;
            }
        }
        let rg = self.rg(a) || self.rg(col);
        Ok(self.push(out, Op::MulCol(a, col), rg))
    }

    pub fn scale(&mut self, a: Tensor, s: f64) -> Tensor {
        let out = self.value(a).map(|v| v * s);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// Elementwise `x` for positive entries and `slope * x` otherwise.
    pub fn leaky_relu(&mut self, a: Tensor, slope: f64) -> Result<Tensor> {
        if !(slope >= 0.0) {
            return Err(invalid_arg!("leaky_relu slope must be non-negative, got {slope}"));
        }
        let out = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(a);
        Ok(self.push(out, Op::LeakyRelu(a, slope), rg))
    }

    pub fn relu(&mut self, a: Tensor) -> Tensor {
        self.leaky_relu(a, 0.0).expect("zero slope is valid")
    }

    pub fn concat_cols(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.rows != b.rows {
            return Err(shape_err!("concat_cols {:?} and {:?}", a.shape(), b.shape()));
        }
        let (va, vb) = (self.value(a), self.value(b));
        let mut data = Vec::with_capacity(a.rows * (a.cols + b.cols));
        for i in 0..a.rows {
            data.extend_from_slice(va.row(i));
            data.extend_from_slice(vb.row(i));
        }
        let out = Matrix::from_vec(a.rows, a.cols + b.cols, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    pub fn slice_cols(&mut self, a: Tensor, start: usize, len: usize) -> Result<Tensor> {
        if start + len > a.cols {
            return Err(shape_err!("slice_cols {start}..{} of {:?}", start + len, a.shape()));
        }
        let va = self.value(a);
        let out = Matrix::from_fn(a.rows, len, |i, j| va[(i, start + j)]);
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    pub fn slice_rows(&mut self, a: Tensor, start: usize, len: usize) -> Result<Tensor> {
        if start + len > a.rows {
            return Err(shape_err!("slice_rows {start}..{} of {:?}", start + len, a.shape()));
        }
        let va = self.value(a);
        let data = va.as_slice()[start * a.cols..(start + len) * a.cols].to_vec();
        let out = Matrix::from_vec(len, a.cols, data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceRows(a, start), rg))
    }

    /// Row `k` of the result is row `index[k]` of `a`.
    pub fn gather_rows(&mut self, a: Tensor, index: Rc<[usize]>) -> Result<Tensor> {
        if let Some(&bad) = index.iter().find(|&&i| i >= a.rows) {
            return Err(shape_err!("gather_rows index {bad} out of {} rows", a.rows));
        }
        let out = self.value(a).select_rows(&index);
        let rg = self.rg(a);
        Ok(self.push(out, Op::GatherRows(a, index), rg))
    }

    /// Softmax over the rows sharing a segment id, independently per column.
    pub fn segment_softmax(
        &mut self,
        scores: Tensor,
        segments: Rc<[usize]>,
        num_segments: usize,
    ) -> Result<Tensor> {
        check_segments(scores, &segments, num_segments)?;
        let x = self.value(scores);
        let cols = x.cols();
        let mut max = Matrix::filled(num_segments, cols, f64::NEG_INFINITY);
        for (e, &s) in segments.iter().enumerate() {
            for (m, &v) in max.row_mut(s).iter_mut().zip(x.row(e)) {
                if v > *m {
                    *m = v;
                }
            }
        }
        let mut out = Matrix::zeros(x.rows(), cols);
        let mut denom = Matrix::zeros(num_segments, cols);
        for (e, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                let z = (x[(e, c)] - max[(s, c)]).exp();
                out[(e, c)] = z;
                denom[(s, c)] += z;
            }
        }
        for (e, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                out[(e, c)] /= denom[(s, c)];
            }
        }
        let rg = self.rg(scores);
        Ok(self.push(out, Op::SegmentSoftmax(scores, segments), rg))
    }

    /// Reduces rows into `num_segments` output rows. Empty segments produce
    /// zero rows; `Max` ties resolve to the first row in input order.
    pub fn segment_reduce(
        &mut self,
        values: Tensor,
        segments: Rc<[usize]>,
        num_segments: usize,
        mode: Reduce,
    ) -> Result<Tensor> {
        check_segments(values, &segments, num_segments)?;
        let x = self.value(values);
        let cols = x.cols();
        let mut out = Matrix::zeros(num_segments, cols);
        let rg = self.rg(values);
        match mode {
            Reduce::Sum | Reduce::Mean => {
                for (e, &s) in segments.iter().enumerate() {
                    for (o, v) in out.row_mut(s).iter_mut().zip(x.row(e)) {
                        *o += v;
                    }
                }
                if mode == Reduce::Sum {
                    return Ok(self.push(out, Op::SegmentSum(values, segments), rg));
                }
                let mut counts = vec![0usize; num_segments];
                for &s in segments.iter() {
                    counts[s] += 1;
                }
                let inv: Vec<f64> = counts
                    .iter()
                    .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
                    .collect();
                for (s, &w) in inv.iter().enumerate() {
                    for o in out.row_mut(s) {
                        *o *= w;
                    }
                }
                Ok(self.push(out, Op::SegmentMean(values, segments, inv), rg))
            }
            Reduce::Max => {
                let mut arg = vec![usize::MAX; num_segments * cols];
                for (e, &s) in segments.iter().enumerate() {
                    for c in 0..cols {
                        let slot = &mut arg[s * cols + c];
                        if *slot == usize::MAX || x[(e, c)] > x[(*slot, c)] {
                            *slot = e;
                        }
                    }
                }
                for s in 0..num_segments {
                    for c in 0..cols {
                        let e = arg[s * cols + c];
                        if e != usize::MAX {
                            out[(s, c)] = x[(e, c)];
                        }
                    }
                }
                Ok(self.push(out, Op::SegmentMax(values, arg), rg))
            }
        }
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: Tensor, targets: &[usize]) -> Result<Tensor> {
        self.weighted_cross_entropy(logits, targets, None)
    }

    /// `sum_i w_i * nll_i / sum_i w_i`; `None` weights means the plain mean.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Tensor,
        targets: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<Tensor> {
        if logits.rows == 0 {
            return Err(invalid_arg!("cross entropy over an empty batch"));
        }
        if targets.len() != logits.rows {
            return Err(shape_err!(
                "{} targets for {} logit rows",
                targets.len(),
                logits.rows
            ));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= logits.cols) {
            return Err(invalid_arg!("target class {t} out of {} classes", logits.cols));
        }
        let weights: Vec<f64> = match weights {
            Some(w) => {
                if w.len() != logits.rows {
                    return Err(shape_err!("{} weights for {} rows", w.len(), logits.rows));
                }
                let total: f64 = w.iter().sum();
                if !(total > 0.0) || w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                    return Err(invalid_arg!("loss weights must be finite, non-negative, not all zero"));
                }
                w.iter().map(|x| x / total).collect()
            }
            None => vec![1.0 / logits.rows as f64; logits.rows],
        };
        let x = self.value(logits);
        let mut probs = Matrix::zeros(x.rows(), x.cols());
        let mut loss = 0.0;
        for i in 0..x.rows() {
            let row = x.row(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let lse = m + z.ln();
            loss += weights[i] * (lse - row[targets[i]]);
            for (p, v) in probs.row_mut(i).iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
        }
        let rg = self.rg(logits);
        let out = Matrix::from_vec(1, 1, vec![loss])?;
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights,
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Tensor) -> Tensor {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Matrix::filled(1, 1, s), Op::Sum(a), rg)
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Leaf gradients accumulate across calls; parameter leaves also add
    /// into their [`Param`] gradient.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if loss.shape() != (1, 1) {
            return Err(shape_err!("backward needs a scalar loss, got {:?}", loss.shape()));
        }
        if loss.id >= self.nodes.len() {
            return Err(invalid_arg!("loss tensor is not on this tape"));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(loss.id + 1);
        grads.resize_with(loss.id + 1, || None);
        if self.nodes[loss.id].requires_grad {
            grads[loss.id] = Some(Matrix::filled(1, 1, 1.0));
        }

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            self.propagate(id, g, &mut grads);
        }

        for (id, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            let node = &mut self.nodes[id];
            if let Some(p) = &node.param {
                p.accumulate_grad(&g);
            }
            match &mut node.grad {
                Some(acc) => acc.add_assign(&g),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: Matrix, grads: &mut [Option<Matrix>]) {
        let nodes = &self.nodes;
        let rg = |t: Tensor| nodes[t.id].requires_grad;
        let val = |t: Tensor| &nodes[t.id].value;
        match &nodes[id].op {
            Op::Leaf => unreachable!("leaves are not propagated"),
            Op::MatMul(a, b) => {
                if rg(*a) {
                    let mut ga = Matrix::zeros(a.rows, a.cols);
                    gemm_acc(&g, false, val(*b), true, &mut ga);
                    accumulate(grads, *a, ga);
                }
                if rg(*b) {
                    let mut gb = Matrix::zeros(b.rows, b.cols);
                    gemm_acc(val(*a), true, &g, false, &mut gb);
                    accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                if rg(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if rg(*b) {
                    accumulate(grads, *b, g);
                }
            }
            Op::AddRow(a, row) => {
                if rg(*row) {
                    let mut gr = Matrix::zeros(1, row.cols);
                    for i in 0..g.rows() {
                        for (s, v) in gr.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *s += v;
                        }
                    }
                    accumulate(grads, *row, gr);
                }
                if rg(*a) {
                    accumulate(grads, *a, g);
                }
            }
            Op::Mul(a, b) => {
                if rg(*a) {
                    accumulate(grads, *a, hadamard(&g, val(*b)));
                }
                if rg(*b) {
                    accumulate(grads, *b, hadamard(&g, val(*a)));
                }
            }
            Op::MulCol(a, col) => {
                let w = val(*col);
                if rg(*col) {
                    let va = val(*a);
                    let gw = Matrix::from_fn(col.rows, 1, |i, _| {
                        g.row(i).iter().zip(va.row(i)).map(|(x, y)| x * y).sum()
                    });
                    accumulate(grads, *col, gw);
                }
                if rg(*a) {
                    let mut ga = g;
                    for i in 0..ga.rows() {
                        let s = w[(i, 0)];
                        for v in ga.row_mut(i) {
                            *v *= s;
                        }
                    }
                    accumulate(grads, *a, ga);
                }
            }
            Op::Scale(a, s) => {
                let mut ga = g;
                ga.scale_assign(*s);
                accumulate(grads, *a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let x = val(*a).as_slice();
                let mut ga = g;
                for (gv, &xv) in ga.as_mut_slice().iter_mut().zip(x) {
                    if xv <= 0.0 {
                        *gv *= slope;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::ConcatCols(a, b) => {
                if rg(*a) {
                    accumulate(grads, *a, Matrix::from_fn(a.rows, a.cols, |i, j| g[(i, j)]));
                }
                if rg(*b) {
                    let off = a.cols;
                    accumulate(grads, *b, Matrix::from_fn(b.rows, b.cols, |i, j| g[(i, off + j)]));
                }
            }
            Op::SliceCols(a, start) => {
                let mut ga = Matrix::zeros(a.rows, a.cols);
                for i in 0..g.rows() {
                    ga.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                accumulate(grads, *a, ga);
            }
            Op::SliceRows(a, start) => {
                let mut ga = Matrix::zeros(a.rows, a.cols);
                let off = start * a.cols;
                ga.as_mut_slice()[off..off + g.as_slice().len()].copy_from_slice(g.as_slice());
                accumulate(grads, *a, ga);
            }
            Op::GatherRows(a, index) => {
                let mut ga = Matrix::zeros(a.rows, a.cols);
                for (k, &r) in index.iter().enumerate() {
                    for (d, s) in ga.row_mut(r).iter_mut().zip(g.row(k)) {
                        *d += s;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::SegmentSoftmax(a, segments) => {
                let y = &nodes[id].value;
                let cols = y.cols();
                let num_segments = segments.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = Matrix::zeros(num_segments, cols);
                for (e, &s) in segments.iter().enumerate() {
                    for c in 0..cols {
                        dot[(s, c)] += y[(e, c)] * g[(e, c)];
                    }
                }
                let ga = Matrix::from_fn(y.rows(), cols, |e, c| {
                    y[(e, c)] * (g[(e, c)] - dot[(segments[e], c)])
                });
                accumulate(grads, *a, ga);
            }
            Op::SegmentSum(a, segments) => {
                let ga = g.select_rows(segments);
                accumulate(grads, *a, ga);
            }
            Op::SegmentMean(a, segments, inv) => {
                let mut ga = g.select_rows(segments);
                for (e, &s) in segments.iter().enumerate() {
                    for v in ga.row_mut(e) {
                        *v *= inv[s];
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::SegmentMax(a, arg) => {
                let cols = a.cols;
                let mut ga = Matrix::zeros(a.rows, cols);
                for (slot, &e) in arg.iter().enumerate() {
                    if e != usize::MAX {
                        let (s, c) = (slot / cols, slot % cols);
                        ga[(e, c)] += g[(s, c)];
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let scale = g[(0, 0)];
                let mut ga = probs.clone();
                for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                    ga[(i, t)] -= 1.0;
                    for v in ga.row_mut(i) {
                        *v *= w * scale;
                    }
                }
                accumulate(grads, *logits, ga);
            }
            Op::Sum(a) => {
                accumulate(grads, *a, Matrix::filled(a.rows, a.cols, g[(0, 0)]));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], t: Tensor, g: Matrix) {
    match &mut grads[t.id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] * b[(i, j)])
}

fn check_segments(t: Tensor, segments: &[usize], num_segments: usize) -> Result<()> {
    if segments.len() != t.rows {
        return Err(shape_err!(
            "{} segment ids for {} rows",
            segments.len(),
            t.rows
        ));
    }
    if let Some(&s) = segments.iter().find(|&&s| s >= num_segments) {
        return Err(invalid_arg!("segment id {s} out of {num_segments}"));
    }
    Ok(())
}
