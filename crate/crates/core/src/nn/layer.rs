use rand::Rng as _;

use super::attention;
use super::context::{EdgeIndex, GraphCtx};
use super::spec::{Activation, FreezeMode, HeadCombine, LayerKind, LayerSpec};
use crate::error::{invalid_arg, shape_err, Error, Result};
use crate::rng::Rng;
use crate::tensor::{Matrix, Param, Reduce, Tape, Tensor, DEFAULT_LEAKY_SLOPE};

/// One layer with its parameters. Cloning shares the parameter handles.
#[derive(Clone, Debug)]
pub struct Layer {
    spec: LayerSpec,
    params: Vec<Param>,
    inner: Option<Box<Layer>>,
}

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

/// Parameter names and shapes of the graph part of a layer. Graph-connected
/// kinds see the inner layer's output width as their input.
fn param_shapes(spec: &LayerSpec) -> Vec<(String, usize, usize)> {
    let (fi, fo) = (spec.in_dim, spec.out_dim);
    let d = spec.head_dim();
    let mut out = Vec::new();
    match spec.kind {
        LayerKind::Mlp | LayerKind::Gcn => {
            out.push(("w".into(), fi, fo));
            out.push(("b".into(), 1, fo));
        }
        LayerKind::Gat => {
            for k in 0..spec.heads {
                out.push((format!("w.{k}"), fi, d));
                out.push((format!("a.{k}"), 2 * d, 1));
                out.push((format!("b.{k}"), 1, d));
            }
        }
        LayerKind::Gatv2 => {
            for k in 0..spec.heads {
                out.push((format!("w.{k}"), 2 * fi, d));
                out.push((format!("a.{k}"), d, 1));
                out.push((format!("b.{k}"), 1, d));
            }
        }
        LayerKind::Sage => {
            out.push(("w_self".into(), fi, fo));
            out.push(("w_neigh".into(), fi, fo));
            out.push(("b".into(), 1, fo));
        }
        LayerKind::GranetGat => out.push(("attn".into(), 2 * fo, 1)),
        LayerKind::GranetLinearAttn => out.push(("attn".into(), 2 * fo, fo)),
        LayerKind::GranetSage => {
            out.push(("w_self".into(), fo, fo));
            out.push(("w_neigh".into(), fo, fo));
            out.push(("b".into(), 1, fo));
        }
    }
    out
}

pub(crate) fn activate(tape: &mut Tape, t: Tensor, act: Activation) -> Result<Tensor> {
    match act {
        Activation::LeakyRelu => tape.leaky_relu(t, DEFAULT_LEAKY_SLOPE),
        Activation::Relu => Ok(tape.relu(t)),
        Activation::None => Ok(t),
    }
}

/// `coef ⊙ values[src]` per edge; a single coefficient column broadcasts.
pub(crate) fn weight_messages(
    tape: &mut Tape,
    coef: Tensor,
    values: Tensor,
    edges: &EdgeIndex,
) -> Result<Tensor> {
    let gathered = tape.gather_rows(values, edges.src.clone())?;
    if coef.cols() == 1 {
        tape.mul_col(gathered, coef)
    } else {
        tape.mul(gathered, coef)
    }
}

impl Layer {
    /// Fresh layer with Glorot-uniform weights and zero biases. Graph-connected
    /// kinds get a linear inner MLP layer mapping `in_dim -> out_dim`.
    pub fn new(spec: LayerSpec, rng: &mut Rng) -> Result<Layer> {
        spec.validate()?;
        let inner = if spec.kind.is_granet() {
            let inner_spec = LayerSpec::new(LayerKind::Mlp, spec.in_dim, spec.out_dim, Activation::None);
            Some(Box::new(Layer::new(inner_spec, rng)?))
        } else {
            None
        };
        let params = param_shapes(&spec)
            .into_iter()
            .map(|(name, r, c)| {
                let value = if name == "b" || name.starts_with("b.") {
                    Matrix::zeros(r, c)
                } else {
                    glorot(r, c, rng)
                };
                Param::new(name, value)
            })
            .collect();
        let layer = Layer {
            spec,
            params,
            inner,
        };
        layer.apply_freeze(spec.frozen);
        Ok(layer)
    }

    /// Graph-connected layer around an existing (typically trained) MLP
    /// layer. The inner parameters are shared, not copied.
    pub fn graph_connected(
        kind: LayerKind,
        inner: Layer,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Layer> {
        if !kind.is_granet() {
            return Err(invalid_arg!("{kind} is not a graph-connected kind"));
        }
        if inner.kind() != LayerKind::Mlp {
            return Err(invalid_arg!("inner layer must be mlp, got {}", inner.kind()));
        }
        let spec = LayerSpec::new(kind, inner.in_dim(), inner.out_dim(), activation);
        let mut layer = Layer::new(spec, rng)?;
        layer.inner = Some(Box::new(inner));
        Ok(layer)
    }

    fn apply_freeze(&self, mode: FreezeMode) {
        match mode {
            FreezeMode::None => {}
            FreezeMode::All => self.set_frozen(true),
            FreezeMode::Inner => {
                if let Some(inner) = &self.inner {
                    inner.set_frozen(true);
                }
            }
        }
    }

    /// Spec with the frozen column reflecting the current parameter state.
    pub fn spec(&self) -> LayerSpec {
        let own = !self.params.is_empty() && self.params.iter().all(Param::is_frozen);
        let inner = self.inner.as_ref().map(|l| l.is_frozen());
        let frozen = match (own, inner) {
            (true, None | Some(true)) => FreezeMode::All,
            (false, Some(true)) => FreezeMode::Inner,
            _ => FreezeMode::None,
        };
        LayerSpec { frozen, ..self.spec }
    }

    pub fn kind(&self) -> LayerKind {
        self.spec.kind
    }

    pub fn in_dim(&self) -> usize {
        self.spec.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.spec.out_dim
    }

    pub fn heads(&self) -> usize {
        self.spec.heads
    }

    pub fn head_dim(&self) -> usize {
        self.spec.head_dim()
    }

    pub fn head_combine(&self) -> HeadCombine {
        self.spec.combine
    }

    pub fn activation(&self) -> Activation {
        self.spec.activation
    }

    pub fn inner(&self) -> Option<&Layer> {
        self.inner.as_deref()
    }

    /// Parameters of the graph part only.
    pub fn own_params(&self) -> &[Param] {
        &self.params
    }

    /// All parameters, inner ones first, named `inner.<name>`.
    pub fn named_params(&self) -> Vec<(String, Param)> {
        let mut out = Vec::new();
        if let Some(inner) = &self.inner {
            for (name, p) in inner.named_params() {
                out.push((format!("inner.{name}"), p));
            }
        }
        out.extend(self.params.iter().map(|p| (p.name(), p.clone())));
        out
    }

    pub fn params(&self) -> Vec<Param> {
        self.named_params().into_iter().map(|(_, p)| p).collect()
    }

    /// Looks up a parameter by its `named_params` name.
    pub fn param(&self, name: &str) -> Result<&Param> {
        if let Some(rest) = name.strip_prefix("inner.") {
            if let Some(inner) = &self.inner {
                return inner.param(rest);
            }
        }
        self.params
            .iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| invalid_arg!("{} layer has no parameter {name:?}", self.kind()))
    }

    pub fn set_frozen(&self, frozen: bool) {
        for p in &self.params {
            p.set_frozen(frozen);
        }
        if let Some(inner) = &self.inner {
            inner.set_frozen(frozen);
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.params().iter().all(Param::is_frozen)
    }

    pub fn forward(&self, tape: &mut Tape, ctx: &GraphCtx, h: Tensor) -> Result<Tensor> {
        message_passing_forward(tape, self, ctx, h)
    }

    /// Graph part of a graph-connected layer applied to already transformed
    /// features `z`. For other kinds this is the ordinary forward.
    pub fn forward_on_embeddings(&self, tape: &mut Tape, ctx: &GraphCtx, z: Tensor) -> Result<Tensor> {
        let width = if self.kind().is_granet() {
            self.out_dim()
        } else {
            self.in_dim()
        };
        if z.rows() != ctx.num_nodes() || z.cols() != width {
            return Err(shape_err!(
                "{} layer expects {}x{width} embeddings, got {:?}",
                self.kind(),
                ctx.num_nodes(),
                z.shape()
            ));
        }
        self.propagate(tape, ctx, z)
    }

    pub(crate) fn check_input(&self, ctx: &GraphCtx, h: Tensor) -> Result<()> {
        if h.rows() != ctx.num_nodes() || h.cols() != self.in_dim() {
            return Err(shape_err!(
                "{} layer expects {}x{} input, got {:?}",
                self.kind(),
                ctx.num_nodes(),
                self.in_dim(),
                h.shape()
            ));
        }
        Ok(())
    }

    /// Node-level transform applied once per node before message passing.
    pub(crate) fn pre_transform(&self, tape: &mut Tape, ctx: &GraphCtx, h: Tensor) -> Result<Tensor> {
        match &self.inner {
            Some(inner) => inner.forward(tape, ctx, h),
            None if self.kind().is_granet() => {
                Err(invalid_arg!("{} layer is missing its inner layer", self.kind()))
            }
            None => Ok(h),
        }
    }

    pub(crate) fn p(&self, tape: &mut Tape, name: &str) -> Result<Tensor> {
        let param = self.param(name)?;
        Ok(tape.param(param))
    }

    pub(crate) fn edges<'a>(&self, ctx: &'a GraphCtx) -> &'a EdgeIndex {
        if self.kind().uses_self_loops() {
            ctx.looped()
        } else {
            ctx.raw()
        }
    }

    fn aggregation(&self) -> Reduce {
        match self.kind() {
            LayerKind::Sage | LayerKind::GranetSage => Reduce::Mean,
            _ => Reduce::Sum,
        }
    }

    fn bias_name(&self, head: usize) -> Option<String> {
        match self.kind() {
            LayerKind::Mlp | LayerKind::Gcn | LayerKind::Sage | LayerKind::GranetSage => {
                Some("b".into())
            }
            LayerKind::Gat | LayerKind::Gatv2 => Some(format!("b.{head}")),
            LayerKind::GranetGat | LayerKind::GranetLinearAttn => None,
        }
    }

    /// `γ(x_i, ψ_j φ(x_i, x_j))`. MLP layers have no neighbour term.
    fn propagate(&self, tape: &mut Tape, ctx: &GraphCtx, x: Tensor) -> Result<Tensor> {
        if self.kind() == LayerKind::Mlp {
            let w = self.p(tape, "w")?;
            let b = self.p(tape, "b")?;
            let y = tape.matmul(x, w)?;
            let y = tape.add_row(y, b)?;
            return activate(tape, y, self.activation());
        }
        let messages = self.message(tape, ctx, x)?;
        let dst = self.edges(ctx).dst.clone();
        let agg = tape.segment_reduce(messages, dst, ctx.num_nodes(), self.aggregation())?;
        self.update(tape, x, agg)
    }

    /// φ for every edge, heads side by side.
    fn message(&self, tape: &mut Tape, ctx: &GraphCtx, x: Tensor) -> Result<Tensor> {
        let edges = self.edges(ctx);
        match self.kind() {
            LayerKind::Sage | LayerKind::GranetSage => tape.gather_rows(x, edges.src.clone()),
            LayerKind::Gcn => {
                let w = self.p(tape, "w")?;
                let values = tape.matmul(x, w)?;
                let coef = tape.constant(ctx.gcn_norm().clone());
                weight_messages(tape, coef, values, edges)
            }
            LayerKind::Mlp => Err(invalid_arg!("mlp layers send no messages")),
            _ => {
                let mut out: Option<Tensor> = None;
                for k in 0..self.heads() {
                    let (alpha, values) = attention::attention_head(tape, self, k, ctx, x)?;
                    let m = weight_messages(tape, alpha, values, edges)?;
                    out = Some(match out {
                        None => m,
                        Some(prev) => tape.concat_cols(prev, m)?,
                    });
                }
                Ok(out.expect("validated layers have at least one head"))
            }
        }
    }

    /// γ: combines the aggregated messages with the node's own features.
    pub(crate) fn update(&self, tape: &mut Tape, x: Tensor, agg: Tensor) -> Result<Tensor> {
        if matches!(self.kind(), LayerKind::Sage | LayerKind::GranetSage) {
            let ws = self.p(tape, "w_self")?;
            let wn = self.p(tape, "w_neigh")?;
            let b = self.p(tape, "b")?;
            let own = tape.matmul(x, ws)?;
            let neigh = tape.matmul(agg, wn)?;
            let y = tape.add(own, neigh)?;
            let y = tape.add_row(y, b)?;
            return activate(tape, y, self.activation());
        }
        let heads = self.heads();
        let d = agg.cols() / heads;
        let mut outs = Vec::with_capacity(heads);
        for k in 0..heads {
            let mut part = if heads == 1 {
                agg
            } else {
                tape.slice_cols(agg, k * d, d)?
            };
            if let Some(name) = self.bias_name(k) {
                let b = self.p(tape, &name)?;
                part = tape.add_row(part, b)?;
            }
            outs.push(activate(tape, part, self.activation())?);
        }
        combine_heads(tape, &outs, self.head_combine())
    }
}

fn combine_heads(tape: &mut Tape, outs: &[Tensor], combine: HeadCombine) -> Result<Tensor> {
    let mut acc = outs[0];
    for &o in &outs[1..] {
        acc = match combine {
            HeadCombine::Concat => tape.concat_cols(acc, o)?,
            HeadCombine::Mean => tape.add(acc, o)?,
        };
    }
    if combine == HeadCombine::Mean && outs.len() > 1 {
        acc = tape.scale(acc, 1.0 / outs.len() as f64);
    }
    Ok(acc)
}

/// Runs any layer: node transform, then messages, aggregation and update.
pub fn message_passing_forward(
    tape: &mut Tape,
    layer: &Layer,
    ctx: &GraphCtx,
    h: Tensor,
) -> Result<Tensor> {
    layer.check_input(ctx, h)?;
    let x = layer.pre_transform(tape, ctx, h)?;
    layer.propagate(tape, ctx, x)
}

/// Symmetrically normalized graph convolution. Requires a self-loop on
/// every node of the graph behind `ctx`.
pub fn gcn_forward(tape: &mut Tape, layer: &Layer, ctx: &GraphCtx, h: Tensor) -> Result<Tensor> {
    if layer.kind() != LayerKind::Gcn {
        return Err(invalid_arg!("gcn_forward on a {} layer", layer.kind()));
    }
    if !ctx.raw_has_self_loops() {
        return Err(Error::InvalidGraph(
            "gcn propagation needs a self-loop on every node".into(),
        ));
    }
    message_passing_forward(tape, layer, ctx, h)
}

pub fn sage_forward(tape: &mut Tape, layer: &Layer, ctx: &GraphCtx, h: Tensor) -> Result<Tensor> {
    if !matches!(layer.kind(), LayerKind::Sage | LayerKind::GranetSage) {
        return Err(invalid_arg!("sage_forward on a {} layer", layer.kind()));
    }
    message_passing_forward(tape, layer, ctx, h)
}

/// Graph-connected forward with an explicit inner layer: the inner layer
/// runs once per node and the graph part of `layer` runs on its output.
pub fn granet_layer_forward(
    tape: &mut Tape,
    layer: &Layer,
    inner: &Layer,
    ctx: &GraphCtx,
    h: Tensor,
) -> Result<Tensor> {
    if !layer.kind().is_granet() {
        return Err(invalid_arg!("{} is not a graph-connected layer", layer.kind()));
    }
    if inner.kind() != LayerKind::Mlp {
        return Err(invalid_arg!("inner layer must be mlp, got {}", inner.kind()));
    }
    if inner.out_dim() != layer.out_dim() {
        return Err(shape_err!(
            "inner layer width {} does not match layer width {}",
            inner.out_dim(),
            layer.out_dim()
        ));
    }
    let z = inner.forward(tape, ctx, h)?;
    layer.propagate(tape, ctx, z)
}
