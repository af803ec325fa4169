//! Attention coefficients over `N(i) ∪ {i}`, normalized per destination.

use super::context::GraphCtx;
use super::layer::{weight_messages, Layer};
use super::spec::LayerKind;
use crate::error::{invalid_arg, shape_err, Result};
use crate::tensor::{Reduce, Tape, Tensor, DEFAULT_LEAKY_SLOPE};

/// Edge scores `x_i · a_top + x_j · a_bottom` with `a` split in half by rows.
fn split_scores(
    tape: &mut Tape,
    x: Tensor,
    a: Tensor,
    ctx: &GraphCtx,
) -> Result<Tensor> {
    let edges = ctx.looped();
    let half = a.rows() / 2;
    let a_dst = tape.slice_rows(a, 0, half)?;
    let a_src = tape.slice_rows(a, half, half)?;
    let s_dst = tape.matmul(x, a_dst)?;
    let s_src = tape.matmul(x, a_src)?;
    let e_dst = tape.gather_rows(s_dst, edges.dst.clone())?;
    let e_src = tape.gather_rows(s_src, edges.src.clone())?;
    tape.add(e_dst, e_src)
}

/// Coefficients and the node values they weight, for head `k`. `x` is the
/// layer input for plain kinds and the inner output for graph-connected ones.
pub(crate) fn attention_head(
    tape: &mut Tape,
    layer: &Layer,
    k: usize,
    ctx: &GraphCtx,
    x: Tensor,
) -> Result<(Tensor, Tensor)> {
    let edges = ctx.looped();
    let n = ctx.num_nodes();
    let scores = match layer.kind() {
        LayerKind::Gat => {
            let w = layer.p(tape, &format!("w.{k}"))?;
            let a = layer.p(tape, &format!("a.{k}"))?;
            let z = tape.matmul(x, w)?;
            let e = split_scores(tape, z, a, ctx)?;
            let e = tape.leaky_relu(e, DEFAULT_LEAKY_SLOPE)?;
            let alpha = tape.segment_softmax(e, edges.dst.clone(), n)?;
            return Ok((alpha, z));
        }
        LayerKind::Gatv2 => {
            let w = layer.p(tape, &format!("w.{k}"))?;
            let a = layer.p(tape, &format!("a.{k}"))?;
            let f = layer.in_dim();
            let w_dst = tape.slice_rows(w, 0, f)?;
            let w_src = tape.slice_rows(w, f, f)?;
            let p = tape.matmul(x, w_dst)?;
            let q = tape.matmul(x, w_src)?;
            let pe = tape.gather_rows(p, edges.dst.clone())?;
            let qe = tape.gather_rows(q, edges.src.clone())?;
            let e = tape.add(pe, qe)?;
            let e = tape.leaky_relu(e, DEFAULT_LEAKY_SLOPE)?;
            let s = tape.matmul(e, a)?;
            let alpha = tape.segment_softmax(s, edges.dst.clone(), n)?;
            return Ok((alpha, q));
        }
        LayerKind::GranetGat | LayerKind::GranetLinearAttn => {
            let a = layer.p(tape, "attn")?;
            let lz = tape.leaky_relu(x, DEFAULT_LEAKY_SLOPE)?;
            split_scores(tape, lz, a, ctx)?
        }
        other => return Err(invalid_arg!("{other} layers have no attention")),
    };
    let alpha = tape.segment_softmax(scores, edges.dst.clone(), n)?;
    Ok((alpha, x))
}

/// Values each head sends along an edge, recomputed from `x`.
fn head_values(tape: &mut Tape, layer: &Layer, k: usize, x: Tensor) -> Result<Tensor> {
    match layer.kind() {
        LayerKind::Gat => {
            let w = layer.p(tape, &format!("w.{k}"))?;
            tape.matmul(x, w)
        }
        LayerKind::Gatv2 => {
            let w = layer.p(tape, &format!("w.{k}"))?;
            let f = layer.in_dim();
            let w_src = tape.slice_rows(w, f, f)?;
            tape.matmul(x, w_src)
        }
        LayerKind::GranetGat | LayerKind::GranetLinearAttn => Ok(x),
        other => Err(invalid_arg!("{other} layers have no attention")),
    }
}

fn all_heads(tape: &mut Tape, layer: &Layer, ctx: &GraphCtx, h: Tensor, kind: LayerKind) -> Result<Vec<Tensor>> {
    if layer.kind() != kind {
        return Err(invalid_arg!("expected a {kind} layer, got {}", layer.kind()));
    }
    layer.check_input(ctx, h)?;
    let x = layer.pre_transform(tape, ctx, h)?;
    (0..layer.heads())
        .map(|k| attention_head(tape, layer, k, ctx, x).map(|(alpha, _)| alpha))
        .collect()
}

/// `softmax_i(LeakyReLU(aᵀ[θh_i ‖ θh_j]))`, one `E×1` tensor per head over
/// the self-looped edges of `ctx`.
pub fn gat_attention(tape: &mut Tape, layer: &Layer, ctx: &GraphCtx, h: Tensor) -> Result<Vec<Tensor>> {
    all_heads(tape, layer, ctx, h, LayerKind::Gat)
}

/// `softmax_i(aᵀ LeakyReLU(θ[h_i ‖ h_j]))`, one `E×1` tensor per head.
pub fn gatv2_attention(tape: &mut Tape, layer: &Layer, ctx: &GraphCtx, h: Tensor) -> Result<Vec<Tensor>> {
    all_heads(tape, layer, ctx, h, LayerKind::Gatv2)
}

/// `softmax_i(aᵀ LeakyReLU([θ_l h_i ‖ θ_l h_j]))` where `θ_l` is the inner
/// layer.
pub fn granet_gat_attention(tape: &mut Tape, layer: &Layer, ctx: &GraphCtx, h: Tensor) -> Result<Tensor> {
    Ok(all_heads(tape, layer, ctx, h, LayerKind::GranetGat)?[0])
}

/// Vector attention `a_θa(LeakyReLU([θ_l h_i ‖ θ_l h_j]))`, softmax-normalized
/// per destination independently in every feature column. `E×F′`.
pub fn granet_linear_attention(
    tape: &mut Tape,
    layer: &Layer,
    ctx: &GraphCtx,
    h: Tensor,
) -> Result<Tensor> {
    Ok(all_heads(tape, layer, ctx, h, LayerKind::GranetLinearAttn)?[0])
}

/// `σ(Σ_j α_ij θ h_j)` per head, heads combined by the layer's rule.
/// `alphas` must come from the matching attention function.
pub fn attention_update(
    tape: &mut Tape,
    layer: &Layer,
    ctx: &GraphCtx,
    h: Tensor,
    alphas: &[Tensor],
) -> Result<Tensor> {
    layer.check_input(ctx, h)?;
    if alphas.len() != layer.heads() {
        return Err(shape_err!(
            "{} coefficient sets for a {}-head layer",
            alphas.len(),
            layer.heads()
        ));
    }
    let edges = ctx.looped();
    let x = layer.pre_transform(tape, ctx, h)?;
    let mut messages: Option<Tensor> = None;
    for (k, &alpha) in alphas.iter().enumerate() {
        let values = head_values(tape, layer, k, x)?;
        if alpha.rows() != edges.len() || (alpha.cols() != 1 && alpha.cols() != values.cols()) {
            return Err(shape_err!(
                "coefficients {:?} do not fit {} edges of width {}",
                alpha.shape(),
                edges.len(),
                values.cols()
            ));
        }
        let m = weight_messages(tape, alpha, values, edges)?;
        messages = Some(match messages {
            None => m,
            Some(prev) => tape.concat_cols(prev, m)?,
        });
    }
    let messages = messages.expect("validated layers have at least one head");
    let agg = tape.segment_reduce(messages, edges.dst.clone(), ctx.num_nodes(), Reduce::Sum)?;
    layer.update(tape, x, agg)
}
