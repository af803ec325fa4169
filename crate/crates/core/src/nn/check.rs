//! Finite-difference gradient checks of whole layers on small random graphs.

use rand::Rng as _;

use super::{GraphCtx, HeadCombine, Layer, LayerKind, LayerSpec};
use crate::error::Result;
use crate::graph::{build_graph, BuildOptions, Split};
use crate::nn::Activation;
use crate::rng::{seeded, STREAM_FEATURES, STREAM_INIT};
use crate::tensor::{param_grad_check, Matrix};

/// Largest node count used by [`gradcheck_trial`].
pub const GRADCHECK_MAX_NODES: usize = 8;
/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-6;

/// Largest relative error over every parameter entry of one randomly
/// sized `kind` layer on a random graph with at most 8 nodes. The loss is
/// `sum(layer(x) * r)` for a fixed random `r`.
pub fn gradcheck_trial(kind: LayerKind, seed: u64) -> Result<f64> {
    let mut rng = seeded(seed, STREAM_FEATURES);
    let n = rng.random_range(2..=GRADCHECK_MAX_NODES);
    let f_in = rng.random_range(2..=4);
    let heads = if kind.supports_heads() { rng.random_range(1..=2) } else { 1 };
    let out = heads * rng.random_range(1..=3);
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if rng.random::<f64>() < 0.35 {
                edges.push((s, d));
            }
        }
    }
    let mut uniform = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let x = uniform(n, f_in);
    let weights = uniform(n, out);
    let g = build_graph(
        &edges,
        x,
        vec![0; n],
        vec![Split::Train; n],
        n,
        BuildOptions::default(),
    )?;
    let mut spec = LayerSpec::new(kind, f_in, out, Activation::LeakyRelu);
    if heads > 1 {
        spec = spec.with_heads(heads, HeadCombine::Concat);
    }
    let mut init = seeded(seed, STREAM_INIT);
    let layer = Layer::new(spec, &mut init)?;
    for p in layer.params() {
        let (r, c) = p.shape();
        p.set_value(Matrix::from_fn(r, c, |_, _| init.random_range(-0.9..0.9)));
    }
    let ctx = GraphCtx::new(&g);
    param_grad_check(
        &layer.params(),
        |tape| {
            let x = tape.constant(g.features().clone());
            let y = layer.forward(tape, &ctx, x)?;
            let w = tape.constant(weights.clone());
            let yw = tape.mul(y, w)?;
            Ok(tape.sum(yw))
        },
        GRADCHECK_STEP,
    )
}

/// Worst error over `trials` trials seeded `seed, seed + 1, ...`.
pub fn gradcheck(kind: LayerKind, trials: usize, seed: u64) -> Result<f64> {
    (0..trials as u64).try_fold(0.0f64, |worst, t| {
        Ok(worst.max(gradcheck_trial(kind, seed.wrapping_add(t))?))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_is_within_tolerance() {
        for kind in LayerKind::ALL {
            let err = gradcheck(kind, 5, 1).unwrap();
            assert!(err < 1e-5, "{kind}: {err}");
        }
    }
}
