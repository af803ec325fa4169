use std::path::Path;

use super::context::GraphCtx;
use super::layer::Layer;
use super::spec::LayerSpec;
use crate::error::{invalid_arg, shape_err, Error, Result};
use crate::graph::Graph;
use crate::rng::{seeded, STREAM_INIT};
use crate::tensor::snapshot::{numbered_lines, read_matrix, write_matrix};
use crate::tensor::{Matrix, Param, Tape, Tensor};

/// Layers applied in order. Cloning shares parameters.
#[derive(Clone, Debug)]
pub struct Model {
    name: String,
    layers: Vec<Layer>,
}

impl Model {
    pub fn new(name: impl Into<String>, layers: Vec<Layer>) -> Result<Model> {
        if layers.is_empty() {
            return Err(invalid_arg!("a model needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(shape_err!(
                    "layer {i} outputs {} features but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                ));
            }
        }
        Ok(Model {
            name: name.into(),
            layers,
        })
    }

    /// Freshly initialized model; weights depend only on `specs` and `seed`.
    pub fn from_specs(name: impl Into<String>, specs: &[LayerSpec], seed: u64) -> Result<Model> {
        let mut rng = seeded(seed, STREAM_INIT);
        let layers = specs
            .iter()
            .map(|s| Layer::new(*s, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Model::new(name, layers)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    /// Distinct parameters named `<layer>.<param>`. A parameter shared by
    /// several layers appears once, under its first position.
    pub fn named_params(&self) -> Vec<(String, Param)> {
        let mut out: Vec<(String, Param)> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, p) in layer.named_params() {
                if !out.iter().any(|(_, q)| q.ptr_eq(&p)) {
                    out.push((format!("{i}.{name}"), p));
                }
            }
        }
        out
    }

    pub fn params(&self) -> Vec<Param> {
        self.named_params().into_iter().map(|(_, p)| p).collect()
    }

    pub fn num_trainable(&self) -> usize {
        self.params()
            .iter()
            .filter(|p| !p.is_frozen())
            .map(|p| {
                let (r, c) = p.shape();
                r * c
            })
            .sum()
    }

    pub fn forward(&self, tape: &mut Tape, ctx: &GraphCtx, x: Tensor) -> Result<Tensor> {
        let mut h = x;
        for layer in &self.layers {
            h = layer.forward(tape, ctx, h)?;
        }
        Ok(h)
    }

    /// Forward over a whole graph with its stored features.
    pub fn forward_graph(&self, tape: &mut Tape, g: &Graph) -> Result<Tensor> {
        let ctx = GraphCtx::new(g);
        let x = tape.constant(g.features().clone());
        self.forward(tape, &ctx, x)
    }

    /// Output values only.
    pub fn predict(&self, g: &Graph) -> Result<Matrix> {
        let mut tape = Tape::new();
        let out = self.forward_graph(&mut tape, g)?;
        Ok(tape.value(out).clone())
    }

    /// Writes every parameter as `# <name>` followed by a matrix snapshot.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for (name, p) in self.named_params() {
            let io = |e| Error::io(path, e);
            std::io::Write::write_all(&mut buf, format!("# {name}\n").as_bytes()).map_err(io)?;
            write_matrix(&p.value(), &mut buf).map_err(|e| Error::io(path, e))?;
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Copies values from a checkpoint into parameters with matching names.
    /// A name such as `0.inner.w` also matches `0.w`, so a trained MLP
    /// initializes the inner layers of a graph-connected model. Returns the
    /// number of parameters loaded; at least one must match.
    pub fn load_checkpoint(&self, path: &Path) -> Result<usize> {
        let entries = read_checkpoint(path)?;
        let mut loaded = 0;
        for (name, p) in self.named_params() {
            let plain = name.replacen(".inner.", ".", 1);
            let found = entries
                .iter()
                .find(|(n, _)| *n == name)
                .or_else(|| entries.iter().find(|(n, _)| *n == plain));
            if let Some((n, m)) = found {
                if m.shape() != p.shape() {
                    return Err(shape_err!(
                        "checkpoint entry {n} is {:?} but parameter {name} is {:?}",
                        m.shape(),
                        p.shape()
                    ));
                }
                p.set_value(m.clone());
                loaded += 1;
            }
        }
        if loaded == 0 {
            return Err(invalid_arg!(
                "checkpoint {} shares no parameter names with model {}",
                path.display(),
                self.name
            ));
        }
        Ok(loaded)
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Matrix)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = numbered_lines(std::io::BufReader::new(file), path)?.peekable();
    let mut out = Vec::new();
    while let Some((lno, line)) = lines.next() {
        let name = line
            .strip_prefix("# ")
            .ok_or_else(|| Error::parse(path, lno, "expected \"# <parameter name>\""))?;
        out.push((name.trim().to_string(), read_matrix(&mut lines, path)?));
    }
    Ok(out)
}

/// Marks whole layers as frozen or trainable.
pub fn set_frozen(model: &Model, indices: &[usize], frozen: bool) -> Result<()> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= model.len()) {
        return Err(invalid_arg!("layer index {bad} out of range for {} layers", model.len()));
    }
    for &i in indices {
        model.layers[i].set_frozen(frozen);
    }
    Ok(())
}

/// Source model of a blended layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    F,
    G,
}

/// New model whose layers are taken, in `mapping` order, from `f` or `g`.
/// Layers share parameter handles with their source models.
pub fn blend_models(f: &Model, g: &Model, mapping: &[(Side, usize)]) -> Result<Model> {
    let layers = mapping
        .iter()
        .map(|&(side, i)| {
            let src = match side {
                Side::F => f,
                Side::G => g,
            };
            src.layers.get(i).cloned().ok_or_else(|| {
                invalid_arg!("model {} has no layer {i}", src.name)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Model::new(format!("{}+{}", f.name, g.name), layers)
}
