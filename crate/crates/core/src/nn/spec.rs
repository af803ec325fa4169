use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid_arg, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Mlp,
    Gcn,
    Gat,
    Gatv2,
    Sage,
    GranetGat,
    GranetLinearAttn,
    GranetSage,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Mlp,
        LayerKind::Gcn,
        LayerKind::Gat,
        LayerKind::Gatv2,
        LayerKind::Sage,
        LayerKind::GranetGat,
        LayerKind::GranetLinearAttn,
        LayerKind::GranetSage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Mlp => "mlp",
            LayerKind::Gcn => "gcn",
            LayerKind::Gat => "gat",
            LayerKind::Gatv2 => "gatv2",
            LayerKind::Sage => "sage",
            LayerKind::GranetGat => "granet_gat",
            LayerKind::GranetLinearAttn => "granet_linear_attn",
            LayerKind::GranetSage => "granet_sage",
        }
    }

    /// Graph-connected layers wrap an inner MLP layer.
    pub fn is_granet(self) -> bool {
        matches!(
            self,
            LayerKind::GranetGat | LayerKind::GranetLinearAttn | LayerKind::GranetSage
        )
    }

    pub fn supports_heads(self) -> bool {
        matches!(self, LayerKind::Gat | LayerKind::Gatv2)
    }

    /// Kinds whose neighbourhood is `N(i) ∪ {i}`.
    pub fn uses_self_loops(self) -> bool {
        matches!(
            self,
            LayerKind::Gcn
                | LayerKind::Gat
                | LayerKind::Gatv2
                | LayerKind::GranetGat
                | LayerKind::GranetLinearAttn
        )
    }

    /// Plain counterpart applied to pre-materialized inner features.
    pub fn plain(self) -> LayerKind {
        match self {
            LayerKind::GranetSage => LayerKind::Sage,
            other => other,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| invalid_arg!("unknown layer kind {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadCombine {
    Mean,
    Concat,
}

impl HeadCombine {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadCombine::Mean => "mean",
            HeadCombine::Concat => "concat",
        }
    }
}

impl FromStr for HeadCombine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(HeadCombine::Mean),
            "concat" => Ok(HeadCombine::Concat),
            _ => Err(invalid_arg!("unknown head combine {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Relu,
    None,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::LeakyRelu => "leaky_relu",
            Activation::Relu => "relu",
            Activation::None => "none",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "relu" => Ok(Activation::Relu),
            "none" => Ok(Activation::None),
            _ => Err(invalid_arg!("unknown activation {s:?}")),
        }
    }
}

/// Which parameters of a layer start frozen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreezeMode {
    None,
    All,
    /// Only the inner layer of a graph-connected layer.
    Inner,
}

impl FreezeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FreezeMode::None => "0",
            FreezeMode::All => "1",
            FreezeMode::Inner => "inner",
        }
    }
}

impl FromStr for FreezeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" => Ok(FreezeMode::None),
            "1" => Ok(FreezeMode::All),
            "inner" => Ok(FreezeMode::Inner),
            _ => Err(invalid_arg!("frozen column must be 0, 1 or inner, got {s:?}")),
        }
    }
}

/// Shape and behaviour of one layer, without parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
    pub combine: HeadCombine,
    pub activation: Activation,
    pub frozen: FreezeMode,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            kind,
            in_dim,
            out_dim,
            heads: 1,
            combine: HeadCombine::Concat,
            activation,
            frozen: FreezeMode::None,
        }
    }

    pub fn with_heads(mut self, heads: usize, combine: HeadCombine) -> Self {
        self.heads = heads;
        self.combine = combine;
        self
    }

    pub fn with_frozen(mut self, frozen: FreezeMode) -> Self {
        self.frozen = frozen;
        self
    }

    /// Output width of one attention head.
    pub fn head_dim(&self) -> usize {
        match self.combine {
            HeadCombine::Concat => self.out_dim / self.heads.max(1),
            HeadCombine::Mean => self.out_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(invalid_arg!("{} layer needs non-zero dimensions", self.kind));
        }
        if self.heads == 0 {
            return Err(invalid_arg!("{} layer needs at least one head", self.kind));
        }
        if self.heads > 1 && !self.kind.supports_heads() {
            return Err(invalid_arg!("{} layer does not support multiple heads", self.kind));
        }
        if self.combine == HeadCombine::Concat && !self.out_dim.is_multiple_of(self.heads) {
            return Err(invalid_arg!(
                "concat combine needs out_dim {} divisible by heads {}",
                self.out_dim,
                self.heads
            ));
        }
        if self.frozen == FreezeMode::Inner && !self.kind.is_granet() {
            return Err(invalid_arg!("{} layer has no inner layer to freeze", self.kind));
        }
        Ok(())
    }
}

/// Architecture files hold one layer per line:
/// `kind in_dim out_dim heads combine activation frozen`. Lines starting
/// with `#` and blank lines are ignored.
pub fn parse_architecture(text: &str, path: &Path) -> Result<Vec<LayerSpec>> {
    let mut specs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lno = i + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 7 {
            return Err(Error::parse(
                path,
                lno,
                format!("expected 7 columns (kind in out heads combine activation frozen), found {}", cols.len()),
            ));
        }
        let field = |e: Error| Error::parse(path, lno, e.to_string());
        let count = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(path, lno, format!("bad count {s:?}")))
        };
        let spec = LayerSpec {
            kind: cols[0].parse().map_err(field)?,
            in_dim: count(cols[1])?,
            out_dim: count(cols[2])?,
            heads: count(cols[3])?,
            combine: cols[4].parse().map_err(field)?,
            activation: cols[5].parse().map_err(field)?,
            frozen: cols[6].parse().map_err(field)?,
        };
        spec.validate().map_err(field)?;
        specs.push(spec);
    }
    if specs.is_empty() {
        return Err(Error::parse(path, 1, "architecture has no layers"));
    }
    Ok(specs)
}

pub fn format_architecture(specs: &[LayerSpec]) -> String {
    let mut out = String::from("# kind in out heads combine activation frozen\n");
    for s in specs {
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            s.kind,
            s.in_dim,
            s.out_dim,
            s.heads,
            s.combine.as_str(),
            s.activation.as_str(),
            s.frozen.as_str()
        ));
    }
    out
}

pub fn load_architecture(path: &Path) -> Result<Vec<LayerSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_architecture(&text, path)
}

pub fn save_architecture(specs: &[LayerSpec], path: &Path) -> Result<()> {
    std::fs::write(path, format_architecture(specs)).map_err(|e| Error::io(path, e))
}
