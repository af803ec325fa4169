//! Layers, message passing and model composition.

mod attention;
mod check;
mod context;
mod layer;
mod model;
mod spec;

pub use attention::{
    attention_update, gat_attention, gatv2_attention, granet_gat_attention,
    granet_linear_attention,
};
pub use check::{gradcheck, gradcheck_trial, GRADCHECK_MAX_NODES, GRADCHECK_STEP};
pub use context::{EdgeIndex, GraphCtx};
pub use layer::{gcn_forward, granet_layer_forward, message_passing_forward, sage_forward, Layer};
pub use model::{blend_models, read_checkpoint, set_frozen, Model, Side};
pub use spec::{
    format_architecture, load_architecture, parse_architecture, save_architecture, Activation,
    FreezeMode, HeadCombine, LayerKind, LayerSpec,
};
