//! Style encoder/decoder, flow and mask sub-networks.

mod bundle;
mod init;
pub mod nets;
mod spec;

pub use bundle::{
    flow_predict, mask_predict, style_decode, style_encode, BoundBundle, Component, FreezeFlags, ModelBundle,
};
pub use init::{init_weights, InitScheme, LayerShape, Params};
pub use spec::{FlowNetSpec, FlowStage, MaskNetSpec, SplitLayer, StyleNetSpec, StyleStage};
