//! Feed-forward video style transfer with temporal coherence.
//!
//! A frozen encoder/decoder style network is split at an intermediate
//! layer. Between frames, a flow network predicts feature flow used to
//! warp the previous composite features, and a mask network decides per
//! location whether to keep the warped features or the fresh ones.

pub mod cli;
pub mod coherence;
pub mod error;
pub mod groundtruth;
pub mod io;
pub mod models;
pub mod numeric;
pub mod pipeline;

pub use error::{Error, Result};
pub use models::{ModelBundle, SplitLayer};
pub use numeric::{Graph, Tensor, Var};
