//! Reverse-mode scalar autodiff, parameter storage, MLPs and Adam.

pub mod adam;
pub mod backend;
pub mod mlp;
pub mod params;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use backend::{Backend, Eval};
pub use mlp::{mlp_forward, Activation, MlpSpec};
pub use params::{Checkpoint, Lifted, ParameterStore, Tensor};
pub use tape::{OpKind, Tape, Var};
