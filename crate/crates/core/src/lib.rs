//! Learning worst-case-safe parameters for neurosymbolic programs.
//!
//! Programs are small imperative IR values ([`ir::Program`]) that embed
//! trainable MLP modules. Sets of states are represented as differentiable
//! boxes ([`domain::DiffBox`]); the executors in [`exec`] push those boxes
//! through a program either soundly (both branches, joined) or by sampling
//! one control-flow path with volume-based branch probabilities. The
//! [`trainer`] combines data loss and safety loss in a Lagrangian game and
//! the [`verifier`] reports the provably safe portion of the input set.
//!
//! Everything numeric is generic over [`Scalar`]; aliases below fix the
//! common `f64` instantiation.

pub mod autodiff;
pub mod datagen;
pub mod domain;
pub mod error;
pub mod exec;
pub mod ir;
pub mod rng;
pub mod safety;
pub mod scalar;
pub mod trainer;
pub mod verifier;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tape64 = autodiff::Tape<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Params64 = autodiff::ParameterStore<f64>;
pub type Params32 = autodiff::ParameterStore<f32>;
pub type Box64 = domain::DiffBox<autodiff::Var>;
pub type Interval64 = domain::Interval<f64>;
