//! Fixed-weight V1 front-ends (VOneBlock) and the tooling around them:
//! a 15-kind common-corruption generator, manual-backprop back-end training
//! with distillation, logit-averaging ensembles and relative-accuracy reports.

mod codec;
pub mod corruptions;
pub mod data;
pub mod desk;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod imageio;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
