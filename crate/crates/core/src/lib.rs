//! Learning features and abstract actions for generalized planning.
//!
//! The crate turns sampled transitions of STRIPS instances into a
//! qualitative numerical abstraction, solves it as a FOND problem and runs
//! the resulting policy on new instances.

pub mod abstraction;
pub mod encoder;
pub mod executor;
pub mod features;
pub mod fond;
pub mod generators;
pub mod maxsat;
pub mod pipeline;
pub mod sampler;
pub mod strips;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] strips::ParseError),
    #[error(transparent)]
    Ground(#[from] strips::GroundError),
    #[error(transparent)]
    Sample(#[from] sampler::SampleError),
    #[error(transparent)]
    Expr(#[from] features::ExprError),
}
