pub mod cascade;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod imaging;
pub mod scalar;
pub mod svm;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type GrayImageF32 = imaging::GrayImage<f32>;
pub type GrayImageF64 = imaging::GrayImage<f64>;
pub type LinearModelF32 = svm::LinearModel<f32>;
pub type LinearModelF64 = svm::LinearModel<f64>;
pub type CascadeF32 = cascade::Cascade<f32>;
pub type CascadeF64 = cascade::Cascade<f64>;
pub type ProposalSetF64 = cascade::ProposalSet<f64>;
