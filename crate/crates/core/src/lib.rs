//! Edge convolution network for question→answer relation extraction on
//! form documents.
//!
//! The pipeline runs: [`corpus`] (load and filter annotations), then
//! [`geometry`] (line-of-sight graph and edge features), then [`features`]
//! (node matrices), then [`model`] (ECN forward/backward), then
//! [`training`] and [`evaluation`].

pub mod cli;
pub mod corpus;
mod error;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod model;
pub mod sidecar;
pub mod training;

pub use error::{Error, Result};
