//! Semantic shape editing.
//!
//! A point-set encoder infers the semantic parameters of a shape under a
//! hand-authored parametric template (chair, airplane, articulated
//! humanoid). Editing those parameters and decoding both the original and
//! edited vectors gives a pair of corresponded synthetic meshes; their
//! per-vertex displacement field is then transferred to the original input,
//! which keeps all of its detail.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! name the concrete instantiations used by the pipeline.

pub mod deform;
pub mod encoder;
pub mod error;
pub mod geom;
pub mod mesh;
pub mod rng;
pub mod scalar;
pub mod so3;
pub mod templates;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh32 = mesh::Mesh<f32>;
pub type Mesh64 = mesh::Mesh<f64>;
pub type PointCloud32 = mesh::PointCloud<f32>;
pub type PointCloud64 = mesh::PointCloud<f64>;
pub type EncoderWeights32 = encoder::EncoderWeights<f32>;
pub type EncoderWeights64 = encoder::EncoderWeights<f64>;
