//! Model-free 6D object pose estimation from a single RGB-D reference view.
//!
//! The reference observation is mirrored across the object's symmetry plane,
//! splatted into every pose hypothesis, refined against the query by
//! projective correspondence, and scored. Geometry is generic over `f32`/`f64`.

pub mod config;
pub mod error;
pub mod geometry;
pub mod hypothesis;
pub mod io;
pub mod metrics;
pub mod observation;
pub mod pipeline;
pub mod projection;
pub mod refine;
pub mod scalar;
pub mod score;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{Intrinsics, Pose, Rotation, SymmetryAxis, SymmetryPrior, Vec3};
pub use metrics::ModelPoints;
pub use observation::Observation;
pub use scalar::Real;

pub type Pose64 = Pose<f64>;
pub type Pose32 = Pose<f32>;
pub type Rotation64 = Rotation<f64>;
pub type Rotation32 = Rotation<f32>;
pub type Intrinsics64 = Intrinsics<f64>;
pub type Intrinsics32 = Intrinsics<f32>;
pub type Observation64 = Observation<f64>;
pub type Observation32 = Observation<f32>;
pub type SymmetryPrior64 = SymmetryPrior<f64>;
pub type SymmetryPrior32 = SymmetryPrior<f32>;
pub type ModelPoints64 = ModelPoints<f64>;
