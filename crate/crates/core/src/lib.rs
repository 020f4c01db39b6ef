//! Placement and motion alteration of motion-captured articulated agents in
//! static 3D scenes.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: scene meshes, signed distance fields and their sampling.
//! * [`body`]: a fixed-topology 24-joint skinned body with forward
//!   kinematics, linear blend skinning and pose derivatives.
//! * [`motion`]: motion sequences, frame differences and frame-rate reduction.
//! * [`interaction`]: per-vertex contact probabilities and semantic targets.
//! * [`weighting`]: per-frame importance weights.
//! * [`objective`]: the placement and alteration objectives with gradients.
//! * [`optimizer`]: L-BFGS with a Strong Wolfe line search.
//! * [`placement`]: candidate grids and the alternating optimisation.
//! * [`metrics`]: non-collision and contact scores, dataset filters.

pub mod body;
pub mod error;
pub mod geometry;
pub mod interaction;
pub mod metrics;
pub mod motion;
pub mod objective;
pub mod optimizer;
pub mod placement;
pub mod weighting;

pub use error::{Error, Result};

/// 3D vector in metres (or radians for axis-angle rotations).
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix, mostly rotations.
pub type Mat3 = nalgebra::Matrix3<f64>;
