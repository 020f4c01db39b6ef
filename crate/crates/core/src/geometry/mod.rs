//! Scene geometry: triangle meshes, signed distance fields and per-class
//! distance fields.

mod bvh;
mod class_fields;
mod distance;
mod mesh;
mod sdf;

pub use class_fields::{build_class_distance_fields, ClassDistanceFields};
pub use distance::{
    closest_point_on_triangle, point_mesh_distance, solid_angle, winding_number, Feature,
    MeshDistance, PseudoNormals,
};
pub use mesh::{Aabb, ClassId, TriangleMesh};
pub use sdf::{build_sdf, GridSpec, SdfGrid, SdfOptions, SdfSample, SignMode};
