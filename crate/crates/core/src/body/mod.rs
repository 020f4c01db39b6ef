//! Fixed-topology skinned body: skeleton, template, forward kinematics, skinning
//! and pose derivatives.

mod kinematics;
mod rotation;
mod skeleton;
mod template;

pub use kinematics::{
    forward_kinematics, pose_vjp, skin_vertices, BodyMesh, PoseJacobian, PosedSkeleton, RigidTransform,
};
pub use rotation::{rotation_matrix, rotation_with_derivatives, skew, wrap_axis_angle};
pub use skeleton::{joint, BodyPose, Skeleton, JOINT_COUNT, JOINT_NAMES, POSE_PARAMS};
pub use template::{BodyPart, SkinnedTemplate, VertexWeights, BUNDLED_VERTEX_COUNT, MAX_INFLUENCES};
