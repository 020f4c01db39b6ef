use serde::{Deserialize, Serialize};

use super::rotation::wrap_axis_angle;
use crate::{Error, Result, Vec3};

pub const JOINT_COUNT: usize = 24;

/// Number of pose parameters: 24 axis-angle rotations then the root translation.
pub const POSE_PARAMS: usize = 3 * JOINT_COUNT + 3;

pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

/// Named joint indices used by the bundled template and synthetic clips.
pub mod joint {
    pub const PELVIS: usize = 0;
    pub const LEFT_HIP: usize = 1;
    pub const RIGHT_HIP: usize = 2;
    pub const SPINE1: usize = 3;
    pub const LEFT_KNEE: usize = 4;
    pub const RIGHT_KNEE: usize = 5;
    pub const SPINE2: usize = 6;
    pub const LEFT_ANKLE: usize = 7;
    pub const RIGHT_ANKLE: usize = 8;
    pub const SPINE3: usize = 9;
    pub const LEFT_FOOT: usize = 10;
    pub const RIGHT_FOOT: usize = 11;
    pub const NECK: usize = 12;
    pub const LEFT_COLLAR: usize = 13;
    pub const RIGHT_COLLAR: usize = 14;
    pub const HEAD: usize = 15;
    pub const LEFT_SHOULDER: usize = 16;
    pub const RIGHT_SHOULDER: usize = 17;
    pub const LEFT_ELBOW: usize = 18;
    pub const RIGHT_ELBOW: usize = 19;
    pub const LEFT_WRIST: usize = 20;
    pub const RIGHT_WRIST: usize = 21;
    pub const LEFT_HAND: usize = 22;
    pub const RIGHT_HAND: usize = 23;
}

const DEFAULT_PARENTS: [i8; JOINT_COUNT] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21,
];

/// Rest-pose joint positions of the bundled body (y up, facing +z, T-pose).
const DEFAULT_REST: [[f64; 3]; JOINT_COUNT] = [
    [0.0, 0.92, 0.0],
    [0.09, 0.84, 0.0],
    [-0.09, 0.84, 0.0],
    [0.0, 1.03, -0.01],
    [0.10, 0.48, 0.01],
    [-0.10, 0.48, 0.01],
    [0.0, 1.16, 0.0],
    [0.10, 0.08, -0.02],
    [-0.10, 0.08, -0.02],
    [0.0, 1.22, 0.01],
    [0.11, 0.02, 0.10],
    [-0.11, 0.02, 0.10],
    [0.0, 1.45, -0.01],
    [0.07, 1.37, -0.01],
    [-0.07, 1.37, -0.01],
    [0.0, 1.53, 0.03],
    [0.18, 1.40, -0.02],
    [-0.18, 1.40, -0.02],
    [0.44, 1.40, -0.03],
    [-0.44, 1.40, -0.03],
    [0.70, 1.40, -0.03],
    [-0.70, 1.40, -0.03],
    [0.78, 1.40, -0.03],
    [-0.78, 1.40, -0.03],
];

/// Kinematic tree: parent per joint and rest offsets from the parent (the
/// root offset is its absolute rest position).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
}

impl Skeleton {
    /// Joints must be topologically ordered: every parent index is smaller
    /// than its child's.
    pub fn new(parents: Vec<Option<usize>>, offsets: Vec<Vec3>) -> Result<Self> {
        if parents.len() != JOINT_COUNT || offsets.len() != JOINT_COUNT {
            return Err(Error::InvalidSkeleton(format!(
                "expected {JOINT_COUNT} joints, got {} parents and {} offsets",
                parents.len(),
                offsets.len()
            )));
        }
        if parents[0].is_some() {
            return Err(Error::InvalidSkeleton("joint 0 must be the root".into()));
        }
        for (j, p) in parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < j => {}
                _ => {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint {j} needs a parent with a smaller index, got {p:?}"
                    )))
                }
            }
        }
        if offsets.iter().any(|o| !o.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidSkeleton("non-finite offset".into()));
        }
        Ok(Self { parents, offsets })
    }

    pub fn from_rest_positions(parents: Vec<Option<usize>>, rest: &[Vec3]) -> Result<Self> {
        if rest.len() != parents.len() {
            return Err(Error::InvalidSkeleton("rest positions and parents differ in length".into()));
        }
        let offsets = parents
            .iter()
            .enumerate()
            .map(|(j, p)| match p {
                Some(p) if *p < rest.len() => rest[j] - rest[*p],
                _ => rest[j],
            })
            .collect();
        Self::new(parents, offsets)
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn offset(&self, joint: usize) -> Vec3 {
        self.offsets[joint]
    }

    pub fn offsets(&self) -> &[Vec3] {
        &self.offsets
    }

    pub fn rest_positions(&self) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = Vec::with_capacity(JOINT_COUNT);
        for j in 0..JOINT_COUNT {
            let base = self.parents[j].map_or(Vec3::zeros(), |p| out[p]);
            out.push(base + self.offsets[j]);
        }
        out
    }
}

impl Default for Skeleton {
    fn default() -> Self {
        let parents = DEFAULT_PARENTS
            .iter()
            .map(|&p| (p >= 0).then_some(p as usize))
            .collect();
        let rest: Vec<Vec3> = DEFAULT_REST.iter().map(|&[x, y, z]| Vec3::new(x, y, z)).collect();
        Self::from_rest_positions(parents, &rest).expect("bundled skeleton is valid")
    }
}

/// Root translation plus one axis-angle rotation per joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyPose {
    pub translation: Vec3,
    pub rotations: [Vec3; JOINT_COUNT],
}

impl BodyPose {
    pub fn identity() -> Self {
        Self {
            translation: Vec3::zeros(),
            rotations: [Vec3::zeros(); JOINT_COUNT],
        }
    }

    /// Validates finiteness and wraps every rotation angle into `[0, pi]`.
    pub fn new(translation: Vec3, rotations: [Vec3; JOINT_COUNT]) -> Result<Self> {
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        if !finite(&translation) {
            return Err(Error::NonFinite("pose translation".into()));
        }
        if let Some(j) = rotations.iter().position(|r| !finite(r)) {
            return Err(Error::NonFinite(format!("rotation of joint {j}")));
        }
        Ok(Self {
            translation,
            rotations: rotations.map(|r| wrap_axis_angle(&r)),
        })
    }

    pub fn with_rotation(mut self, joint: usize, rotation: Vec3) -> Self {
        self.rotations[joint] = rotation;
        self
    }

    pub fn with_translation(mut self, translation: Vec3) -> Self {
        self.translation = translation;
        self
    }

    /// The 72 rotation coordinates, joint-major.
    pub fn rotation_coords(&self) -> [f64; 3 * JOINT_COUNT] {
        let mut out = [0.0; 3 * JOINT_COUNT];
        for (j, r) in self.rotations.iter().enumerate() {
            out[3 * j..3 * j + 3].copy_from_slice(r.as_slice());
        }
        out
    }

    pub fn from_rotation_coords(translation: Vec3, coords: &[f64]) -> Self {
        assert_eq!(coords.len(), 3 * JOINT_COUNT);
        let mut rotations = [Vec3::zeros(); JOINT_COUNT];
        for (j, r) in rotations.iter_mut().enumerate() {
            *r = Vec3::new(coords[3 * j], coords[3 * j + 1], coords[3 * j + 2]);
        }
        Self {
            translation,
            rotations,
        }
    }
}
