use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{motion_loss, pose_loss, scene_loss, LossWeights, PlacementParams, SceneFields};
use crate::body::{forward_kinematics, pose_vjp, skin_vertices, BodyPose, Skeleton, SkinnedTemplate, JOINT_COUNT};
use crate::interaction::FeatureMap;
use crate::{Error, Result, Vec3};

const ROT: usize = 3 * JOINT_COUNT;

/// Per-frame poses and root translations being optimized.
#[derive(Clone, Debug, PartialEq)]
pub struct AlterationParams {
    pub frames: Vec<BodyPose>,
}

impl AlterationParams {
    pub fn new(frames: Vec<BodyPose>) -> Result<Self> {
        let finite = frames
            .iter()
            .all(|f| f.translation.iter().chain(f.rotations.iter().flatten()).all(|c| c.is_finite()));
        if !finite {
            return Err(Error::NonFinite("alteration parameters".into()));
        }
        Ok(Self { frames })
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let n = self.frames.len();
        let mut x = Vec::with_capacity(n * (ROT + 3));
        for f in &self.frames {
            x.extend_from_slice(&f.rotation_coords());
        }
        for f in &self.frames {
            x.extend_from_slice(f.translation.as_slice());
        }
        x
    }

    pub fn from_vector(x: &[f64], frames: usize) -> Self {
        assert_eq!(x.len(), frames * (ROT + 3));
        let t0 = frames * ROT;
        Self {
            frames: (0..frames)
                .map(|i| {
                    let t = Vec3::new(x[t0 + 3 * i], x[t0 + 3 * i + 1], x[t0 + 3 * i + 2]);
                    BodyPose::from_rotation_coords(t, &x[i * ROT..(i + 1) * ROT])
                })
                .collect(),
        }
    }
}

/// Contributions to the alteration objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlterationBreakdown {
    pub pose: f64,
    pub motion: f64,
    pub scene: f64,
}

impl AlterationBreakdown {
    pub fn total(&self) -> f64 {
        self.pose + self.motion + self.scene
    }
}

/// Alteration objective: frame-weighted pose and motion fidelity plus the
/// scene losses of the altered, placed meshes.
pub struct AlterationProblem<'a> {
    original: &'a [BodyPose],
    skeleton: &'a Skeleton,
    template: &'a SkinnedTemplate,
    features: &'a FeatureMap,
    frame_weights: &'a [f64],
    scene: &'a SceneFields,
    weights: &'a LossWeights,
    placement: PlacementParams,
    center: Vec3,
}

impl<'a> AlterationProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        original: &'a [BodyPose],
        skeleton: &'a Skeleton,
        template: &'a SkinnedTemplate,
        features: &'a FeatureMap,
        frame_weights: &'a [f64],
        scene: &'a SceneFields,
        weights: &'a LossWeights,
        placement: PlacementParams,
        center: Vec3,
    ) -> Result<Self> {
        features.check_shape(original.len(), template.vertex_count())?;
        if frame_weights.len() != original.len() {
            return Err(Error::LengthMismatch {
                what: "frame weights",
                expected: original.len(),
                actual: frame_weights.len(),
            });
        }
        if original.len() < 2 {
            return Err(Error::InvalidMotion("alteration needs at least 2 frames".into()));
        }
        Ok(Self {
            original,
            skeleton,
            template,
            features,
            frame_weights,
            scene,
            weights,
            placement,
            center,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.original.len()
    }

    pub fn evaluate_params(&self, params: &AlterationParams) -> Result<(AlterationBreakdown, Vec<f64>)> {
        let n = self.original.len();
        if params.frames.len() != n {
            return Err(Error::LengthMismatch {
                what: "altered frames",
                expected: n,
                actual: params.frames.len(),
            });
        }
        let k = self.frame_weights;
        let w = self.weights;
        let mut grad = vec![0.0; n * (ROT + 3)];
        let mut parts = AlterationBreakdown::default();

        if w.lambda_pose > 0.0 {
            let scaled: Vec<f64> = k.iter().map(|x| x * w.lambda_pose).collect();
            let (v, g) = pose_loss(&params.frames, self.original, &scaled)?;
            parts.pose = v;
            for (i, gi) in g.iter().enumerate() {
                for q in 0..ROT {
                    grad[i * ROT + q] += gi[q];
                }
            }
        }
        if w.lambda_mot > 0.0 {
            let scaled: Vec<f64> = k[..n - 1].iter().map(|x| x * w.lambda_mot).collect();
            let (v, g) = motion_loss(&params.frames, self.original, w.lambda_tau, &scaled)?;
            parts.motion = v;
            for i in 0..n {
                for q in 0..ROT {
                    grad[i * ROT + q] += g.rotations[i][q];
                }
                for a in 0..3 {
                    grad[n * ROT + 3 * i + a] += g.translations[i][a];
                }
            }
        }

        let rot = self.placement.rotation();
        let rot_t = rot.transpose();
        let per_frame: Vec<Result<(f64, [f64; ROT + 3])>> = params
            .frames
            .par_iter()
            .enumerate()
            .map(|(i, pose)| {
                if k[i] == 0.0 {
                    return Ok((0.0, [0.0; ROT + 3]));
                }
                let posed = forward_kinematics(self.skeleton, pose);
                let mesh = skin_vertices(self.template, &posed);
                let world: Vec<Vec3> = mesh
                    .vertices
                    .iter()
                    .map(|p| rot * (p - self.center) + self.placement.tau)
                    .collect();
                let loss = scene_loss(&world, self.features.frame(i), self.scene, w.lambda_sem, w.lambda_pen)?;
                let body_grads: Vec<Vec3> = loss.gradient.iter().map(|g| rot_t * g * k[i]).collect();
                Ok((k[i] * loss.value, pose_vjp(self.template, self.skeleton, pose, &posed, &body_grads)))
            })
            .collect();
        for (i, r) in per_frame.into_iter().enumerate() {
            let (v, g) = r?;
            parts.scene += v;
            for q in 0..ROT {
                grad[i * ROT + q] += g[q];
            }
            for a in 0..3 {
                grad[n * ROT + 3 * i + a] += g[ROT + a];
            }
        }
        Ok((parts, grad))
    }

    /// Value and gradient in the flat alteration layout.
    pub fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let params = AlterationParams::from_vector(x, self.original.len());
        let (parts, g) = self.evaluate_params(&params)?;
        Ok((parts.total(), g))
    }
}
