use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{scene_loss, LossWeights, SceneFields};
use crate::interaction::FeatureMap;
use crate::{Error, Mat3, Result, Vec3};

/// Contact probability above which a vertex takes part in the vertical drop.
pub const DROP_CONTACT: f32 = 0.5;

/// Width of the final bisection bracket of [`drop_height`], metres.
const DROP_TOLERANCE: f64 = 1e-12;

/// Rigid placement of a whole clip: yaw `theta` about the vertical axis
/// through the clip's starting root, then translation `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementParams {
    pub tau: Vec3,
    pub theta: f64,
}

/// Which translation components the placement objective optimizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    /// Horizontal translation only; the height comes from [`drop_height`].
    #[default]
    Planar,
    /// Full 3D translation.
    Full,
}

impl PlacementParams {
    /// Wraps `theta` into `[0, 2 pi)`.
    pub fn new(tau: Vec3, theta: f64) -> Result<Self> {
        if !tau.iter().all(|c| c.is_finite()) || !theta.is_finite() {
            return Err(Error::NonFinite("placement parameters".into()));
        }
        Ok(Self {
            tau,
            theta: theta.rem_euclid(TAU),
        })
    }

    pub fn rotation(&self) -> Mat3 {
        let (s, c) = self.theta.sin_cos();
        Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
    }

    fn rotation_derivative(&self) -> Mat3 {
        let (s, c) = self.theta.sin_cos();
        Mat3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
    }

    /// Body-frame point to scene coordinates.
    pub fn apply(&self, p: &Vec3, center: &Vec3) -> Vec3 {
        self.rotation() * (p - center) + self.tau
    }

    pub fn to_vector(&self, mode: TauMode) -> Vec<f64> {
        match mode {
            TauMode::Planar => vec![self.tau.x, self.tau.z, self.theta],
            TauMode::Full => vec![self.tau.x, self.tau.y, self.tau.z, self.theta],
        }
    }

    /// Inverse of [`to_vector`](Self::to_vector); planar vectors take their
    /// height from `tau_y`. `theta` is left unwrapped.
    pub fn from_vector(mode: TauMode, x: &[f64], tau_y: f64) -> Self {
        match mode {
            TauMode::Planar => Self {
                tau: Vec3::new(x[0], tau_y, x[1]),
                theta: x[2],
            },
            TauMode::Full => Self {
                tau: Vec3::new(x[0], x[1], x[2]),
                theta: x[3],
            },
        }
    }
}

/// Placement objective over fixed posed meshes: the frame-weighted sum of
/// affordance and penetration losses after the rigid placement.
pub struct PlacementProblem<'a> {
    meshes: &'a [Vec<Vec3>],
    features: &'a FeatureMap,
    frame_weights: &'a [f64],
    scene: &'a SceneFields,
    weights: &'a LossWeights,
    center: Vec3,
}

impl<'a> PlacementProblem<'a> {
    /// `meshes` are posed body-frame vertices per frame and `center` is the
    /// pivot of the yaw rotation.
    pub fn new(
        meshes: &'a [Vec<Vec3>],
        features: &'a FeatureMap,
        frame_weights: &'a [f64],
        scene: &'a SceneFields,
        weights: &'a LossWeights,
        center: Vec3,
    ) -> Result<Self> {
        features.check_shape(meshes.len(), meshes.first().map_or(0, Vec::len))?;
        if frame_weights.len() != meshes.len() {
            return Err(Error::LengthMismatch {
                what: "frame weights",
                expected: meshes.len(),
                actual: frame_weights.len(),
            });
        }
        Ok(Self {
            meshes,
            features,
            frame_weights,
            scene,
            weights,
            center,
        })
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    /// Value and gradient with respect to `(tau, theta)`.
    pub fn evaluate(&self, params: &PlacementParams) -> Result<(f64, Vec3, f64)> {
        let r = params.rotation();
        let dr = params.rotation_derivative();
        let per_frame: Vec<Result<(f64, Vec3, f64)>> = self
            .meshes
            .par_iter()
            .enumerate()
            .map(|(i, mesh)| {
                let k = self.frame_weights[i];
                if k == 0.0 {
                    return Ok((0.0, Vec3::zeros(), 0.0));
                }
                let local: Vec<Vec3> = mesh.iter().map(|p| p - self.center).collect();
                let world: Vec<Vec3> = local.iter().map(|q| r * q + params.tau).collect();
                let loss = scene_loss(
                    &world,
                    self.features.frame(i),
                    self.scene,
                    self.weights.lambda_sem,
                    self.weights.lambda_pen,
                )?;
                let mut g_tau = Vec3::zeros();
                let mut g_theta = 0.0;
                for (g, q) in loss.gradient.iter().zip(&local) {
                    g_tau += g;
                    g_theta += g.dot(&(dr * q));
                }
                Ok((k * loss.value, g_tau * k, k * g_theta))
            })
            .collect();
        let mut total = (0.0, Vec3::zeros(), 0.0);
        for r in per_frame {
            let (v, gt, gth) = r?;
            total.0 += v;
            total.1 += gt;
            total.2 += gth;
        }
        Ok(total)
    }

    pub fn value(&self, params: &PlacementParams) -> Result<f64> {
        Ok(self.evaluate(params)?.0)
    }

    /// Value and gradient in the vector layout of `mode`.
    pub fn evaluate_vector(&self, mode: TauMode, x: &[f64], tau_y: f64) -> Result<(f64, Vec<f64>)> {
        let params = PlacementParams::from_vector(mode, x, tau_y);
        let (v, gt, gth) = self.evaluate(&params)?;
        let g = match mode {
            TauMode::Planar => vec![gt.x, gt.z, gth],
            TauMode::Full => vec![gt.x, gt.y, gt.z, gth],
        };
        Ok((v, g))
    }

    /// See [`drop_height`].
    pub fn drop_height(&self, params: &PlacementParams) -> Result<Option<f64>> {
        drop_height(self.meshes, self.features, self.scene, self.center, params)
    }
}

/// Height `tau_y` at which the clip, lowered from the top of the scene
/// field, first touches it with a vertex whose contact probability is at
/// least [`DROP_CONTACT`] (or with any vertex if none qualifies). The
/// touching vertex ends at a non-positive distance. `None` when nothing is
/// hit inside the field.
pub fn drop_height(
    meshes: &[Vec<Vec3>],
    features: &FeatureMap,
    scene: &SceneFields,
    center: Vec3,
    params: &PlacementParams,
) -> Result<Option<f64>> {
    let r = params.rotation();
    let mut probes: Vec<Vec3> = Vec::new();
    for (i, mesh) in meshes.iter().enumerate() {
        let fc = features.frame(i).contact;
        probes.extend(mesh.iter().zip(fc).filter(|(_, c)| **c >= DROP_CONTACT).map(|(p, _)| r * (p - center)));
    }
    if probes.is_empty() {
        probes = meshes.iter().flatten().map(|p| r * (p - center)).collect();
    }
    let lowest = probes.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let spec = scene.sdf.spec();
    let top = spec.upper().y - spec.cell_size;
    let bottom = spec.origin.y;
    let horizontal = Vec3::new(params.tau.x, 0.0, params.tau.z);
    let min_sdf = |tau_y: f64| -> Result<f64> {
        let offset = horizontal + Vec3::new(0.0, tau_y, 0.0);
        let mut m = f64::INFINITY;
        for p in &probes {
            m = m.min(scene.sdf.sample(&(p + offset))?.value);
        }
        Ok(m)
    };

    // Sphere-trace downwards, then bisect on the sign change.
    let mut hi = top - lowest;
    let mut m = min_sdf(hi)?;
    if m <= 0.0 {
        return Ok(Some(hi));
    }
    let min_step = 0.25 * spec.cell_size;
    let lo = loop {
        let next = hi - (0.9 * m).max(min_step);
        if next + lowest < bottom {
            return Ok(None);
        }
        let mn = min_sdf(next)?;
        if mn <= 0.0 {
            break next;
        }
        hi = next;
        m = mn;
    };
    let touches = |tau_y: f64| -> Result<bool> {
        let offset = horizontal + Vec3::new(0.0, tau_y, 0.0);
        for p in &probes {
            if scene.sdf.sample(&(p + offset))?.value <= 0.0 {
                return Ok(true);
            }
        }
        Ok(false)
    };
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > DROP_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if touches(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}
