//! Scene losses, motion fidelity losses and the two objectives built from them.
//!
//! Parameter vectors use fixed layouts:
//!
//! * placement: `[tau_x, tau_z, theta]`, or `[tau_x, tau_y, tau_z, theta]`
//!   when the vertical offset is optimized too;
//! * alteration: all per-frame rotations (72 values per frame, frame-major)
//!   followed by all per-frame root translations (3 per frame).

mod alteration;
mod losses;
mod placement;

use serde::{Deserialize, Serialize};

pub use alteration::{AlterationBreakdown, AlterationParams, AlterationProblem};
pub use losses::{affordance_loss, motion_loss, penetration_loss, pose_loss, scene_loss, MotionGradient, VertexLoss};
pub use placement::{drop_height, PlacementParams, PlacementProblem, TauMode};

use crate::geometry::{ClassDistanceFields, ClassId, SdfGrid};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Scale of the per-frame pose error; 0 disables it.
    pub lambda_pose: f64,
    pub lambda_mot: f64,
    /// Discount on translation differences inside the motion term.
    pub lambda_tau: f64,
    pub lambda_pen: f64,
    pub lambda_sem: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_pose: 1.0,
            lambda_mot: 10.0,
            lambda_tau: 0.1,
            lambda_pen: 1e4,
            lambda_sem: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_pose,
            self.lambda_mot,
            self.lambda_tau,
            self.lambda_pen,
            self.lambda_sem,
        ];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("loss weights must be non-negative: {self:?}")))
        }
    }
}

/// Scene signed distance field plus optional per-class distance fields.
#[derive(Clone, Debug)]
pub struct SceneFields {
    pub sdf: SdfGrid,
    pub classes: Option<ClassDistanceFields>,
}

impl SceneFields {
    pub fn new(sdf: SdfGrid, classes: Option<ClassDistanceFields>) -> Self {
        Self { sdf, classes }
    }

    pub fn class_field(&self, class: ClassId) -> Option<&SdfGrid> {
        self.classes.as_ref().and_then(|c| c.get(class))
    }

    /// Classes referenced by `labels` that have no distance field.
    pub fn missing_classes(&self, labels: &[ClassId]) -> Vec<ClassId> {
        let mut missing: Vec<ClassId> = labels
            .iter()
            .copied()
            .filter(|c| !c.is_none() && self.class_field(*c).is_none())
            .collect();
        missing.sort_unstable();
        missing.dedup();
        missing
    }
}
