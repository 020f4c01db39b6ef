//! Frame weights: a geometric importance term plus a pose diversity term.

use serde::{Deserialize, Serialize};

use crate::body::{forward_kinematics, Skeleton};
use crate::geometry::ClassId;
use crate::interaction::FeatureMap;
use crate::motion::{FrameWeights, MotionSequence};
use crate::{Error, Result, Vec3};

/// Contact probability above which a frame counts as containing a class.
const PRESENT: f32 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightingParams {
    /// Weight of the geometric term.
    pub lambda_g: f64,
    /// Weight of the diversity term.
    pub lambda_b: f64,
    /// Share of joint motion inside the geometric term.
    pub alpha: f64,
    /// Share of contact saliency inside the geometric term.
    pub beta: f64,
}

impl Default for WeightingParams {
    fn default() -> Self {
        Self {
            lambda_g: 0.5,
            lambda_b: 0.5,
            alpha: 0.5,
            beta: 0.5,
        }
    }
}

/// Per-frame geometric importance in `[0, 1]`: normalized mean joint speed
/// blended with normalized contact saliency, where saliency sums contact
/// probabilities scaled by how rarely each contact class occurs in the clip.
pub fn geometric_weight(
    motion: &MotionSequence,
    features: &FeatureMap,
    skeleton: &Skeleton,
    alpha: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    let f = motion.len();
    features.check_shape(f, features.vertex_count())?;
    let joints: Vec<Vec<Vec3>> = motion
        .frames()
        .iter()
        .map(|p| forward_kinematics(skeleton, p).joint_positions())
        .collect();
    let t = motion.timestamps();
    let motion_term: Vec<f64> = (0..f)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(f - 1));
            let dt = t[hi] - t[lo];
            joints[hi].iter().zip(&joints[lo]).map(|(a, b)| (a - b).norm()).sum::<f64>()
                / (joints[hi].len() as f64 * dt)
        })
        .collect();

    let mut present: std::collections::BTreeMap<ClassId, usize> = Default::default();
    for i in 0..f {
        let fr = features.frame(i);
        let mut seen: Vec<ClassId> = fr
            .semantic
            .iter()
            .zip(fr.contact)
            .filter(|(c, p)| !c.is_none() && **p >= PRESENT)
            .map(|(c, _)| *c)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        for c in seen {
            *present.entry(c).or_default() += 1;
        }
    }
    let rarity = |c: ClassId| f as f64 / present.get(&c).copied().unwrap_or(0).max(1) as f64;
    let saliency: Vec<f64> = (0..f)
        .map(|i| {
            let fr = features.frame(i);
            fr.semantic
                .iter()
                .zip(fr.contact)
                .filter(|(c, _)| !c.is_none())
                .map(|(c, p)| *p as f64 * rarity(*c))
                .sum()
        })
        .collect();

    let combined: Vec<f64> = normalize_max(&motion_term)
        .iter()
        .zip(normalize_max(&saliency))
        .map(|(m, s)| alpha * m + beta * s)
        .collect();
    let out = normalize_max(&combined);
    if out.iter().all(|x| *x == 0.0) {
        return Ok(vec![1.0; f]);
    }
    Ok(out)
}

fn normalize_max(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        x.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; x.len()]
    }
}

/// Farthest-point-sampling rank score in rotation space, seeded at frame 0:
/// `1 - rank / frames`.
pub fn diversity_score(motion: &MotionSequence) -> Vec<f64> {
    let poses: Vec<[f64; 72]> = motion.frames().iter().map(|p| p.rotation_coords()).collect();
    diversity_from_points(&poses)
}

fn diversity_from_points(points: &[[f64; 72]]) -> Vec<f64> {
    let n = points.len();
    let dist = |a: &[f64; 72], b: &[f64; 72]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mut rank = vec![usize::MAX; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut current = 0;
    for r in 0..n {
        rank[current] = r;
        for i in 0..n {
            if rank[i] == usize::MAX {
                nearest[i] = nearest[i].min(dist(&points[i], &points[current]));
            }
        }
        let next = (0..n)
            .filter(|&i| rank[i] == usize::MAX)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if nearest[b] >= nearest[i] => Some(b),
                _ => Some(i),
            });
        match next {
            Some(i) => current = i,
            None => break,
        }
    }
    rank.iter().map(|&r| 1.0 - r as f64 / n as f64).collect()
}

/// `K = lambda_g * geometric + lambda_b * diversity`, normalized to sum 1.
pub fn combine_weights(geometric: &[f64], diversity: &[f64], lambda_g: f64, lambda_b: f64) -> Result<FrameWeights> {
    if geometric.len() != diversity.len() {
        return Err(Error::LengthMismatch {
            what: "diversity scores",
            expected: geometric.len(),
            actual: diversity.len(),
        });
    }
    if !(lambda_g >= 0.0 && lambda_b >= 0.0) || lambda_g + lambda_b == 0.0 {
        return Err(Error::InvalidParameter(format!(
            "frame weight mix ({lambda_g}, {lambda_b}) must be non-negative and not both zero"
        )));
    }
    FrameWeights::new(
        geometric
            .iter()
            .zip(diversity)
            .map(|(g, d)| lambda_g * g + lambda_b * d)
            .collect(),
    )
}

pub fn frame_weights(
    motion: &MotionSequence,
    features: &FeatureMap,
    skeleton: &Skeleton,
    params: &WeightingParams,
) -> Result<FrameWeights> {
    let g = geometric_weight(motion, features, skeleton, params.alpha, params.beta)?;
    combine_weights(&g, &diversity_score(motion), params.lambda_g, params.lambda_b)
}
