//! Per-vertex contact probabilities and contact classes for every frame, with
//! a geometric heuristic provider.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{forward_kinematics, joint, skin_vertices, BodyPart, Skeleton, SkinnedTemplate};
use crate::geometry::ClassId;
use crate::motion::MotionSequence;
use crate::{Error, Result, Vec3};

/// Names of the scene classes body vertices may be asked to touch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticPalette(BTreeMap<ClassId, String>);

impl SemanticPalette {
    pub const FLOOR: ClassId = ClassId(0);
    pub const WALL: ClassId = ClassId(1);
    pub const CHAIR: ClassId = ClassId(2);
    pub const TABLE: ClassId = ClassId(3);
    pub const BED: ClassId = ClassId(4);
    pub const SOFA: ClassId = ClassId(5);
    pub const CABINET: ClassId = ClassId(6);
    pub const SHELF: ClassId = ClassId(7);

    pub fn new(entries: impl IntoIterator<Item = (ClassId, String)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, name) in entries {
            if id.is_none() {
                return Err(Error::InvalidParameter(format!("class id {} is reserved for none", id.0)));
            }
            if map.insert(id, name).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate class id {}", id.0)));
            }
        }
        Ok(Self(map))
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        if id.is_none() {
            return Some("none");
        }
        self.0.get(&id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.0.iter().find(|(_, n)| *n == name).map(|(id, _)| *id)
    }

    /// Known ids, `none` included.
    pub fn contains(&self, id: ClassId) -> bool {
        id.is_none() || self.0.contains_key(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, &str)> {
        self.0.iter().map(|(id, n)| (*id, n.as_str()))
    }
}

impl Default for SemanticPalette {
    fn default() -> Self {
        let names = ["floor", "wall", "chair", "table", "bed", "sofa", "cabinet", "shelf"];
        Self::new(names.iter().enumerate().map(|(i, n)| (ClassId(i as u16), n.to_string())))
            .expect("default palette is valid")
    }
}

/// Contact probability `f_c` and contact class `f_s` per frame and vertex,
/// frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    frames: usize,
    vertices: usize,
    contact: Vec<f32>,
    semantic: Vec<ClassId>,
}

/// Features of a single frame.
#[derive(Clone, Copy, Debug)]
pub struct FrameFeatures<'a> {
    pub contact: &'a [f32],
    pub semantic: &'a [ClassId],
}

impl FeatureMap {
    pub fn new(frames: usize, vertices: usize, contact: Vec<f32>, semantic: Vec<ClassId>) -> Result<Self> {
        let n = frames * vertices;
        for (what, len) in [("contact values", contact.len()), ("semantic labels", semantic.len())] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    actual: len,
                });
            }
        }
        if let Some(i) = contact.iter().position(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidFeatures(format!(
                "contact probability {} at frame {}, vertex {} is outside [0, 1]",
                contact[i],
                i / vertices,
                i % vertices
            )));
        }
        Ok(Self {
            frames,
            vertices,
            contact,
            semantic,
        })
    }

    pub fn zeros(frames: usize, vertices: usize) -> Self {
        Self {
            frames,
            vertices,
            contact: vec![0.0; frames * vertices],
            semantic: vec![ClassId::NONE; frames * vertices],
        }
    }

    /// Rejects labels missing from the palette, naming the first offender.
    pub fn validate_classes(&self, palette: &SemanticPalette) -> Result<()> {
        match self.semantic.iter().position(|c| !palette.contains(*c)) {
            Some(i) => Err(Error::InvalidFeatures(format!(
                "unknown class id {} at frame {}, vertex {}",
                self.semantic[i].0,
                i / self.vertices,
                i % self.vertices
            ))),
            None => Ok(()),
        }
    }

    /// Checks the map against a motion length and template size.
    pub fn check_shape(&self, frames: usize, vertices: usize) -> Result<()> {
        if self.frames != frames {
            return Err(Error::LengthMismatch {
                what: "feature frames",
                expected: frames,
                actual: self.frames,
            });
        }
        if self.vertices != vertices {
            return Err(Error::LengthMismatch {
                what: "feature vertices",
                expected: vertices,
                actual: self.vertices,
            });
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.frames
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn contact(&self) -> &[f32] {
        &self.contact
    }

    pub fn semantic(&self) -> &[ClassId] {
        &self.semantic
    }

    pub fn frame(&self, i: usize) -> FrameFeatures<'_> {
        let r = i * self.vertices..(i + 1) * self.vertices;
        FrameFeatures {
            contact: &self.contact[r.clone()],
            semantic: &self.semantic[r],
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut contact = Vec::with_capacity(indices.len() * self.vertices);
        let mut semantic = Vec::with_capacity(indices.len() * self.vertices);
        for &i in indices {
            let f = self.frame(i);
            contact.extend_from_slice(f.contact);
            semantic.extend_from_slice(f.semantic);
        }
        Self {
            frames: indices.len(),
            vertices: self.vertices,
            contact,
            semantic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicParams {
    /// Height falloff of contact probability, meters.
    pub sigma: f64,
    /// Vertex speed below which a vertex counts as stationary, m/s.
    pub velocity_threshold: f64,
    /// Seat heights above the support plane, meters.
    pub seat_band: [f64; 2],
    /// Table heights above the support plane, meters.
    pub table_band: [f64; 2],
    /// Minimum forward distance of a resting palm from the pelvis, meters.
    pub min_reach: f64,
    pub floor_class: ClassId,
    pub seat_class: ClassId,
    pub table_class: ClassId,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        Self {
            sigma: 0.05,
            velocity_threshold: 0.05,
            seat_band: [0.3, 0.7],
            table_band: [0.6, 1.1],
            min_reach: 0.3,
            floor_class: SemanticPalette::FLOOR,
            seat_class: SemanticPalette::CHAIR,
            table_class: SemanticPalette::TABLE,
        }
    }
}

impl HeuristicParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma > 0.0
            && self.velocity_threshold > 0.0
            && self.seat_band[0] <= self.seat_band[1]
            && self.table_band[0] <= self.table_band[1]
            && self.min_reach >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad heuristic parameters {self:?}")))
        }
    }

    fn stillness(&self, speed: f64) -> f64 {
        let t = self.velocity_threshold;
        if speed <= t {
            1.0
        } else {
            (-(speed - t) / t).exp()
        }
    }
}

/// Contact features inferred from the motion alone.
///
/// Heights are measured from the lowest vertex of the whole clip. A vertex's
/// contact probability decays with height and with speed; soles target the
/// floor, resting buttocks and thighs at seat height target seats, and resting
/// palms held out in front of the body at table height target tables.
pub fn estimate_features_heuristic(
    motion: &MotionSequence,
    skeleton: &Skeleton,
    template: &SkinnedTemplate,
    params: &HeuristicParams,
) -> Result<FeatureMap> {
    params.validate()?;
    let posed: Vec<(Vec<Vec3>, (Vec3, Vec3))> = motion
        .frames()
        .par_iter()
        .map(|pose| {
            let fk = forward_kinematics(skeleton, pose);
            let pelvis = fk.joints[joint::PELVIS];
            let forward = pelvis.rotation * Vec3::z();
            let forward = Vec3::new(forward.x, 0.0, forward.z).try_normalize(1e-9).unwrap_or(Vec3::z());
            (skin_vertices(template, &fk).vertices, (pelvis.translation, forward))
        })
        .collect();
    let support = posed
        .iter()
        .flat_map(|(v, _)| v.iter().map(|p| p.y))
        .fold(f64::INFINITY, f64::min);

    let n = template.vertex_count();
    let parts = template.parts();
    let left_hand: Vec<bool> = template
        .weights()
        .iter()
        .map(|w| w.weight_of(joint::LEFT_WRIST) + w.weight_of(joint::LEFT_HAND) > 0.5)
        .collect();
    let t = motion.timestamps();
    let frames = posed.len();

    let per_frame: Vec<(Vec<f32>, Vec<ClassId>)> = (0..frames)
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(frames - 1));
            let dt = t[hi] - t[lo];
            let verts = &posed[i].0;
            let height: Vec<f64> = verts.iter().map(|p| p.y - support).collect();
            let still: Vec<f64> = (0..n)
                .map(|v| params.stillness((posed[hi].0[v] - posed[lo].0[v]).norm() / dt))
                .collect();
            let mut contact: Vec<f64> = (0..n)
                .map(|v| (-height[v].max(0.0) / params.sigma).exp() * still[v])
                .collect();
            let mut semantic = vec![ClassId::NONE; n];
            for v in 0..n {
                if parts[v] == BodyPart::Sole {
                    semantic[v] = params.floor_class;
                }
            }

            let group_level = |members: &[usize]| -> Option<(f64, f64)> {
                if members.is_empty() {
                    return None;
                }
                let level = members.iter().map(|&v| height[v]).fold(f64::INFINITY, f64::min);
                let still = members.iter().map(|&v| still[v]).sum::<f64>() / members.len() as f64;
                Some((level, still))
            };
            let mut raise = |members: &[usize], level: f64, class: ClassId| {
                for &v in members {
                    let above = (height[v] - level).max(0.0);
                    if above < 3.0 * params.sigma {
                        contact[v] = contact[v].max((-above / params.sigma).exp() * still[v]);
                        semantic[v] = class;
                    }
                }
            };

            let buttocks: Vec<usize> = (0..n).filter(|&v| parts[v] == BodyPart::Buttock).collect();
            if let Some((seat, s)) = group_level(&buttocks) {
                if in_band(seat, params.seat_band) && s >= 0.5 {
                    let seated: Vec<usize> = (0..n)
                        .filter(|&v| matches!(parts[v], BodyPart::Buttock | BodyPart::Thigh))
                        .collect();
                    raise(&seated, seat, params.seat_class);
                }
            }

            let (pelvis, forward) = posed[i].1;
            for left in [true, false] {
                let palm: Vec<usize> = (0..n)
                    .filter(|&v| parts[v] == BodyPart::Palm && left_hand[v] == left)
                    .collect();
                let Some((level, s)) = group_level(&palm) else { continue };
                let centre = palm.iter().map(|&v| verts[v]).sum::<Vec3>() / palm.len() as f64;
                let reach = (centre - pelvis).dot(&forward);
                if in_band(level, params.table_band) && s >= 0.5 && reach > params.min_reach {
                    raise(&palm, level, params.table_class);
                }
            }
            (contact.into_iter().map(|c| c.clamp(0.0, 1.0) as f32).collect(), semantic)
        })
        .collect();

    let mut contact = Vec::with_capacity(frames * n);
    let mut semantic = Vec::with_capacity(frames * n);
    for (c, s) in per_frame {
        contact.extend(c);
        semantic.extend(s);
    }
    FeatureMap::new(frames, n, contact, semantic)
}

fn in_band(x: f64, band: [f64; 2]) -> bool {
    (band[0]..=band[1]).contains(&x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::synthetic::{self, ClipOptions};

    fn run(motion: &MotionSequence) -> FeatureMap {
        estimate_features_heuristic(
            motion,
            &Skeleton::default(),
            &SkinnedTemplate::bundled(),
            &HeuristicParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn standing_soles_touch_the_floor() {
        let tpl = SkinnedTemplate::bundled();
        let f = run(&synthetic::standing(&ClipOptions::default()).unwrap());
        let frame = f.frame(0);
        for v in tpl.vertices_of(BodyPart::Sole) {
            assert!(frame.contact[v] > 0.9, "sole {v}: {}", frame.contact[v]);
            assert_eq!(frame.semantic[v], SemanticPalette::FLOOR);
        }
        for v in tpl.vertices_of(BodyPart::Head) {
            assert!(frame.contact[v] < 0.05);
        }
    }

    #[test]
    fn jump_apex_has_no_contact() {
        let clip = synthetic::jump(&ClipOptions { frames: 40, ..ClipOptions::default() }, 0.4).unwrap();
        let f = run(&clip);
        let apex = 20;
        assert!(f.frame(apex).contact.iter().all(|c| *c < 0.2));
    }

    #[test]
    fn sitting_buttocks_target_the_chair() {
        let tpl = SkinnedTemplate::bundled();
        let f = run(&synthetic::sit(&ClipOptions::default(), 0.45).unwrap());
        let frame = f.frame(10);
        for v in tpl.vertices_of(BodyPart::Buttock) {
            assert_eq!(frame.semantic[v], SemanticPalette::CHAIR);
            assert!(frame.contact[v] > 0.7);
        }
    }

    #[test]
    fn resting_reach_targets_the_table() {
        let tpl = SkinnedTemplate::bundled();
        let f = run(&synthetic::reach(&ClipOptions::default(), 0.85).unwrap());
        let frame = f.frame(25);
        assert!(tpl.vertices_of(BodyPart::Palm).any(|v| frame.semantic[v] == SemanticPalette::TABLE));
    }

    #[test]
    fn vertical_shift_leaves_contact_unchanged() {
        let clip = synthetic::sit(&ClipOptions::default(), 0.5).unwrap();
        let shifted = clip
            .with_frames(
                clip.frames()
                    .iter()
                    .map(|p| p.clone().with_translation(p.translation + Vec3::new(0.0, 1.3, 0.0)))
                    .collect(),
            )
            .unwrap();
        let (a, b) = (run(&clip), run(&shifted));
        for (x, y) in a.contact().iter().zip(b.contact()) {
            assert!((x - y).abs() < 1e-5);
        }
        assert_eq!(a.semantic(), b.semantic());
    }

    #[test]
    fn out_of_range_probability_is_located() {
        let mut c = vec![0.0; 6];
        c[4] = 1.2;
        let err = FeatureMap::new(2, 3, c, vec![ClassId::NONE; 6]).unwrap_err().to_string();
        assert!(err.contains("frame 1") && err.contains("vertex 1"), "{err}");
    }

    #[test]
    fn unknown_class_is_rejected() {
        let f = FeatureMap::new(1, 2, vec![0.0; 2], vec![ClassId(0), ClassId(40)]).unwrap();
        assert!(f.validate_classes(&SemanticPalette::default()).is_err());
        assert!(FeatureMap::zeros(3, 4).validate_classes(&SemanticPalette::default()).is_ok());
    }
}
