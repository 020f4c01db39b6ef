use serde::{Deserialize, Serialize};

use super::skeleton::{joint, JOINT_COUNT};
use crate::geometry::TriangleMesh;
use crate::{Error, Result, Vec3};

pub const MAX_INFLUENCES: usize = 4;

/// Vertex count of the bundled template.
pub const BUNDLED_VERTEX_COUNT: usize = 655;

const SIDES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPart {
    Head,
    Torso,
    Pelvis,
    Buttock,
    Thigh,
    Shin,
    Foot,
    Sole,
    UpperArm,
    Forearm,
    Hand,
    Palm,
    Other,
}

/// Up to four `(joint, weight)` pairs summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexWeights(Vec<(usize, f64)>);

impl VertexWeights {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.is_empty() || entries.len() > MAX_INFLUENCES {
            return Err(Error::InvalidTemplate(format!(
                "a vertex needs 1 to {MAX_INFLUENCES} influences, got {}",
                entries.len()
            )));
        }
        let mut sum = 0.0;
        for &(j, w) in &entries {
            if j >= JOINT_COUNT || !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidTemplate(format!("bad influence ({j}, {w})")));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidTemplate(format!("weights sum to {sum}")));
        }
        Ok(Self(entries))
    }

    /// Drops zero weights, merges repeated joints and renormalizes.
    fn normalized(entries: &[(usize, f64)]) -> Self {
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for &(j, w) in entries.iter().filter(|e| e.1 > 0.0) {
            match merged.iter_mut().find(|e| e.0 == j) {
                Some(e) => e.1 += w,
                None => merged.push((j, w)),
            }
        }
        let sum: f64 = merged.iter().map(|e| e.1).sum();
        merged.iter_mut().for_each(|e| e.1 /= sum);
        Self(merged)
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.0
    }

    pub fn weight_of(&self, joint: usize) -> f64 {
        self.0.iter().filter(|e| e.0 == joint).map(|e| e.1).sum()
    }
}

/// Rest-pose surface with skinning weights and body-part tags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkinnedTemplate {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    weights: Vec<VertexWeights>,
    parts: Vec<BodyPart>,
}

impl SkinnedTemplate {
    pub fn new(
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        weights: Vec<VertexWeights>,
        parts: Option<Vec<BodyPart>>,
    ) -> Result<Self> {
        let n = vertices.len();
        if n == 0 {
            return Err(Error::InvalidTemplate("template has no vertices".into()));
        }
        if weights.len() != n {
            return Err(Error::LengthMismatch {
                what: "skinning weights",
                expected: n,
                actual: weights.len(),
            });
        }
        let parts = parts.unwrap_or_else(|| vec![BodyPart::Other; n]);
        if parts.len() != n {
            return Err(Error::LengthMismatch {
                what: "body parts",
                expected: n,
                actual: parts.len(),
            });
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidTemplate("non-finite vertex".into()));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::InvalidTemplate(format!("triangle {t:?} out of range")));
        }
        for w in &weights {
            VertexWeights::new(w.0.clone())?;
        }
        Ok(Self {
            vertices,
            triangles,
            weights,
            parts,
        })
    }

    /// The bundled low-poly body matching [`Skeleton::default`](super::Skeleton).
    pub fn bundled() -> Self {
        let mut b = Builder::default();
        b.build_body();
        debug_assert_eq!(b.vertices.len(), BUNDLED_VERTEX_COUNT);
        Self::new(b.vertices, b.triangles, b.weights, Some(b.parts)).expect("bundled template is valid")
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn weights(&self) -> &[VertexWeights] {
        &self.weights
    }

    pub fn parts(&self) -> &[BodyPart] {
        &self.parts
    }

    pub fn vertices_of(&self, part: BodyPart) -> impl Iterator<Item = usize> + '_ {
        self.parts
            .iter()
            .enumerate()
            .filter(move |(_, p)| **p == part)
            .map(|(i, _)| i)
    }

    /// Surface mesh through the given posed vertices, for export.
    pub fn surface(&self, posed: &[Vec3]) -> Result<TriangleMesh> {
        let tris = self
            .triangles
            .iter()
            .copied()
            .filter(|t| {
                let [a, b, c] = t.map(|i| posed[i as usize]);
                (b - a).cross(&(c - a)).norm() > 2e-12
            })
            .collect();
        TriangleMesh::new(posed.to_vec(), tris)
    }
}

struct Ring {
    center: Vec3,
    u: Vec3,
    v: Vec3,
    weights: Vec<(usize, f64)>,
}

#[derive(Default)]
struct Builder {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    weights: Vec<VertexWeights>,
    parts: Vec<BodyPart>,
}

impl Builder {
    fn push(&mut self, p: Vec3, w: &[(usize, f64)], part: BodyPart) -> u32 {
        self.vertices.push(p);
        self.weights.push(VertexWeights::normalized(w));
        self.parts.push(part);
        (self.vertices.len() - 1) as u32
    }

    /// Ring vertex `k` sits at angle `k * 45deg` from `u` towards `v`; the
    /// frame `(u, v, axis)` is right-handed so faces wind outward.
    fn tube(
        &mut self,
        rings: &[Ring],
        caps: (bool, bool),
        part: impl Fn(usize, usize) -> BodyPart,
        cap_parts: (BodyPart, BodyPart),
    ) {
        let first = self.vertices.len() as u32;
        for (r, ring) in rings.iter().enumerate() {
            for k in 0..SIDES {
                let phi = k as f64 * std::f64::consts::TAU / SIDES as f64;
                let p = ring.center + ring.u * phi.cos() + ring.v * phi.sin();
                self.push(p, &ring.weights, part(r, k));
            }
        }
        let idx = |r: usize, k: usize| first + (r * SIDES + k % SIDES) as u32;
        for r in 0..rings.len() - 1 {
            for k in 0..SIDES {
                let (a0, a1, b0, b1) = (idx(r, k), idx(r, k + 1), idx(r + 1, k), idx(r + 1, k + 1));
                self.triangles.push([a0, a1, b1]);
                self.triangles.push([a0, b1, b0]);
            }
        }
        if caps.0 {
            let ring = &rings[0];
            let c = self.push(ring.center, &ring.weights, cap_parts.0);
            for k in 0..SIDES {
                self.triangles.push([c, idx(0, k + 1), idx(0, k)]);
            }
        }
        if caps.1 {
            let last = rings.len() - 1;
            let ring = &rings[last];
            let c = self.push(ring.center, &ring.weights, cap_parts.1);
            for k in 0..SIDES {
                self.triangles.push([c, idx(last, k), idx(last, k + 1)]);
            }
        }
    }

    /// Straight limb segment from `a` to `b` owned by `owner`, blending half
    /// its weight into the neighbouring joints over the outer quarters.
    #[allow(clippy::too_many_arguments)]
    fn limb(
        &mut self,
        a: Vec3,
        b: Vec3,
        n_rings: usize,
        radii: (f64, f64),
        owner: usize,
        proximal: Option<usize>,
        distal: Option<usize>,
        caps: (bool, bool),
        part: BodyPart,
    ) {
        let axis = (b - a).normalize();
        let (u, v) = frame(&axis);
        let rings: Vec<Ring> = (0..n_rings)
            .map(|i| {
                let t = i as f64 / (n_rings - 1) as f64;
                let r = radii.0 + (radii.1 - radii.0) * t;
                let mut w = vec![(owner, 1.0)];
                if let Some(p) = proximal.filter(|_| t < 0.25) {
                    w.push((p, 1.0 - t / 0.25));
                    w[0].1 = 1.0 + t / 0.25;
                }
                if let Some(d) = distal.filter(|_| t > 0.75) {
                    let s = (t - 0.75) / 0.25;
                    w.push((d, s));
                    w[0].1 = 2.0 - s;
                }
                Ring {
                    center: a + (b - a) * t,
                    u: u * r,
                    v: v * r,
                    weights: w,
                }
            })
            .collect();
        self.tube(&rings, caps, |_, _| part, (part, part));
    }

    fn build_body(&mut self) {
        use joint::*;
        let rest = super::Skeleton::default().rest_positions();
        let torso_z = -0.01;

        // Pelvis: vertical elliptic tube; the lower back of it carries the seat contact.
        let pelvis_rings: Vec<Ring> = [0.80, 0.90, 1.00]
            .iter()
            .enumerate()
            .map(|(i, &y)| Ring {
                center: Vec3::new(0.0, y, 0.0),
                u: Vec3::new(0.0, 0.0, -0.11),
                v: Vec3::new(-0.16, 0.0, 0.0),
                weights: if i == 2 {
                    vec![(PELVIS, 0.5), (SPINE1, 0.5)]
                } else {
                    vec![(PELVIS, 1.0)]
                },
            })
            .collect();
        self.tube(
            &pelvis_rings,
            (true, true),
            |r, k| {
                if r == 0 && matches!(k, 7 | 0 | 1) {
                    BodyPart::Buttock
                } else {
                    BodyPart::Pelvis
                }
            },
            (BodyPart::Buttock, BodyPart::Pelvis),
        );

        let torso: [(f64, f64, &[(usize, f64)]); 6] = [
            (1.00, 0.15, &[(PELVIS, 0.5), (SPINE1, 0.5)]),
            (1.09, 0.15, &[(SPINE1, 1.0)]),
            (1.18, 0.16, &[(SPINE2, 1.0)]),
            (1.27, 0.17, &[(SPINE3, 1.0)]),
            (1.36, 0.17, &[(SPINE3, 0.7), (LEFT_COLLAR, 0.15), (RIGHT_COLLAR, 0.15)]),
            (1.45, 0.10, &[(SPINE3, 0.5), (NECK, 0.5)]),
        ];
        let torso_rings: Vec<Ring> = torso
            .iter()
            .map(|&(y, half_width, w)| Ring {
                center: Vec3::new(0.0, y, torso_z),
                u: Vec3::new(0.0, 0.0, -0.11),
                v: Vec3::new(-half_width, 0.0, 0.0),
                weights: w.to_vec(),
            })
            .collect();
        self.tube(&torso_rings, (false, false), |_, _| BodyPart::Torso, (BodyPart::Torso, BodyPart::Torso));

        let head: [(f64, f64); 6] = [
            (1.45, 0.05),
            (1.51, 0.06),
            (1.57, 0.09),
            (1.63, 0.10),
            (1.69, 0.09),
            (1.75, 0.06),
        ];
        let head_rings: Vec<Ring> = head
            .iter()
            .enumerate()
            .map(|(i, &(y, r))| Ring {
                center: Vec3::new(0.0, y, 0.02),
                u: Vec3::new(0.0, 0.0, -r),
                v: Vec3::new(-r, 0.0, 0.0),
                weights: match i {
                    0 => vec![(NECK, 1.0)],
                    1 => vec![(NECK, 0.5), (HEAD, 0.5)],
                    _ => vec![(HEAD, 1.0)],
                },
            })
            .collect();
        self.tube(&head_rings, (false, true), |_, _| BodyPart::Head, (BodyPart::Head, BodyPart::Head));

        for side in [Side::Left, Side::Right] {
            let j = |l: usize, r: usize| if side == Side::Left { l } else { r };
            let (hip, knee, ankle, foot) = (j(LEFT_HIP, RIGHT_HIP), j(LEFT_KNEE, RIGHT_KNEE), j(LEFT_ANKLE, RIGHT_ANKLE), j(LEFT_FOOT, RIGHT_FOOT));
            self.limb(rest[hip], rest[knee], 6, (0.075, 0.05), hip, Some(PELVIS), Some(knee), (true, true), BodyPart::Thigh);
            self.limb(rest[knee], rest[ankle], 5, (0.05, 0.04), knee, Some(hip), Some(ankle), (true, true), BodyPart::Shin);
            self.foot(rest[ankle], ankle, foot);

            let (collar, shoulder, elbow, wrist, hand) = (
                j(LEFT_COLLAR, RIGHT_COLLAR),
                j(LEFT_SHOULDER, RIGHT_SHOULDER),
                j(LEFT_ELBOW, RIGHT_ELBOW),
                j(LEFT_WRIST, RIGHT_WRIST),
                j(LEFT_HAND, RIGHT_HAND),
            );
            self.limb(rest[shoulder], rest[elbow], 5, (0.05, 0.04), shoulder, Some(collar), Some(elbow), (false, true), BodyPart::UpperArm);
            self.limb(rest[elbow], rest[wrist], 5, (0.04, 0.032), elbow, Some(shoulder), Some(wrist), (false, true), BodyPart::Forearm);
            self.hand(rest[wrist], rest[hand], wrist, hand);
        }
    }

    /// Flat-bottomed foot along +z whose sole touches y = 0 only under the heel
    /// and the ball.
    fn foot(&mut self, ankle_pos: Vec3, ankle: usize, foot: usize) {
        const Z: [f64; 8] = [-0.08, -0.045, -0.01, 0.025, 0.06, 0.095, 0.13, 0.165];
        const SOLE: [f64; 8] = [0.0, 0.002, 0.004, 0.005, 0.002, 0.0, 0.001, 0.003];
        const HALF_HEIGHT: [f64; 8] = [0.035, 0.04, 0.04, 0.035, 0.03, 0.025, 0.02, 0.015];
        const HALF_WIDTH: [f64; 8] = [0.03, 0.035, 0.04, 0.045, 0.045, 0.045, 0.04, 0.03];
        let x = ankle_pos.x + 0.005 * ankle_pos.x.signum();
        let rings: Vec<Ring> = (0..8)
            .map(|i| Ring {
                center: Vec3::new(x, SOLE[i] + HALF_HEIGHT[i], ankle_pos.z + Z[i]),
                u: Vec3::new(0.0, -HALF_HEIGHT[i], 0.0),
                v: Vec3::new(HALF_WIDTH[i], 0.0, 0.0),
                weights: match i {
                    0..=4 => vec![(ankle, 1.0)],
                    5 => vec![(ankle, 0.5), (foot, 0.5)],
                    _ => vec![(foot, 1.0)],
                },
            })
            .collect();
        self.tube(
            &rings,
            (true, true),
            |_, k| if k == 0 { BodyPart::Sole } else { BodyPart::Foot },
            (BodyPart::Foot, BodyPart::Foot),
        );
    }

    /// Flattened hand with the palm facing down in the rest pose.
    fn hand(&mut self, wrist_pos: Vec3, hand_pos: Vec3, wrist: usize, hand: usize) {
        let axis = (hand_pos - wrist_pos).normalize();
        let (u, v) = frame(&axis);
        let tip = hand_pos + axis * 0.10;
        let rings: Vec<Ring> = (0..3)
            .map(|i| {
                let t = i as f64 / 2.0;
                Ring {
                    center: wrist_pos + (tip - wrist_pos) * t,
                    u: u * 0.015,
                    v: v * 0.045,
                    weights: match i {
                        0 => vec![(wrist, 1.0)],
                        1 => vec![(wrist, 0.5), (hand, 0.5)],
                        _ => vec![(hand, 1.0)],
                    },
                }
            })
            .collect();
        self.tube(
            &rings,
            (true, true),
            |_, k| if matches!(k, 7 | 0 | 1) { BodyPart::Palm } else { BodyPart::Hand },
            (BodyPart::Hand, BodyPart::Hand),
        );
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

/// Unit vectors `(u, v)` orthogonal to `axis` with `v = axis x u`; `u` points
/// down where possible, backwards for near-vertical axes.
fn frame(axis: &Vec3) -> (Vec3, Vec3) {
    let reference = if axis.y.abs() < 0.9 {
        Vec3::new(0.0, -1.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, -1.0)
    };
    let u = (reference - axis * axis.dot(&reference)).normalize();
    (u, axis.cross(&u))
}
