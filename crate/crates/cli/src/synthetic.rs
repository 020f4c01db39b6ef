//! Seeded rooms of labelled boxes with machine-readable ground truth.

use anyhow::{bail, ensure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenefit::geometry::{Aabb, ClassId, TriangleMesh};
use scenefit::interaction::SemanticPalette;
use scenefit::motion::synthetic::{self as clips, ClipOptions};
use scenefit::motion::MotionSequence;
use scenefit::Vec3;
use serde::{Deserialize, Serialize};

/// Floor slab thickness below y = 0.
pub const FLOOR_THICKNESS: f64 = 0.2;
pub const WALL_THICKNESS: f64 = 0.1;
/// Resolution of the free-space map.
pub const FREE_CELL: f64 = 0.25;

/// An axis-aligned labelled box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPrimitive {
    pub class: ClassId,
    pub min: Vec3,
    pub max: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    /// Interior floor extent along x and z; the floor spans `[0, w] x [0, d]`.
    pub width: f64,
    pub depth: f64,
    pub wall_height: f64,
    /// Furniture standing on the floor.
    pub furniture: Vec<BoxPrimitive>,
}

/// A horizontal surface of one class, for assertions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub class: ClassId,
    pub height: f64,
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub floor_height: f64,
    pub seats: Vec<Surface>,
    pub tables: Vec<Surface>,
    pub free_cell: f64,
    /// Row-major over z then x: whether a floor cell is clear of furniture.
    pub free: Vec<Vec<bool>>,
}

pub struct SyntheticScene {
    pub mesh: TriangleMesh,
    pub truth: GroundTruth,
    /// Walkable interior, the bounds for candidate grids.
    pub interior: Aabb,
}

impl SyntheticSceneSpec {
    pub fn empty(width: f64, depth: f64) -> Self {
        Self {
            width,
            depth,
            wall_height: 2.5,
            furniture: Vec::new(),
        }
    }

    pub fn validate(&self, allow_overlap: bool) -> anyhow::Result<()> {
        ensure!(self.width > 0.0 && self.depth > 0.0, "room extents must be positive");
        ensure!(self.wall_height > 0.0, "wall height must be positive");
        let palette = SemanticPalette::default();
        for (i, b) in self.furniture.iter().enumerate() {
            ensure!(palette.contains(b.class), "primitive {i}: unknown class {:?}", b.class);
            ensure!((b.max - b.min).iter().all(|e| *e > 0.0), "primitive {i}: empty box");
            let inside = b.min.x >= 0.0
                && b.min.z >= 0.0
                && b.max.x <= self.width
                && b.max.z <= self.depth
                && b.min.y >= 0.0
                && b.max.y <= self.wall_height;
            ensure!(inside, "primitive {i} leaves the room");
            if !allow_overlap {
                for (j, o) in self.furniture[..i].iter().enumerate() {
                    if overlaps(b, o) {
                        bail!("primitives {j} and {i} overlap");
                    }
                }
            }
        }
        Ok(())
    }

    /// Floor slab, four walls outside the floor and the furniture, as one
    /// labelled mesh.
    pub fn build(&self) -> anyhow::Result<SyntheticScene> {
        self.validate(false)?;
        let (w, d, h, t) = (self.width, self.depth, self.wall_height, WALL_THICKNESS);
        let mut boxes = vec![
            BoxPrimitive {
                class: SemanticPalette::FLOOR,
                min: Vec3::new(0.0, -FLOOR_THICKNESS, 0.0),
                max: Vec3::new(w, 0.0, d),
            },
            wall(Vec3::new(-t, -FLOOR_THICKNESS, -t), Vec3::new(0.0, h, d + t)),
            wall(Vec3::new(w, -FLOOR_THICKNESS, -t), Vec3::new(w + t, h, d + t)),
            wall(Vec3::new(0.0, -FLOOR_THICKNESS, -t), Vec3::new(w, h, 0.0)),
            wall(Vec3::new(0.0, -FLOOR_THICKNESS, d), Vec3::new(w, h, d + t)),
        ];
        boxes.extend(self.furniture.iter().cloned());

        let mut mesh = TriangleMesh::new(Vec::new(), Vec::new())?;
        let mut labels = Vec::new();
        for b in &boxes {
            let cube = TriangleMesh::cuboid(b.min, b.max)?;
            labels.extend(std::iter::repeat(b.class).take(cube.vertices().len()));
            mesh.append(&cube);
        }
        let mesh = mesh.with_labels(labels)?;

        let surface = |b: &BoxPrimitive| Surface {
            class: b.class,
            height: b.max.y,
            min: [b.min.x, b.min.z],
            max: [b.max.x, b.max.z],
        };
        let seat_classes = [SemanticPalette::CHAIR, SemanticPalette::SOFA, SemanticPalette::BED];
        let (nx, nz) = ((w / FREE_CELL).ceil() as usize, (d / FREE_CELL).ceil() as usize);
        let free = (0..nz)
            .map(|k| {
                (0..nx)
                    .map(|i| {
                        let lo = [i as f64 * FREE_CELL, k as f64 * FREE_CELL];
                        let hi = [(lo[0] + FREE_CELL).min(w), (lo[1] + FREE_CELL).min(d)];
                        !self.furniture.iter().any(|b| {
                            b.min.x < hi[0] && b.max.x > lo[0] && b.min.z < hi[1] && b.max.z > lo[1]
                        })
                    })
                    .collect()
            })
            .collect();
        let truth = GroundTruth {
            floor_height: 0.0,
            seats: self.furniture.iter().filter(|b| seat_classes.contains(&b.class)).map(surface).collect(),
            tables: self.furniture.iter().filter(|b| b.class == SemanticPalette::TABLE).map(surface).collect(),
            free_cell: FREE_CELL,
            free,
        };
        let interior = Aabb {
            min: Vec3::new(0.0, 0.0, 0.0),
            max: Vec3::new(w, h, d),
        };
        Ok(SyntheticScene { mesh, truth, interior })
    }

    /// A room of 3 to 5 m per side with up to three pieces of furniture
    /// against the walls, leaving the centre free.
    pub fn random(rng: &mut impl Rng) -> Self {
        let width = rng.gen_range(3.0..5.0_f64);
        let depth = rng.gen_range(3.0..5.0_f64);
        let mut spec = Self::empty(round_cm(width), round_cm(depth));
        let kinds = [
            (SemanticPalette::CHAIR, [0.45, 0.5], 0.45),
            (SemanticPalette::TABLE, [1.2, 0.7], 0.75),
            (SemanticPalette::SOFA, [1.8, 0.8], 0.45),
            (SemanticPalette::BED, [1.9, 1.4], 0.5),
            (SemanticPalette::CABINET, [0.8, 0.45], 1.2),
        ];
        let count = rng.gen_range(0..=3);
        let mut attempts = 0;
        while spec.furniture.len() < count && attempts < 50 {
            attempts += 1;
            let (class, size, height) = kinds[rng.gen_range(0..kinds.len())];
            let (sx, sz) = if rng.gen_bool(0.5) { (size[0], size[1]) } else { (size[1], size[0]) };
            if sx > spec.width - 0.2 || sz > spec.depth - 0.2 {
                continue;
            }
            let (x, z) = match rng.gen_range(0..4) {
                0 => (rng.gen_range(0.0..spec.width - sx), 0.0),
                1 => (rng.gen_range(0.0..spec.width - sx), spec.depth - sz),
                2 => (0.0, rng.gen_range(0.0..spec.depth - sz)),
                _ => (spec.width - sx, rng.gen_range(0.0..spec.depth - sz)),
            };
            let b = BoxPrimitive {
                class,
                min: Vec3::new(round_cm(x), 0.0, round_cm(z)),
                max: Vec3::new(round_cm(x + sx), height, round_cm(z + sz)),
            };
            let b = BoxPrimitive {
                max: Vec3::new(b.max.x.min(spec.width), b.max.y, b.max.z.min(spec.depth)),
                ..b
            };
            if !spec.furniture.iter().any(|o| overlaps(&b, o)) {
                spec.furniture.push(b);
            }
        }
        spec
    }
}

/// Five labelled clips: standing, walking, sitting, reaching and jumping.
/// Every frame gets up to 2 cm of upward capture jitter.
pub fn motion_suite(seed: u64) -> anyhow::Result<Vec<(String, MotionSequence)>> {
    let opts = |frames, k: u64| ClipOptions {
        fps: 30.0,
        frames,
        jitter: 0.02,
        seed: seed.wrapping_mul(31).wrapping_add(k),
    };
    Ok(vec![
        ("stand".into(), clips::standing(&opts(30, 0))?),
        ("walk".into(), clips::walk(&opts(45, 1), |_| 0.8)?),
        ("sit".into(), clips::sit(&opts(30, 2), 0.45)?),
        ("reach".into(), clips::reach(&opts(30, 3), 0.75)?),
        ("jump".into(), clips::jump(&opts(30, 4), 0.3)?),
    ])
}

/// The fixed randomized suite: `count` rooms from one seed.
pub fn scene_suite(seed: u64, count: usize) -> Vec<SyntheticSceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| SyntheticSceneSpec::random(&mut rng)).collect()
}

fn wall(min: Vec3, max: Vec3) -> BoxPrimitive {
    BoxPrimitive {
        class: SemanticPalette::WALL,
        min,
        max,
    }
}

fn overlaps(a: &BoxPrimitive, b: &BoxPrimitive) -> bool {
    (0..3).all(|k| a.min[k] < b.max[k] && b.min[k] < a.max[k])
}

fn round_cm(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::{write_labels, write_obj};

    #[test]
    fn empty_room_is_floor_and_four_walls() {
        let scene = SyntheticSceneSpec::empty(4.0, 4.0).build().unwrap();
        let labels = scene.mesh.labels().unwrap();
        assert_eq!(scene.mesh.vertices().len(), 5 * 8);
        assert_eq!(labels.iter().filter(|c| **c == SemanticPalette::FLOOR).count(), 8);
        assert_eq!(labels.iter().filter(|c| **c == SemanticPalette::WALL).count(), 32);
        let floor_top = scene
            .mesh
            .vertices()
            .iter()
            .zip(labels)
            .filter(|(_, c)| **c == SemanticPalette::FLOOR)
            .map(|(v, _)| v.y)
            .fold(f64::MIN, f64::max);
        assert_eq!(floor_top, scene.truth.floor_height);
        assert!(scene.truth.free.iter().flatten().all(|f| *f));
        assert_eq!(scene.truth.free.len(), 16);
    }

    #[test]
    fn chair_seat_in_ground_truth() {
        let mut spec = SyntheticSceneSpec::empty(4.0, 4.0);
        spec.furniture.push(BoxPrimitive {
            class: SemanticPalette::CHAIR,
            min: Vec3::new(1.0, 0.0, 1.0),
            max: Vec3::new(1.5, 0.45, 1.5),
        });
        let scene = spec.build().unwrap();
        assert_eq!(scene.truth.seats.len(), 1);
        assert_eq!(scene.truth.seats[0].class, SemanticPalette::CHAIR);
        assert_eq!(scene.truth.seats[0].height, 0.45);
        assert!(!scene.truth.free[4][4]);
        assert!(scene.truth.free[0][0]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = SyntheticSceneSpec::empty(4.0, 4.0);
        let b = BoxPrimitive {
            class: SemanticPalette::TABLE,
            min: Vec3::new(1.0, 0.0, 1.0),
            max: Vec3::new(2.0, 0.75, 2.0),
        };
        spec.furniture = vec![b.clone(), b.clone()];
        assert!(spec.build().is_err());
        assert!(spec.validate(true).is_ok());
        spec.furniture = vec![BoxPrimitive {
            max: Vec3::new(4.5, 0.75, 2.0),
            ..b.clone()
        }];
        assert!(spec.build().is_err());
        spec.furniture = vec![BoxPrimitive { class: ClassId(99), ..b }];
        assert!(spec.build().is_err());
    }

    #[test]
    fn suite_is_bit_reproducible() {
        let render = |seed| -> Vec<(String, String, String)> {
            scene_suite(seed, 20)
                .iter()
                .map(|s| {
                    let scene = s.build().unwrap();
                    (
                        write_obj(&scene.mesh),
                        write_labels(scene.mesh.labels().unwrap()),
                        serde_json::to_string(&scene.truth).unwrap(),
                    )
                })
                .collect()
        };
        let a = render(11);
        assert_eq!(a, render(11));
        assert_ne!(a, render(12));
        let furnished = scene_suite(11, 20).iter().filter(|s| !s.furniture.is_empty()).count();
        assert!(furnished > 5, "{furnished} furnished rooms");
    }

    #[test]
    fn motion_suite_is_reproducible() {
        let a = motion_suite(3).unwrap();
        assert_eq!(a.len(), 5);
        let b = motion_suite(3).unwrap();
        for ((na, ma), (nb, mb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(ma.frames(), mb.frames());
        }
    }
}
