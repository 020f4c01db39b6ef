use super::SceneFields;
use crate::body::{BodyPose, JOINT_COUNT};
use crate::geometry::SdfGrid;
use crate::interaction::FrameFeatures;
use crate::motion::frame_diff;
use crate::{Error, Result, Vec3};

/// Loss value and its gradient with respect to each vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexLoss {
    pub value: f64,
    pub gradient: Vec<Vec3>,
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { what, expected, actual })
    }
}

/// `sum f_c |sdf| + lambda_sem * sum f_c * dist_class`, the second sum over
/// vertices with a class that the scene provides a field for.
pub fn affordance_loss(
    vertices: &[Vec3],
    features: FrameFeatures<'_>,
    scene: &SceneFields,
    lambda_sem: f64,
) -> Result<VertexLoss> {
    scene_loss(vertices, features, scene, lambda_sem, 0.0)
}

/// `lambda_pen * sum max(0, -sdf)^2`.
pub fn penetration_loss(vertices: &[Vec3], sdf: &SdfGrid, lambda_pen: f64) -> Result<VertexLoss> {
    let mut value = 0.0;
    let mut gradient = vec![Vec3::zeros(); vertices.len()];
    for (v, g) in vertices.iter().zip(gradient.iter_mut()) {
        let s = sdf.sample(v)?;
        if s.value < 0.0 {
            value += lambda_pen * s.value * s.value;
            *g = s.gradient * (2.0 * lambda_pen * s.value);
        }
    }
    Ok(VertexLoss { value, gradient })
}

/// Affordance plus penetration in one pass over the vertices.
pub fn scene_loss(
    vertices: &[Vec3],
    features: FrameFeatures<'_>,
    scene: &SceneFields,
    lambda_sem: f64,
    lambda_pen: f64,
) -> Result<VertexLoss> {
    check_len("feature vertices", vertices.len(), features.contact.len())?;
    let mut value = 0.0;
    let mut gradient = vec![Vec3::zeros(); vertices.len()];
    for (v, p) in vertices.iter().enumerate() {
        let fc = features.contact[v] as f64;
        if fc == 0.0 && lambda_pen == 0.0 {
            continue;
        }
        let s = scene.sdf.sample(p)?;
        let g = &mut gradient[v];
        if fc > 0.0 {
            value += fc * s.value.abs();
            *g += s.gradient * (fc * sign(s.value));
            let class = features.semantic[v];
            if lambda_sem > 0.0 && !class.is_none() {
                if let Some(field) = scene.class_field(class) {
                    let d = field.sample(p)?;
                    value += lambda_sem * fc * d.value;
                    *g += d.gradient * (lambda_sem * fc);
                }
            }
        }
        if s.value < 0.0 && lambda_pen > 0.0 {
            value += lambda_pen * s.value * s.value;
            *g += s.gradient * (2.0 * lambda_pen * s.value);
        }
    }
    Ok(VertexLoss { value, gradient })
}

/// Distances within this of the surface take the zero subgradient of `|sdf|`.
pub const SURFACE_TOLERANCE: f64 = 1e-9;

fn sign(x: f64) -> f64 {
    if x > SURFACE_TOLERANCE {
        1.0
    } else if x < -SURFACE_TOLERANCE {
        -1.0
    } else {
        0.0
    }
}

/// `sum_i w_i * |rot_i - rot_i^orig|^2` with its gradient per frame.
pub fn pose_loss(
    current: &[BodyPose],
    original: &[BodyPose],
    frame_weights: &[f64],
) -> Result<(f64, Vec<[f64; 3 * JOINT_COUNT]>)> {
    check_len("original frames", current.len(), original.len())?;
    check_len("frame weights", current.len(), frame_weights.len())?;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(current.len());
    for ((c, o), w) in current.iter().zip(original).zip(frame_weights) {
        let (c, o) = (c.rotation_coords(), o.rotation_coords());
        let mut g = [0.0; 3 * JOINT_COUNT];
        for q in 0..3 * JOINT_COUNT {
            let d = c[q] - o[q];
            value += w * d * d;
            g[q] = 2.0 * w * d;
        }
        grads.push(g);
    }
    Ok((value, grads))
}

/// Gradient of the motion term per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionGradient {
    pub rotations: Vec<[f64; 3 * JOINT_COUNT]>,
    pub translations: Vec<Vec3>,
}

/// Squared error between current and original frame-to-frame differences:
/// rotation differences in full, translation differences scaled by
/// `lambda_tau`. Difference `i` (frame `i` to `i + 1`) is weighted by
/// `diff_weights[i]`.
pub fn motion_loss(
    current: &[BodyPose],
    original: &[BodyPose],
    lambda_tau: f64,
    diff_weights: &[f64],
) -> Result<(f64, MotionGradient)> {
    check_len("original frames", current.len(), original.len())?;
    let dc = frame_diff(current)?;
    let dorig = frame_diff(original)?;
    check_len("difference weights", dc.len(), diff_weights.len())?;
    let n = current.len();
    let mut value = 0.0;
    let mut grad = MotionGradient {
        rotations: vec![[0.0; 3 * JOINT_COUNT]; n],
        translations: vec![Vec3::zeros(); n],
    };
    for (i, ((a, b), w)) in dc.iter().zip(&dorig).zip(diff_weights).enumerate() {
        for q in 0..3 * JOINT_COUNT {
            let e = a.pose[q] - b.pose[q];
            value += w * e * e;
            grad.rotations[i + 1][q] += 2.0 * w * e;
            grad.rotations[i][q] -= 2.0 * w * e;
        }
        let e = a.translation - b.translation;
        value += w * lambda_tau * e.norm_squared();
        grad.translations[i + 1] += e * (2.0 * w * lambda_tau);
        grad.translations[i] -= e * (2.0 * w * lambda_tau);
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_class_distance_fields, build_sdf, ClassId, SdfOptions, TriangleMesh};
    use crate::interaction::SemanticPalette;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Floor slab with its top at y = 0, labelled floor.
    fn floor_scene() -> SceneFields {
        let mesh = TriangleMesh::cuboid(Vec3::new(-1.0, -0.5, -1.0), Vec3::new(1.0, 0.0, 1.0))
            .unwrap()
            .with_labels(vec![SemanticPalette::FLOOR; 8])
            .unwrap();
        let sdf = build_sdf(&mesh, &SdfOptions::default()).unwrap();
        let classes = build_class_distance_fields(&mesh, sdf.spec()).unwrap();
        SceneFields::new(sdf, Some(classes))
    }

    fn features<'a>(c: &'a [f32], s: &'a [ClassId]) -> FrameFeatures<'a> {
        FrameFeatures { contact: c, semantic: s }
    }

    #[test]
    fn zero_contact_gives_zero_affordance() {
        let scene = floor_scene();
        let v = vec![Vec3::new(0.1, 0.3, 0.2); 3];
        let l = affordance_loss(&v, features(&[0.0; 3], &[SemanticPalette::FLOOR; 3]), &scene, 1.0).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.gradient.iter().all(|g| *g == Vec3::zeros()));
    }

    #[test]
    fn affordance_on_and_above_the_floor() {
        let scene = floor_scene();
        let on = affordance_loss(&[Vec3::new(0.0, 0.0, 0.0)], features(&[1.0], &[SemanticPalette::FLOOR]), &scene, 1.0)
            .unwrap();
        assert!(on.value.abs() < 1e-6);
        let above =
            affordance_loss(&[Vec3::new(0.0, 0.2, 0.0)], features(&[1.0], &[SemanticPalette::FLOOR]), &scene, 1.0)
                .unwrap();
        assert!((above.value - 0.4).abs() < 1e-6, "{}", above.value);
    }

    #[test]
    fn penetration_arithmetic() {
        let scene = floor_scene();
        let l = penetration_loss(&[Vec3::new(0.0, -0.1, 0.0), Vec3::new(0.0, 0.5, 0.0)], &scene.sdf, 100.0).unwrap();
        assert!((l.value - 1.0).abs() < 1e-6);
        assert!(l.gradient[0].y < 0.0 && l.gradient[1] == Vec3::zeros());
    }

    #[test]
    fn penetration_descent_pushes_out() {
        let scene = floor_scene();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<Vec3> = (0..200)
            .map(|_| Vec3::new(rng.gen_range(-0.9..0.9), rng.gen_range(-0.24..-0.01), rng.gen_range(-0.9..0.9)))
            .collect();
        let l = penetration_loss(&v, &scene.sdf, 100.0).unwrap();
        for (p, g) in v.iter().zip(&l.gradient) {
            let n = scene.sdf.sample(p).unwrap().gradient;
            assert!((-g).dot(&n) > 0.0);
        }
    }

    #[test]
    fn pose_loss_values() {
        let a = vec![BodyPose::identity(); 3];
        assert_eq!(pose_loss(&a, &a, &[1.0; 3]).unwrap().0, 0.0);
        let mut b = a.clone();
        b[1].rotations[5].y += 0.1;
        let (v, g) = pose_loss(&b, &a, &[1.0; 3]).unwrap();
        assert!((v - 0.01).abs() < 1e-15);
        assert!((g[1][16] - 0.2).abs() < 1e-15);
        assert!(pose_loss(&b, &a[..2], &[1.0; 3]).is_err());
    }

    #[test]
    fn motion_loss_values() {
        let orig: Vec<BodyPose> = (0..4)
            .map(|i| BodyPose::identity().with_translation(Vec3::new(0.1 * i as f64, 0.0, 0.0)))
            .collect();
        assert_eq!(motion_loss(&orig, &orig, 0.1, &[1.0; 3]).unwrap().0, 0.0);
        let shifted: Vec<BodyPose> =
            orig.iter().map(|p| p.clone().with_translation(p.translation + Vec3::new(3.0, -1.0, 2.0))).collect();
        assert!(motion_loss(&shifted, &orig, 0.1, &[1.0; 3]).unwrap().0 < 1e-24);
        let mut bumped = orig.clone();
        let delta = 0.05;
        bumped[2].translation.z += delta;
        let (v, _) = motion_loss(&bumped, &orig, 0.1, &[1.0; 3]).unwrap();
        assert!((v - 0.1 * 2.0 * delta * delta).abs() < 1e-15);
    }

    #[test]
    fn pose_and_motion_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rand_pose = |rng: &mut ChaCha8Rng| {
            let c: Vec<f64> = (0..72).map(|_| rng.gen_range(-1.0..1.0)).collect();
            BodyPose::from_rotation_coords(Vec3::new(rng.gen(), rng.gen(), rng.gen()), &c)
        };
        let orig: Vec<BodyPose> = (0..5).map(|_| rand_pose(&mut rng)).collect();
        let cur: Vec<BodyPose> = (0..5).map(|_| rand_pose(&mut rng)).collect();
        let w = [0.1, 0.3, 0.2, 0.25, 0.15];
        let mut expect = 0.0;
        for i in 0..5 {
            let (a, b) = (cur[i].rotation_coords(), orig[i].rotation_coords());
            expect += w[i] * a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        }
        assert!((pose_loss(&cur, &orig, &w).unwrap().0 - expect).abs() < 1e-12);
    }
}
