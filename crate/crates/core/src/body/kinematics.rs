use nalgebra::SMatrix;

use super::rotation::{rotation_matrix, rotation_with_derivatives};
use super::skeleton::{BodyPose, Skeleton, JOINT_COUNT, POSE_PARAMS};
use super::template::SkinnedTemplate;
use crate::{Mat3, Vec3};

/// `x -> rotation * x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn compose(&self, inner: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * inner.rotation,
            translation: self.rotation * inner.translation + self.translation,
        }
    }
}

/// Joint frames in world space and the skinning transforms derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct PosedSkeleton {
    /// Orientation and position of every joint.
    pub joints: Vec<RigidTransform>,
    /// Maps rest-pose points to posed points, one per joint.
    pub skinning: Vec<RigidTransform>,
    local: Vec<Mat3>,
}

impl PosedSkeleton {
    pub fn joint_positions(&self) -> Vec<Vec3> {
        self.joints.iter().map(|t| t.translation).collect()
    }
}

pub fn forward_kinematics(skeleton: &Skeleton, pose: &BodyPose) -> PosedSkeleton {
    let rest = skeleton.rest_positions();
    let local: Vec<Mat3> = pose.rotations.iter().map(rotation_matrix).collect();
    let mut joints: Vec<RigidTransform> = Vec::with_capacity(JOINT_COUNT);
    for j in 0..JOINT_COUNT {
        let frame = match skeleton.parent(j) {
            None => RigidTransform {
                rotation: local[j],
                translation: rest[j] + pose.translation,
            },
            Some(p) => joints[p].compose(&RigidTransform {
                rotation: local[j],
                translation: skeleton.offset(j),
            }),
        };
        joints.push(frame);
    }
    let skinning = joints
        .iter()
        .zip(&rest)
        .map(|(t, r)| RigidTransform {
            rotation: t.rotation,
            translation: t.translation - t.rotation * r,
        })
        .collect();
    PosedSkeleton {
        joints,
        skinning,
        local,
    }
}

/// Posed surface vertices sharing the template's topology.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyMesh {
    pub vertices: Vec<Vec3>,
}

pub fn skin_vertices(template: &SkinnedTemplate, posed: &PosedSkeleton) -> BodyMesh {
    let vertices = template
        .vertices()
        .iter()
        .zip(template.weights())
        .map(|(r, w)| {
            w.entries()
                .iter()
                .fold(Vec3::zeros(), |acc, &(j, wj)| acc + posed.skinning[j].apply(r) * wj)
        })
        .collect();
    BodyMesh { vertices }
}

/// Pulls per-vertex gradients `dL/dv` back to the pose parameters, returned
/// as 72 rotation coordinates (joint-major) followed by the root translation.
pub fn pose_vjp(
    template: &SkinnedTemplate,
    skeleton: &Skeleton,
    pose: &BodyPose,
    posed: &PosedSkeleton,
    vertex_grads: &[Vec3],
) -> [f64; POSE_PARAMS] {
    assert_eq!(vertex_grads.len(), template.vertex_count());
    let rest = skeleton.rest_positions();
    let mut g_rot = [Mat3::zeros(); JOINT_COUNT];
    let mut g_pos = [Vec3::zeros(); JOINT_COUNT];
    for ((r, w), g) in template.vertices().iter().zip(template.weights()).zip(vertex_grads) {
        if *g == Vec3::zeros() {
            continue;
        }
        for &(j, wj) in w.entries() {
            let wg = g * wj;
            g_rot[j] += wg * r.transpose();
            g_pos[j] += wg;
        }
    }
    // Skinning translation is p_j - R_j * rest_j.
    for j in 0..JOINT_COUNT {
        g_rot[j] -= g_pos[j] * rest[j].transpose();
    }
    let mut g_local = [Mat3::zeros(); JOINT_COUNT];
    for j in (1..JOINT_COUNT).rev() {
        let p = skeleton.parent(j).expect("non-root joint has a parent");
        let parent_rot = posed.joints[p].rotation;
        g_local[j] = parent_rot.transpose() * g_rot[j];
        let (gr, gp) = (g_rot[j], g_pos[j]);
        g_rot[p] += gr * posed.local[j].transpose() + gp * skeleton.offset(j).transpose();
        g_pos[p] += gp;
    }
    g_local[0] = g_rot[0];

    let mut out = [0.0; POSE_PARAMS];
    for j in 0..JOINT_COUNT {
        if g_local[j] == Mat3::zeros() {
            continue;
        }
        let (_, dr) = rotation_with_derivatives(&pose.rotations[j]);
        for i in 0..3 {
            out[3 * j + i] = g_local[j].component_mul(&dr[i]).sum();
        }
    }
    out[3 * JOINT_COUNT..].copy_from_slice(g_pos[0].as_slice());
    out
}

/// Derivatives of every posed vertex with respect to the pose parameters,
/// evaluated per vertex on demand.
pub struct PoseJacobian<'a> {
    template: &'a SkinnedTemplate,
    /// `d_skinning[q][j]`: derivative of joint `j`'s skinning transform with
    /// respect to rotation coordinate `q`.
    d_skinning: Vec<[Option<(Mat3, Vec3)>; JOINT_COUNT]>,
}

pub type VertexJacobian = SMatrix<f64, 3, POSE_PARAMS>;

impl<'a> PoseJacobian<'a> {
    pub fn new(template: &'a SkinnedTemplate, skeleton: &Skeleton, pose: &BodyPose) -> Self {
        let posed = forward_kinematics(skeleton, pose);
        let rest = skeleton.rest_positions();
        let mut d_skinning = Vec::with_capacity(3 * JOINT_COUNT);
        for a in 0..JOINT_COUNT {
            let (_, dr) = rotation_with_derivatives(&pose.rotations[a]);
            let parent_rot = skeleton.parent(a).map_or(Mat3::identity(), |p| posed.joints[p].rotation);
            for dr_i in dr {
                let mut d_frames: [Option<(Mat3, Vec3)>; JOINT_COUNT] = [None; JOINT_COUNT];
                d_frames[a] = Some((parent_rot * dr_i, Vec3::zeros()));
                for k in a + 1..JOINT_COUNT {
                    let Some(p) = skeleton.parent(k) else { continue };
                    if let Some((d_rot, d_pos)) = d_frames[p] {
                        d_frames[k] = Some((d_rot * posed.local[k], d_pos + d_rot * skeleton.offset(k)));
                    }
                }
                let mut d_skin = d_frames;
                for (k, d) in d_skin.iter_mut().enumerate() {
                    if let Some((d_rot, d_pos)) = d {
                        *d_pos -= *d_rot * rest[k];
                    }
                }
                d_skinning.push(d_skin);
            }
        }
        Self { template, d_skinning }
    }

    /// 3 x 75 Jacobian of vertex `v`.
    pub fn vertex(&self, v: usize) -> VertexJacobian {
        let r = self.template.vertices()[v];
        let w = &self.template.weights()[v];
        let mut jac = VertexJacobian::zeros();
        for (q, d_skin) in self.d_skinning.iter().enumerate() {
            let mut col = Vec3::zeros();
            for &(j, wj) in w.entries() {
                if let Some((d_rot, d_t)) = d_skin[j] {
                    col += (d_rot * r + d_t) * wj;
                }
            }
            jac.set_column(q, &col);
        }
        for i in 0..3 {
            jac[(i, 3 * JOINT_COUNT + i)] = 1.0;
        }
        jac
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::joint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> BodyPose {
        let mut rotations = [Vec3::zeros(); JOINT_COUNT];
        for r in rotations.iter_mut() {
            *r = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let t = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        BodyPose::new(t, rotations).unwrap()
    }

    /// Homogeneous 4x4 chain evaluated recursively from the root.
    fn naive_joint_position(skel: &Skeleton, pose: &BodyPose, j: usize) -> Vec3 {
        fn world(skel: &Skeleton, pose: &BodyPose, j: usize) -> nalgebra::Matrix4<f64> {
            let mut m = nalgebra::Matrix4::identity();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation_matrix(&pose.rotations[j]));
            match skel.parent(j) {
                None => {
                    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&(skel.offset(j) + pose.translation));
                    m
                }
                Some(p) => {
                    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&skel.offset(j));
                    world(skel, pose, p) * m
                }
            }
        }
        let m = world(skel, pose, j);
        Vec3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)])
    }

    #[test]
    fn identity_pose_gives_rest() {
        let skel = Skeleton::default();
        let tpl = SkinnedTemplate::bundled();
        let posed = forward_kinematics(&skel, &BodyPose::identity());
        for (a, b) in posed.joint_positions().iter().zip(skel.rest_positions()) {
            assert_eq!(*a, b);
        }
        let mesh = skin_vertices(&tpl, &posed);
        for (a, b) in mesh.vertices.iter().zip(tpl.vertices()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn root_translation_shifts_everything() {
        let skel = Skeleton::default();
        let shift = Vec3::new(1.0, 2.0, 3.0);
        let posed = forward_kinematics(&skel, &BodyPose::identity().with_translation(shift));
        for (a, b) in posed.joint_positions().iter().zip(skel.rest_positions()) {
            assert!((a - b - shift).norm() < 1e-15);
        }
    }

    #[test]
    fn fk_matches_recursive_evaluator() {
        let skel = Skeleton::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let pose = random_pose(&mut rng);
            let posed = forward_kinematics(&skel, &pose);
            for j in 0..JOINT_COUNT {
                let naive = naive_joint_position(&skel, &pose, j);
                assert!((posed.joints[j].translation - naive).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn skinning_matches_per_vertex_blend() {
        let skel = Skeleton::default();
        let tpl = SkinnedTemplate::bundled();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pose = random_pose(&mut rng);
        let posed = forward_kinematics(&skel, &pose);
        let mesh = skin_vertices(&tpl, &posed);
        let rest = skel.rest_positions();
        let mut centroid = Vec3::zeros();
        for (r, w) in tpl.vertices().iter().zip(tpl.weights()) {
            for &(j, wj) in w.entries() {
                let jt = &posed.joints[j];
                centroid += (jt.rotation * (r - rest[j]) + jt.translation) * wj;
            }
        }
        centroid /= tpl.vertex_count() as f64;
        let got = mesh.vertices.iter().sum::<Vec3>() / tpl.vertex_count() as f64;
        assert!((got - centroid).norm() < 1e-12);
    }

    #[test]
    fn rigid_root_weighting_is_rigid() {
        let skel = Skeleton::default();
        let tpl = SkinnedTemplate::bundled();
        let pose = BodyPose::identity()
            .with_rotation(0, Vec3::new(0.2, 0.5, -0.1))
            .with_translation(Vec3::new(0.3, 0.0, -1.0));
        let posed = forward_kinematics(&skel, &pose);
        let mesh = skin_vertices(&tpl, &posed);
        for (v, w) in tpl.weights().iter().enumerate() {
            if w.weight_of(joint::PELVIS) == 1.0 {
                let expect = posed.skinning[0].apply(&tpl.vertices()[v]);
                assert!((mesh.vertices[v] - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let skel = Skeleton::default();
        let tpl = SkinnedTemplate::bundled();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-5;
        for _ in 0..20 {
            let pose = random_pose(&mut rng);
            let jac = PoseJacobian::new(&tpl, &skel, &pose);
            for _ in 0..5 {
                let v = rng.gen_range(0..tpl.vertex_count());
                let q = rng.gen_range(0..POSE_PARAMS);
                let eval = |delta: f64| {
                    let mut p = pose.clone();
                    if q < 3 * JOINT_COUNT {
                        p.rotations[q / 3][q % 3] += delta;
                    } else {
                        p.translation[q - 3 * JOINT_COUNT] += delta;
                    }
                    skin_vertices(&tpl, &forward_kinematics(&skel, &p)).vertices[v]
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = jac.vertex(v).column(q).into_owned();
                let err = (fd - an).norm() / fd.norm().max(an.norm()).max(1e-6);
                assert!(err < 1e-3, "vertex {v} param {q}: fd {fd:?} analytic {an:?}");
            }
        }
    }

    #[test]
    fn jacobian_structural_zeros() {
        let skel = Skeleton::default();
        let tpl = SkinnedTemplate::bundled();
        let pose = BodyPose::identity().with_rotation(joint::LEFT_ELBOW, Vec3::new(0.0, 0.4, 0.0));
        let jac = PoseJacobian::new(&tpl, &skel, &pose);
        let head = tpl.vertices_of(super::super::BodyPart::Head).next().unwrap();
        let j = jac.vertex(head);
        for i in 0..3 {
            assert_eq!(j.column(3 * joint::LEFT_ELBOW + i).norm(), 0.0);
            assert_eq!(j.column(3 * JOINT_COUNT + i), Vec3::ith(i, 1.0));
        }
    }

    #[test]
    fn vjp_matches_jacobian_transpose() {
        let skel = Skeleton::default();
        let tpl = SkinnedTemplate::bundled();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let pose = random_pose(&mut rng);
            let posed = forward_kinematics(&skel, &pose);
            let grads: Vec<Vec3> = (0..tpl.vertex_count())
                .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let vjp = pose_vjp(&tpl, &skel, &pose, &posed, &grads);
            let jac = PoseJacobian::new(&tpl, &skel, &pose);
            let mut expect = [0.0; POSE_PARAMS];
            for (v, g) in grads.iter().enumerate() {
                let jt = jac.vertex(v).transpose() * g;
                for q in 0..POSE_PARAMS {
                    expect[q] += jt[q];
                }
            }
            for q in 0..POSE_PARAMS {
                assert!((vjp[q] - expect[q]).abs() < 1e-9 * (1.0 + expect[q].abs()), "param {q}");
            }
        }
    }

    #[test]
    fn fk_is_deterministic() {
        let skel = Skeleton::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pose = random_pose(&mut rng);
        assert_eq!(forward_kinematics(&skel, &pose), forward_kinematics(&skel, &pose));
    }
}
