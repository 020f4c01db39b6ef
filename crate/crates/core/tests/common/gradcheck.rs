//! Analytic gradients of every loss and objective against central finite
//! differences on randomized inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenefit::body::{forward_kinematics, skin_vertices, BodyPose, Skeleton, SkinnedTemplate, JOINT_COUNT};
use scenefit::geometry::{ClassDistanceFields, ClassId, GridSpec, SdfGrid};
use scenefit::interaction::{FeatureMap, SemanticPalette};
use scenefit::objective::{
    affordance_loss, motion_loss, penetration_loss, pose_loss, AlterationProblem, LossWeights, PlacementParams,
    PlacementProblem, SceneFields, TauMode,
};
use scenefit::optimizer::finite_difference_gradient;
use scenefit::Vec3;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-3;
/// Gradients smaller than this in both estimates compare absolutely.
const FLOOR: f64 = 1e-6;
const ROT: usize = 3 * JOINT_COUNT;

#[derive(Debug)]
pub struct GradReport {
    pub name: &'static str,
    pub coordinates: usize,
    pub max_relative_error: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.coordinates >= 200 && self.max_relative_error < TOLERANCE
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

fn compare(name: &'static str, analytic: &[f64], numeric: &[f64]) -> GradReport {
    assert_eq!(analytic.len(), numeric.len());
    let max_relative_error = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| relative_error(*a, *b))
        .fold(0.0, f64::max);
    GradReport {
        name,
        coordinates: analytic.len(),
        max_relative_error,
    }
}

fn grid() -> GridSpec {
    GridSpec::new(Vec3::new(-2.0, -1.0, -2.0), 0.05, [81, 61, 81]).unwrap()
}

/// Curved fields: a sphere sdf and distances to two points.
fn curved_scene() -> SceneFields {
    let c = Vec3::new(0.1, -0.2, 0.05);
    let sdf = SdfGrid::from_fn(grid(), |p| (p - c).norm() - 0.6).unwrap();
    let mut classes = ClassDistanceFields::default();
    let a = Vec3::new(1.5, 1.0, -1.2);
    let b = Vec3::new(-1.4, -0.8, 1.7);
    classes.insert(SemanticPalette::FLOOR, SdfGrid::from_fn(grid(), |p| (p - a).norm()).unwrap());
    classes.insert(SemanticPalette::CHAIR, SdfGrid::from_fn(grid(), |p| (p - b).norm()).unwrap());
    SceneFields::new(sdf, Some(classes))
}

/// Tilted planes, whose trilinear interpolants have no gradient jumps
/// across cells, so that objectives moving many vertices at once stay
/// smooth under finite differences.
fn planar_scene() -> SceneFields {
    let sdf = SdfGrid::from_fn(grid(), |p| p.y - 0.06 + 0.1 * p.x - 0.05 * p.z).unwrap();
    let mut classes = ClassDistanceFields::default();
    classes.insert(SemanticPalette::FLOOR, SdfGrid::from_fn(grid(), |p| p.y + 0.8).unwrap());
    classes.insert(SemanticPalette::CHAIR, SdfGrid::from_fn(grid(), |p| 0.3 * p.x + 0.2 * p.y + 1.5).unwrap());
    SceneFields::new(sdf, Some(classes))
}

/// Distance of `x` to the nearest lattice plane of the grid along one axis.
fn lattice_margin(x: f64, origin: f64, cell: f64) -> f64 {
    let t = (x - origin) / cell;
    (t - t.round()).abs() * cell
}

fn random_label(rng: &mut ChaCha8Rng) -> ClassId {
    match rng.gen_range(0..3) {
        0 => ClassId::NONE,
        1 => SemanticPalette::FLOOR,
        _ => SemanticPalette::CHAIR,
    }
}

fn random_poses(rng: &mut ChaCha8Rng, frames: usize) -> Vec<BodyPose> {
    (0..frames)
        .map(|_| {
            let coords: Vec<f64> = (0..ROT).map(|_| rng.gen_range(-0.3..0.3)).collect();
            let t = Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(0.0..0.05), rng.gen_range(-0.1..0.1));
            BodyPose::from_rotation_coords(t, &coords)
        })
        .collect()
}

fn poses_from_vector(x: &[f64], frames: usize) -> Vec<BodyPose> {
    (0..frames)
        .map(|i| {
            let t = Vec3::new(x[frames * ROT + 3 * i], x[frames * ROT + 3 * i + 1], x[frames * ROT + 3 * i + 2]);
            BodyPose::from_rotation_coords(t, &x[i * ROT..(i + 1) * ROT])
        })
        .collect()
}

fn poses_to_vector(poses: &[BodyPose]) -> Vec<f64> {
    let mut x: Vec<f64> = poses.iter().flat_map(|p| p.rotation_coords()).collect();
    x.extend(poses.iter().flat_map(|p| p.translation.iter().copied().collect::<Vec<_>>()));
    x
}

/// Scattered vertices away from lattice planes and from the sdf and class
/// field kinks, with random features.
fn scattered_vertices(rng: &mut ChaCha8Rng, scene: &SceneFields, n: usize) -> (Vec<Vec3>, Vec<f32>, Vec<ClassId>) {
    let spec = scene.sdf.spec();
    let mut vertices = Vec::with_capacity(n);
    while vertices.len() < n {
        let p = Vec3::new(rng.gen_range(-1.2..1.2), rng.gen_range(-0.9..1.0), rng.gen_range(-1.2..1.2));
        let away = (0..3).all(|a| lattice_margin(p[a], spec.origin[a], spec.cell_size) > 1e-3);
        if away && scene.sdf.sample(&p).unwrap().value.abs() > 1e-3 {
            vertices.push(p);
        }
    }
    let contact = (0..n).map(|_| if rng.gen_bool(0.7) { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
    let semantic = (0..n).map(|_| random_label(rng)).collect();
    (vertices, contact, semantic)
}

fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn unflatten(x: &[f64]) -> Vec<Vec3> {
    x.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

pub fn affordance(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = curved_scene();
    let (vertices, contact, semantic) = scattered_vertices(&mut rng, &scene, 100);
    let features = FeatureMap::new(1, vertices.len(), contact, semantic).unwrap();
    let analytic = flatten(&affordance_loss(&vertices, features.frame(0), &scene, 1.0).unwrap().gradient);
    let numeric = finite_difference_gradient(
        |x| Ok(affordance_loss(&unflatten(x), features.frame(0), &scene, 1.0)?.value),
        &flatten(&vertices),
        STEP,
    )
    .unwrap();
    compare("L_afford", &analytic, &numeric)
}

pub fn penetration(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = curved_scene();
    let (vertices, _, _) = scattered_vertices(&mut rng, &scene, 100);
    let analytic = flatten(&penetration_loss(&vertices, &scene.sdf, 100.0).unwrap().gradient);
    let numeric = finite_difference_gradient(
        |x| Ok(penetration_loss(&unflatten(x), &scene.sdf, 100.0)?.value),
        &flatten(&vertices),
        STEP,
    )
    .unwrap();
    compare("L_pen", &analytic, &numeric)
}

pub fn pose(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = 4;
    let original = random_poses(&mut rng, frames);
    let current = random_poses(&mut rng, frames);
    let k: Vec<f64> = (0..frames).map(|_| rng.gen_range(0.1..1.0)).collect();
    let (_, grads) = pose_loss(&current, &original, &k).unwrap();
    let mut analytic: Vec<f64> = grads.iter().flatten().copied().collect();
    analytic.extend(std::iter::repeat(0.0).take(3 * frames));
    let numeric = finite_difference_gradient(
        |x| Ok(pose_loss(&poses_from_vector(x, frames), &original, &k)?.0),
        &poses_to_vector(&current),
        STEP,
    )
    .unwrap();
    compare("L_pose", &analytic, &numeric)
}

pub fn motion(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = 4;
    let original = random_poses(&mut rng, frames);
    let current = random_poses(&mut rng, frames);
    let k: Vec<f64> = (0..frames - 1).map(|_| rng.gen_range(0.1..1.0)).collect();
    let (_, g) = motion_loss(&current, &original, 0.1, &k).unwrap();
    let mut analytic: Vec<f64> = g.rotations.iter().flatten().copied().collect();
    analytic.extend(flatten(&g.translations));
    let numeric = finite_difference_gradient(
        |x| Ok(motion_loss(&poses_from_vector(x, frames), &original, 0.1, &k)?.0),
        &poses_to_vector(&current),
        STEP,
    )
    .unwrap();
    compare("L_mot", &analytic, &numeric)
}

/// Random contact features on posed, placed meshes, cleared where a vertex
/// sits within 1 cm of the sdf or class field kinks.
fn features_for(
    rng: &mut ChaCha8Rng,
    scene: &SceneFields,
    world: &[Vec<Vec3>],
) -> FeatureMap {
    let mut contact = Vec::new();
    let mut semantic = Vec::new();
    for frame in world {
        for p in frame {
            let mut c: f32 = if rng.gen_bool(0.5) { rng.gen_range(0.0..1.0) } else { 0.0 };
            let label = random_label(rng);
            if scene.sdf.sample(p).unwrap().value.abs() < 0.01 {
                c = 0.0;
            }
            contact.push(c);
            semantic.push(label);
        }
    }
    FeatureMap::new(world.len(), world[0].len(), contact, semantic).unwrap()
}

pub fn placement(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skeleton = Skeleton::default();
    let template = SkinnedTemplate::bundled();
    let scene = planar_scene();
    let weights = LossWeights::default();
    let poses = random_poses(&mut rng, 3);
    let meshes: Vec<Vec<Vec3>> = poses
        .iter()
        .map(|p| skin_vertices(&template, &forward_kinematics(&skeleton, p)).vertices)
        .collect();
    let center = poses[0].translation;
    let k: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..1.0)).collect();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for _ in 0..50 {
        let params = PlacementParams::new(
            Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.05..0.05), rng.gen_range(-0.3..0.3)),
            rng.gen_range(0.0..std::f64::consts::TAU),
        )
        .unwrap();
        let world: Vec<Vec<Vec3>> = meshes
            .iter()
            .map(|m| m.iter().map(|p| params.apply(p, &center)).collect())
            .collect();
        let features = features_for(&mut rng, &scene, &world);
        let problem = PlacementProblem::new(&meshes, &features, &k, &scene, &weights, center).unwrap();
        let x = params.to_vector(TauMode::Full);
        let (_, g) = problem.evaluate_vector(TauMode::Full, &x, 0.0).unwrap();
        analytic.extend(g);
        numeric.extend(
            finite_difference_gradient(|x| Ok(problem.evaluate_vector(TauMode::Full, x, 0.0)?.0), &x, STEP).unwrap(),
        );
    }
    compare("E_p", &analytic, &numeric)
}

pub fn alteration(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skeleton = Skeleton::default();
    let template = SkinnedTemplate::bundled();
    let scene = planar_scene();
    let weights = LossWeights::default();
    let frames = 3;
    let original = random_poses(&mut rng, frames);
    let current: Vec<BodyPose> = original
        .iter()
        .map(|p| {
            let mut c = p.rotation_coords();
            c.iter_mut().for_each(|v| *v += rng.gen_range(-0.05..0.05));
            let t = p.translation + Vec3::new(rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02), 0.0);
            BodyPose::from_rotation_coords(t, &c)
        })
        .collect();
    let center = original[0].translation;
    let placement = PlacementParams::new(Vec3::new(0.2, 0.0, -0.1), 0.7).unwrap();
    let world: Vec<Vec<Vec3>> = current
        .iter()
        .map(|p| {
            skin_vertices(&template, &forward_kinematics(&skeleton, p))
                .vertices
                .iter()
                .map(|v| placement.apply(v, &center))
                .collect()
        })
        .collect();
    let features = features_for(&mut rng, &scene, &world);
    let k: Vec<f64> = (0..frames).map(|_| rng.gen_range(0.2..1.0)).collect();
    let problem = AlterationProblem::new(
        &original, &skeleton, &template, &features, &k, &scene, &weights, placement, center,
    )
    .unwrap();
    let x = poses_to_vector(&current);
    let (_, analytic) = problem.evaluate(&x).unwrap();
    let numeric = finite_difference_gradient(|x| Ok(problem.evaluate(x)?.0), &x, STEP).unwrap();
    compare("E_alt", &analytic, &numeric)
}

pub fn run_all(seed: u64) -> Vec<GradReport> {
    vec![
        affordance(seed),
        penetration(seed),
        pose(seed),
        motion(seed),
        placement(seed),
        alteration(seed),
    ]
}
