//! Candidate grids, the alternating placement/alteration optimisation and
//! the ranking of the resulting placements.

use std::cmp::Ordering;

use nalgebra::Rotation3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{forward_kinematics, skin_vertices, BodyPose, Skeleton, SkinnedTemplate};
use crate::geometry::Aabb;
use crate::interaction::FeatureMap;
use crate::metrics::{score_frames, MetricsReport, Scored};
use crate::objective::{
    drop_height, AlterationBreakdown, AlterationParams, AlterationProblem, LossWeights, PlacementParams,
    PlacementProblem, SceneFields, TauMode,
};
use crate::optimizer::{minimize, LbfgsConfig, Termination};
use crate::{Error, Result, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    /// Spacing of the floor-plane lattice in metres.
    pub grid_step: f64,
    /// Spacing of the candidate orientations in degrees; must divide 360.
    pub rot_step: f64,
    /// Number of screened candidates that are fully optimized.
    pub top_b: usize,
    /// Placement/alteration alternations per candidate.
    pub rounds: usize,
    /// Whether the alteration objective runs at all.
    pub alteration: bool,
    pub tau_mode: TauMode,
    /// Lattice inset from the scene bounds; the clip's horizontal radius
    /// when unset.
    pub inset: Option<f64>,
    pub lbfgs: LbfgsConfig,
    pub weights: LossWeights,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            grid_step: 0.25,
            rot_step: 30.0,
            top_b: 8,
            rounds: 2,
            alteration: true,
            tau_mode: TauMode::Planar,
            inset: None,
            lbfgs: LbfgsConfig::default(),
            weights: LossWeights::default(),
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid step must be positive, got {}", self.grid_step)));
        }
        orientation_count(self.rot_step)?;
        if self.top_b == 0 {
            return Err(Error::InvalidParameter("top_b must be at least 1".into()));
        }
        if let Some(inset) = self.inset {
            if !(inset >= 0.0 && inset.is_finite()) {
                return Err(Error::InvalidParameter(format!("inset must be non-negative, got {inset}")));
            }
        }
        self.lbfgs.validate()?;
        self.weights.validate()
    }
}

/// Number of orientations for a rotation step in degrees.
pub fn orientation_count(rot_step: f64) -> Result<usize> {
    let n = (360.0 / rot_step).round();
    if !(rot_step > 0.0 && rot_step <= 360.0) || (n * rot_step - 360.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("rotation step {rot_step} does not divide 360")));
    }
    Ok(n as usize)
}

/// Floor-plane lattice of cell centres inside `bounds` shrunk by `inset`,
/// crossed with the orientations `0, rot_step, ..`; `tau.y` is zero.
pub fn candidate_grid(bounds: &Aabb, grid_step: f64, rot_step: f64, inset: f64) -> Result<Vec<PlacementParams>> {
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::InvalidParameter(format!("grid step must be positive, got {grid_step}")));
    }
    let orientations = orientation_count(rot_step)?;
    if bounds.is_empty() {
        return Err(Error::EmptyGrid("scene bounds are empty".into()));
    }
    let axis = |lo: f64, hi: f64| -> Vec<f64> {
        let length = hi - lo - 2.0 * inset;
        if !(length > 0.0) {
            return Vec::new();
        }
        let n = (length / grid_step + 1e-9).floor() as usize;
        let start = lo + inset + 0.5 * (length - n as f64 * grid_step) + 0.5 * grid_step;
        (0..n).map(|i| start + i as f64 * grid_step).collect()
    };
    let xs = axis(bounds.min.x, bounds.max.x);
    let zs = axis(bounds.min.z, bounds.max.z);
    if xs.is_empty() || zs.is_empty() {
        return Err(Error::EmptyGrid(format!(
            "floor of {:.3} m x {:.3} m leaves no lattice point with step {grid_step} and inset {inset}",
            bounds.max.x - bounds.min.x,
            bounds.max.z - bounds.min.z
        )));
    }
    let mut out = Vec::with_capacity(xs.len() * zs.len() * orientations);
    for &x in &xs {
        for &z in &zs {
            for r in 0..orientations {
                out.push(PlacementParams::new(Vec3::new(x, 0.0, z), (r as f64 * rot_step).to_radians())?);
            }
        }
    }
    Ok(out)
}

/// A retained clip with its features and frame weights.
#[derive(Clone, Copy)]
pub struct Clip<'a> {
    pub poses: &'a [BodyPose],
    pub features: &'a FeatureMap,
    pub frame_weights: &'a [f64],
    pub skeleton: &'a Skeleton,
    pub template: &'a SkinnedTemplate,
}

impl<'a> Clip<'a> {
    pub fn new(
        poses: &'a [BodyPose],
        features: &'a FeatureMap,
        frame_weights: &'a [f64],
        skeleton: &'a Skeleton,
        template: &'a SkinnedTemplate,
    ) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::InvalidMotion("clip has no frames".into()));
        }
        features.check_shape(poses.len(), template.vertex_count())?;
        if frame_weights.len() != poses.len() {
            return Err(Error::LengthMismatch {
                what: "frame weights",
                expected: poses.len(),
                actual: frame_weights.len(),
            });
        }
        Ok(Self {
            poses,
            features,
            frame_weights,
            skeleton,
            template,
        })
    }

    /// Yaw pivot: the first frame's root position projected to `y = 0`.
    pub fn center(&self) -> Vec3 {
        let root = forward_kinematics(self.skeleton, &self.poses[0]).joints[0].translation;
        Vec3::new(root.x, 0.0, root.z)
    }

    pub fn meshes(&self, poses: &[BodyPose]) -> Vec<Vec<Vec3>> {
        poses
            .par_iter()
            .map(|p| skin_vertices(self.template, &forward_kinematics(self.skeleton, p)).vertices)
            .collect()
    }

    /// Largest horizontal distance of any vertex from the pivot.
    pub fn radius(&self) -> f64 {
        let c = self.center();
        self.meshes(self.poses)
            .iter()
            .flatten()
            .map(|p| ((p.x - c.x).powi(2) + (p.z - c.z).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Placement,
    Alteration,
}

/// One optimizer run inside the alternation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stage: Stage,
    pub round: usize,
    pub initial_value: f64,
    pub final_value: f64,
    pub steps: usize,
    pub termination: Termination,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub initial: PlacementParams,
    pub placement: PlacementParams,
    /// Altered poses in the body frame.
    pub poses: Vec<BodyPose>,
    /// Placement objective before any optimisation.
    pub initial_placement_loss: f64,
    /// Placement objective of the altered meshes at the final placement.
    pub placement_loss: f64,
    pub alteration: Option<AlterationBreakdown>,
    /// Ranking loss: the alteration objective when alteration ran, the
    /// placement objective otherwise.
    pub loss: f64,
    pub runs: Vec<RunSummary>,
    /// Why the candidate was downgraded, if it was.
    pub failure: Option<String>,
    pub metrics: Option<MetricsReport>,
}

fn placement_problem<'a>(
    clip: &Clip<'a>,
    meshes: &'a [Vec<Vec3>],
    scene: &'a SceneFields,
    weights: &'a LossWeights,
    center: Vec3,
) -> Result<PlacementProblem<'a>> {
    PlacementProblem::new(meshes, clip.features, clip.frame_weights, scene, weights, center)
}

/// Placed scene-space meshes.
pub fn place_meshes(meshes: &[Vec<Vec3>], params: &PlacementParams, center: &Vec3) -> Vec<Vec<Vec3>> {
    meshes
        .iter()
        .map(|m| m.iter().map(|p| params.apply(p, center)).collect())
        .collect()
}

/// Alternates the placement objective over `(tau, theta)` with the
/// alteration objective over the per-frame poses. In planar mode the height
/// is re-derived by dropping the clip after every placement run.
pub fn optimize_candidate(
    initial: PlacementParams,
    clip: &Clip<'_>,
    scene: &SceneFields,
    config: &PlacementConfig,
) -> Result<Candidate> {
    config.validate()?;
    let center = clip.center();
    let weights = &config.weights;
    let mode = config.tau_mode;
    let mut poses = clip.poses.to_vec();
    let mut meshes = clip.meshes(&poses);
    let mut params = initial;
    let mut candidate = Candidate {
        initial,
        placement: initial,
        poses: poses.clone(),
        initial_placement_loss: f64::INFINITY,
        placement_loss: f64::INFINITY,
        alteration: None,
        loss: f64::INFINITY,
        runs: Vec::new(),
        failure: None,
        metrics: None,
    };
    if mode == TauMode::Planar {
        match drop_height(&meshes, clip.features, scene, center, &params)? {
            Some(y) => params.tau.y = y,
            None => {
                candidate.failure = Some("no support surface below the candidate".into());
                return Ok(candidate);
            }
        }
    }
    candidate.initial = params;
    candidate.initial_placement_loss = placement_problem(clip, &meshes, scene, weights, center)?.value(&params)?;
    let run_alteration = config.alteration && poses.len() >= 2;

    for round in 0..config.rounds {
        let problem = placement_problem(clip, &meshes, scene, weights, center)?;
        let tau_y = params.tau.y;
        let x0 = params.to_vector(mode);
        match minimize(|x| problem.evaluate_vector(mode, x, tau_y), &x0, &config.lbfgs) {
            Ok(m) => {
                params = PlacementParams::from_vector(mode, &m.x, tau_y);
                candidate.runs.push(RunSummary {
                    stage: Stage::Placement,
                    round,
                    initial_value: m.trace.initial_value,
                    final_value: m.value,
                    steps: m.trace.steps.len(),
                    termination: m.trace.termination,
                });
            }
            Err(e) => {
                candidate.failure = Some(format!("placement run {round}: {e}"));
                break;
            }
        }
        if mode == TauMode::Planar {
            if let Some(y) = problem.drop_height(&params)? {
                let dropped = PlacementParams { tau: Vec3::new(params.tau.x, y, params.tau.z), ..params };
                if problem.value(&dropped)? < problem.value(&params)? {
                    params = dropped;
                }
            }
        }
        if !run_alteration {
            continue;
        }
        let alteration = AlterationProblem::new(
            clip.poses,
            clip.skeleton,
            clip.template,
            clip.features,
            clip.frame_weights,
            scene,
            weights,
            params,
            center,
        )?;
        let x0 = AlterationParams { frames: poses.clone() }.to_vector();
        match minimize(|x| alteration.evaluate(x), &x0, &config.lbfgs) {
            Ok(m) => {
                poses = AlterationParams::from_vector(&m.x, poses.len()).frames;
                meshes = clip.meshes(&poses);
                candidate.runs.push(RunSummary {
                    stage: Stage::Alteration,
                    round,
                    initial_value: m.trace.initial_value,
                    final_value: m.value,
                    steps: m.trace.steps.len(),
                    termination: m.trace.termination,
                });
            }
            Err(e) => {
                candidate.failure = Some(format!("alteration run {round}: {e}"));
                break;
            }
        }
    }

    candidate.placement = params;
    candidate.placement_loss = placement_problem(clip, &meshes, scene, weights, center)?.value(&params)?;
    candidate.loss = candidate.placement_loss;
    if run_alteration {
        let alteration = AlterationProblem::new(
            clip.poses,
            clip.skeleton,
            clip.template,
            clip.features,
            clip.frame_weights,
            scene,
            weights,
            params,
            center,
        )?;
        let (parts, _) = alteration.evaluate_params(&AlterationParams { frames: poses.clone() })?;
        candidate.loss = parts.total();
        candidate.alteration = Some(parts);
    }
    if candidate.failure.is_some() || !candidate.loss.is_finite() {
        candidate.loss = f64::INFINITY;
    }
    candidate.metrics = Some(score_frames(&place_meshes(&meshes, &params, &center), &scene.sdf)?);
    candidate.poses = poses;
    Ok(candidate)
}

/// Final output for one candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub params: PlacementParams,
    /// Grid candidate the optimisation started from.
    pub initial: PlacementParams,
    /// Yaw pivot in the body frame.
    pub center: Vec3,
    /// Altered poses in the body frame.
    pub poses: Vec<BodyPose>,
    pub loss: f64,
    pub placement_loss: f64,
    pub alteration: Option<AlterationBreakdown>,
    pub metrics: MetricsReport,
    pub runs: Vec<RunSummary>,
}

impl Placement {
    /// Altered poses with the placement folded into the root joint.
    pub fn world_poses(&self, skeleton: &Skeleton) -> Vec<BodyPose> {
        let r = self.params.rotation();
        let root = skeleton.rest_positions()[0];
        self.poses
            .iter()
            .map(|p| {
                let global = r * crate::body::rotation_matrix(&p.rotations[0]);
                let mut rotations = p.rotations;
                rotations[0] = Rotation3::from_matrix_unchecked(global).scaled_axis();
                BodyPose {
                    translation: r * (root + p.translation - self.center) + self.params.tau - root,
                    rotations,
                }
            })
            .collect()
    }
}

impl Scored for Placement {
    fn loss(&self) -> f64 {
        self.loss
    }

    fn report(&self) -> &MetricsReport {
        &self.metrics
    }
}

fn tie_order(a: &PlacementParams, b: &PlacementParams) -> Ordering {
    a.tau
        .x
        .total_cmp(&b.tau.x)
        .then(a.tau.y.total_cmp(&b.tau.y))
        .then(a.tau.z.total_cmp(&b.tau.z))
        .then(a.theta.total_cmp(&b.theta))
}

/// Drops every grid candidate onto the scene and evaluates the placement
/// objective with the unaltered clip; `None` where nothing supports it or
/// the value is not finite.
pub fn screen(
    candidates: &[PlacementParams],
    clip: &Clip<'_>,
    scene: &SceneFields,
    weights: &LossWeights,
) -> Result<Vec<Option<(PlacementParams, f64)>>> {
    let center = clip.center();
    let meshes = clip.meshes(clip.poses);
    let problem = placement_problem(clip, &meshes, scene, weights, center)?;
    candidates
        .par_iter()
        .map(|c| {
            let Some(y) = problem.drop_height(c)? else {
                return Ok(None);
            };
            let mut p = *c;
            p.tau.y = y;
            let v = problem.value(&p)?;
            Ok(v.is_finite().then_some((p, v)))
        })
        .collect()
}

/// Screens the candidate grid, optimizes the best `top_b` candidates and
/// returns their placements ordered by final loss.
pub fn place(clip: &Clip<'_>, scene: &SceneFields, bounds: &Aabb, config: &PlacementConfig) -> Result<Vec<Placement>> {
    let screened = screen_grid(clip, scene, bounds, config)?;
    optimize_screened(&screened, clip, scene, config)
}

/// Every finite grid candidate with its screening loss, best first.
/// Depends on the placement weights of `config` but not on the alteration
/// or optimizer settings.
pub fn screen_grid(
    clip: &Clip<'_>,
    scene: &SceneFields,
    bounds: &Aabb,
    config: &PlacementConfig,
) -> Result<Vec<(PlacementParams, f64)>> {
    config.validate()?;
    let inset = config.inset.unwrap_or_else(|| clip.radius());
    let grid = match candidate_grid(bounds, config.grid_step, config.rot_step, inset) {
        Ok(g) => g,
        Err(Error::EmptyGrid(reason)) => {
            log::info!("no candidate grid: {reason}");
            return Err(Error::NoValidFit);
        }
        Err(e) => return Err(e),
    };
    let mut screened: Vec<(PlacementParams, f64)> = screen(&grid, clip, scene, &config.weights)?
        .into_iter()
        .flatten()
        .collect();
    log::debug!("{} of {} candidates survive screening", screened.len(), grid.len());
    if screened.is_empty() {
        return Err(Error::NoValidFit);
    }
    screened.sort_by(|a, b| a.1.total_cmp(&b.1).then(tie_order(&a.0, &b.0)));
    Ok(screened)
}

/// Fully optimizes the first `top_b` screened candidates.
pub fn optimize_screened(
    screened: &[(PlacementParams, f64)],
    clip: &Clip<'_>,
    scene: &SceneFields,
    config: &PlacementConfig,
) -> Result<Vec<Placement>> {
    config.validate()?;
    let center = clip.center();
    let optimized: Vec<Result<Candidate>> = screened[..config.top_b.min(screened.len())]
        .par_iter()
        .map(|(p, _)| optimize_candidate(*p, clip, scene, config))
        .collect();
    let mut placements = Vec::new();
    for c in optimized {
        let c = c?;
        if let Some(reason) = &c.failure {
            log::warn!("candidate at {:?} downgraded: {reason}", c.initial.tau);
            continue;
        }
        let Some(metrics) = c.metrics else { continue };
        placements.push(Placement {
            params: c.placement,
            initial: c.initial,
            center,
            poses: c.poses,
            loss: c.loss,
            placement_loss: c.placement_loss,
            alteration: c.alteration,
            metrics,
            runs: c.runs,
        });
    }
    if placements.is_empty() {
        return Err(Error::NoValidFit);
    }
    placements.sort_by(|a, b| a.loss.total_cmp(&b.loss).then(tie_order(&a.params, &b.params)));
    Ok(placements)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::BodyPart;
    use crate::geometry::{build_class_distance_fields, build_sdf, ClassId, SdfOptions, TriangleMesh};
    use crate::interaction::{estimate_features_heuristic, HeuristicParams, SemanticPalette};
    use crate::motion::synthetic::{self, ClipOptions};
    use crate::motion::MotionSequence;

    fn labelled_box(min: Vec3, max: Vec3, class: ClassId) -> TriangleMesh {
        TriangleMesh::cuboid(min, max).unwrap().with_labels(vec![class; 8]).unwrap()
    }

    /// Floor slab with its top at y = 0 spanning `[-w/2, w/2] x [-d/2, d/2]`,
    /// plus extra boxes.
    fn scene(w: f64, d: f64, boxes: &[(Vec3, Vec3, ClassId)]) -> (SceneFields, Aabb) {
        let mut mesh = labelled_box(
            Vec3::new(-w / 2.0, -0.2, -d / 2.0),
            Vec3::new(w / 2.0, 0.0, d / 2.0),
            SemanticPalette::FLOOR,
        );
        for (lo, hi, c) in boxes {
            mesh.append(&labelled_box(*lo, *hi, *c));
        }
        let sdf = build_sdf(&mesh, &SdfOptions::default()).unwrap();
        let classes = build_class_distance_fields(&mesh, sdf.spec()).unwrap();
        (SceneFields::new(sdf, Some(classes)), mesh.bounds())
    }

    struct Fixture {
        motion: MotionSequence,
        features: FeatureMap,
        weights: Vec<f64>,
        skeleton: Skeleton,
        template: SkinnedTemplate,
    }

    impl Fixture {
        fn new(motion: MotionSequence) -> Self {
            let skeleton = Skeleton::default();
            let template = SkinnedTemplate::bundled();
            let features =
                estimate_features_heuristic(&motion, &skeleton, &template, &HeuristicParams::default()).unwrap();
            let weights = vec![1.0 / motion.len() as f64; motion.len()];
            Self {
                motion,
                features,
                weights,
                skeleton,
                template,
            }
        }

        fn clip(&self) -> Clip<'_> {
            Clip::new(self.motion.frames(), &self.features, &self.weights, &self.skeleton, &self.template).unwrap()
        }
    }

    fn standing() -> Fixture {
        Fixture::new(
            synthetic::standing(&ClipOptions {
                frames: 2,
                ..ClipOptions::default()
            })
            .unwrap(),
        )
    }

    fn mean_sole_distance(c: &Candidate, fx: &Fixture, scene: &SceneFields) -> f64 {
        let clip = fx.clip();
        let meshes = place_meshes(&clip.meshes(&c.poses), &c.placement, &clip.center());
        let soles: Vec<usize> = fx.template.vertices_of(BodyPart::Sole).collect();
        let mut total = 0.0;
        for m in &meshes {
            for &v in &soles {
                total += scene.sdf.sample(&m[v]).unwrap().value.abs();
            }
        }
        total / (soles.len() * meshes.len()) as f64
    }

    #[test]
    fn grid_counts() {
        let floor = Aabb::from_points(&[Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 3.0)]);
        assert_eq!(candidate_grid(&floor, 1.0, 30.0, 0.0).unwrap().len(), 72);
        assert_eq!(candidate_grid(&floor, 1.0, 360.0, 0.0).unwrap().len(), 6);
        let grid = candidate_grid(&floor, 0.5, 30.0, 0.25).unwrap();
        assert_eq!(grid.len(), 3 * 5 * 12);
        for p in &grid {
            assert!(p.tau.x >= 0.25 && p.tau.x <= 1.75 && p.tau.z >= 0.25 && p.tau.z <= 2.75);
        }
        let thetas: Vec<f64> = grid.iter().take(12).map(|p| p.theta.to_degrees()).collect();
        for (i, t) in thetas.iter().enumerate() {
            assert!((t - 30.0 * i as f64).abs() < 1e-9);
        }
        assert!(matches!(candidate_grid(&floor, 1.0, 30.0, 1.5), Err(Error::EmptyGrid(_))));
        assert!(candidate_grid(&floor, 1.0, 29.0, 0.0).is_err());
        assert!(candidate_grid(&floor, 0.0, 30.0, 0.0).is_err());
    }

    #[test]
    fn drop_test_from_above() {
        let (scene, _) = scene(3.0, 3.0, &[]);
        let fx = standing();
        for mode in [TauMode::Planar, TauMode::Full] {
            let config = PlacementConfig {
                tau_mode: mode,
                ..PlacementConfig::default()
            };
            let start = PlacementParams::new(Vec3::new(0.0, 0.3, 0.0), 0.0).unwrap();
            let c = optimize_candidate(start, &fx.clip(), &scene, &config).unwrap();
            let m = c.metrics.as_ref().unwrap();
            let sole = mean_sole_distance(&c, &fx, &scene);
            assert!(c.failure.is_none());
            assert!(sole < 0.02, "{mode:?}: mean sole distance {sole}");
            assert_eq!(m.contact, 1.0);
            // Free vertical translation lets the alteration press a few
            // more toe vertices into the floor.
            let bound = if mode == TauMode::Planar { 0.99 } else { 0.98 };
            assert!(m.non_collision >= bound, "{mode:?}: non-collision {}", m.non_collision);
        }
    }

    #[test]
    fn optimal_candidate_stays_put() {
        let (scene, _) = scene(3.0, 3.0, &[]);
        let fx = standing();
        let config = PlacementConfig::default();
        let start = PlacementParams::new(Vec3::new(0.1, 0.0, 0.2), 1.0).unwrap();
        let c = optimize_candidate(start, &fx.clip(), &scene, &config).unwrap();
        assert!((c.placement.tau - c.initial.tau).norm() < 1e-3);
        assert!((c.placement.theta - c.initial.theta).abs() < 1e-3);
    }

    #[test]
    fn candidate_inside_a_wall_moves_out() {
        let wall = (Vec3::new(-0.1, 0.0, -1.5), Vec3::new(0.1, 2.5, 1.5), SemanticPalette::WALL);
        let (scene, _) = scene(3.0, 3.0, &[wall]);
        let fx = standing();
        let config = PlacementConfig {
            tau_mode: TauMode::Full,
            ..PlacementConfig::default()
        };
        let start = PlacementParams::new(Vec3::new(0.03, 0.0, 0.0), 0.0).unwrap();
        let c = optimize_candidate(start, &fx.clip(), &scene, &config).unwrap();
        assert!(c.placement_loss < c.initial_placement_loss);
        assert!(c.metrics.unwrap().non_collision > 0.9);
    }

    #[test]
    fn empty_room_places_a_standing_clip_on_the_floor() {
        let (scene, bounds) = scene(3.0, 3.0, &[]);
        let fx = standing();
        let config = PlacementConfig {
            grid_step: 0.5,
            ..PlacementConfig::default()
        };
        let placements = place(&fx.clip(), &scene, &bounds, &config).unwrap();
        assert!(!placements.is_empty() && placements.len() <= config.top_b);
        let best = &placements[0];
        // Contact needs a vertex at sdf <= 0, which that vertex also
        // counts against non-collision, so 1.0 for both is unreachable.
        assert_eq!(best.metrics.contact, 1.0);
        assert!(best.metrics.non_collision >= 0.98);
        for w in placements.windows(2) {
            assert!(w[0].loss <= w[1].loss);
        }
        let again = place(&fx.clip(), &scene, &bounds, &config).unwrap();
        assert_eq!(placements, again);
    }

    #[test]
    fn world_poses_match_placed_meshes() {
        let fx = Fixture::new(synthetic::walk(&ClipOptions::default(), |_| 1.0).unwrap());
        let clip = fx.clip();
        let params = PlacementParams::new(Vec3::new(0.4, 0.1, -0.3), 2.2).unwrap();
        let placement = Placement {
            params,
            initial: params,
            center: clip.center(),
            poses: fx.motion.frames().to_vec(),
            loss: 0.0,
            placement_loss: 0.0,
            alteration: None,
            metrics: score_frames(&[vec![Vec3::zeros()]], &scene(1.0, 1.0, &[]).0.sdf).unwrap(),
            runs: Vec::new(),
        };
        let expected = place_meshes(&clip.meshes(clip.poses), &params, &clip.center());
        let actual = clip.meshes(&placement.world_poses(&fx.skeleton));
        for (e, a) in expected.iter().zip(&actual) {
            for (p, q) in e.iter().zip(a) {
                assert!((p - q).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn long_walk_in_a_tiny_scene_has_no_fit() {
        let (scene, bounds) = scene(0.5, 0.5, &[]);
        let opts = ClipOptions {
            frames: 300,
            fps: 30.0,
            ..ClipOptions::default()
        };
        let fx = Fixture::new(synthetic::walk(&opts, |_| 1.0).unwrap());
        let result = place(&fx.clip(), &scene, &bounds, &PlacementConfig::default());
        assert!(matches!(result, Err(Error::NoValidFit)));
    }

    #[test]
    fn sitting_clip_finds_the_chair() {
        let fx = Fixture::new(
            synthetic::sit(
                &ClipOptions {
                    frames: 10,
                    ..ClipOptions::default()
                },
                0.55,
            )
            .unwrap(),
        );
        let clip = fx.clip();
        let buttocks: Vec<usize> = fx.template.vertices_of(BodyPart::Buttock).collect();
        let meshes = clip.meshes(clip.poses);
        let seat = buttocks.iter().map(|&v| meshes[0][v].y).fold(f64::INFINITY, f64::min);
        let chair = (
            Vec3::new(0.3, 0.0, 0.2),
            Vec3::new(0.75, seat, 0.65),
            SemanticPalette::CHAIR,
        );
        let (scene, bounds) = scene(3.0, 3.0, &[chair]);
        let config = PlacementConfig {
            grid_step: 0.2,
            ..PlacementConfig::default()
        };
        let best = place(&clip, &scene, &bounds, &config).unwrap().remove(0);
        let chair_field = scene.class_field(SemanticPalette::CHAIR).unwrap();
        let placed = place_meshes(&clip.meshes(&best.poses), &best.params, &best.center);
        for (i, frame) in placed.iter().enumerate() {
            let f = fx.features.frame(i);
            for &v in &buttocks {
                if f.semantic[v] == SemanticPalette::CHAIR {
                    let d = chair_field.sample(&frame[v]).unwrap().value;
                    assert!(d < 0.05, "frame {i} vertex {v} is {d} m from the chair");
                }
            }
        }
    }

    #[test]
    fn screening_keeps_the_best_candidate() {
        let block = (Vec3::new(-1.5, 0.0, 0.0), Vec3::new(0.0, 0.4, 1.5), SemanticPalette::CABINET);
        let (scene, bounds) = scene(3.0, 3.0, &[block]);
        let fx = standing();
        let clip = fx.clip();
        let base = PlacementConfig {
            grid_step: 0.75,
            rot_step: 90.0,
            inset: Some(0.75),
            ..PlacementConfig::default()
        };
        let grid = candidate_grid(&bounds, base.grid_step, base.rot_step, 0.75).unwrap();
        assert!(grid.len() <= 20);
        let screened = place(&clip, &scene, &bounds, &PlacementConfig { top_b: 4, ..base.clone() }).unwrap();
        let exhaustive = place(&clip, &scene, &bounds, &PlacementConfig { top_b: grid.len(), ..base }).unwrap();
        assert!(
            screened[0].loss <= exhaustive[0].loss + 1e-12,
            "screened best {} vs exhaustive best {} from {:?}",
            screened[0].loss,
            exhaustive[0].loss,
            exhaustive[0].initial
        );
    }
}
