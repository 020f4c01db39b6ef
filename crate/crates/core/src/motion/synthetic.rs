//! Procedural clips for the bundled body, grounded on the plane y = 0.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MotionSequence;
use crate::body::{forward_kinematics, joint, skin_vertices, BodyPose, Skeleton, SkinnedTemplate};
use crate::{Result, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct ClipOptions {
    pub fps: f64,
    pub frames: usize,
    /// Upper bound of a per-frame upward offset, imitating capture noise.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for ClipOptions {
    fn default() -> Self {
        Self {
            fps: 30.0,
            frames: 30,
            jitter: 0.0,
            seed: 0,
        }
    }
}

/// Arms hanging at the sides with slightly bent elbows.
pub fn relaxed_pose() -> BodyPose {
    BodyPose::identity()
        .with_rotation(joint::LEFT_SHOULDER, Vec3::new(0.0, 0.0, -1.3))
        .with_rotation(joint::RIGHT_SHOULDER, Vec3::new(0.0, 0.0, 1.3))
        .with_rotation(joint::LEFT_ELBOW, Vec3::new(0.0, -0.15, 0.0))
        .with_rotation(joint::RIGHT_ELBOW, Vec3::new(0.0, 0.15, 0.0))
}

pub fn standing(opts: &ClipOptions) -> Result<MotionSequence> {
    let frames = vec![relaxed_pose(); opts.frames];
    finish(opts, frames, &vec![0.0; opts.frames])
}

/// Forward walk along +z whose root speed follows `speed`, a map from
/// normalized time in `[0, 1]` to m/s. The stance foot slides backwards
/// relative to the root at exactly the root speed, so it stays planted.
pub fn walk(opts: &ClipOptions, speed: impl Fn(f64) -> f64) -> Result<MotionSequence> {
    let skel = Skeleton::default();
    let rest = skel.rest_positions();
    let leg = rest[joint::LEFT_HIP].y - rest[joint::LEFT_ANKLE].y;
    let dt = 1.0 / opts.fps;
    let (mut phase, mut z) = (0.0_f64, 0.0);
    let mut frames = Vec::with_capacity(opts.frames);
    for i in 0..opts.frames {
        let s = i as f64 / (opts.frames.max(2) - 1) as f64;
        let v = speed(s).max(0.0);
        let cadence = 0.8 + 0.4 * v;
        let stride = v / (4.0 * cadence);
        // Within each half cycle one leg is in stance, the other swings.
        let half = (2.0 * phase).fract();
        let stance_z = stride * (1.0 - 2.0 * half);
        let swing_z = -stride * (PI * half).cos();
        let lift = 0.2 + 0.8 * stride;
        let swing_knee = lift * (PI * half).sin();
        let (left_z, right_z, left_knee, right_knee) = if phase < 0.5 {
            (stance_z, swing_z, 0.0, swing_knee)
        } else {
            (swing_z, stance_z, swing_knee, 0.0)
        };
        let hip = |z: f64| Vec3::new(-(z / leg).clamp(-0.9, 0.9).asin(), 0.0, 0.0);
        let arm = 0.8 * (right_z - left_z);
        // Ankles cancel hip and knee pitch so the feet stay level.
        let ankle = |z: f64, knee: f64| Vec3::new(-hip(z).x - knee, 0.0, 0.0);
        let mut pose = relaxed_pose()
            .with_rotation(joint::LEFT_ANKLE, ankle(left_z, left_knee))
            .with_rotation(joint::RIGHT_ANKLE, ankle(right_z, right_knee))
            .with_rotation(joint::LEFT_HIP, hip(left_z))
            .with_rotation(joint::RIGHT_HIP, hip(right_z))
            .with_rotation(joint::LEFT_KNEE, Vec3::new(left_knee, 0.0, 0.0))
            .with_rotation(joint::RIGHT_KNEE, Vec3::new(right_knee, 0.0, 0.0))
            .with_translation(Vec3::new(0.0, 0.0, z));
        pose.rotations[joint::LEFT_SHOULDER] = Vec3::new(-arm, 0.0, -1.3);
        pose.rotations[joint::RIGHT_SHOULDER] = Vec3::new(arm, 0.0, 1.3);
        frames.push(pose);
        z += v * dt;
        phase = (phase + cadence * dt).fract();
    }
    finish(opts, frames, &vec![0.0; opts.frames])
}

/// Seated pose with thighs horizontal and feet flat on the floor, holding
/// still apart from a slow upper-body sway.
pub fn sit(opts: &ClipOptions, pelvis_height: f64) -> Result<MotionSequence> {
    let skel = Skeleton::default();
    let rest = skel.rest_positions();
    let hip_drop = rest[joint::PELVIS].y - rest[joint::LEFT_HIP].y;
    let shin = (rest[joint::LEFT_KNEE] - rest[joint::LEFT_ANKLE]).norm();
    let ankle_height = rest[joint::LEFT_ANKLE].y;
    let seated = |knee_height: f64, sway: f64| {
        let reach = ((knee_height - ankle_height) / shin).clamp(-1.0, 1.0);
        let knee = PI - reach.asin();
        let ankle = FRAC_PI_2 - knee;
        relaxed_pose()
            .with_rotation(joint::LEFT_HIP, Vec3::new(-FRAC_PI_2, 0.0, 0.0))
            .with_rotation(joint::RIGHT_HIP, Vec3::new(-FRAC_PI_2, 0.0, 0.0))
            .with_rotation(joint::LEFT_KNEE, Vec3::new(knee, 0.0, 0.0))
            .with_rotation(joint::RIGHT_KNEE, Vec3::new(knee, 0.0, 0.0))
            .with_rotation(joint::LEFT_ANKLE, Vec3::new(ankle, 0.0, 0.0))
            .with_rotation(joint::RIGHT_ANKLE, Vec3::new(ankle, 0.0, 0.0))
            .with_rotation(joint::SPINE2, Vec3::new(sway, 0.0, 0.0))
    };
    // The grounded pelvis height depends on the foot shape; correct the knee
    // target until it lands where requested.
    let mut knee_height = pelvis_height - hip_drop;
    for _ in 0..4 {
        let pose = seated(knee_height, 0.0);
        let grounded = pelvis_height_when_grounded(&skel, &pose);
        knee_height += pelvis_height - grounded;
    }
    let frames = (0..opts.frames)
        .map(|i| seated(knee_height, 0.03 * (TAU * i as f64 / opts.frames as f64).sin()))
        .collect();
    finish(opts, frames, &vec![0.0; opts.frames])
}

fn pelvis_height_when_grounded(skel: &Skeleton, pose: &BodyPose) -> f64 {
    let tpl = SkinnedTemplate::bundled();
    let fk = forward_kinematics(skel, pose);
    let low = skin_vertices(&tpl, &fk).vertices.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
    fk.joints[joint::PELVIS].translation.y - low
}

/// Standing clip whose left hand moves out to `hand_height` in front of the
/// body during the first third and then rests there.
pub fn reach(opts: &ClipOptions, hand_height: f64) -> Result<MotionSequence> {
    let skel = Skeleton::default();
    let rest = skel.rest_positions();
    let shoulder = rest[joint::LEFT_SHOULDER];
    let arm = (rest[joint::LEFT_HAND] - shoulder).norm() + 0.1;
    let drop = (shoulder.y - hand_height).clamp(0.0, arm * 0.95);
    let target = Vec3::new(0.15, -drop, (arm * arm - drop * drop - 0.0225).max(0.0).sqrt()).normalize();
    let rest_dir = (rest[joint::LEFT_ELBOW] - shoulder).normalize();
    let relaxed = relaxed_pose();
    let start = relaxed.rotations[joint::LEFT_SHOULDER];
    let goal = Rotation3::rotation_between(&rest_dir, &target)
        .map_or(start, |r| r.scaled_axis());
    let moving = (opts.frames / 3).max(1);
    let frames = (0..opts.frames)
        .map(|i| {
            let s = (i as f64 / moving as f64).min(1.0);
            let s = s * s * (3.0 - 2.0 * s);
            let r = slerp_axis_angle(&start, &goal, s);
            relaxed
                .clone()
                .with_rotation(joint::LEFT_SHOULDER, r)
                .with_rotation(joint::LEFT_ELBOW, Vec3::zeros())
        })
        .collect();
    finish(opts, frames, &vec![0.0; opts.frames])
}

/// Crouch, vertical jump reaching `apex` above the floor, landing.
pub fn jump(opts: &ClipOptions, apex: f64) -> Result<MotionSequence> {
    let n = opts.frames;
    let (takeoff, landing) = (n * 3 / 10, n * 7 / 10);
    let mut lifts = vec![0.0; n];
    let frames = (0..n)
        .map(|i| {
            let crouch = if i < takeoff {
                (PI * i as f64 / takeoff.max(1) as f64).sin()
            } else if i >= landing {
                (PI * (i - landing) as f64 / (n - landing).max(1) as f64).sin()
            } else {
                let s = (i - takeoff) as f64 / (landing - takeoff) as f64;
                lifts[i] = apex * 4.0 * s * (1.0 - s);
                0.3
            };
            let bend = 0.8 * crouch;
            relaxed_pose()
                .with_rotation(joint::LEFT_HIP, Vec3::new(-bend, 0.0, 0.0))
                .with_rotation(joint::RIGHT_HIP, Vec3::new(-bend, 0.0, 0.0))
                .with_rotation(joint::LEFT_KNEE, Vec3::new(2.0 * bend, 0.0, 0.0))
                .with_rotation(joint::RIGHT_KNEE, Vec3::new(2.0 * bend, 0.0, 0.0))
                .with_rotation(joint::LEFT_ANKLE, Vec3::new(-bend, 0.0, 0.0))
                .with_rotation(joint::RIGHT_ANKLE, Vec3::new(-bend, 0.0, 0.0))
        })
        .collect();
    finish(opts, frames, &lifts)
}

fn slerp_axis_angle(a: &Vec3, b: &Vec3, s: f64) -> Vec3 {
    let ra = Rotation3::new(*a);
    let rb = Rotation3::new(*b);
    ra.slerp(&rb, s).scaled_axis()
}

/// Lifts every frame so its lowest vertex sits `lift + jitter` above y = 0.
fn finish(opts: &ClipOptions, mut frames: Vec<BodyPose>, lifts: &[f64]) -> Result<MotionSequence> {
    let skel = Skeleton::default();
    let tpl = SkinnedTemplate::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for (pose, lift) in frames.iter_mut().zip(lifts) {
        pose.translation.y = 0.0;
        let mesh = skin_vertices(&tpl, &forward_kinematics(&skel, pose));
        let low = mesh.vertices.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
        let noise = if opts.jitter > 0.0 { rng.gen_range(0.0..opts.jitter) } else { 0.0 };
        pose.translation.y = lift - low + noise;
    }
    let frames = frames
        .into_iter()
        .map(|p| BodyPose::new(p.translation, p.rotations))
        .collect::<Result<Vec<_>>>()?;
    MotionSequence::new(opts.fps, frames)
}

/// Rotation about the vertical axis, used to turn a clip.
pub fn yaw(angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Unit::new_unchecked(Vec3::y()), angle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lowest(pose: &BodyPose) -> f64 {
        let mesh = skin_vertices(&SkinnedTemplate::bundled(), &forward_kinematics(&Skeleton::default(), pose));
        mesh.vertices.iter().map(|v| v.y).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn clips_are_grounded() {
        let opts = ClipOptions::default();
        for clip in [
            standing(&opts).unwrap(),
            walk(&opts, |_| 1.0).unwrap(),
            sit(&opts, 0.5).unwrap(),
            reach(&opts, 0.85).unwrap(),
        ] {
            for f in clip.frames() {
                assert!(lowest(f).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn jump_leaves_the_ground() {
        let clip = jump(&ClipOptions::default(), 0.4).unwrap();
        let apex = clip.frames().iter().map(lowest).fold(0.0, f64::max);
        assert!((apex - 0.4).abs() < 0.02);
    }

    #[test]
    fn sitting_pelvis_height() {
        let clip = sit(&ClipOptions::default(), 0.5).unwrap();
        let posed = forward_kinematics(&Skeleton::default(), &clip.frames()[0]);
        let pelvis = posed.joints[joint::PELVIS].translation.y;
        assert!((pelvis - 0.5).abs() < 1e-3, "pelvis at {pelvis}");
    }

    #[test]
    fn jitter_only_lifts() {
        let opts = ClipOptions {
            jitter: 0.03,
            seed: 4,
            ..ClipOptions::default()
        };
        let clip = standing(&opts).unwrap();
        let lows: Vec<f64> = clip.frames().iter().map(lowest).collect();
        assert!(lows.iter().all(|l| (-1e-9..0.03).contains(l)));
        assert!(lows.iter().any(|l| *l > 0.005));
        assert_eq!(clip, standing(&opts).unwrap());
    }
}
