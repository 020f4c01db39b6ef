//! Motion clips, frame weights, frame differences and frame-rate reduction.

pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::body::{BodyPose, JOINT_COUNT};
use crate::{Error, Result, Vec3};

/// Source rates above this are reduced by [`downsample`].
pub const TARGET_FPS: f64 = 30.0;
/// Largest allowed gap between retained frames, in seconds.
pub const MAX_GAP: f64 = 0.1;
/// Retained clips longer than this trigger a warning.
pub const LONG_CLIP_FRAMES: usize = 450;

const GAP_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    fps: f64,
    frames: Vec<BodyPose>,
    timestamps: Vec<f64>,
}

impl MotionSequence {
    /// Frames sampled uniformly at `fps`, starting at t = 0.
    pub fn new(fps: f64, frames: Vec<BodyPose>) -> Result<Self> {
        let timestamps = (0..frames.len()).map(|i| i as f64 / fps).collect();
        Self::with_timestamps(fps, frames, timestamps)
    }

    pub fn with_timestamps(fps: f64, frames: Vec<BodyPose>, timestamps: Vec<f64>) -> Result<Self> {
        if !(fps > 0.0) || !fps.is_finite() {
            return Err(Error::InvalidMotion(format!("fps must be positive, got {fps}")));
        }
        if frames.len() < 2 {
            return Err(Error::InvalidMotion(format!("need at least 2 frames, got {}", frames.len())));
        }
        if timestamps.len() != frames.len() {
            return Err(Error::LengthMismatch {
                what: "timestamps",
                expected: frames.len(),
                actual: timestamps.len(),
            });
        }
        if let Some(i) = timestamps.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite(format!("timestamp of frame {i}")));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMotion(format!(
                "timestamps must increase strictly (frame {})",
                i + 1
            )));
        }
        Ok(Self {
            fps,
            frames,
            timestamps,
        })
    }

    /// Nominal frame rate. After downsampling this is the source rate divided
    /// by the reduction ratio; timestamps are authoritative.
    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> &[BodyPose] {
        &self.frames
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.timestamps[self.timestamps.len() - 1] - self.timestamps[0]
    }

    /// Mean frame rate implied by the timestamps.
    pub fn average_fps(&self) -> f64 {
        (self.len() - 1) as f64 / self.duration()
    }

    pub fn max_gap(&self) -> f64 {
        self.timestamps.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Subsequence at the given increasing frame indices.
    pub fn select(&self, indices: &[usize], fps: f64) -> Result<Self> {
        Self::with_timestamps(
            fps,
            indices.iter().map(|&i| self.frames[i].clone()).collect(),
            indices.iter().map(|&i| self.timestamps[i]).collect(),
        )
    }

    /// Same timing with replacement poses.
    pub fn with_frames(&self, frames: Vec<BodyPose>) -> Result<Self> {
        Self::with_timestamps(self.fps, frames, self.timestamps.clone())
    }
}

/// Per-frame importance, normalized to sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameWeights(Vec<f64>);

impl FrameWeights {
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if let Some(i) = raw.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(format!("frame weight {i} is {}", raw[i])));
        }
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidParameter("frame weights sum to zero".into()));
        }
        Ok(Self(raw.into_iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Weights of the selected frames, renormalized.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.0[i]).collect())
    }
}

/// Change between consecutive frames, coordinate-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameDelta {
    pub pose: [f64; 3 * JOINT_COUNT],
    pub translation: Vec3,
}

pub fn frame_diff(frames: &[BodyPose]) -> Result<Vec<FrameDelta>> {
    if frames.len() < 2 {
        return Err(Error::InvalidMotion("frame difference needs at least 2 frames".into()));
    }
    Ok(frames
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].rotation_coords(), w[1].rotation_coords());
            let mut pose = [0.0; 3 * JOINT_COUNT];
            for (d, (x, y)) in pose.iter_mut().zip(b.iter().zip(&a)) {
                *d = x - y;
            }
            FrameDelta {
                pose,
                translation: w[1].translation - w[0].translation,
            }
        })
        .collect())
}

/// Reduction ratio applied to a clip recorded at `fps`.
pub fn reduction_ratio(fps: f64) -> usize {
    ((fps / TARGET_FPS).round() as usize).max(1)
}

/// Indices of the frames kept by [`downsample`], in increasing order.
///
/// Keeps the `1 / ratio` highest-weighted frames (equal weights prefer frames
/// on the uniform `ratio` lattice, then earlier frames), then fills every gap
/// wider than [`MAX_GAP`] with the highest-weighted dropped frame inside it.
pub fn downsample_indices(sequence: &MotionSequence, weights: &FrameWeights) -> Result<Vec<usize>> {
    let n = sequence.len();
    if weights.len() != n {
        return Err(Error::LengthMismatch {
            what: "frame weights",
            expected: n,
            actual: weights.len(),
        });
    }
    if sequence.fps() <= TARGET_FPS {
        return Ok((0..n).collect());
    }
    let ratio = reduction_ratio(sequence.fps());
    let keep = ((n as f64 / ratio as f64).round() as usize).clamp(2, n);
    let k = weights.as_slice();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        k[b].total_cmp(&k[a])
            .then_with(|| (a % ratio != 0).cmp(&(b % ratio != 0)))
            .then(a.cmp(&b))
    });
    let mut kept = vec![false; n];
    for &i in &order[..keep] {
        kept[i] = true;
    }

    let t = sequence.timestamps();
    loop {
        let retained: Vec<usize> = (0..n).filter(|&i| kept[i]).collect();
        let Some(w) = retained.windows(2).find(|w| t[w[1]] - t[w[0]] > MAX_GAP + GAP_EPS) else {
            break;
        };
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (t[lo] + t[hi]);
        let fill = (lo + 1..hi)
            .min_by(|&a, &b| {
                k[b].total_cmp(&k[a])
                    .then_with(|| (t[a] - mid).abs().total_cmp(&(t[b] - mid).abs()))
                    .then(a.cmp(&b))
            })
            .expect("a gap wider than one frame period has interior frames");
        kept[fill] = true;
    }
    let retained: Vec<usize> = (0..n).filter(|&i| kept[i]).collect();
    if retained.len() > LONG_CLIP_FRAMES {
        log::warn!("{} retained frames exceeds the recommended {LONG_CLIP_FRAMES}", retained.len());
    }
    Ok(retained)
}

pub fn downsample(sequence: &MotionSequence, weights: &FrameWeights) -> Result<MotionSequence> {
    if sequence.fps() <= TARGET_FPS {
        return Ok(sequence.clone());
    }
    let indices = downsample_indices(sequence, weights)?;
    let fps = sequence.fps() / reduction_ratio(sequence.fps()) as f64;
    sequence.select(&indices, fps)
}
