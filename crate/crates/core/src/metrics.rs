//! Physical plausibility scores of placed motions and the dataset filter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::SdfGrid;
use crate::{Error, Result, Vec3};

/// Upper edges of the penetration-depth histogram bins in metres; the last
/// bin is open.
pub const DEPTH_BINS: [f64; 5] = [0.005, 0.01, 0.02, 0.05, 0.1];

/// Fraction of vertices with a strictly positive signed distance.
pub fn non_collision(vertices: &[Vec3], sdf: &SdfGrid) -> Result<f64> {
    if vertices.is_empty() {
        return Ok(1.0);
    }
    let mut free = 0usize;
    for v in vertices {
        if sdf.sample(v)?.value > 0.0 {
            free += 1;
        }
    }
    Ok(free as f64 / vertices.len() as f64)
}

/// Whether any vertex has a non-positive signed distance.
pub fn contact(vertices: &[Vec3], sdf: &SdfGrid) -> Result<bool> {
    for v in vertices {
        if sdf.sample(v)?.value <= 0.0 {
            return Ok(true);
        }
    }
    Ok(false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub non_collision: f64,
    pub contact: bool,
    pub min_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean over frames of the per-frame non-collision ratio.
    pub non_collision: f64,
    /// Mean over frames of the per-frame contact indicator.
    pub contact: f64,
    /// Whether any frame is in contact.
    pub clip_contact: bool,
    pub frames: Vec<FrameMetrics>,
    /// Counts of penetrating vertices over all frames by depth, binned by
    /// [`DEPTH_BINS`] plus one open bin.
    pub penetration_histogram: Vec<usize>,
}

fn depth_bin(depth: f64) -> usize {
    DEPTH_BINS.iter().position(|&edge| depth < edge).unwrap_or(DEPTH_BINS.len())
}

/// Per-frame scores of scene-space meshes and their means.
pub fn score_frames(frames: &[Vec<Vec3>], sdf: &SdfGrid) -> Result<MetricsReport> {
    if frames.is_empty() {
        return Err(Error::InvalidMotion("cannot score an empty motion".into()));
    }
    let per_frame: Vec<Result<(FrameMetrics, Vec<usize>)>> = frames
        .par_iter()
        .map(|vertices| {
            let mut hist = vec![0usize; DEPTH_BINS.len() + 1];
            let mut free = 0usize;
            let mut min_distance = f64::INFINITY;
            for v in vertices {
                let d = sdf.sample(v)?.value;
                min_distance = min_distance.min(d);
                if d > 0.0 {
                    free += 1;
                } else if d < 0.0 {
                    hist[depth_bin(-d)] += 1;
                }
            }
            let non_collision = if vertices.is_empty() {
                1.0
            } else {
                free as f64 / vertices.len() as f64
            };
            let metrics = FrameMetrics {
                non_collision,
                contact: min_distance <= 0.0,
                min_distance,
            };
            Ok((metrics, hist))
        })
        .collect();
    let mut report = MetricsReport {
        non_collision: 0.0,
        contact: 0.0,
        clip_contact: false,
        frames: Vec::with_capacity(frames.len()),
        penetration_histogram: vec![0; DEPTH_BINS.len() + 1],
    };
    for r in per_frame {
        let (m, hist) = r?;
        report.non_collision += m.non_collision;
        report.contact += if m.contact { 1.0 } else { 0.0 };
        report.clip_contact |= m.contact;
        for (total, c) in report.penetration_histogram.iter_mut().zip(hist) {
            *total += c;
        }
        report.frames.push(m);
    }
    let n = frames.len() as f64;
    report.non_collision /= n;
    report.contact /= n;
    Ok(report)
}

/// Dataset acceptance thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterThresholds {
    /// Placements need a total loss strictly below this; `null` when unbounded.
    #[serde(with = "unbounded")]
    pub loss_threshold: f64,
    pub min_non_collision: f64,
    pub min_contact: f64,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *x == f64::INFINITY {
            s.serialize_none()
        } else {
            s.serialize_some(x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            loss_threshold: f64::INFINITY,
            min_non_collision: 0.98,
            min_contact: 0.9,
        }
    }
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = !self.loss_threshold.is_nan()
            && (0.0..=1.0).contains(&self.min_non_collision)
            && (0.0..=1.0).contains(&self.min_contact);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid filter thresholds {self:?}")))
        }
    }

    pub fn accepts(&self, loss: f64, report: &MetricsReport) -> bool {
        loss < self.loss_threshold
            && report.non_collision >= self.min_non_collision
            && report.contact >= self.min_contact
    }
}

/// Something with a total loss and a metrics report.
pub trait Scored {
    fn loss(&self) -> f64;
    fn report(&self) -> &MetricsReport;
}

/// The items meeting all three thresholds, in their original order.
pub fn filter_dataset<'a, T: Scored>(items: &'a [T], thresholds: &FilterThresholds) -> Vec<&'a T> {
    items
        .iter()
        .filter(|p| thresholds.accepts(p.loss(), p.report()))
        .collect()
}
