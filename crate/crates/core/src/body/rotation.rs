//! Axis-angle rotations.

use crate::{Mat3, Vec3};

/// Below this angle the Rodrigues coefficients are evaluated by their Taylor
/// series; the closed forms lose precision to cancellation.
const SERIES_ANGLE: f64 = 1e-3;

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `a = sin t / t`, `b = (1 - cos t) / t^2` and their derivatives divided by `t`.
fn coefficients(theta: f64) -> [f64; 4] {
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        [
            1.0 - t2 / 6.0 + t4 / 120.0,
            0.5 - t2 / 24.0 + t4 / 720.0,
            -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0,
            -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0,
        ]
    } else {
        let (s, c) = theta.sin_cos();
        let half = (0.5 * theta).sin();
        let one_minus_cos = 2.0 * half * half;
        let t2 = theta * theta;
        [
            s / theta,
            one_minus_cos / t2,
            (theta * c - s) / (t2 * theta),
            (theta * s - 2.0 * one_minus_cos) / (t2 * t2),
        ]
    }
}

/// Rotation matrix of an axis-angle vector (Rodrigues' formula).
pub fn rotation_matrix(w: &Vec3) -> Mat3 {
    let [a, b, ..] = coefficients(w.norm());
    let k = skew(w);
    Mat3::identity() + k * a + k * k * b
}

/// Rotation matrix and its partial derivatives with respect to each
/// axis-angle component.
pub fn rotation_with_derivatives(w: &Vec3) -> (Mat3, [Mat3; 3]) {
    let [a, b, c, d] = coefficients(w.norm());
    let k = skew(w);
    let k2 = k * k;
    let r = Mat3::identity() + k * a + k2 * b;
    let shared = k * c + k2 * d;
    let dr = [0, 1, 2].map(|i| {
        let e = skew(&Vec3::ith(i, 1.0));
        e * a + (e * k + k * e) * b + shared * w[i]
    });
    (r, dr)
}

/// Equivalent axis-angle vector with angle in `[0, pi]`.
pub fn wrap_axis_angle(w: &Vec3) -> Vec3 {
    use std::f64::consts::{PI, TAU};
    let theta = w.norm();
    if theta <= PI {
        return *w;
    }
    let axis = w / theta;
    let mut t = theta.rem_euclid(TAU);
    if t > PI {
        t -= TAU;
    }
    axis * t
}
