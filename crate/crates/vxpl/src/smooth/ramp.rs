//! Trapezoidal speed profile along straight waypoint legs: full acceleration
//! to the speed limit, cruise, full deceleration, with the exact triangular
//! profile for legs too short to reach the limit. Comes to rest at every
//! waypoint, so corners need no lateral acceleration.

use nalgebra::Vector3;

use super::{PolynomialSegment, Trajectory};
use crate::plan::WaypointPath;

/// Floor applied by time allocation so degenerate legs cannot produce
/// zero-duration segments.
pub const MIN_SEGMENT_TIME: f64 = 0.05;

/// Time to cover `length` meters from rest to rest under the profile. Legs
/// long enough to reach `v_max` take `v_max/a_max + length/v_max`; shorter
/// ones peak below the limit at `2*sqrt(length/a_max)`.
pub fn ramp_duration(length: f64, v_max: f64, a_max: f64) -> f64 {
    assert!(v_max > 0.0 && a_max > 0.0);
    if length <= 0.0 {
        return 0.0;
    }
    if length * a_max >= v_max * v_max {
        v_max / a_max + length / v_max
    } else {
        2.0 * (length / a_max).sqrt()
    }
}

/// Per-leg ramp durations for a polynomial fit, floored at
/// [`MIN_SEGMENT_TIME`].
pub fn allocate_segment_times(waypoints: &[Vector3<f64>], v_max: f64, a_max: f64) -> Vec<f64> {
    waypoints
        .windows(2)
        .map(|w| ramp_duration((w[1] - w[0]).norm(), v_max, a_max).max(MIN_SEGMENT_TIME))
        .collect()
}

/// Piecewise-quadratic trajectory tracing the path with the ramp profile on
/// every leg. Zero-length legs are dropped. Acceleration is bang-bang, so the
/// output is C1, not C2; it respects both limits exactly.
pub fn velocity_ramp(path: &WaypointPath, v_max: f64, a_max: f64) -> Trajectory {
    assert!(v_max > 0.0 && a_max > 0.0);
    let mut segments = Vec::new();
    for w in path.waypoints.windows(2) {
        push_leg(&mut segments, &w[0], &w[1], v_max, a_max);
    }
    Trajectory::new(0.0, segments)
}

/// Quadratic segment with initial position, velocity and constant
/// acceleration.
fn kinematic(p0: &Vector3<f64>, v0: &Vector3<f64>, acc: &Vector3<f64>, duration: f64) -> PolynomialSegment {
    let coefs = |axis: usize| vec![p0[axis], v0[axis], acc[axis] * 0.5];
    PolynomialSegment::new([coefs(0), coefs(1), coefs(2)], duration)
}

fn push_leg(
    out: &mut Vec<PolynomialSegment>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    v_max: f64,
    a_max: f64,
) {
    let delta = b - a;
    let len = delta.norm();
    if len < 1e-12 {
        return;
    }
    let dir = delta / len;
    let zero = Vector3::zeros();
    if len * a_max >= v_max * v_max {
        let t_ramp = v_max / a_max;
        let d_ramp = 0.5 * v_max * v_max / a_max;
        out.push(kinematic(a, &zero, &(dir * a_max), t_ramp));
        let t_cruise = len / v_max - v_max / a_max;
        if t_cruise > 0.0 {
            out.push(kinematic(&(a + dir * d_ramp), &(dir * v_max), &zero, t_cruise));
        }
        out.push(kinematic(&(b - dir * d_ramp), &(dir * v_max), &(dir * -a_max), t_ramp));
    } else {
        let v_peak = (len * a_max).sqrt();
        let t_half = v_peak / a_max;
        out.push(kinematic(a, &zero, &(dir * a_max), t_half));
        out.push(kinematic(&(a + dir * (len * 0.5)), &(dir * v_peak), &(dir * -a_max), t_half));
    }
}
