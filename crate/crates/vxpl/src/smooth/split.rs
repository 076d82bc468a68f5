//! Collision-driven waypoint splitting for the closed-form spline fit. The
//! smooth fit trades waypoint adherence for low snap and will cut corners;
//! whenever the cut clips an obstacle, the nearest point of the straight
//! polyline is inserted as an extra waypoint and the fit is re-run.

use nalgebra::Vector3;

use super::{allocate_segment_times, fit_polynomial, DerivativeOrder, SmoothError, Trajectory, AUDIT_STEP};
use crate::geom::closest_point_on_segment;
use crate::plan::{CollisionChecker, WaypointPath};

pub const DEFAULT_MAX_SPLITS: usize = 10;

/// First invalid millisecond sample, as (relative time, position).
fn first_collision(traj: &Trajectory, checker: &CollisionChecker) -> Option<(f64, Vector3<f64>)> {
    let total = traj.total_duration();
    let steps = (total / AUDIT_STEP).ceil() as usize;
    for k in 0..=steps {
        let t = (k as f64 * AUDIT_STEP).min(total);
        let (p, _, _) = traj.state_at(traj.start_time + t).unwrap();
        if !checker.is_state_valid(&p) {
            return Some((t, p));
        }
    }
    None
}

/// Closest point to `p` anywhere on the polyline.
fn project_onto_polyline(polyline: &[Vector3<f64>], p: &Vector3<f64>) -> Vector3<f64> {
    let mut best = polyline[0];
    let mut best_d = f64::INFINITY;
    for w in polyline.windows(2) {
        let q = closest_point_on_segment(p, &w[0], &w[1]);
        let d = (p - q).norm_squared();
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

/// Segment index holding relative time `t`.
fn segment_at(traj: &Trajectory, t: f64) -> usize {
    let mut rest = t;
    for (i, seg) in traj.segments.iter().enumerate() {
        if rest <= seg.duration || i + 1 == traj.segments.len() {
            return i;
        }
        rest -= seg.duration;
    }
    unreachable!()
}

/// Minimum-snap fit with collision splitting: fit, find the first colliding
/// sample, insert the nearest polyline point as a waypoint between the
/// offending segment's ends, refit. Gives up after `max_splits` insertions;
/// narrow passages can defeat it.
pub fn smooth_polynomial_split(
    path: &WaypointPath,
    checker: &CollisionChecker,
    v_max: f64,
    a_max: f64,
    max_splits: usize,
) -> Result<Trajectory, SmoothError> {
    if path.waypoints.len() < 2 {
        return Err(SmoothError::TooFewWaypoints);
    }
    let mut waypoints = path.waypoints.clone();
    for _ in 0..=max_splits {
        let times = allocate_segment_times(&waypoints, v_max, a_max);
        let traj = fit_polynomial(&waypoints, &times, DerivativeOrder::Snap)?;
        let Some((t, p)) = first_collision(&traj, checker) else {
            return Ok(traj);
        };
        let insert_after = segment_at(&traj, t);
        waypoints.insert(insert_after + 1, project_onto_polyline(&path.waypoints, &p));
    }
    Err(SmoothError::SplitCapReached { splits: max_splits })
}
