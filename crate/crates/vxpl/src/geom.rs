//! Small geometric helpers shared by the topology extraction and planners.

use nalgebra::Vector3;

/// Distance from `p` to the closed segment `a..b`. Degenerate segments
/// collapse to point distance.
pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (p - closest_point_on_segment(p, a, b)).norm()
}

/// Closest point on the closed segment `a..b` to `p`.
pub fn closest_point_on_segment(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    if len_sq <= f64::EPSILON {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}
