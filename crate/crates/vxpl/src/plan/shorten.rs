//! Deterministic path shortening by recursive shortcutting: try the direct
//! segment, otherwise split at the middle waypoint and shorten each half.
//! Whole passes repeat until one changes nothing.

use super::{CollisionChecker, WaypointPath};
use nalgebra::Vector3;

/// Shortens `path` to a fixed point. The output is a subsequence of the
/// input waypoints whose segments are all motion-valid; input segments need
/// not be valid, but an invalid segment with no waypoint between its ends
/// cannot be repaired and yields `None`.
pub fn shorten_path(cc: &CollisionChecker, path: &WaypointPath) -> Option<WaypointPath> {
    if path.waypoints.len() < 2 {
        return Some(path.clone());
    }
    let mut current = path.waypoints.clone();
    loop {
        let next = shorten_span(cc, &current)?;
        if next == current {
            return Some(WaypointPath::new(next));
        }
        current = next;
    }
}

fn shorten_span(cc: &CollisionChecker, span: &[Vector3<f64>]) -> Option<Vec<Vector3<f64>>> {
    let first = span[0];
    let last = *span.last().expect("span nonempty");
    if cc.is_motion_valid(&first, &last) {
        return Some(vec![first, last]);
    }
    if span.len() == 2 {
        return None;
    }
    let mid = span.len() / 2;
    let mut left = shorten_span(cc, &span[..=mid])?;
    let right = shorten_span(cc, &span[mid..])?;
    left.extend(right.into_iter().skip(1));
    Some(left)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::testmap::*;
    use crate::voxel::GridIndex;

    fn checker(esdf: &crate::voxel::VoxelLayer<crate::esdf::EsdfVoxel>) -> CollisionChecker<'_> {
        CollisionChecker::EsdfPoint { esdf, robot_radius: 0.1 }
    }

    #[test]
    fn zig_zag_collapses_to_a_straight_segment() {
        let esdf = esdf_free_box(20, 0.1);
        let cc = checker(&esdf);
        let path = WaypointPath::new(vec![
            Vector3::new(0.2, 0.2, 0.2),
            Vector3::new(0.5, 1.6, 0.3),
            Vector3::new(0.9, 0.3, 1.2),
            Vector3::new(1.3, 1.5, 0.4),
            Vector3::new(1.8, 0.9, 0.9),
        ]);
        let short = shorten_path(&cc, &path).unwrap();
        assert_eq!(short.waypoints.len(), 2);
        assert_eq!(short.waypoints[0], path.waypoints[0]);
        assert_eq!(short.waypoints[1], path.waypoints[4]);
        assert!(short.length() <= path.length());
    }

    #[test]
    fn l_corridor_keeps_the_corner() {
        // Free space is two orthogonal corridors meeting at a corner; the
        // straight diagonal between the endpoints is blocked.
        let config = crate::voxel::LayerConfig::new(0.1, 16).unwrap();
        let mut esdf: crate::voxel::VoxelLayer<crate::esdf::EsdfVoxel> =
            crate::voxel::VoxelLayer::new(config);
        let mut open = |idx: GridIndex| {
            let v = esdf.get_or_insert(&idx);
            v.observed = true;
            v.distance = 1.0;
        };
        for x in 0..14 {
            for y in 0..3 {
                for z in 0..3 {
                    open(GridIndex::new(x, y, z));
                }
            }
        }
        for y in 0..14 {
            for x in 11..14 {
                for z in 0..3 {
                    open(GridIndex::new(x, y, z));
                }
            }
        }
        let cc = checker(&esdf);
        let path = WaypointPath::new(vec![
            Vector3::new(0.15, 0.15, 0.15),
            Vector3::new(0.45, 0.15, 0.15),
            Vector3::new(0.85, 0.15, 0.15),
            Vector3::new(1.25, 0.15, 0.15),
            Vector3::new(1.25, 0.65, 0.15),
            Vector3::new(1.25, 1.35, 0.15),
        ]);
        let short = shorten_path(&cc, &path).unwrap();
        assert!(short.waypoints.len() >= 3, "corner was cut");
        assert!(short.waypoints.len() < path.waypoints.len());
        assert!(short
            .waypoints
            .windows(2)
            .all(|w| cc.is_motion_valid(&w[0], &w[1])));
        assert!(short.length() <= path.length());
    }

    #[test]
    fn already_short_paths_are_unchanged() {
        let esdf = esdf_free_box(20, 0.1);
        let cc = checker(&esdf);
        let path =
            WaypointPath::new(vec![Vector3::new(0.2, 0.2, 0.2), Vector3::new(1.8, 1.8, 1.8)]);
        let once = shorten_path(&cc, &path).unwrap();
        assert_eq!(once.waypoints, path.waypoints);
        let twice = shorten_path(&cc, &once).unwrap();
        assert_eq!(twice.waypoints, once.waypoints);
    }

    #[test]
    fn unrepairable_segment_reports_failure() {
        let esdf = esdf_wall_with_hole(12, 0.1, 6, None);
        let cc = checker(&esdf);
        let path = WaypointPath::new(vec![
            Vector3::new(0.25, 0.55, 0.55),
            Vector3::new(1.05, 0.55, 0.55),
        ]);
        assert!(shorten_path(&cc, &path).is_none());
    }
}
