//! Synthetic evaluation worlds and a simulated depth camera. The forest
//! world is a bounded box filled with random vertical cylinders; the camera
//! ray-casts analytic surfaces so depth images and the ground-truth distance
//! field agree exactly.

pub mod bench;
pub mod fixtures;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct Cylinder {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Flight arena: an axis-aligned box `[0, extents]` with floor, ceiling, and
/// side walls, plus full-height cylinders placed uniformly outside the
/// obstacle-free entry strips at both x ends.
#[derive(Debug, Clone)]
pub struct ForestWorld {
    pub extents: Vector3<f64>,
    /// Obstacle-free strip depth at each x end, meters.
    pub margin: f64,
    pub cylinders: Vec<Cylinder>,
    pub density: f64,
    pub seed: u64,
}

pub const FOREST_EXTENTS: Vector3<f64> = Vector3::new(15.0, 15.0, 5.0);
pub const FOREST_MARGIN: f64 = 2.0;
const CYLINDER_RADIUS_MIN: f64 = 0.3;
const CYLINDER_RADIUS_MAX: f64 = 0.6;

impl ForestWorld {
    /// Realized cylinder count is `round(density * usable area)` where the
    /// usable area excludes the two entry strips.
    pub fn generate(density: f64, extents: Vector3<f64>, margin: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&density), "density per m^2 out of range");
        assert!(extents.x > 2.0 * margin);
        let usable = (extents.x - 2.0 * margin) * extents.y;
        let count = (density * usable).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cylinders = (0..count)
            .map(|_| {
                let x = rng.random_range(margin..extents.x - margin);
                let y = rng.random_range(0.0..extents.y);
                let radius = rng.random_range(CYLINDER_RADIUS_MIN..CYLINDER_RADIUS_MAX);
                Cylinder { x, y, radius }
            })
            .collect();
        Self { extents, margin, cylinders, density, seed }
    }

    /// Exact distance to the nearest obstacle surface: cylinders plus the
    /// six arena faces. Positive in free space.
    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        let mut d = p.x.min(self.extents.x - p.x);
        d = d.min(p.y.min(self.extents.y - p.y));
        d = d.min(p.z.min(self.extents.z - p.z));
        for c in &self.cylinders {
            let lateral = ((p.x - c.x).powi(2) + (p.y - c.y).powi(2)).sqrt();
            d = d.min(lateral - c.radius);
        }
        d
    }
}

/// Pinhole depth camera. The default intrinsics give a 90 degree horizontal
/// field of view on a 4:3 sensor.
#[derive(Debug, Clone, Copy)]
pub struct SimCamera {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub max_range: f64,
}

impl Default for SimCamera {
    fn default() -> Self {
        Self { width: 320, height: 240, fx: 160.0, fy: 160.0, max_range: 5.0 }
    }
}

/// Rays that hit nothing report a point this factor past the range limit so
/// integration treats them as free-space clearing rays.
pub const CLEARING_FACTOR: f64 = 1.05;

impl SimCamera {
    pub fn hfov(&self) -> f64 {
        2.0 * (self.width as f64 / (2.0 * self.fx)).atan()
    }

    pub fn vfov(&self) -> f64 {
        2.0 * (self.height as f64 / (2.0 * self.fy)).atan()
    }
}

/// Sensor mounting: camera x right, y down, z forward; body x forward,
/// y left, z up.
pub fn body_from_camera() -> UnitQuaternion<f64> {
    let m = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// World pose of the camera for a robot at `position` yawed about +z.
pub fn camera_pose(position: &Vector3<f64>, yaw: f64) -> Isometry3<f64> {
    let body = Isometry3::from_parts(
        Translation3::from(*position),
        UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
    );
    body * Isometry3::from_parts(Translation3::identity(), body_from_camera())
}

/// Smallest positive ray parameter where `origin + t * dir` meets the
/// cylinder's lateral surface.
fn ray_cylinder(origin: &Vector3<f64>, dir: &Vector3<f64>, c: &Cylinder) -> Option<f64> {
    let ox = origin.x - c.x;
    let oy = origin.y - c.y;
    let a = dir.x * dir.x + dir.y * dir.y;
    if a < 1e-12 {
        return None;
    }
    let b = 2.0 * (ox * dir.x + oy * dir.y);
    let q = ox * ox + oy * oy - c.radius * c.radius;
    let disc = b * b - 4.0 * a * q;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    (t > 1e-9).then_some(t)
}

/// Ray parameter where a ray from inside the arena box exits it.
fn ray_box_exit(origin: &Vector3<f64>, dir: &Vector3<f64>, extents: &Vector3<f64>) -> f64 {
    let mut t = f64::INFINITY;
    for axis in 0..3 {
        let d = dir[axis];
        if d.abs() < 1e-12 {
            continue;
        }
        let bound = if d > 0.0 { extents[axis] } else { 0.0 };
        let tc = (bound - origin[axis]) / d;
        if tc > 0.0 {
            t = t.min(tc);
        }
    }
    t
}

/// Renders one depth image as sensor-frame points, row by row, sampling
/// every `stride`-th pixel in both directions. Depth is Euclidean distance
/// along the ray to the first analytic hit; misses beyond the range limit
/// become clearing points just past it.
pub fn render_depth(
    world: &ForestWorld,
    world_from_camera: &Isometry3<f64>,
    camera: &SimCamera,
    stride: u32,
) -> Vec<Vector3<f64>> {
    assert!(stride >= 1);
    let origin = world_from_camera.translation.vector;
    let rot = world_from_camera.rotation;
    let cx = camera.width as f64 / 2.0;
    let cy = camera.height as f64 / 2.0;

    // Cylinders that could appear within range of this pose.
    let near: Vec<&Cylinder> = world
        .cylinders
        .iter()
        .filter(|c| {
            let lateral = ((origin.x - c.x).powi(2) + (origin.y - c.y).powi(2)).sqrt();
            lateral - c.radius <= camera.max_range
        })
        .collect();

    let rows = (camera.height + stride - 1) / stride;
    let cols = (camera.width + stride - 1) / stride;
    let mut points = Vec::with_capacity((rows * cols) as usize);
    for v in (0..camera.height).step_by(stride as usize) {
        for u in (0..camera.width).step_by(stride as usize) {
            let dir_cam = Vector3::new(
                (u as f64 + 0.5 - cx) / camera.fx,
                (v as f64 + 0.5 - cy) / camera.fy,
                1.0,
            )
            .normalize();
            let dir = rot * dir_cam;
            let mut t_hit = ray_box_exit(&origin, &dir, &world.extents);
            for c in &near {
                if let Some(t) = ray_cylinder(&origin, &dir, c) {
                    t_hit = t_hit.min(t);
                }
            }
            let depth =
                if t_hit <= camera.max_range { t_hit } else { camera.max_range * CLEARING_FACTOR };
            points.push(dir_cam * depth);
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forest_count_tracks_density_and_replays() {
        let w = ForestWorld::generate(0.1, FOREST_EXTENTS, FOREST_MARGIN, 5);
        assert_eq!(w.cylinders.len(), 17, "round(0.1 * 11 * 15)");
        for c in &w.cylinders {
            assert!(c.x >= FOREST_MARGIN && c.x <= FOREST_EXTENTS.x - FOREST_MARGIN);
            assert!(c.y >= 0.0 && c.y <= FOREST_EXTENTS.y);
            assert!((CYLINDER_RADIUS_MIN..CYLINDER_RADIUS_MAX).contains(&c.radius));
        }
        let again = ForestWorld::generate(0.1, FOREST_EXTENTS, FOREST_MARGIN, 5);
        for (a, b) in w.cylinders.iter().zip(again.cylinders.iter()) {
            assert_eq!((a.x, a.y, a.radius), (b.x, b.y, b.radius));
        }
        assert!(ForestWorld::generate(0.0, FOREST_EXTENTS, FOREST_MARGIN, 5).cylinders.is_empty());
        let denser = ForestWorld::generate(0.5, FOREST_EXTENTS, FOREST_MARGIN, 5);
        assert_eq!(denser.cylinders.len(), 83, "round(0.5 * 165)");
    }

    #[test]
    fn sdf_agrees_with_hand_geometry() {
        let mut w = ForestWorld::generate(0.0, FOREST_EXTENTS, FOREST_MARGIN, 0);
        w.cylinders.push(Cylinder { x: 7.0, y: 7.0, radius: 0.5 });
        let p = Vector3::new(9.0, 7.0, 2.5);
        assert!((w.sdf(&p) - 1.5).abs() < 1e-12);
        // Near the floor the ground plane wins.
        let low = Vector3::new(9.0, 7.0, 0.3);
        assert!((w.sdf(&low) - 0.3).abs() < 1e-12);
        // Inside the cylinder the distance goes negative.
        let inside = Vector3::new(7.1, 7.0, 2.5);
        assert!(w.sdf(&inside) < 0.0);
    }

    #[test]
    fn empty_open_world_renders_all_clearing_rays() {
        let w = ForestWorld::generate(0.0, Vector3::new(1000.0, 1000.0, 1000.0), 2.0, 0);
        let cam = SimCamera::default();
        let pose = camera_pose(&Vector3::new(500.0, 500.0, 500.0), 0.3);
        let points = render_depth(&w, &pose, &cam, 4);
        assert!(!points.is_empty());
        let expect = cam.max_range * CLEARING_FACTOR;
        for p in &points {
            assert!((p.norm() - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn center_pixel_sees_the_cylinder_front() {
        let mut w = ForestWorld::generate(0.0, Vector3::new(1000.0, 1000.0, 1000.0), 2.0, 0);
        w.cylinders.push(Cylinder { x: 502.0, y: 500.0, radius: 0.4 });
        let cam = SimCamera::default();
        let pose = camera_pose(&Vector3::new(500.0, 500.0, 500.0), 0.0);
        let points = render_depth(&w, &pose, &cam, 1);
        let idx = (cam.height / 2) as usize * cam.width as usize + (cam.width / 2) as usize;
        let depth = points[idx].norm();
        assert!((depth - 1.6).abs() < 1e-3, "center depth {depth}");
    }

    #[test]
    fn surfaces_behind_the_camera_do_not_hit() {
        let mut w = ForestWorld::generate(0.0, Vector3::new(1000.0, 1000.0, 1000.0), 2.0, 0);
        w.cylinders.push(Cylinder { x: 498.0, y: 500.0, radius: 0.4 });
        let cam = SimCamera::default();
        // Facing +x, cylinder 2 m behind.
        let pose = camera_pose(&Vector3::new(500.0, 500.0, 500.0), 0.0);
        let points = render_depth(&w, &pose, &cam, 4);
        let expect = cam.max_range * CLEARING_FACTOR;
        for p in &points {
            assert!((p.norm() - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn camera_frame_maps_forward_to_body_x() {
        let q = body_from_camera();
        let forward = q * Vector3::new(0.0, 0.0, 1.0);
        assert!((forward - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        let right = q * Vector3::new(1.0, 0.0, 0.0);
        assert!((right - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        let down = q * Vector3::new(0.0, 1.0, 0.0);
        assert!((down - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn fov_matches_the_intrinsics() {
        let cam = SimCamera::default();
        assert!((cam.hfov() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((cam.vfov() - 2.0 * 0.75f64.atan()).abs() < 1e-12);
    }
}
