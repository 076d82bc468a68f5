//! Exploration-aware goal sampling. Candidate poses near the robot are
//! scored by how much unobserved space a forward camera would sweep plus how
//! much closer they move the robot to its goal.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector3;
use rand::Rng;

use super::LocalError;
use crate::esdf::EsdfVoxel;
use crate::voxel::{point_to_index, GridIndex, VoxelLayer};

/// Pinhole-style frustum: horizontal/vertical full field of view in radians
/// plus a maximum sensing range in meters.
#[derive(Debug, Clone, Copy)]
pub struct CameraModel {
    pub hfov: f64,
    pub vfov: f64,
    pub max_range: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        // 4:3 sensor with a 90 degree horizontal field of view.
        Self { hfov: FRAC_PI_2, vfov: 2.0 * 0.75f64.atan(), max_range: 5.0 }
    }
}

/// Counts unobserved voxels inside the camera frustum anchored at `position`
/// looking along `yaw` with zero pitch. Occlusion is ignored: the count is a
/// cheap upper bound on what a scan from this pose could reveal.
pub fn frustum_unknown_count(
    esdf: &VoxelLayer<EsdfVoxel>,
    position: &Vector3<f64>,
    yaw: f64,
    camera: &CameraModel,
) -> usize {
    let vs = esdf.voxel_size();
    let axis = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let lateral = Vector3::new(-yaw.sin(), yaw.cos(), 0.0);
    let tan_h = (camera.hfov / 2.0).tan();
    let tan_v = (camera.vfov / 2.0).tan();
    let range = camera.max_range;

    // Iteration window: axis-aligned box around the apex and the four far
    // corners of the pyramid.
    let far = position + axis * range;
    let mut lo = *position;
    let mut hi = *position;
    for sy in [-1.0, 1.0] {
        for sz in [-1.0, 1.0] {
            let corner =
                far + lateral * (sy * range * tan_h) + Vector3::new(0.0, 0.0, sz * range * tan_v);
            lo = lo.inf(&corner);
            hi = hi.sup(&corner);
        }
    }
    let lo_idx = point_to_index(&lo, vs);
    let hi_idx = point_to_index(&hi, vs);

    let mut count = 0;
    for x in lo_idx.x..=hi_idx.x {
        for y in lo_idx.y..=hi_idx.y {
            for z in lo_idx.z..=hi_idx.z {
                let idx = GridIndex::new(x, y, z);
                let v = idx.center(vs) - position;
                let forward = v.dot(&axis);
                if forward <= 0.0 || forward > range {
                    continue;
                }
                if v.dot(&lateral).abs() > forward * tan_h || v.z.abs() > forward * tan_v {
                    continue;
                }
                if !esdf.get(&idx).is_some_and(|vox| vox.observed) {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Uniform sample from the closed ball of the given radius around `pose`.
/// A nonpositive radius returns the pose itself. The sample is not checked
/// against the map; callers that need free space filter afterwards.
pub fn select_random_intermediate_goal(
    pose: &Vector3<f64>,
    radius: f64,
    rng: &mut impl Rng,
) -> Vector3<f64> {
    if radius <= 0.0 {
        return *pose;
    }
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        if v.norm_squared() <= 1.0 {
            return pose + v * radius;
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExplorationSampler {
    /// Free-space candidates to score.
    pub samples: usize,
    /// Sampling ball radius around the robot, meters.
    pub radius: f64,
    pub w_explore: f64,
    pub w_goal: f64,
    pub camera: CameraModel,
}

impl Default for ExplorationSampler {
    fn default() -> Self {
        Self {
            samples: 20,
            radius: 2.0,
            w_explore: 2e-5,
            w_goal: 1.0,
            camera: CameraModel::default(),
        }
    }
}

/// Picks the candidate pose and cardinal yaw with the highest combined
/// exploration-plus-progress reward. Candidates are drawn uniformly from the
/// ball around `start` and must land in observed voxels with clearance at
/// least `robot_radius`; progress is measured against `goal` and normalized
/// so the two reward terms stay comparable across query scales.
pub fn select_exploration_goal(
    esdf: &VoxelLayer<EsdfVoxel>,
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
    robot_radius: f64,
    sampler: &ExplorationSampler,
    rng: &mut impl Rng,
) -> Result<(Vector3<f64>, f64), LocalError> {
    let vs = esdf.voxel_size();
    let traversable = |p: &Vector3<f64>| {
        esdf.get(&point_to_index(p, vs)).is_some_and(|v| v.observed && v.distance >= robot_radius)
    };
    let reach = ((goal - start).norm() + sampler.radius).max(1e-9);

    let mut candidates = Vec::with_capacity(sampler.samples);
    let budget = sampler.samples.saturating_mul(50);
    for _ in 0..budget {
        if candidates.len() >= sampler.samples {
            break;
        }
        let c = select_random_intermediate_goal(start, sampler.radius, rng);
        if traversable(&c) {
            candidates.push(c);
        }
    }
    if candidates.is_empty() {
        return Err(LocalError::NoCandidates);
    }

    let mut best: Option<(Vector3<f64>, f64, f64)> = None;
    for cand in &candidates {
        let progress = (reach - (goal - cand).norm()) / reach;
        for quadrant in 0..4 {
            let yaw = quadrant as f64 * FRAC_PI_2;
            let seen = frustum_unknown_count(esdf, cand, yaw, &sampler.camera);
            let reward = sampler.w_explore * seen as f64 + sampler.w_goal * progress;
            // Strict improvement keeps the earliest candidate on ties.
            if best.map_or(true, |(_, _, r)| reward > r) {
                best = Some((*cand, yaw, reward));
            }
        }
    }
    let (point, yaw, _) = best.expect("candidates is nonempty");
    Ok((point, yaw))
}
