//! Global path planning over voxel maps: collision checking, sampling
//! planners, skeleton-graph search, grid search, and path shortening.

pub mod astar;
mod kdtree;
mod sampling;
mod shorten;
mod skeleton_planner;

pub use astar::{astar_voxels, path_length, DEFAULT_EXPANSION_CAP};
pub use kdtree::PointIndex;
pub use sampling::{build_roadmap, plan_prm, plan_rrt_connect, plan_rrt_star, Roadmap};
pub use shorten::shorten_path;
pub use skeleton_planner::plan_skeleton;

use std::time::{Duration, Instant};

use nalgebra::Vector3;

use crate::esdf::EsdfVoxel;
use crate::tsdf::TsdfVoxel;
use crate::voxel::{voxel_ray, GridIndex, VoxelLayer};

/// Ordered position waypoints, consecutive points distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct WaypointPath {
    pub waypoints: Vec<Vector3<f64>>,
}

impl WaypointPath {
    /// Builds a path, dropping consecutive duplicates.
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        let mut waypoints: Vec<Vector3<f64>> = Vec::with_capacity(points.len());
        for p in points {
            if waypoints.last().is_none_or(|last| (last - p).norm() > 1e-12) {
                waypoints.push(p);
            }
        }
        Self { waypoints }
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// State validity oracle over one of the two map substrates.
///
/// The distance-field mode is pessimistic: a pose needs an observed voxel
/// with clearance at or above the robot radius, so unknown space blocks.
/// The truncated-field mode is optimistic: a pose fails only when a voxel
/// within the radius sphere is observed occupied, so unknown space passes.
pub enum CollisionChecker<'a> {
    EsdfPoint { esdf: &'a VoxelLayer<EsdfVoxel>, robot_radius: f64 },
    TsdfSphere { tsdf: &'a VoxelLayer<TsdfVoxel>, robot_radius: f64 },
}

/// Weights below this count as never updated when deciding occupancy.
const OCCUPANCY_WEIGHT_FLOOR: f64 = 1e-6;

impl CollisionChecker<'_> {
    pub fn voxel_size(&self) -> f64 {
        match self {
            Self::EsdfPoint { esdf, .. } => esdf.voxel_size(),
            Self::TsdfSphere { tsdf, .. } => tsdf.voxel_size(),
        }
    }

    pub fn robot_radius(&self) -> f64 {
        match self {
            Self::EsdfPoint { robot_radius, .. } | Self::TsdfSphere { robot_radius, .. } => {
                *robot_radius
            }
        }
    }

    pub fn is_state_valid(&self, p: &Vector3<f64>) -> bool {
        match self {
            Self::EsdfPoint { esdf, robot_radius } => {
                let idx = GridIndex::from_point(p, esdf.voxel_size());
                esdf.get(&idx)
                    .is_some_and(|v| v.observed && v.distance >= *robot_radius)
            }
            Self::TsdfSphere { tsdf, robot_radius } => {
                let vs = tsdf.voxel_size();
                let reach = (robot_radius / vs).ceil() as i64;
                let center = GridIndex::from_point(p, vs);
                let r_sq = robot_radius * robot_radius;
                for dx in -reach..=reach {
                    for dy in -reach..=reach {
                        for dz in -reach..=reach {
                            let idx = center.offset(dx, dy, dz);
                            if (idx.center(vs) - p).norm_squared() > r_sq {
                                continue;
                            }
                            let occupied = tsdf.get(&idx).is_some_and(|v| {
                                v.weight > OCCUPANCY_WEIGHT_FLOOR && v.distance <= 0.0
                            });
                            if occupied {
                                return false;
                            }
                        }
                    }
                }
                true
            }
        }
    }

    /// Validity of one grid cell, bypassing point conversion. Matches
    /// `is_state_valid` at the voxel center.
    pub fn is_voxel_valid(&self, idx: &GridIndex) -> bool {
        match self {
            Self::EsdfPoint { esdf, robot_radius } => esdf
                .get(idx)
                .is_some_and(|v| v.observed && v.distance >= *robot_radius),
            Self::TsdfSphere { .. } => {
                self.is_state_valid(&idx.center(self.voxel_size()))
            }
        }
    }

    /// Walks every voxel the segment passes through and checks each one; the
    /// distance-field mode additionally samples the segment at half-voxel
    /// steps so the point rule is honored between voxel centers.
    pub fn is_motion_valid(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        if !self.is_state_valid(a) || !self.is_state_valid(b) {
            return false;
        }
        let vs = self.voxel_size();
        for step in voxel_ray(a, b, vs) {
            if !self.is_voxel_valid(&step) {
                return false;
            }
        }
        if matches!(self, Self::EsdfPoint { .. }) {
            let length = (b - a).norm();
            let samples = (length / (vs * 0.5)).ceil() as usize;
            for i in 1..samples {
                let p = a + (b - a) * (i as f64 / samples as f64);
                if !self.is_state_valid(&p) {
                    return false;
                }
            }
        }
        true
    }
}

/// Search effort limit. Iterations bound the work deterministically; the
/// wall clock, when set, cuts a run short regardless of iteration count.
#[derive(Clone, Copy, Debug)]
pub struct PlanBudget {
    pub max_iterations: usize,
    pub wall_clock: Option<Duration>,
}

impl PlanBudget {
    pub fn iterations(max_iterations: usize) -> Self {
        Self { max_iterations, wall_clock: None }
    }

    pub fn timed(wall_clock: Duration, max_iterations: usize) -> Self {
        Self { max_iterations, wall_clock: Some(wall_clock) }
    }

    pub(crate) fn start(&self) -> BudgetClock {
        BudgetClock { started: Instant::now(), wall_clock: self.wall_clock, polls: 0 }
    }
}

pub(crate) struct BudgetClock {
    started: Instant,
    wall_clock: Option<Duration>,
    polls: u32,
}

impl BudgetClock {
    /// True once the wall clock is spent. The clock is polled every few
    /// calls to keep the check cheap inside hot sampling loops.
    pub(crate) fn expired(&mut self) -> bool {
        let Some(limit) = self.wall_clock else { return false };
        self.polls = self.polls.wrapping_add(1);
        if self.polls % 16 != 0 {
            return false;
        }
        self.started.elapsed() >= limit
    }

    pub(crate) fn expired_now(&self) -> bool {
        self.wall_clock.is_some_and(|limit| self.started.elapsed() >= limit)
    }
}

/// 26-connected grid search between the voxels containing `start` and
/// `goal`, validity judged by the checker. Waypoints are the exact query
/// points joined by the centers of the voxels in between.
pub fn astar_esdf(
    cc: &CollisionChecker,
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
    max_expansions: usize,
) -> Option<WaypointPath> {
    let vs = cc.voxel_size();
    let from = GridIndex::from_point(start, vs);
    let to = GridIndex::from_point(goal, vs);
    let path = astar_voxels(|i| cc.is_voxel_valid(i), from, to, vs, max_expansions)?;
    let mut points = Vec::with_capacity(path.len() + 2);
    points.push(*start);
    for idx in &path[1..path.len().saturating_sub(1)] {
        points.push(idx.center(vs));
    }
    points.push(*goal);
    Some(WaypointPath::new(points))
}
