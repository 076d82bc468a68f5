//! Stochastic escape search over the traversable voxel grid. A bundle of
//! particles walks 26-connected known-free voxels, each step choosing between
//! goal-seeking, clearance-seeking, and random moves; the walk ending closest
//! to the goal seeds the next trajectory attempt.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LocalError;
use crate::esdf::EsdfVoxel;
use crate::voxel::{point_to_index, GridIndex, VoxelLayer, NEIGHBORS_26};

#[derive(Debug, Clone)]
pub struct ShotgunConfig {
    pub n_particles: usize,
    /// Steps each particle may take before giving up.
    pub max_iterations: usize,
    pub p_goal: f64,
    pub p_clearance: f64,
    pub p_random: f64,
    pub seed: u64,
}

impl Default for ShotgunConfig {
    fn default() -> Self {
        Self {
            n_particles: 20,
            max_iterations: 300,
            p_goal: 0.5,
            p_clearance: 0.2,
            p_random: 0.3,
            seed: 0,
        }
    }
}

impl ShotgunConfig {
    pub fn is_valid(&self) -> bool {
        self.n_particles >= 1
            && self.max_iterations >= 1
            && self.p_goal >= 0.0
            && self.p_clearance >= 0.0
            && self.p_random >= 0.0
            && (self.p_goal + self.p_clearance + self.p_random - 1.0).abs() <= 1e-9
    }
}

#[derive(Debug, Clone)]
pub struct ShotgunResult {
    pub reached: bool,
    /// Center of the best endpoint voxel.
    pub best_point: Vector3<f64>,
    /// Voxel-center walk of the particle that produced `best_point`.
    pub particle_path: Vec<Vector3<f64>>,
}

enum MoveKind {
    Goal,
    Clearance,
    Random,
}

/// Walks particles from `start` toward `goal` through voxels that are
/// observed with at least `robot_radius` clearance. The first particle is
/// forced to pure goal-seeking; the rest mix the three moves by the
/// configured probabilities. Returns as soon as any particle enters the goal
/// voxel, otherwise reports the endpoint closest to the goal. The start
/// voxel itself is the baseline candidate, so the result is never farther
/// from the goal than where the search stood.
pub fn shotgun_search(
    esdf: &VoxelLayer<EsdfVoxel>,
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
    robot_radius: f64,
    cfg: &ShotgunConfig,
) -> Result<ShotgunResult, LocalError> {
    assert!(cfg.is_valid(), "shotgun probabilities must be nonnegative and sum to 1");
    let vs = esdf.voxel_size();
    let traversable =
        |i: &GridIndex| esdf.get(i).is_some_and(|v| v.observed && v.distance >= robot_radius);
    let start_idx = point_to_index(start, vs);
    if !traversable(&start_idx) {
        return Err(LocalError::InvalidStart);
    }
    let goal_idx = point_to_index(goal, vs);
    let goal_gap = |i: &GridIndex| (i.center(vs) - goal).norm();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best_gap = goal_gap(&start_idx);
    let mut best_idx = start_idx;
    let mut best_path = vec![start_idx];

    for particle in 0..cfg.n_particles {
        let mut here = start_idx;
        let mut path = vec![here];
        let mut prev: Option<GridIndex> = None;
        let mut reached = here == goal_idx;
        for _ in 0..cfg.max_iterations {
            if reached {
                break;
            }
            let kind = if particle == 0 {
                MoveKind::Goal
            } else {
                let u: f64 = rng.random_range(0.0..1.0);
                if u < cfg.p_goal {
                    MoveKind::Goal
                } else if u < cfg.p_goal + cfg.p_clearance {
                    MoveKind::Clearance
                } else {
                    MoveKind::Random
                }
            };
            // Ties fall to the earliest kernel entry, which iterates offsets
            // in lexicographic order; random moves exclude the voxel the
            // particle just left unless it is the only way out.
            let next = match kind {
                MoveKind::Goal => {
                    let mut pick: Option<(GridIndex, f64)> = None;
                    for o in &NEIGHBORS_26 {
                        let n = o.apply(&here);
                        if !traversable(&n) {
                            continue;
                        }
                        let gap = goal_gap(&n);
                        if pick.map_or(true, |(_, g)| gap < g) {
                            pick = Some((n, gap));
                        }
                    }
                    pick.map(|(n, _)| n)
                }
                MoveKind::Clearance => {
                    let mut pick: Option<(GridIndex, f64)> = None;
                    for o in &NEIGHBORS_26 {
                        let n = o.apply(&here);
                        if !traversable(&n) {
                            continue;
                        }
                        let d = esdf.get(&n).map(|v| v.distance).unwrap_or(f64::NEG_INFINITY);
                        if pick.map_or(true, |(_, b)| d > b) {
                            pick = Some((n, d));
                        }
                    }
                    pick.map(|(n, _)| n)
                }
                MoveKind::Random => {
                    let mut cands = Vec::with_capacity(26);
                    for o in &NEIGHBORS_26 {
                        let n = o.apply(&here);
                        if Some(n) == prev || !traversable(&n) {
                            continue;
                        }
                        cands.push(n);
                    }
                    if cands.is_empty() {
                        prev.filter(|p| traversable(p))
                    } else {
                        Some(cands[rng.random_range(0..cands.len())])
                    }
                }
            };
            let Some(next) = next else {
                break;
            };
            prev = Some(here);
            here = next;
            path.push(here);
            reached = here == goal_idx;
        }
        let gap = goal_gap(&here);
        if reached || gap < best_gap {
            best_gap = gap;
            best_idx = here;
            best_path = path;
        }
        if reached {
            break;
        }
    }

    Ok(ShotgunResult {
        reached: best_idx == goal_idx,
        best_point: best_idx.center(vs),
        particle_path: best_path.into_iter().map(|i| i.center(vs)).collect(),
    })
}
