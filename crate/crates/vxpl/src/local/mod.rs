//! Conservative online replanning. A waypoint queue feeds a replan cycle
//! that smooths toward known-free waypoints when it can, falls back to a
//! stochastic endpoint search when it cannot, optionally inserts an
//! intermediate goal, and as a last resort brings the robot to rest inside
//! observed space. Every emitted trajectory keeps a locked prefix of the one
//! it replaces and ends at rest with clearance.

mod explore;
mod shotgun;

pub use explore::{
    frustum_unknown_count, select_exploration_goal, select_random_intermediate_goal, CameraModel,
    ExplorationSampler,
};
pub use shotgun::{shotgun_search, ShotgunConfig, ShotgunResult};

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::esdf::EsdfVoxel;
use crate::plan::{shorten_path, CollisionChecker, WaypointPath};
use crate::smooth::{
    audit_trajectory, loco_smooth_from, DerivativeOrder, EndConditions, FittingMode, LocoConfig,
    PolynomialSegment, SplineProblem, Trajectory,
};
use crate::voxel::VoxelLayer;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LocalError {
    #[error("start voxel is unknown or too close to obstacles")]
    InvalidStart,
    #[error("no free-space candidates within the attempt budget")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    User,
    GlobalPlan,
    Intermediate,
}

#[derive(Debug, Clone)]
pub struct QueuedWaypoint {
    pub point: Vector3<f64>,
    pub provenance: Provenance,
    /// Clock time the waypoint entered the queue, seconds.
    pub inserted_at: f64,
}

/// A waypoint counts as reached within this many voxels.
const REACH_VOXELS: f64 = 2.0;
/// Intermediate goals are dropped after this long without being reached.
const INTERMEDIATE_EXPIRY: f64 = 30.0;

/// Ordered goals for the replanner. User and global-plan waypoints persist
/// until reached; intermediate goals additionally expire with age or as soon
/// as the next real waypoint sits in known free space.
#[derive(Debug, Clone, Default)]
pub struct WaypointQueue {
    items: VecDeque<QueuedWaypoint>,
}

impl WaypointQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_back(&mut self, point: Vector3<f64>, provenance: Provenance, now: f64) {
        self.items.push_back(QueuedWaypoint { point, provenance, inserted_at: now });
    }

    pub fn push_front_intermediate(&mut self, point: Vector3<f64>, now: f64) {
        self.items.push_front(QueuedWaypoint {
            point,
            provenance: Provenance::Intermediate,
            inserted_at: now,
        });
    }

    /// Swaps any leading intermediates for the given one, so failed redirects
    /// do not pile up at the head of the queue.
    pub fn replace_front_intermediate(&mut self, point: Vector3<f64>, now: f64) {
        while self
            .items
            .front()
            .is_some_and(|w| w.provenance == Provenance::Intermediate)
        {
            self.items.pop_front();
        }
        self.push_front_intermediate(point, now);
    }

    pub fn front(&self) -> Option<&QueuedWaypoint> {
        self.items.front()
    }

    pub fn upcoming(&self) -> impl Iterator<Item = &QueuedWaypoint> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Queue maintenance at the start of a replan cycle: consume leading
    /// waypoints the robot has reached, expire stale intermediates, and drop
    /// leading intermediates once the next real waypoint is in known free
    /// space (free implies a direct attempt is worth making).
    pub fn update(&mut self, position: &Vector3<f64>, now: f64, checker: &CollisionChecker) {
        let reach = REACH_VOXELS * checker.voxel_size();
        while self.items.front().is_some_and(|w| (w.point - position).norm() <= reach) {
            self.items.pop_front();
        }
        self.items.retain(|w| {
            w.provenance != Provenance::Intermediate || now - w.inserted_at <= INTERMEDIATE_EXPIRY
        });
        let next_real_free = self
            .items
            .iter()
            .find(|w| w.provenance != Provenance::Intermediate)
            .map(|w| checker.is_state_valid(&w.point));
        if next_real_free == Some(true) {
            while self
                .items
                .front()
                .is_some_and(|w| w.provenance == Provenance::Intermediate)
            {
                self.items.pop_front();
            }
        }
    }
}

/// Execution bookkeeping across replans. Emissions are stacked: a query at
/// time `t` is answered by the latest emission that had started by `t`, so
/// committing a suffix never rewrites history before its start time.
#[derive(Debug)]
pub struct ReplanState {
    emissions: Vec<Trajectory>,
    /// Absolute execution time, seconds.
    pub cursor: f64,
    /// Emitted suffixes begin this far past the cursor; the active prefix up
    /// to there is immutable.
    pub lock_horizon: f64,
}

impl ReplanState {
    /// Starts the clock with the robot parked at `position`.
    pub fn at_rest(position: &Vector3<f64>, start_time: f64, lock_horizon: f64) -> Self {
        assert!(lock_horizon >= 0.0);
        let hold = Trajectory::new(start_time, vec![PolynomialSegment::constant(position, 1.0)]);
        Self { emissions: vec![hold], cursor: start_time, lock_horizon }
    }

    pub fn active(&self) -> &Trajectory {
        self.emissions.last().expect("at least the initial hold")
    }

    pub fn emissions(&self) -> &[Trajectory] {
        &self.emissions
    }

    pub fn lock_time(&self) -> f64 {
        self.cursor + self.lock_horizon
    }

    pub fn advance(&mut self, dt: f64) {
        assert!(dt >= 0.0);
        self.cursor += dt;
    }

    /// State at absolute `time` under the emission stack; times outside any
    /// trajectory clamp to its ends, so the state is total.
    pub fn state_at(&self, time: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let traj = self
            .emissions
            .iter()
            .rev()
            .find(|e| e.start_time <= time)
            .unwrap_or_else(|| self.emissions.first().expect("nonempty"));
        traj.state_at(time).expect("emissions are never empty trajectories")
    }

    /// Publishes a suffix. Start times must strictly increase so that the
    /// executed timeline stays monotonic.
    pub fn commit(&mut self, suffix: Trajectory) {
        assert!(!suffix.is_empty(), "cannot commit an empty trajectory");
        assert!(
            suffix.start_time > self.active().start_time,
            "suffix must start after the active emission"
        );
        self.emissions.push(suffix);
    }
}

/// Verification sampling period, seconds.
const VERIFY_STEP: f64 = 0.01;

/// Rechecks an already-committed trajectory against the current map over
/// `[from, from + horizon]`, both clamped into the trajectory span. Returns
/// the first sampled time whose state is unobserved or closer to obstacles
/// than `robot_radius`, or `None` when the window is clear.
pub fn verify_trajectory(
    traj: &Trajectory,
    esdf: &VoxelLayer<EsdfVoxel>,
    robot_radius: f64,
    from: f64,
    horizon: f64,
) -> Option<f64> {
    assert!(horizon >= 0.0);
    let checker = CollisionChecker::EsdfPoint { esdf, robot_radius };
    let begin = from.max(traj.start_time).min(traj.end_time());
    let end = (from + horizon).min(traj.end_time()).max(begin);
    let steps = ((end - begin) / VERIFY_STEP).ceil() as usize;
    for k in 0..=steps {
        let t = (begin + k as f64 * VERIFY_STEP).min(end);
        let (p, _, _) = traj.state_at(t).expect("verified trajectories are nonempty");
        if !checker.is_state_valid(&p) {
            return Some(t);
        }
    }
    None
}

/// How the replanner picks the endpoint for a single-waypoint attempt.
#[derive(Debug, Clone)]
pub enum EndpointStrategy {
    /// Aim straight at the waypoint, clipped to the last free point along
    /// the segment.
    StraightLine,
    /// Walk the stochastic search toward the waypoint; optionally seed the
    /// smoother with the shortened particle path instead of just the
    /// endpoint.
    Shotgun { hot_start: bool },
}

/// What to insert when a replan attempt fails outright.
#[derive(Debug, Clone)]
pub enum IntermediateStrategy {
    None,
    /// Uniform ball sample around the lock-point pose; may land in unknown
    /// space on purpose.
    Random { radius: f64 },
    /// Exploration-scored free-space sample.
    Explore(ExplorationSampler),
}

#[derive(Debug, Clone)]
pub struct LocalConfig {
    pub robot_radius: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub loco: LocoConfig,
    pub shotgun: ShotgunConfig,
    pub endpoint: EndpointStrategy,
    pub intermediate: IntermediateStrategy,
    /// Stretch on the minimal stop time, dimensionless.
    pub stop_padding: f64,
    /// Waypoints closer together than this many voxels collapse before
    /// smoothing; crowded waypoints destabilize the optimizer.
    pub min_waypoint_spacing_voxels: f64,
}

impl LocalConfig {
    pub fn new(robot_radius: f64) -> Self {
        Self {
            robot_radius,
            v_max: 1.5,
            a_max: 2.0,
            loco: LocoConfig::new(robot_radius),
            shotgun: ShotgunConfig::default(),
            endpoint: EndpointStrategy::Shotgun { hot_start: true },
            intermediate: IntermediateStrategy::None,
            stop_padding: 1.5,
            min_waypoint_spacing_voxels: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplanAction {
    /// Smoothed directly toward queue waypoints.
    Smooth,
    /// Smoothed toward a stochastic-search endpoint.
    Shotgun,
    /// Succeeded only after inserting an intermediate goal.
    Intermediate,
    /// Emitted a stop-in-place suffix.
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplanOutcome {
    /// A new suffix was committed.
    Suffix { action: ReplanAction, duration: f64 },
    /// Nothing changed: the queue is empty or no safe suffix exists (the
    /// active trajectory already ends at rest in free space).
    Hold,
}

/// Wall-clock cost of one replan cycle, split by phase. Seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReplanTimings {
    /// Endpoint search plus path shortening.
    pub shotgun: f64,
    /// Trajectory optimization and stop-spline audits.
    pub loco: f64,
}

/// One replan cycle against a frozen map snapshot. Maintains the queue,
/// then tries in order: smoothing through known-free queue waypoints,
/// smoothing toward a searched endpoint, one intermediate-goal retry, and a
/// stop-in-place suffix. Whatever is committed starts exactly at the lock
/// boundary state.
pub fn replan_step(
    state: &mut ReplanState,
    esdf: &VoxelLayer<EsdfVoxel>,
    queue: &mut WaypointQueue,
    cfg: &LocalConfig,
    rng: &mut ChaCha8Rng,
) -> ReplanOutcome {
    replan_step_timed(state, esdf, queue, cfg, rng).0
}

/// [`replan_step`] with per-phase wall-clock accounting.
pub fn replan_step_timed(
    state: &mut ReplanState,
    esdf: &VoxelLayer<EsdfVoxel>,
    queue: &mut WaypointQueue,
    cfg: &LocalConfig,
    rng: &mut ChaCha8Rng,
) -> (ReplanOutcome, ReplanTimings) {
    let mut timings = ReplanTimings::default();
    let checker = CollisionChecker::EsdfPoint { esdf, robot_radius: cfg.robot_radius };
    let now = state.cursor;
    let (p_now, _, _) = state.state_at(now);
    queue.update(&p_now, now, &checker);
    if queue.is_empty() {
        return (ReplanOutcome::Hold, timings);
    }

    let t0 = state.lock_time();
    let (p0, v0, a0) = state.state_at(t0);
    let mut depth = 0;
    loop {
        if let Some((traj, action)) =
            attempt_plan(esdf, queue, cfg, rng, &checker, t0, &p0, &v0, &a0, &mut timings)
        {
            let duration = traj.total_duration();
            state.commit(traj);
            let action = if depth == 1 { ReplanAction::Intermediate } else { action };
            return (ReplanOutcome::Suffix { action, duration }, timings);
        }
        if depth > 0 {
            break;
        }
        let inserted = match &cfg.intermediate {
            IntermediateStrategy::None => false,
            IntermediateStrategy::Random { radius } => {
                let point = select_random_intermediate_goal(&p0, *radius, rng);
                queue.replace_front_intermediate(point, now);
                true
            }
            IntermediateStrategy::Explore(sampler) => {
                let goal = queue
                    .upcoming()
                    .find(|w| w.provenance != Provenance::Intermediate)
                    .or_else(|| queue.front())
                    .map(|w| w.point);
                match goal {
                    Some(goal) => {
                        match select_exploration_goal(
                            esdf,
                            &p0,
                            &goal,
                            cfg.robot_radius,
                            sampler,
                            rng,
                        ) {
                            Ok((point, _yaw)) => {
                                queue.replace_front_intermediate(point, now);
                                true
                            }
                            Err(_) => false,
                        }
                    }
                    None => false,
                }
            }
        };
        if !inserted {
            break;
        }
        depth = 1;
    }

    // Terminal fallback: decelerate to rest along the current heading. The
    // lock-point state lies on a verified trajectory, so a short stop stays
    // in known free space; if even that audit fails, keep the active
    // trajectory, which already ends at rest.
    let t_stop = (2.0 * v0.norm() / cfg.a_max).max(0.2) * cfg.stop_padding;
    let target = p0 + v0 * (t_stop / 2.0);
    let ends = EndConditions {
        start_velocity: v0,
        start_acceleration: a0,
        ..EndConditions::default()
    };
    let tick = Instant::now();
    let stop = SplineProblem::pinned_waypoints(&[p0, target], &[t_stop], DerivativeOrder::Snap, &ends)
        .map(|problem| problem.solve(t0));
    if let Ok(traj) = stop {
        if audit_trajectory(&traj, &checker) {
            timings.loco += tick.elapsed().as_secs_f64();
            let duration = traj.total_duration();
            state.commit(traj);
            return (ReplanOutcome::Suffix { action: ReplanAction::Stop, duration }, timings);
        }
    }
    timings.loco += tick.elapsed().as_secs_f64();
    (ReplanOutcome::Hold, timings)
}

/// Stages 1 and 2 of the cascade: direct smoothing through a known-free
/// queue prefix, then endpoint search toward the front waypoint.
#[allow(clippy::too_many_arguments)]
fn attempt_plan(
    esdf: &VoxelLayer<EsdfVoxel>,
    queue: &WaypointQueue,
    cfg: &LocalConfig,
    rng: &mut ChaCha8Rng,
    checker: &CollisionChecker,
    t0: f64,
    p0: &Vector3<f64>,
    v0: &Vector3<f64>,
    a0: &Vector3<f64>,
    timings: &mut ReplanTimings,
) -> Option<(Trajectory, ReplanAction)> {
    let free_prefix: Vec<Vector3<f64>> = queue
        .upcoming()
        .map(|w| w.point)
        .take_while(|p| checker.is_state_valid(p))
        .collect();
    if free_prefix.len() >= 2 {
        let mut points = vec![*p0];
        points.extend(free_prefix);
        if let Some(traj) = try_loco(&points, esdf, cfg, t0, v0, a0, timings) {
            return Some((traj, ReplanAction::Smooth));
        }
    }

    let target = queue.front()?.point;
    match cfg.endpoint {
        EndpointStrategy::StraightLine => {
            let end = farthest_free_along(checker, p0, &target);
            let traj = try_loco(&[*p0, end], esdf, cfg, t0, v0, a0, timings)?;
            Some((traj, ReplanAction::Smooth))
        }
        EndpointStrategy::Shotgun { hot_start } => {
            let tick = Instant::now();
            let search_cfg = ShotgunConfig { seed: rng.random::<u64>(), ..cfg.shotgun.clone() };
            let found = shotgun_search(esdf, p0, &target, cfg.robot_radius, &search_cfg);
            eprintln!(
                "DBG shotgun p0={:?} tgt={:?}: {:?}",
                p0,
                target,
                found.as_ref().map(|f| (f.reached, f.best_point, f.particle_path.len()))
            );
            let points = found.ok().map(|found| {
                if hot_start {
                    let raw = WaypointPath::new(found.particle_path.clone());
                    let path = shorten_path(checker, &raw).unwrap_or(raw);
                    let mut v = vec![*p0];
                    v.extend(path.waypoints.iter().copied());
                    v
                } else {
                    vec![*p0, found.best_point]
                }
            });
            timings.shotgun += tick.elapsed().as_secs_f64();
            let traj = try_loco(&points?, esdf, cfg, t0, v0, a0, timings)?;
            Some((traj, ReplanAction::Shotgun))
        }
    }
}

/// Smooths through `points` from the lock state, enforcing the minimum
/// inter-waypoint spacing first. `None` when too few points survive or the
/// optimizer cannot produce a collision-free result.
fn try_loco(
    points: &[Vector3<f64>],
    esdf: &VoxelLayer<EsdfVoxel>,
    cfg: &LocalConfig,
    t0: f64,
    v0: &Vector3<f64>,
    a0: &Vector3<f64>,
    timings: &mut ReplanTimings,
) -> Option<Trajectory> {
    let min_gap = cfg.min_waypoint_spacing_voxels * esdf.voxel_size();
    let filtered = filter_spacing(points, min_gap);
    if filtered.len() < 2 {
        return None;
    }
    let mut loco_cfg = cfg.loco.clone();
    loco_cfg.robot_radius = cfg.robot_radius;
    loco_cfg.fit = FittingMode::VisibilityResample;
    let ends = EndConditions {
        start_velocity: *v0,
        start_acceleration: *a0,
        ..EndConditions::default()
    };
    let tick = Instant::now();
    let result =
        loco_smooth_from(&WaypointPath::new(filtered), esdf, &loco_cfg, cfg.v_max, cfg.a_max, &ends);
    timings.loco += tick.elapsed().as_secs_f64();
    eprintln!(
        "DBG try_loco n={} first={:?} last={:?} -> {:?}",
        points.len(),
        points.first(),
        points.last(),
        result.as_ref().err().map(|e| format!("{e}"))
    );
    result.ok().map(|t| t.with_start_time(t0))
}

/// Collapses runs of waypoints closer than `min_gap`, keeping the first
/// point of each run and always preserving the final endpoint.
fn filter_spacing(points: &[Vector3<f64>], min_gap: f64) -> Vec<Vector3<f64>> {
    let mut out: Vec<Vector3<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if out.last().map_or(true, |l| (p - l).norm() >= min_gap) {
            out.push(*p);
        }
    }
    if let (Some(&last_in), Some(&last_out)) = (points.last(), out.last()) {
        if (last_in - last_out).norm() > 1e-12 {
            if out.len() >= 2 {
                *out.last_mut().expect("nonempty") = last_in;
            } else if (last_in - out[0]).norm() >= min_gap {
                out.push(last_in);
            }
        }
    }
    out
}

/// Last point along `from -> to` (sampled at half-voxel steps) that is still
/// valid, stopping at the first invalid sample. Falls back to `from`.
fn farthest_free_along(
    checker: &CollisionChecker,
    from: &Vector3<f64>,
    to: &Vector3<f64>,
) -> Vector3<f64> {
    let offset = to - from;
    let length = offset.norm();
    if length < 1e-12 {
        return *from;
    }
    let steps = (length / (checker.voxel_size() * 0.5)).ceil() as usize;
    let mut best = *from;
    for k in 1..=steps {
        let p = from + offset * (k as f64 / steps as f64);
        if !checker.is_state_valid(&p) {
            break;
        }
        best = p;
    }
    best
}
