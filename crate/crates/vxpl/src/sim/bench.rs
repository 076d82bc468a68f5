//! Closed-loop and global planning benchmarks. The local benchmark flies a
//! simulated depth camera through random cylinder forests with online
//! mapping and replanning; the global benchmark sweeps every planner and
//! smoother combination over random queries on a prebuilt map. Both emit
//! fixed-schema CSV rows merged in trial order regardless of worker count.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::esdf::{apply_spheres, update_esdf, EsdfConfig, EsdfVoxel};
use crate::local::{
    replan_step_timed, EndpointStrategy, IntermediateStrategy, LocalConfig, Provenance,
    ReplanAction, ReplanOutcome, ReplanState, WaypointQueue,
};
use crate::plan::{
    astar_esdf, build_roadmap, plan_prm, plan_rrt_connect, plan_rrt_star, plan_skeleton,
    shorten_path, CollisionChecker, PlanBudget, WaypointPath,
};
use crate::sim::{camera_pose, render_depth, ForestWorld, SimCamera, FOREST_EXTENTS, FOREST_MARGIN};
use crate::skeleton::SparseGraph;
use crate::smooth::{loco_smooth, smooth_polynomial_split, velocity_ramp, LocoConfig, Trajectory};
use crate::tsdf::{integrate_scan, SensorScan, TsdfConfig, TsdfVoxel};
use crate::voxel::{LayerConfig, VoxelLayer};

/// Replanner variants exercised by the local benchmark: the endpoint stage
/// crossed with the intermediate-goal stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalMethod {
    /// Straight-line endpoint, no recovery.
    LocoRaw,
    /// Stochastic endpoint only, smoother starts from scratch.
    ShotgunNoPath,
    /// Stochastic endpoint seeding the smoother with its shortened path.
    Shotgun,
    /// Straight-line endpoint with random intermediate goals.
    LocoRandom,
    /// Straight-line endpoint with exploration-scored intermediates.
    LocoExplore,
    ShotgunRandom,
    ShotgunExplore,
}

impl LocalMethod {
    pub const ALL: [LocalMethod; 7] = [
        LocalMethod::LocoRaw,
        LocalMethod::ShotgunNoPath,
        LocalMethod::Shotgun,
        LocalMethod::LocoRandom,
        LocalMethod::LocoExplore,
        LocalMethod::ShotgunRandom,
        LocalMethod::ShotgunExplore,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LocalMethod::LocoRaw => "loco_raw",
            LocalMethod::ShotgunNoPath => "shotgun_no_path",
            LocalMethod::Shotgun => "shotgun",
            LocalMethod::LocoRandom => "loco_random",
            LocalMethod::LocoExplore => "loco_explore",
            LocalMethod::ShotgunRandom => "shotgun_random",
            LocalMethod::ShotgunExplore => "shotgun_explore",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    fn strategies(&self) -> (EndpointStrategy, IntermediateStrategy) {
        let shotgun = EndpointStrategy::Shotgun { hot_start: true };
        match self {
            LocalMethod::LocoRaw => (EndpointStrategy::StraightLine, IntermediateStrategy::None),
            LocalMethod::ShotgunNoPath => {
                (EndpointStrategy::Shotgun { hot_start: false }, IntermediateStrategy::None)
            }
            LocalMethod::Shotgun => (shotgun, IntermediateStrategy::None),
            LocalMethod::LocoRandom => {
                (EndpointStrategy::StraightLine, IntermediateStrategy::Random { radius: 2.0 })
            }
            LocalMethod::LocoExplore => {
                (EndpointStrategy::StraightLine, IntermediateStrategy::Explore(Default::default()))
            }
            LocalMethod::ShotgunRandom => (shotgun, IntermediateStrategy::Random { radius: 2.0 }),
            LocalMethod::ShotgunExplore => {
                (shotgun, IntermediateStrategy::Explore(Default::default()))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalBenchConfig {
    pub densities: Vec<f64>,
    /// Trials per density.
    pub trials: usize,
    pub methods: Vec<LocalMethod>,
    pub seed: u64,
    pub voxel_size: f64,
    pub robot_radius: f64,
    /// Depth-image subsampling in both pixel directions.
    pub camera_stride: u32,
    /// Sense-plan-advance cycles before a trial is declared failed.
    pub max_steps: usize,
    /// Worker threads; 0 picks the machine's parallelism.
    pub workers: usize,
}

impl Default for LocalBenchConfig {
    fn default() -> Self {
        Self {
            densities: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            trials: 20,
            methods: LocalMethod::ALL.to_vec(),
            seed: 7,
            voxel_size: 0.1,
            robot_radius: 0.3,
            camera_stride: 4,
            max_steps: 60,
            workers: 0,
        }
    }
}

/// One local-benchmark episode. The CSV columns come first; the trailing
/// audit fields feed safety assertions and never appear in the file.
#[derive(Debug, Clone)]
pub struct LocalTrialRow {
    pub method: LocalMethod,
    pub density: f64,
    pub trial: usize,
    pub success: bool,
    pub steps: usize,
    pub path_len_m: f64,
    pub init_dist_m: f64,
    pub final_dist_m: f64,
    pub tsdf_ms: f64,
    pub esdf_ms: f64,
    pub shotgun_ms: f64,
    pub loco_ms: f64,
    /// Smallest true clearance over every executed 10 ms sample.
    pub min_true_clearance_m: f64,
    /// Every committed trajectory ended at rest in observed free space.
    pub emissions_end_at_rest: bool,
}

pub const LOCAL_CSV_HEADER: &str =
    "method,density,trial,success,steps,path_len_m,init_dist_m,final_dist_m,tsdf_ms,esdf_ms,shotgun_ms,loco_ms";

impl LocalTrialRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.4},{:.4},{:.4},{:.3},{:.3},{:.3},{:.3}",
            self.method.name(),
            self.density,
            self.trial,
            self.success as u8,
            self.steps,
            self.path_len_m,
            self.init_dist_m,
            self.final_dist_m,
            self.tsdf_ms,
            self.esdf_ms,
            self.shotgun_ms,
            self.loco_ms,
        )
    }
}

/// Robot start and goal sit at the centers of the two obstacle-free entry
/// strips, facing each other across the forest.
pub fn forest_endpoints() -> (Vector3<f64>, Vector3<f64>) {
    let start = Vector3::new(FOREST_MARGIN / 2.0, FOREST_EXTENTS.y / 2.0, FOREST_EXTENTS.z / 2.0);
    let goal = Vector3::new(
        FOREST_EXTENTS.x - FOREST_MARGIN / 2.0,
        FOREST_EXTENTS.y / 2.0,
        FOREST_EXTENTS.z / 2.0,
    );
    (start, goal)
}

/// The forest layout for a (density, trial) cell depends only on the batch
/// seed and that cell, never on the method, so method comparisons see
/// identical worlds.
fn world_seed(seed: u64, density_idx: usize, trial: usize) -> u64 {
    seed.wrapping_add(1000 * density_idx as u64).wrapping_add(trial as u64)
}

/// Splitmix-style mixer for decorrelated per-episode streams.
fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Yaw follows the velocity heading above this speed and holds otherwise.
const YAW_FOLLOW_SPEED: f64 = 0.1;
/// Execution sampling period for path length, clearance audit, and goal
/// arrival checks, seconds.
const EXEC_STEP: f64 = 0.01;
/// Simulated seconds advanced per sense-plan cycle.
const STEP_PERIOD: f64 = 1.0;
/// Replan suffixes may not modify the trajectory sooner than this far ahead
/// of the execution cursor, seconds.
const LOCK_HORIZON: f64 = 0.5;
/// A trial succeeds when the robot comes within two voxels of the goal.
const SUCCESS_RADIUS_VOXELS: f64 = 2.0;

/// Runs one closed-loop episode: render a depth image, fuse it, refresh the
/// distance field plus the unknown-space spheres, replan, then track the
/// active trajectory for one simulated second. `log` receives one JSON line
/// per cycle when given.
pub fn run_local_trial(
    method: LocalMethod,
    density: f64,
    density_idx: usize,
    trial: usize,
    cfg: &LocalBenchConfig,
    mut log: Option<&mut dyn Write>,
) -> LocalTrialRow {
    let wseed = world_seed(cfg.seed, density_idx, trial);
    let world = ForestWorld::generate(density, FOREST_EXTENTS, FOREST_MARGIN, wseed);
    let (start, goal) = forest_endpoints();
    let method_idx =
        LocalMethod::ALL.iter().position(|m| *m == method).expect("method in catalog") as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(wseed, 0xC0FFEE + method_idx));

    let camera = SimCamera::default();
    let tsdf_cfg = TsdfConfig {
        truncation_distance: 0.3,
        max_ray_length: camera.max_range,
        ..TsdfConfig::default()
    };
    let esdf_cfg = EsdfConfig {
        // Strictly inside the truncation distance so the +truncation free
        // plateau can never be mistaken for the surface band.
        fixed_band_radius: 0.2,
        max_esdf_distance: 2.0,
        default_distance: 2.0,
        ..EsdfConfig::default()
    };
    let mut tsdf: VoxelLayer<TsdfVoxel> = VoxelLayer::new(LayerConfig::new(cfg.voxel_size, 16).expect("benchmark grid"));
    let mut esdf: VoxelLayer<EsdfVoxel> = VoxelLayer::new(LayerConfig::new(cfg.voxel_size, 16).expect("benchmark grid"));

    let (endpoint, intermediate) = method.strategies();
    let mut local_cfg = LocalConfig::new(cfg.robot_radius);
    local_cfg.endpoint = endpoint;
    local_cfg.intermediate = intermediate;

    let mut queue = WaypointQueue::new();
    queue.push_back(goal, Provenance::User, 0.0);
    let mut state = ReplanState::at_rest(&start, 0.0, LOCK_HORIZON);

    let init_dist = (goal - start).norm();
    let success_radius = SUCCESS_RADIUS_VOXELS * cfg.voxel_size;
    let mut position = start;
    let mut yaw: f64 = 0.0;
    let mut path_len = 0.0;
    let mut min_clearance = f64::INFINITY;
    let mut emissions_ok = true;
    let mut audited_emissions = state.emissions().len();
    let mut row = LocalTrialRow {
        method,
        density,
        trial,
        success: false,
        steps: cfg.max_steps,
        path_len_m: 0.0,
        init_dist_m: init_dist,
        final_dist_m: init_dist,
        tsdf_ms: 0.0,
        esdf_ms: 0.0,
        shotgun_ms: 0.0,
        loco_ms: 0.0,
        min_true_clearance_m: min_clearance,
        emissions_end_at_rest: true,
    };

    'episode: for step in 0..cfg.max_steps {
        let pose = camera_pose(&position, yaw);
        let points = render_depth(&world, &pose, &camera, cfg.camera_stride);
        let scan = SensorScan { pose, points };

        let tick = Instant::now();
        let outcome = integrate_scan(&mut tsdf, &scan, &tsdf_cfg);
        row.tsdf_ms += tick.elapsed().as_secs_f64() * 1e3;

        let tick = Instant::now();
        update_esdf(&tsdf, &mut esdf, &outcome.updated, &esdf_cfg);
        apply_spheres(&mut esdf, &position, cfg.robot_radius, 2.0 * cfg.robot_radius);
        row.esdf_ms += tick.elapsed().as_secs_f64() * 1e3;

        let (plan_outcome, timings) =
            replan_step_timed(&mut state, &esdf, &mut queue, &local_cfg, &mut rng);
        row.shotgun_ms += timings.shotgun * 1e3;
        row.loco_ms += timings.loco * 1e3;

        // Audit anything newly committed: it must end at rest inside
        // currently observed free space.
        let checker = CollisionChecker::EsdfPoint { esdf: &esdf, robot_radius: cfg.robot_radius };
        for traj in &state.emissions()[audited_emissions..] {
            let (p_end, v_end, _) = traj.state_at(traj.end_time()).expect("committed nonempty");
            if v_end.norm() > 1e-6 || !checker.is_state_valid(&p_end) {
                emissions_ok = false;
            }
        }
        audited_emissions = state.emissions().len();

        // Track the active trajectory for one simulated second.
        let t_begin = state.cursor;
        let samples = (STEP_PERIOD / EXEC_STEP).round() as usize;
        let mut reached = false;
        let mut advanced = 0.0;
        for k in 1..=samples {
            let t = t_begin + k as f64 * EXEC_STEP;
            let (p, _, _) = state.state_at(t);
            path_len += (p - position).norm();
            position = p;
            min_clearance = min_clearance.min(world.sdf(&p));
            advanced = t - t_begin;
            if (p - goal).norm() <= success_radius {
                reached = true;
                break;
            }
        }
        state.advance(advanced);
        let (_, v_now, _) = state.state_at(state.cursor);
        if v_now.norm() >= YAW_FOLLOW_SPEED {
            yaw = v_now.y.atan2(v_now.x);
        }

        if let Some(out) = log.as_deref_mut() {
            let (action, duration) = match plan_outcome {
                ReplanOutcome::Suffix { action, duration } => {
                    let name = match action {
                        ReplanAction::Smooth => "smooth",
                        ReplanAction::Shotgun => "shotgun",
                        ReplanAction::Intermediate => "intermediate",
                        ReplanAction::Stop => "stop",
                    };
                    (name, duration)
                }
                ReplanOutcome::Hold => ("hold", 0.0),
            };
            let line = serde_json::json!({
                "step": step,
                "position": [position.x, position.y, position.z],
                "velocity": [v_now.x, v_now.y, v_now.z],
                "yaw": yaw,
                "action": action,
                "suffix_duration": duration,
                "goal_distance": (position - goal).norm(),
            });
            let _ = writeln!(out, "{line}");
        }

        if reached {
            row.success = true;
            row.steps = step + 1;
            break 'episode;
        }
    }

    row.path_len_m = path_len;
    row.final_dist_m = (position - goal).norm();
    row.min_true_clearance_m = min_clearance;
    row.emissions_end_at_rest = emissions_ok;
    row
}

/// Full sweep: methods x densities x trials, scheduled over a worker pool
/// and returned in method-major, density-minor, trial-last order. A panic
/// inside one episode is caught and reported as a failed row.
pub fn run_local_benchmark(cfg: &LocalBenchConfig) -> Vec<LocalTrialRow> {
    let jobs: Vec<(LocalMethod, usize, usize)> = cfg
        .methods
        .iter()
        .flat_map(|m| {
            (0..cfg.densities.len())
                .flat_map(move |d| (0..cfg.trials).map(move |t| (*m, d, t)))
        })
        .collect();
    run_pool(jobs.len(), cfg.workers, |i| {
        let (method, density_idx, trial) = jobs[i];
        let density = cfg.densities[density_idx];
        catch_unwind(AssertUnwindSafe(|| {
            run_local_trial(method, density, density_idx, trial, cfg, None)
        }))
        .unwrap_or_else(|_| {
            eprintln!(
                "trial panicked: method={} density={} trial={}",
                method.name(),
                density,
                trial
            );
            let (start, goal) = forest_endpoints();
            LocalTrialRow {
                method,
                density,
                trial,
                success: false,
                steps: cfg.max_steps,
                path_len_m: 0.0,
                init_dist_m: (goal - start).norm(),
                final_dist_m: (goal - start).norm(),
                tsdf_ms: 0.0,
                esdf_ms: 0.0,
                shotgun_ms: 0.0,
                loco_ms: 0.0,
                min_true_clearance_m: f64::INFINITY,
                emissions_end_at_rest: true,
            }
        })
    })
}

pub fn write_local_csv<W: Write>(rows: &[LocalTrialRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{LOCAL_CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    Ok(())
}

/// Work-stealing-free static pool: workers pull the next job index from a
/// shared counter, results are reassembled in job order.
fn run_pool<T, F>(n_jobs: usize, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let worker_count = if workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        workers
    }
    .min(n_jobs.max(1));
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<T>> = Vec::with_capacity(n_jobs);
    slots.resize_with(n_jobs, || None);
    let (tx, rx) = mpsc::channel::<(usize, T)>();
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            let tx = tx.clone();
            let next = &next;
            let job = &job;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n_jobs {
                    break;
                }
                if tx.send((i, job(i))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, row) in rx {
            slots[i] = Some(row);
        }
    });
    slots.into_iter().map(|s| s.expect("every job completes")).collect()
}

/// Global planners swept by the map-level benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalPlanner {
    /// Straight start-goal segment; the do-nothing baseline.
    Direct,
    RrtConnect,
    RrtStar,
    Skeleton,
    Prm,
}

impl GlobalPlanner {
    pub const ALL: [GlobalPlanner; 5] = [
        GlobalPlanner::Direct,
        GlobalPlanner::RrtConnect,
        GlobalPlanner::RrtStar,
        GlobalPlanner::Skeleton,
        GlobalPlanner::Prm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GlobalPlanner::Direct => "none",
            GlobalPlanner::RrtConnect => "rrt_connect",
            GlobalPlanner::RrtStar => "rrt_star",
            GlobalPlanner::Skeleton => "skeleton",
            GlobalPlanner::Prm => "prm",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalSmoother {
    /// Pass the raw waypoint path through.
    Raw,
    Ramp,
    Polynomial,
    Loco,
}

impl GlobalSmoother {
    pub const ALL: [GlobalSmoother; 4] = [
        GlobalSmoother::Raw,
        GlobalSmoother::Ramp,
        GlobalSmoother::Polynomial,
        GlobalSmoother::Loco,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GlobalSmoother::Raw => "none",
            GlobalSmoother::Ramp => "ramp",
            GlobalSmoother::Polynomial => "polynomial",
            GlobalSmoother::Loco => "loco",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone)]
pub struct GlobalBenchConfig {
    pub trials: usize,
    pub seed: u64,
    pub robot_radius: f64,
    pub v_max: f64,
    pub a_max: f64,
    /// Sampling budgets; the defaults are the published operating points.
    pub rrt_connect_budget: Duration,
    pub rrt_star_budget: Duration,
    pub prm_build_budget: Duration,
    pub prm_query_budget: Duration,
}

impl Default for GlobalBenchConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 11,
            robot_radius: 0.5,
            v_max: 1.5,
            a_max: 2.0,
            rrt_connect_budget: Duration::from_secs_f64(1.0),
            rrt_star_budget: Duration::from_secs_f64(2.0),
            prm_build_budget: Duration::from_secs_f64(2.0),
            prm_query_budget: Duration::from_secs_f64(0.1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlobalTrialRow {
    pub planner: GlobalPlanner,
    pub smoother: GlobalSmoother,
    pub trial: usize,
    pub success: bool,
    pub plan_ms: f64,
    pub smooth_ms: f64,
    pub length_m: f64,
}

pub const GLOBAL_CSV_HEADER: &str = "planner,smoother,trial,success,plan_ms,smooth_ms,length_m";

impl GlobalTrialRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.3},{:.4}",
            self.planner.name(),
            self.smoother.name(),
            self.trial,
            self.success as u8,
            self.plan_ms,
            self.smooth_ms,
            self.length_m,
        )
    }
}

const PLANNER_ITERATION_CAP: usize = 10_000_000;
/// Expansion limit for the solvability probe on candidate queries.
const QUERY_PROBE_EXPANSIONS: usize = 600_000;
/// Query endpoints must be at least this far apart, meters.
const QUERY_MIN_SEPARATION: f64 = 2.0;
const QUERY_ATTEMPTS: usize = 100;

/// Sweeps every planner and smoother over `trials` random solvable queries
/// against a finished map. Queries are drawn from traversable voxel centers
/// at least two meters apart; pairs the grid search cannot solve are
/// resampled up to a hundred times, then the trial is skipped with a note
/// on stderr.
pub fn run_global_benchmark(
    esdf: &VoxelLayer<EsdfVoxel>,
    graph: &SparseGraph,
    cfg: &GlobalBenchConfig,
) -> Vec<GlobalTrialRow> {
    let cc = CollisionChecker::EsdfPoint { esdf, robot_radius: cfg.robot_radius };
    let vs = esdf.voxel_size();
    let free: Vec<Vector3<f64>> = esdf
        .iter_sorted()
        .filter(|(_, v)| v.observed && v.distance >= cfg.robot_radius)
        .map(|(idx, _)| idx.center(vs))
        .collect();
    if free.is_empty() {
        eprintln!("global benchmark: no traversable voxels, emitting nothing");
        return Vec::new();
    }
    let (lo, hi) = free.iter().fold((free[0], free[0]), |(lo, hi), p| (lo.inf(p), hi.sup(p)));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut queries: Vec<(usize, Vector3<f64>, Vector3<f64>)> = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let mut found = false;
        for _ in 0..QUERY_ATTEMPTS {
            let a = free[rng.random_range(0..free.len())];
            let b = free[rng.random_range(0..free.len())];
            if (a - b).norm() < QUERY_MIN_SEPARATION {
                continue;
            }
            if astar_esdf(&cc, &a, &b, QUERY_PROBE_EXPANSIONS).is_none() {
                continue;
            }
            queries.push((trial, a, b));
            found = true;
            break;
        }
        if !found {
            eprintln!("global benchmark: trial {trial} found no solvable query, skipped");
        }
    }

    let roadmap = build_roadmap(
        &cc,
        &lo,
        &hi,
        &PlanBudget::timed(cfg.prm_build_budget, PLANNER_ITERATION_CAP),
        cfg.seed,
    );

    let mut rows = Vec::with_capacity(queries.len() * GlobalPlanner::ALL.len() * 4);
    for &(trial, start, goal) in &queries {
        for (p_idx, planner) in GlobalPlanner::ALL.into_iter().enumerate() {
            let seed = mix_seed(cfg.seed, (trial as u64) << 8 | p_idx as u64);
            let tick = Instant::now();
            let path = match planner {
                GlobalPlanner::Direct => cc
                    .is_motion_valid(&start, &goal)
                    .then(|| WaypointPath::new(vec![start, goal])),
                GlobalPlanner::RrtConnect => plan_rrt_connect(
                    &cc,
                    &start,
                    &goal,
                    &PlanBudget::timed(cfg.rrt_connect_budget, PLANNER_ITERATION_CAP),
                    seed,
                ),
                GlobalPlanner::RrtStar => plan_rrt_star(
                    &cc,
                    &start,
                    &goal,
                    &PlanBudget::timed(cfg.rrt_star_budget, PLANNER_ITERATION_CAP),
                    seed,
                ),
                GlobalPlanner::Skeleton => plan_skeleton(graph, &cc, &start, &goal),
                GlobalPlanner::Prm => plan_prm(
                    &cc,
                    &roadmap,
                    &start,
                    &goal,
                    &PlanBudget::timed(cfg.prm_query_budget, PLANNER_ITERATION_CAP),
                ),
            };
            let path = match planner {
                GlobalPlanner::Direct => path,
                _ => path.map(|p| shorten_path(&cc, &p).unwrap_or(p)),
            };
            let plan_ms = tick.elapsed().as_secs_f64() * 1e3;

            for smoother in GlobalSmoother::ALL {
                let mut row = GlobalTrialRow {
                    planner,
                    smoother,
                    trial,
                    success: false,
                    plan_ms,
                    smooth_ms: 0.0,
                    length_m: 0.0,
                };
                if let Some(path) = &path {
                    let tick = Instant::now();
                    let traj: Option<Trajectory> = match smoother {
                        GlobalSmoother::Raw => None,
                        GlobalSmoother::Ramp => Some(velocity_ramp(path, cfg.v_max, cfg.a_max)),
                        GlobalSmoother::Polynomial => {
                            smooth_polynomial_split(path, &cc, cfg.v_max, cfg.a_max, 10).ok()
                        }
                        GlobalSmoother::Loco => {
                            let loco_cfg = LocoConfig::new(cfg.robot_radius);
                            loco_smooth(path, esdf, &loco_cfg, cfg.v_max, cfg.a_max).ok()
                        }
                    };
                    row.smooth_ms = tick.elapsed().as_secs_f64() * 1e3;
                    match smoother {
                        GlobalSmoother::Raw => {
                            row.success = true;
                            row.length_m = path.length();
                            row.smooth_ms = 0.0;
                        }
                        _ => {
                            if let Some(traj) = traj {
                                row.success = true;
                                row.length_m = traj.arc_length(0.01);
                            }
                        }
                    }
                }
                rows.push(row);
            }
        }
    }
    // CSV groups by planner, then smoother, then trial.
    rows.sort_by_key(|r| {
        let p = GlobalPlanner::ALL.iter().position(|x| *x == r.planner).expect("known");
        let s = GlobalSmoother::ALL.iter().position(|x| *x == r.smoother).expect("known");
        (p, s, r.trial)
    });
    rows
}

pub fn write_global_csv<W: Write>(rows: &[GlobalTrialRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{GLOBAL_CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    Ok(())
}
