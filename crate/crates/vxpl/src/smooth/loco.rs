//! Soft-cost trajectory optimization. The trajectory is a minimum-snap
//! spline whose interior joint derivatives, positions included, are all free;
//! the optimizer descends a weighted sum of the smoothness cost and a
//! clearance penalty integrated along the path, so obstacles bend the
//! trajectory instead of constraining it.

use nalgebra::{DMatrix, Vector3};

use super::{
    allocate_segment_times, velocity_ramp, DerivativeOrder, EndConditions, SmoothError,
    SplineProblem, Trajectory, AUDIT_STEP, MIN_SEGMENT_TIME,
};
use crate::esdf::EsdfVoxel;
use crate::plan::{CollisionChecker, WaypointPath};
use crate::voxel::{interpolate_trilinear, VoxelLayer};

/// How the seed spline is laid over the input path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FittingMode {
    /// One segment per input leg; waypoint count dictates segment count.
    WaypointFit,
    /// Fit through every waypoint first, then resample that spline down to
    /// the configured segment count at evenly spaced times.
    PolynomialResample,
    /// Resample the path polyline itself at equal-time points of its ramp
    /// profile; seed waypoints stay on the straight legs.
    VisibilityResample,
}

#[derive(Debug, Clone)]
pub struct LocoConfig {
    pub smoothness_weight: f64,
    pub collision_weight: f64,
    /// Clearance below which the penalty turns on, meters.
    pub margin: f64,
    pub robot_radius: f64,
    /// Segment count used by the resampling fit modes.
    pub segments: usize,
    /// Step of the cost line integral, seconds.
    pub integration_step: f64,
    pub fit: FittingMode,
    pub max_iterations: usize,
    /// Descent stops once the objective gradient norm falls below this.
    pub gradient_tolerance: f64,
}

impl LocoConfig {
    pub fn new(robot_radius: f64) -> Self {
        Self {
            smoothness_weight: 0.1,
            collision_weight: 10.0,
            margin: 0.5,
            robot_radius,
            segments: 4,
            integration_step: 0.05,
            fit: FittingMode::PolynomialResample,
            max_iterations: 50,
            gradient_tolerance: 1e-3,
        }
    }
}

/// Penalty over clearance-minus-radius `x`: linear inside obstacles,
/// quadratic easing through the margin, zero beyond it. C1 at both branch
/// points. Returns the value and d/dx.
pub fn collision_potential(x: f64, margin: f64) -> (f64, f64) {
    if x < 0.0 {
        (-x + margin * 0.5, -1.0)
    } else if x <= margin {
        let d = x - margin;
        (d * d / (2.0 * margin), d / margin)
    } else {
        (0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OptReport {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub final_gradient_norm: f64,
}

/// The endpoint-pinned spline plus the map and weights it is optimized
/// against.
pub struct LocoProblem<'a> {
    pub spline: SplineProblem,
    esdf: &'a VoxelLayer<EsdfVoxel>,
    pub cfg: LocoConfig,
}

impl<'a> LocoProblem<'a> {
    pub fn new(spline: SplineProblem, esdf: &'a VoxelLayer<EsdfVoxel>, cfg: LocoConfig) -> Self {
        Self { spline, esdf, cfg }
    }

    /// Clearance penalty integrated along the trajectory, midpoint rule at
    /// the configured step, and its gradient with respect to the free spline
    /// values. Unknown samples cost a flat worst-in-margin rate with no map
    /// direction, so only the arc-length factor pulls on them.
    pub fn collision_cost(&self, free: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        self.collision_cost_impl(free, true)
    }

    fn collision_cost_impl(&self, free: &DMatrix<f64>, with_grad: bool) -> (f64, DMatrix<f64>) {
        let values = self.spline.assemble_values(free);
        let d_slots = self.spline.order().joint_slots();
        let times = self.spline.times();
        let total: f64 = times.iter().sum();
        let n = ((total / self.cfg.integration_step).round() as usize).max(1);
        let h = total / n as f64;
        let slot_to_free = self.spline.slot_to_free();

        let mut cost = 0.0;
        let mut grad: DMatrix<f64> = DMatrix::zeros(3, self.spline.free_len());
        let mut seg = 0usize;
        let mut seg_start = 0.0;
        for s in 0..n {
            let t = (s as f64 + 0.5) * h;
            while t - seg_start > times[seg] && seg + 1 < times.len() {
                seg_start += times[seg];
                seg += 1;
            }
            let (w_pos, w_vel) = self.spline.segment_basis(seg, t - seg_start);
            let base = seg * d_slots;
            let mut pos: Vector3<f64> = Vector3::zeros();
            let mut vel: Vector3<f64> = Vector3::zeros();
            for (j, (wp, wv)) in w_pos.iter().zip(&w_vel).enumerate() {
                for axis in 0..3 {
                    pos[axis] += wp * values[(axis, base + j)];
                    vel[axis] += wv * values[(axis, base + j)];
                }
            }
            let speed = vel.norm();
            let (c, dc, map_grad) = match interpolate_trilinear(self.esdf, &pos) {
                Some((dist, g)) => {
                    let (c, dc) = collision_potential(dist - self.cfg.robot_radius, self.cfg.margin);
                    (c, dc, g)
                }
                None => (1.5 * self.cfg.margin, 0.0, Vector3::zeros()),
            };
            cost += c * speed * h;
            if !with_grad || (c == 0.0 && dc == 0.0) {
                continue;
            }
            let unit_vel = if speed > 1e-9 { vel / speed } else { Vector3::zeros() };
            for (j, (wp, wv)) in w_pos.iter().zip(&w_vel).enumerate() {
                if let Some(fi) = slot_to_free[base + j] {
                    for axis in 0..3 {
                        let through_map = dc * map_grad[axis] * speed * wp;
                        let through_speed = c * unit_vel[axis] * wv;
                        grad[(axis, fi)] += h * (through_map + through_speed);
                    }
                }
            }
        }
        (cost, grad)
    }

    /// Weighted objective and gradient.
    pub fn objective(&self, free: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let (jc, gc) = self.collision_cost_impl(free, true);
        let jd = self.spline.objective(free);
        let gd = self.spline.objective_gradient(free);
        (
            self.cfg.smoothness_weight * jd + self.cfg.collision_weight * jc,
            gd * self.cfg.smoothness_weight + gc * self.cfg.collision_weight,
        )
    }

    pub fn objective_value(&self, free: &DMatrix<f64>) -> f64 {
        let (jc, _) = self.collision_cost_impl(free, false);
        self.cfg.smoothness_weight * self.spline.objective(free) + self.cfg.collision_weight * jc
    }

    /// Descent direction in the metric of the smoothness Hessian, a fixed
    /// positive-definite rescaling of the gradient. Slot curvatures span
    /// eight decades, so identity-metric steps stall; in this metric the
    /// quadratic part is solved in one step and the line search only has to
    /// negotiate the collision term. Returns the direction and g'·dir, the
    /// sufficient-decrease product (also the squared metric gradient norm).
    fn descent_direction(&self, g: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
        let dir = if self.cfg.smoothness_weight > 0.0 {
            match self.spline.solve_in_cost_metric(g) {
                Some(solved) => solved / (2.0 * self.cfg.smoothness_weight),
                None => g.clone(),
            }
        } else {
            g.clone()
        };
        let decrease = g.dot(&dir);
        (dir, decrease)
    }

    /// Preconditioned steepest descent with a backtracking line search
    /// (sufficient-decrease factor 1e-4, halving). The objective never
    /// increases across accepted steps.
    pub fn optimize(&self, init: &DMatrix<f64>) -> (DMatrix<f64>, OptReport) {
        let mut p = init.clone();
        let (mut f, mut g) = self.objective(&p);
        let initial_objective = f;
        let mut step = 1.0;
        let mut iterations = 0;
        for _ in 0..self.cfg.max_iterations {
            let (dir, decrease) = self.descent_direction(&g);
            if decrease.sqrt() < self.cfg.gradient_tolerance {
                break;
            }
            let mut t = step;
            let mut accepted = false;
            while t > 1e-16 {
                let trial = &p - &dir * t;
                let ft = self.objective_value(&trial);
                if ft <= f - 1e-4 * t * decrease {
                    p = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            iterations += 1;
            step = (t * 2.0).min(1e6);
            let (fr, gr) = self.objective(&p);
            f = fr;
            g = gr;
        }
        let final_gradient_norm = self.descent_direction(&g).1.sqrt();
        let report =
            OptReport { iterations, initial_objective, final_objective: f, final_gradient_norm };
        (p, report)
    }
}

/// Seed waypoints and durations for the configured fitting mode.
fn seed_layout(
    path: &WaypointPath,
    cfg: &LocoConfig,
    v_max: f64,
    a_max: f64,
) -> Result<(Vec<Vector3<f64>>, Vec<f64>), SmoothError> {
    assert!(cfg.segments >= 1);
    let wp = &path.waypoints;
    match cfg.fit {
        FittingMode::WaypointFit => Ok((wp.clone(), allocate_segment_times(wp, v_max, a_max))),
        FittingMode::PolynomialResample => {
            let times = allocate_segment_times(wp, v_max, a_max);
            let full = SplineProblem::pinned_waypoints(
                wp,
                &times,
                DerivativeOrder::Snap,
                &EndConditions::default(),
            )?
            .solve(0.0);
            Ok(resample_even(&full, cfg.segments))
        }
        FittingMode::VisibilityResample => {
            let ramp = velocity_ramp(path, v_max, a_max);
            Ok(resample_even(&ramp, cfg.segments))
        }
    }
}

fn resample_even(traj: &Trajectory, segments: usize) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let total = traj.total_duration();
    let points = (0..=segments)
        .map(|i| {
            let t = traj.start_time + total * i as f64 / segments as f64;
            traj.position_at(t).expect("resampled trajectory is non-empty")
        })
        .collect();
    (points, vec![(total / segments as f64).max(MIN_SEGMENT_TIME); segments])
}

/// Builds the endpoint-pinned problem for `path` and the free values of its
/// seed spline (a classic fit through the seed waypoints).
pub fn build_problem<'a>(
    path: &WaypointPath,
    esdf: &'a VoxelLayer<EsdfVoxel>,
    cfg: &LocoConfig,
    v_max: f64,
    a_max: f64,
    ends: &EndConditions,
) -> Result<(LocoProblem<'a>, DMatrix<f64>), SmoothError> {
    let wp = &path.waypoints;
    if wp.len() < 2 {
        return Err(SmoothError::TooFewWaypoints);
    }
    let (seed_wp, times) = seed_layout(path, cfg, v_max, a_max)?;
    let seeded = SplineProblem::pinned_waypoints(&seed_wp, &times, DerivativeOrder::Snap, ends)?;
    let seed_values = seeded.assemble_values(&seeded.optimal_free());
    let open = SplineProblem::pinned_endpoints(
        &wp[0],
        wp.last().unwrap(),
        &times,
        DerivativeOrder::Snap,
        ends,
    )?;
    let mut init = DMatrix::zeros(3, open.free_len());
    for (slot, fi) in open.slot_to_free().iter().enumerate() {
        if let Some(fi) = fi {
            for axis in 0..3 {
                init[(axis, *fi)] = seed_values[(axis, slot)];
            }
        }
    }
    Ok((LocoProblem::new(open, esdf, cfg.clone()), init))
}

/// Millisecond validity audit against the conservative point checker.
pub(crate) fn audit_trajectory(traj: &Trajectory, checker: &CollisionChecker) -> bool {
    let total = traj.total_duration();
    let steps = (total / AUDIT_STEP).ceil() as usize;
    (0..=steps).all(|k| {
        let t = (k as f64 * AUDIT_STEP).min(total);
        let (p, _, _) = traj.state_at(traj.start_time + t).unwrap();
        let ok = checker.is_state_valid(&p);
        if !ok {
            if let crate::plan::CollisionChecker::EsdfPoint { esdf, .. } = checker {
                let idx = crate::voxel::GridIndex::from_point(&p, esdf.voxel_size());
                eprintln!("DBG audit fail t={t:.3} p={p:?} idx={idx:?} v={:?}", esdf.get(&idx));
            }
        }
        ok
    })
}

pub fn loco_smooth(
    path: &WaypointPath,
    esdf: &VoxelLayer<EsdfVoxel>,
    cfg: &LocoConfig,
    v_max: f64,
    a_max: f64,
) -> Result<Trajectory, SmoothError> {
    loco_smooth_from(path, esdf, cfg, v_max, a_max, &EndConditions::default())
}

/// Full pipeline: seed, optimize, then audit every millisecond against the
/// map. A trajectory that still clips known obstacles or unknown space comes
/// back as an error carrying the trajectory, so callers can fall back while
/// keeping the best effort.
pub fn loco_smooth_from(
    path: &WaypointPath,
    esdf: &VoxelLayer<EsdfVoxel>,
    cfg: &LocoConfig,
    v_max: f64,
    a_max: f64,
    ends: &EndConditions,
) -> Result<Trajectory, SmoothError> {
    let (problem, init) = build_problem(path, esdf, cfg, v_max, a_max, ends)?;
    let (free, _report) = problem.optimize(&init);
    let traj = problem.spline.trajectory(&free, 0.0);
    let checker = CollisionChecker::EsdfPoint { esdf, robot_radius: cfg.robot_radius };
    if audit_trajectory(&traj, &checker) {
        Ok(traj)
    } else {
        Err(SmoothError::StillColliding(Box::new(traj)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::testmap::esdf_free_box;
    use crate::voxel::{GridIndex, LayerConfig};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Observed clearance field around a vertical pillar: exact distance to
    /// the cylinder surface at every voxel center.
    fn pillar_map(extent: i64, vs: f64, cx: f64, cy: f64, radius: f64) -> VoxelLayer<EsdfVoxel> {
        let mut esdf: VoxelLayer<EsdfVoxel> = VoxelLayer::new(LayerConfig::new(vs, 16).unwrap());
        for x in 0..extent {
            for y in 0..extent {
                for z in 0..extent {
                    let idx = GridIndex::new(x, y, z);
                    let c = idx.center(vs);
                    let v = esdf.get_or_insert(&idx);
                    v.observed = true;
                    v.distance = ((c.x - cx).powi(2) + (c.y - cy).powi(2)).sqrt() - radius;
                }
            }
        }
        esdf
    }

    #[test]
    fn potential_matches_pinned_values() {
        let margin = 0.5;
        assert_relative_eq!(collision_potential(0.0, margin).0, 0.25, epsilon = 1e-12);
        assert_relative_eq!(collision_potential(-0.2, margin).0, 0.45, epsilon = 1e-12);
        assert_eq!(collision_potential(margin, margin).0, 0.0);
        assert_eq!(collision_potential(1.0, margin).0, 0.0);
        // C1 at both branch points.
        let eps = 1e-9;
        let below = collision_potential(-eps, margin);
        let above = collision_potential(eps, margin);
        assert!((below.0 - above.0).abs() < 1e-8);
        assert!((below.1 - above.1).abs() < 1e-7);
        let near = collision_potential(margin - eps, margin);
        assert!(near.0 < 1e-8 && near.1.abs() < 1e-7);
    }

    fn straight_path(y: f64, z: f64) -> WaypointPath {
        WaypointPath::new(vec![Vector3::new(0.5, y, z), Vector3::new(3.5, y, z)])
    }

    #[test]
    fn far_free_space_costs_nothing() {
        let esdf = esdf_free_box(40, 0.1);
        let cfg = LocoConfig::new(0.2);
        let (problem, init) =
            build_problem(&straight_path(2.0, 2.0), &esdf, &cfg, 2.0, 2.0, &EndConditions::default())
                .unwrap();
        let (jc, g) = problem.collision_cost(&init);
        assert_eq!(jc, 0.0);
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let esdf = pillar_map(40, 0.1, 2.0, 2.0, 0.3);
        let cfg = LocoConfig::new(0.2);
        let (problem, init) =
            build_problem(&straight_path(1.7, 2.0), &esdf, &cfg, 2.0, 2.0, &EndConditions::default())
                .unwrap();
        // Perturbations are scaled to each slot's stiffness so probe states
        // stay at working objective magnitudes; uniform perturbations push
        // the objective near 1e4, where central differences lose four digits
        // to cancellation.
        let diag = problem.spline.free_cost_diagonal();
        let scale: Vec<f64> = diag.iter().map(|d| 0.5 / (1.0 + d).sqrt()).collect();
        let p = problem.spline.free_len();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let h = 1e-6;
        for _ in 0..10 {
            let mut state = init.clone();
            for (i, s) in scale.iter().enumerate() {
                for axis in 0..3 {
                    state[(axis, i)] += rng.random_range(-1.0..1.0) * s;
                }
            }
            // Full objective: coordinate-wise central differences against the
            // whole gradient vector. The smoothness term is evaluated through
            // cost entries near 1e7, so single differences carry noise around
            // 1e-8/h; the vector norm averages it out.
            let (_, g) = problem.objective(&state);
            let mut g_fd = DMatrix::zeros(3, p);
            for i in 0..p {
                for axis in 0..3 {
                    let mut sp = state.clone();
                    sp[(axis, i)] += h;
                    let mut sm = state.clone();
                    sm[(axis, i)] -= h;
                    g_fd[(axis, i)] =
                        (problem.objective_value(&sp) - problem.objective_value(&sm)) / (2.0 * h);
                }
            }
            let rel = (&g_fd - &g).norm() / g.norm();
            assert!(rel < 1e-4, "objective gradient off by {rel} relative");

            // Collision term alone: directional probes at a far tighter bound,
            // since the interpolation chain rule is what needs the oracle.
            let (_, gc) = problem.collision_cost(&state);
            for _ in 0..3 {
                let mut dir = DMatrix::zeros(3, p);
                for v in dir.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
                dir /= dir.norm();
                let fp = problem.collision_cost_impl(&(&state + &dir * h), false).0;
                let fm = problem.collision_cost_impl(&(&state - &dir * h), false).0;
                let fd = (fp - fm) / (2.0 * h);
                let an = gc.component_mul(&dir).sum();
                assert!(
                    (fd - an).abs() < 1e-6 * (1.0 + an.abs()),
                    "collision derivative off: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn optimizer_bends_around_a_pillar() {
        let esdf = pillar_map(40, 0.1, 2.0, 2.0, 0.3);
        let mut cfg = LocoConfig::new(0.2);
        cfg.max_iterations = 300;
        // Slightly off the pillar axis so the map gradient has somewhere to
        // push, and slow enough that bowing out is cheap: the smoothness
        // price of a lateral bump falls with the seventh power of the total
        // time, so an aggressive profile settles into a straight-through
        // local minimum instead of clearing.
        let path = straight_path(1.87, 2.0);
        let (v_max, a_max) = (0.5, 2.0);
        let (problem, init) =
            build_problem(&path, &esdf, &cfg, v_max, a_max, &EndConditions::default()).unwrap();
        let (jc_init, _) = problem.collision_cost(&init);
        assert!(jc_init > 0.0, "seed should start inside the cost shell");

        let (free, report) = problem.optimize(&init);
        assert!(report.final_objective <= report.initial_objective + 1e-12);
        let (jc_final, _) = problem.collision_cost(&free);
        assert!(jc_final < 0.1 * jc_init, "collision cost barely moved: {jc_final} vs {jc_init}");

        let traj = loco_smooth(&path, &esdf, &cfg, v_max, a_max).expect("pillar should be avoidable");
        // Dense clearance audit on the interpolated field.
        for s in traj.sample(1e-3) {
            let (d, _) = interpolate_trilinear(&esdf, &s.position).unwrap();
            assert!(d - cfg.robot_radius >= 0.0, "sample at {:?} has clearance {d}", s.position);
        }
    }

    #[test]
    fn fitting_modes_agree_on_a_straight_free_path() {
        let esdf = esdf_free_box(40, 0.1);
        let path = WaypointPath::new(vec![
            Vector3::new(0.5, 0.5, 0.5),
            Vector3::new(1.5, 0.5, 0.5),
            Vector3::new(2.5, 0.5, 0.5),
        ]);
        let straight = 2.0;
        for fit in
            [FittingMode::WaypointFit, FittingMode::PolynomialResample, FittingMode::VisibilityResample]
        {
            let mut cfg = LocoConfig::new(0.1);
            cfg.fit = fit;
            let traj = loco_smooth(&path, &esdf, &cfg, 2.0, 1.0).unwrap();
            let (p0, _, _) = traj.state_at(0.0).unwrap();
            let (p1, _, _) = traj.state_at(traj.end_time()).unwrap();
            assert!((p0 - path.waypoints[0]).norm() < 1e-6, "{fit:?} start moved");
            assert!((p1 - path.waypoints[2]).norm() < 1e-6, "{fit:?} goal moved");
            let len = traj.arc_length(1e-3);
            assert!(
                (len - straight).abs() < 0.01 * straight,
                "{fit:?} length {len} vs straight {straight}"
            );
            assert!(traj.max_join_discontinuity() < 1e-6);
        }
    }

    #[test]
    fn unknown_space_costs_the_margin_floor_rate() {
        // Observed free space only below x = 2; beyond that nothing is known.
        let mut esdf: VoxelLayer<EsdfVoxel> = VoxelLayer::new(LayerConfig::new(0.1, 16).unwrap());
        for x in 0..20 {
            for y in 0..40 {
                for z in 0..40 {
                    let v = esdf.get_or_insert(&GridIndex::new(x, y, z));
                    v.observed = true;
                    v.distance = 10.0;
                }
            }
        }
        let cfg = LocoConfig::new(0.2);
        let (problem, init) =
            build_problem(&straight_path(2.0, 2.0), &esdf, &cfg, 2.0, 2.0, &EndConditions::default())
                .unwrap();
        let (jc, _) = problem.collision_cost(&init);
        // The unknown stretch is about 1.6 m of arc; each meter costs
        // 1.5 * margin. Cell support pushes the boundary half a voxel early.
        let expected = 1.5 * cfg.margin * 1.6;
        assert!((jc - expected).abs() < 0.15, "unknown-space cost {jc} vs ~{expected}");
    }

    #[test]
    fn halving_the_integration_step_barely_moves_the_cost() {
        let esdf = pillar_map(40, 0.1, 2.0, 2.0, 0.3);
        let path = straight_path(1.87, 2.0);
        let mut coarse_cfg = LocoConfig::new(0.2);
        coarse_cfg.integration_step = 0.05;
        let (coarse, init) =
            build_problem(&path, &esdf, &coarse_cfg, 2.0, 2.0, &EndConditions::default()).unwrap();
        let mut fine_cfg = coarse_cfg.clone();
        fine_cfg.integration_step = 0.025;
        let (fine, _) = build_problem(&path, &esdf, &fine_cfg, 2.0, 2.0, &EndConditions::default())
            .unwrap();
        let a = coarse.collision_cost(&init).0;
        let b = fine.collision_cost(&init).0;
        assert!(a > 0.0);
        assert!((a - b).abs() <= 0.02 * a.max(b), "integration step too coarse: {a} vs {b}");
    }

    #[test]
    fn too_few_waypoints_is_an_error() {
        let esdf = esdf_free_box(8, 0.1);
        let cfg = LocoConfig::new(0.1);
        let path = WaypointPath::new(vec![Vector3::new(0.4, 0.4, 0.4)]);
        assert!(matches!(
            loco_smooth(&path, &esdf, &cfg, 1.0, 1.0),
            Err(SmoothError::TooFewWaypoints)
        ));
    }
}
