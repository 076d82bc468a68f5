//! Closed-form minimum-derivative polynomial splines. Segment polynomials
//! are parameterized by the derivatives at their end joints; the quadratic
//! smoothness cost over all joints is assembled once, the pinned joint
//! values are separated from the free ones, and the free ones fall out of a
//! single linear solve. All per-segment algebra runs on the unit interval
//! and is rescaled by powers of the segment duration, which keeps the
//! matrices well conditioned across mixed durations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Vector3};

use super::{PolynomialSegment, SmoothError, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    Jerk,
    Snap,
}

impl DerivativeOrder {
    /// Order of the derivative whose squared integral is minimized.
    pub fn minimized(self) -> usize {
        match self {
            Self::Jerk => 3,
            Self::Snap => 4,
        }
    }

    /// Derivative values carried per joint (position upward).
    pub fn joint_slots(self) -> usize {
        self.minimized() + 1
    }

    /// Polynomial degree: exactly determined by the two end-joint blocks.
    pub fn degree(self) -> usize {
        2 * self.joint_slots() - 1
    }
}

/// Boundary derivatives for a fit; zero everywhere by default so
/// trajectories start and end at rest.
#[derive(Debug, Clone)]
pub struct EndConditions {
    pub start_velocity: Vector3<f64>,
    pub start_acceleration: Vector3<f64>,
    pub end_velocity: Vector3<f64>,
    pub end_acceleration: Vector3<f64>,
}

impl Default for EndConditions {
    fn default() -> Self {
        Self {
            start_velocity: Vector3::zeros(),
            start_acceleration: Vector3::zeros(),
            end_velocity: Vector3::zeros(),
            end_acceleration: Vector3::zeros(),
        }
    }
}

/// i! / (i-r)!, the factor the r-th derivative puts in front of t^(i-r).
fn falling(i: usize, r: usize) -> f64 {
    if r > i {
        return 0.0;
    }
    let mut f = 1.0;
    for k in 0..r {
        f *= (i - k) as f64;
    }
    f
}

/// Quadratic program for one spline: joint derivative values are the
/// unknowns, `cost` is the integrated squared minimized derivative expressed
/// over them, and `fixed` pins a subset. Slot layout: joint j owns slots
/// `j*D .. j*D+D` holding derivative orders 0..D.
pub struct SplineProblem {
    order: DerivativeOrder,
    times: Vec<f64>,
    fixed: Vec<(usize, Vector3<f64>)>,
    free_slots: Vec<usize>,
    slot_to_free: Vec<Option<usize>>,
    cost: DMatrix<f64>,
    a_inv_unit: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    cost_pp: DMatrix<f64>,
    cost_pf: DMatrix<f64>,
    fixed_values: DMatrix<f64>,
}

impl SplineProblem {
    /// Interior waypoint positions pinned, endpoint position/velocity/
    /// acceleration pinned from `ends`, everything else free.
    pub fn pinned_waypoints(
        waypoints: &[Vector3<f64>],
        times: &[f64],
        order: DerivativeOrder,
        ends: &EndConditions,
    ) -> Result<Self, SmoothError> {
        assert!(waypoints.len() >= 2, "need at least two waypoints");
        assert_eq!(waypoints.len(), times.len() + 1, "one duration per leg");
        let d = order.joint_slots();
        let last = waypoints.len() - 1;
        let mut fixed = Vec::with_capacity(waypoints.len() + 4);
        for (j, wp) in waypoints.iter().enumerate() {
            fixed.push((j * d, *wp));
        }
        fixed.push((1, ends.start_velocity));
        fixed.push((2, ends.start_acceleration));
        fixed.push((last * d + 1, ends.end_velocity));
        fixed.push((last * d + 2, ends.end_acceleration));
        Self::assemble(times, order, fixed)
    }

    /// Only the two endpoints pinned (position/velocity/acceleration); every
    /// interior joint derivative, positions included, is free. This is the
    /// soft-cost optimizer's search space.
    pub fn pinned_endpoints(
        start: &Vector3<f64>,
        goal: &Vector3<f64>,
        times: &[f64],
        order: DerivativeOrder,
        ends: &EndConditions,
    ) -> Result<Self, SmoothError> {
        assert!(!times.is_empty());
        let d = order.joint_slots();
        let last = times.len();
        let fixed = vec![
            (0, *start),
            (1, ends.start_velocity),
            (2, ends.start_acceleration),
            (last * d, *goal),
            (last * d + 1, ends.end_velocity),
            (last * d + 2, ends.end_acceleration),
        ];
        Self::assemble(times, order, fixed)
    }

    pub(crate) fn assemble(
        times: &[f64],
        order: DerivativeOrder,
        mut fixed: Vec<(usize, Vector3<f64>)>,
    ) -> Result<Self, SmoothError> {
        assert!(!times.is_empty());
        assert!(times.iter().all(|&t| t > 0.0), "segment durations must be positive");
        let d = order.joint_slots();
        let m = order.minimized();
        let n1 = 2 * d; // coefficient count = degree + 1

        // Unit-interval mapping from coefficients to the derivative blocks
        // at both ends, and the integrated squared-derivative cost.
        let mut a_unit = DMatrix::zeros(n1, n1);
        for r in 0..d {
            a_unit[(r, r)] = falling(r, r);
            for i in r..n1 {
                a_unit[(d + r, i)] = falling(i, r);
            }
        }
        let a_inv_unit = a_unit.try_inverse().expect("unit end-derivative map is invertible");
        let mut q_unit = DMatrix::zeros(n1, n1);
        for i in m..n1 {
            for j in m..n1 {
                q_unit[(i, j)] = falling(i, m) * falling(j, m) / ((i + j - 2 * m + 1) as f64);
            }
        }
        let h_unit = a_inv_unit.transpose() * &q_unit * &a_inv_unit;

        let joints = times.len() + 1;
        let slots = joints * d;
        let mut cost: DMatrix<f64> = DMatrix::zeros(slots, slots);
        for (k, &t) in times.iter().enumerate() {
            let shrink = t.powi(1 - 2 * m as i32);
            let base = k * d;
            for i in 0..n1 {
                let si = t.powi((i % d) as i32);
                for j in 0..n1 {
                    let sj = t.powi((j % d) as i32);
                    cost[(base + i, base + j)] += shrink * si * sj * h_unit[(i, j)];
                }
            }
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(SmoothError::IllConditionedTimes);
        }

        fixed.sort_by_key(|(slot, _)| *slot);
        debug_assert!(fixed.windows(2).all(|w| w[0].0 < w[1].0), "duplicate fixed slot");
        let mut slot_to_free = vec![None; slots];
        let mut fixed_mask = vec![false; slots];
        for (slot, _) in &fixed {
            fixed_mask[*slot] = true;
        }
        let mut free_slots = Vec::with_capacity(slots - fixed.len());
        for (slot, taken) in fixed_mask.iter().enumerate() {
            if !taken {
                slot_to_free[slot] = Some(free_slots.len());
                free_slots.push(slot);
            }
        }

        let p = free_slots.len();
        let f = fixed.len();
        let mut cost_pp = DMatrix::zeros(p, p);
        for (a, &sa) in free_slots.iter().enumerate() {
            for (b, &sb) in free_slots.iter().enumerate() {
                cost_pp[(a, b)] = cost[(sa, sb)];
            }
        }
        let mut cost_pf = DMatrix::zeros(p, f);
        for (a, &sa) in free_slots.iter().enumerate() {
            for (b, (sb, _)) in fixed.iter().enumerate() {
                cost_pf[(a, b)] = cost[(sa, *sb)];
            }
        }
        let chol = if p == 0 {
            None
        } else {
            Some(Cholesky::new(cost_pp.clone()).ok_or(SmoothError::IllConditionedTimes)?)
        };

        let mut fixed_values = DMatrix::zeros(3, f);
        for (b, (_, v)) in fixed.iter().enumerate() {
            for axis in 0..3 {
                fixed_values[(axis, b)] = v[axis];
            }
        }

        Ok(Self {
            order,
            times: times.to_vec(),
            fixed,
            free_slots,
            slot_to_free,
            cost,
            a_inv_unit,
            chol,
            cost_pp,
            cost_pf,
            fixed_values,
        })
    }

    pub fn order(&self) -> DerivativeOrder {
        self.order
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn free_len(&self) -> usize {
        self.free_slots.len()
    }

    pub(crate) fn slot_to_free(&self) -> &[Option<usize>] {
        &self.slot_to_free
    }

    /// Diagonal of the cost restricted to the free slots, i.e. the stiffness
    /// of each slot. Tests scale finite-difference probes by it.
    #[cfg(test)]
    pub(crate) fn free_cost_diagonal(&self) -> Vec<f64> {
        (0..self.free_len()).map(|i| self.cost_pp[(i, i)]).collect()
    }

    /// Maps per-axis gradient rows through the inverse of the free-block cost,
    /// the natural metric for descent on this spline: slot curvatures span
    /// many orders of magnitude, and the raw gradient is unusable as a step
    /// direction. None when nothing is free.
    pub(crate) fn solve_in_cost_metric(&self, g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let chol = self.chol.as_ref()?;
        let mut out = g.clone_owned();
        for axis in 0..3 {
            let x = chol.solve(&g.row(axis).transpose());
            for (i, v) in x.iter().enumerate() {
                out[(axis, i)] = *v;
            }
        }
        Some(out)
    }

    /// Norm of the pinned values, per axis. Useful for relative tolerances.
    pub fn fixed_norm(&self, axis: usize) -> f64 {
        self.fixed_values.row(axis).norm()
    }

    /// The cost-minimizing free values given the pinned ones, one row per
    /// axis. This is where the whole fit collapses into a linear solve.
    pub fn optimal_free(&self) -> DMatrix<f64> {
        let p = self.free_len();
        let mut out = DMatrix::zeros(3, p);
        let Some(chol) = &self.chol else {
            return out;
        };
        for axis in 0..3 {
            let f = self.fixed_values.row(axis).transpose();
            let rhs = -(&self.cost_pf * f);
            let mut x = chol.solve(&rhs);
            // Two rounds of iterative refinement: mixed segment durations
            // leave the reduced cost block with a wide dynamic range, and the
            // raw factorization residual is visible at the 1e-6 scale the
            // optimality checks care about.
            for _ in 0..2 {
                let residual = &rhs - &self.cost_pp * &x;
                x += chol.solve(&residual);
            }
            for (i, v) in x.iter().enumerate() {
                out[(axis, i)] = *v;
            }
        }
        out
    }

    /// Full slot-value table (3 x slots) from free values plus the pins.
    pub(crate) fn assemble_values(&self, free: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(free.ncols(), self.free_len());
        let slots = self.slot_to_free.len();
        let mut values = DMatrix::zeros(3, slots);
        for (slot, v) in &self.fixed {
            for axis in 0..3 {
                values[(axis, *slot)] = v[axis];
            }
        }
        for (i, &slot) in self.free_slots.iter().enumerate() {
            for axis in 0..3 {
                values[(axis, slot)] = free[(axis, i)];
            }
        }
        values
    }

    /// Integrated squared minimized derivative, summed over the three axes.
    pub fn objective(&self, free: &DMatrix<f64>) -> f64 {
        let values = self.assemble_values(free);
        let mut total = 0.0;
        for axis in 0..3 {
            let d: DVector<f64> = values.row(axis).transpose();
            total += d.dot(&(&self.cost * &d));
        }
        total
    }

    /// Gradient of [`objective`](Self::objective) with respect to the free
    /// values, same 3-row layout.
    pub fn objective_gradient(&self, free: &DMatrix<f64>) -> DMatrix<f64> {
        let values = self.assemble_values(free);
        let mut out = DMatrix::zeros(3, self.free_len());
        for axis in 0..3 {
            let d: DVector<f64> = values.row(axis).transpose();
            let g = &self.cost * d * 2.0;
            for (i, &slot) in self.free_slots.iter().enumerate() {
                out[(axis, i)] = g[slot];
            }
        }
        out
    }

    /// Weights mapping the 2D local joint values of segment `k` to position
    /// and velocity at local time `t`. Local slot `i` is global `k*D + i`.
    pub(crate) fn segment_basis(&self, k: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.order.joint_slots();
        let n1 = 2 * d;
        let big_t = self.times[k];
        let tau = t / big_t;
        let mut pow = vec![0.0; n1];
        let mut tp = 1.0;
        for p in pow.iter_mut() {
            *p = tp;
            tp *= tau;
        }
        let mut w_pos = vec![0.0; n1];
        let mut w_vel = vec![0.0; n1];
        for j in 0..n1 {
            let mut acc_p = 0.0;
            let mut acc_v = 0.0;
            for i in 0..n1 {
                let a = self.a_inv_unit[(i, j)];
                acc_p += a * pow[i];
                if i > 0 {
                    acc_v += a * i as f64 * pow[i - 1];
                }
            }
            let scale = big_t.powi((j % d) as i32);
            w_pos[j] = scale * acc_p;
            w_vel[j] = scale * acc_v / big_t;
        }
        (w_pos, w_vel)
    }

    /// Materializes the polynomial segments for the given free values.
    pub fn trajectory(&self, free: &DMatrix<f64>, start_time: f64) -> Trajectory {
        let values = self.assemble_values(free);
        let d = self.order.joint_slots();
        let n1 = 2 * d;
        let mut segments = Vec::with_capacity(self.times.len());
        for (k, &t) in self.times.iter().enumerate() {
            let base = k * d;
            let mut coefficients: [Vec<f64>; 3] = [vec![0.0; n1], vec![0.0; n1], vec![0.0; n1]];
            for (axis, coefs) in coefficients.iter_mut().enumerate() {
                let mut du = DVector::zeros(n1);
                for i in 0..n1 {
                    du[i] = values[(axis, base + i)] * t.powi((i % d) as i32);
                }
                let g = &self.a_inv_unit * du;
                for (i, c) in coefs.iter_mut().enumerate() {
                    *c = g[i] / t.powi(i as i32);
                }
            }
            segments.push(PolynomialSegment::new(coefficients, t));
        }
        Trajectory::new(start_time, segments)
    }

    /// Optimal trajectory in one go.
    pub fn solve(&self, start_time: f64) -> Trajectory {
        self.trajectory(&self.optimal_free(), start_time)
    }
}

/// Fits a minimum-derivative spline through the waypoints with rest
/// endpoints. Callers that need moving boundary states build a
/// [`SplineProblem`] directly.
pub fn fit_polynomial(
    waypoints: &[Vector3<f64>],
    times: &[f64],
    order: DerivativeOrder,
) -> Result<Trajectory, SmoothError> {
    Ok(SplineProblem::pinned_waypoints(waypoints, times, order, &EndConditions::default())?.solve(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // 6-point Gauss-Legendre nodes/weights on [-1, 1]: exact through degree
    // 11, enough for the squared minimized derivative of either order.
    const GL_NODES: [f64; 6] = [
        -0.932_469_514_203_152_1,
        -0.661_209_386_466_264_5,
        -0.238_619_186_083_196_9,
        0.238_619_186_083_196_9,
        0.661_209_386_466_264_5,
        0.932_469_514_203_152_1,
    ];
    const GL_WEIGHTS: [f64; 6] = [
        0.171_324_492_379_170_4,
        0.360_761_573_048_138_6,
        0.467_913_934_572_691_0,
        0.467_913_934_572_691_0,
        0.360_761_573_048_138_6,
        0.171_324_492_379_170_4,
    ];

    /// Independent cost oracle: integrate the squared minimized derivative
    /// of the materialized polynomials by quadrature.
    fn quadrature_cost(traj: &crate::smooth::Trajectory, m: usize) -> f64 {
        let mut total = 0.0;
        for seg in &traj.segments {
            let half = seg.duration * 0.5;
            for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
                let t = half * (x + 1.0);
                total += w * half * seg.derivative(t, m).norm_squared();
            }
        }
        total
    }

    fn random_problem(rng: &mut ChaCha8Rng, order: DerivativeOrder) -> SplineProblem {
        let segs = rng.random_range(1..=4);
        let waypoints: Vec<Vector3<f64>> = (0..=segs)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                )
            })
            .collect();
        let times: Vec<f64> = (0..segs).map(|_| rng.random_range(0.4..2.0)).collect();
        SplineProblem::pinned_waypoints(&waypoints, &times, order, &EndConditions::default())
            .unwrap()
    }

    #[test]
    fn two_waypoint_snap_fit_is_straight() {
        let wp = [Vector3::zeros(), Vector3::new(3.0, 0.0, 0.0)];
        let traj = fit_polynomial(&wp, &[2.0], DerivativeOrder::Snap).unwrap();
        assert_eq!(traj.segments.len(), 1);
        assert_eq!(traj.segments[0].degree(), 9);
        let (p0, v0, a0) = traj.state_at(0.0).unwrap();
        assert!(p0.norm() < 1e-9 && v0.norm() < 1e-9 && a0.norm() < 1e-9);
        let (p1, v1, a1) = traj.state_at(2.0).unwrap();
        assert!((p1 - wp[1]).norm() < 1e-9 && v1.norm() < 1e-9 && a1.norm() < 1e-9);
        // Off-axis components are pinned to zero everywhere, not just at the
        // ends.
        for s in traj.sample(0.01) {
            assert!(s.position.y.abs() < 1e-9 && s.position.z.abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_matches_the_closed_form_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for i in 0..12 {
            let order = if i % 2 == 0 { DerivativeOrder::Snap } else { DerivativeOrder::Jerk };
            let problem = random_problem(&mut rng, order);
            let free = problem.optimal_free();
            let closed = problem.objective(&free);
            let traj = problem.trajectory(&free, 0.0);
            let numeric = quadrature_cost(&traj, order.minimized());
            assert_relative_eq!(closed, numeric, max_relative = 1e-8, epsilon = 1e-10);
        }
    }

    #[test]
    fn closed_form_matches_an_independently_identified_minimum() {
        // Single segment on the x axis; identify the quadratic J(p) purely
        // through materialized trajectories and quadrature, minimize it with
        // a plain linear solve, and compare.
        let wp = [Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0)];
        let problem =
            SplineProblem::pinned_waypoints(&wp, &[1.3], DerivativeOrder::Snap, &EndConditions::default())
                .unwrap();
        let p = problem.free_len();
        assert_eq!(p, 4); // jerk and snap at each end

        let eval = |x: &DVector<f64>| {
            let mut free = DMatrix::zeros(3, p);
            for i in 0..p {
                free[(0, i)] = x[i];
            }
            quadrature_cost(&problem.trajectory(&free, 0.0), 4)
        };
        let h = 1.0;
        let j0 = eval(&DVector::zeros(p));
        let mut b = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        let unit = |i: usize| {
            let mut e = DVector::zeros(p);
            e[i] = h;
            e
        };
        let plus: Vec<f64> = (0..p).map(|i| eval(&unit(i))).collect();
        let minus: Vec<f64> = (0..p).map(|i| eval(&(-unit(i)))).collect();
        for i in 0..p {
            b[i] = (plus[i] - minus[i]) / (2.0 * h);
            hess[(i, i)] = (plus[i] - 2.0 * j0 + minus[i]) / (h * h);
            for j in 0..i {
                let both = eval(&(unit(i) + unit(j)));
                let hij = (both - plus[i] - plus[j] + j0) / (h * h);
                hess[(i, j)] = hij;
                hess[(j, i)] = hij;
            }
        }
        let star = hess.lu().solve(&(-&b)).expect("identified quadratic is solvable");
        let j_star = eval(&star);

        let free_opt = problem.optimal_free();
        let j_closed = problem.objective(&free_opt);
        assert_relative_eq!(j_closed, j_star, max_relative = 1e-9, epsilon = 1e-9);
        // The identification itself carries quadrature and differencing noise
        // near 1e-6 on slots whose optimum is zero, so the coefficient check
        // is looser than the objective check.
        for i in 0..p {
            assert_relative_eq!(free_opt[(0, i)], star[i], max_relative = 1e-6, epsilon = 1e-4);
        }
    }

    #[test]
    fn gradient_vanishes_at_the_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for i in 0..20 {
            let order = if i % 2 == 0 { DerivativeOrder::Snap } else { DerivativeOrder::Jerk };
            let problem = random_problem(&mut rng, order);
            let g = problem.objective_gradient(&problem.optimal_free());
            for axis in 0..3 {
                let gn = g.row(axis).norm();
                let fixed = problem.fixed_norm(axis);
                assert!(gn < 1e-6 * (1.0 + fixed), "residual gradient {gn} vs pins {fixed}");
            }
        }
    }

    #[test]
    fn random_perturbations_never_beat_the_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..10 {
            let problem = random_problem(&mut rng, DerivativeOrder::Snap);
            let opt = problem.optimal_free();
            let j_opt = problem.objective(&opt);
            for _ in 0..20 {
                let mut delta = DMatrix::zeros(3, problem.free_len());
                for v in delta.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
                let n = delta.norm();
                if n > 0.0 {
                    delta *= rng.random_range(0.0..1e-2) / n;
                }
                let j = problem.objective(&(&opt + delta));
                assert!(j >= j_opt - 1e-12 * (1.0 + j_opt), "perturbation improved: {j} < {j_opt}");
            }
        }
    }

    #[test]
    fn joins_are_smooth_and_interior_waypoints_are_hit() {
        let wp = [
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(1.0, 0.5, 1.2),
            Vector3::new(2.0, -0.5, 0.8),
            Vector3::new(2.5, 0.0, 1.0),
        ];
        let times = [0.8, 1.1, 0.6];
        for order in [DerivativeOrder::Snap, DerivativeOrder::Jerk] {
            let traj = fit_polynomial(&wp, &times, order).unwrap();
            assert!(traj.max_join_discontinuity() < 1e-6);
            let mut t = 0.0;
            for (i, &dt) in times.iter().enumerate() {
                t += dt;
                let p = traj.position_at(t).unwrap();
                assert!((p - wp[i + 1]).norm() < 1e-9, "waypoint {} missed", i + 1);
            }
        }
    }

    #[test]
    fn fixed_order_is_irrelevant() {
        let wp = [Vector3::zeros(), Vector3::new(1.0, 2.0, 0.0), Vector3::new(3.0, 1.0, -1.0)];
        let times = [1.0, 1.5];
        let d = DerivativeOrder::Snap.joint_slots();
        let mut fixed = vec![
            (0, wp[0]),
            (1, Vector3::zeros()),
            (2, Vector3::zeros()),
            (d, wp[1]),
            (2 * d, wp[2]),
            (2 * d + 1, Vector3::zeros()),
            (2 * d + 2, Vector3::zeros()),
        ];
        let a = SplineProblem::assemble(&times, DerivativeOrder::Snap, fixed.clone()).unwrap();
        fixed.reverse();
        let b = SplineProblem::assemble(&times, DerivativeOrder::Snap, fixed).unwrap();
        let ta = a.solve(0.0);
        let tb = b.solve(0.0);
        for (sa, sb) in ta.sample(0.05).iter().zip(tb.sample(0.05).iter()) {
            assert!((sa.position - sb.position).norm() < 1e-12);
        }
    }

    #[test]
    fn end_condition_overrides_are_honored() {
        let ends = EndConditions {
            start_velocity: Vector3::new(0.3, 0.0, 0.2),
            start_acceleration: Vector3::new(0.0, -0.1, 0.0),
            end_velocity: Vector3::new(-0.1, 0.4, 0.0),
            end_acceleration: Vector3::new(0.05, 0.0, 0.0),
        };
        let wp = [Vector3::zeros(), Vector3::new(1.0, 1.0, 0.0)];
        let problem =
            SplineProblem::pinned_waypoints(&wp, &[1.2], DerivativeOrder::Snap, &ends).unwrap();
        let traj = problem.solve(5.0);
        let (_, v0, a0) = traj.state_at(5.0).unwrap();
        assert!((v0 - ends.start_velocity).norm() < 1e-9);
        assert!((a0 - ends.start_acceleration).norm() < 1e-9);
        let (_, v1, a1) = traj.state_at(traj.end_time()).unwrap();
        assert!((v1 - ends.end_velocity).norm() < 1e-9);
        assert!((a1 - ends.end_acceleration).norm() < 1e-9);
    }

    #[test]
    fn endpoint_only_pinning_admits_more_freedom() {
        let start = Vector3::zeros();
        let goal = Vector3::new(2.0, 0.0, 0.0);
        let times = [1.0, 1.0];
        let pinned = SplineProblem::pinned_waypoints(
            &[start, Vector3::new(1.0, 1.0, 0.0), goal],
            &times,
            DerivativeOrder::Snap,
            &EndConditions::default(),
        )
        .unwrap();
        let open = SplineProblem::pinned_endpoints(
            &start,
            &goal,
            &times,
            DerivativeOrder::Snap,
            &EndConditions::default(),
        )
        .unwrap();
        assert_eq!(open.free_len(), pinned.free_len() + 1);
        // With the detour waypoint released, the optimum is at least as
        // smooth.
        assert!(
            open.objective(&open.optimal_free()) <= pinned.objective(&pinned.optimal_free()) + 1e-12
        );
    }

    #[test]
    fn overflowing_times_are_rejected() {
        let wp = [Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0)];
        let err = SplineProblem::pinned_waypoints(
            &wp,
            &[1e-50, 1.0],
            DerivativeOrder::Snap,
            &EndConditions::default(),
        );
        assert!(matches!(err, Err(SmoothError::IllConditionedTimes)));
    }

    #[test]
    fn segment_basis_reproduces_position_and_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let problem = random_problem(&mut rng, DerivativeOrder::Snap);
        let free = problem.optimal_free();
        let values = problem.assemble_values(&free);
        let traj = problem.trajectory(&free, 0.0);
        let d = problem.order().joint_slots();
        let mut offset = 0.0;
        for (k, seg) in traj.segments.iter().enumerate() {
            for frac in [0.0, 0.3, 0.7, 1.0] {
                let t = seg.duration * frac;
                let (w_pos, w_vel) = problem.segment_basis(k, t);
                let mut pos = Vector3::zeros();
                let mut vel = Vector3::zeros();
                for (j, (wp, wv)) in w_pos.iter().zip(w_vel.iter()).enumerate() {
                    for axis in 0..3 {
                        pos[axis] += wp * values[(axis, k * d + j)];
                        vel[axis] += wv * values[(axis, k * d + j)];
                    }
                }
                let (p_ref, v_ref, _) = traj.state_at(offset + t).unwrap();
                assert!((pos - p_ref).norm() < 1e-8, "position basis mismatch");
                assert!((vel - v_ref).norm() < 1e-8, "velocity basis mismatch");
            }
            offset += seg.duration;
        }
    }
}
