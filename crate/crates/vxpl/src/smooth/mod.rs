//! Timed polynomial trajectories and the smoothers that produce them from
//! waypoint paths: a trapezoidal velocity ramp, closed-form minimum-derivative
//! splines, collision-driven waypoint splitting, and a soft-cost optimizer
//! that trades smoothness against obstacle clearance.

mod loco;
mod ramp;
mod spline;
mod split;

pub(crate) use loco::audit_trajectory;
pub use loco::{build_problem, loco_smooth, loco_smooth_from, FittingMode, LocoConfig, LocoProblem};
pub use ramp::{allocate_segment_times, ramp_duration, velocity_ramp, MIN_SEGMENT_TIME};
pub use spline::{fit_polynomial, DerivativeOrder, EndConditions, SplineProblem};
pub use split::{smooth_polynomial_split, DEFAULT_MAX_SPLITS};

use nalgebra::Vector3;
use thiserror::Error;

/// Max yaw slew rate used when sampling, radians per second.
pub const YAW_RATE_LIMIT: f64 = std::f64::consts::FRAC_PI_2;
/// Below this speed the heading is held instead of following velocity.
pub const YAW_HOLD_SPEED: f64 = 0.1;

/// Step used by the dense feasibility and collision audits, seconds.
pub const AUDIT_STEP: f64 = 1e-3;
/// Tolerance applied to limit checks so profiles that touch a limit exactly
/// do not flap on rounding.
const LIMIT_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SmoothError {
    #[error("segment times produce an ill-conditioned fit")]
    IllConditionedTimes,
    #[error("need at least two distinct waypoints")]
    TooFewWaypoints,
    #[error("still colliding after {splits} waypoint splits")]
    SplitCapReached { splits: usize },
    #[error("optimized trajectory remains in collision")]
    StillColliding(Box<Trajectory>),
}

/// One polynomial piece of a trajectory. Coefficients are stored per axis,
/// constant term first; evaluation is only meaningful on [0, duration].
#[derive(Debug, Clone)]
pub struct PolynomialSegment {
    pub coefficients: [Vec<f64>; 3],
    pub duration: f64,
}

impl PolynomialSegment {
    pub fn new(coefficients: [Vec<f64>; 3], duration: f64) -> Self {
        assert!(duration > 0.0, "segment duration must be positive");
        Self { coefficients, duration }
    }

    /// Segment that sits still at `p`.
    pub fn constant(p: &Vector3<f64>, duration: f64) -> Self {
        Self::new([vec![p.x], vec![p.y], vec![p.z]], duration)
    }

    pub fn degree(&self) -> usize {
        self.coefficients[0].len().saturating_sub(1)
    }

    /// Value of the `order`-th time derivative at local time `t`.
    pub fn derivative(&self, t: f64, order: usize) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for (axis, coefs) in self.coefficients.iter().enumerate() {
            let mut acc = 0.0;
            let mut tp = 1.0;
            for (i, &c) in coefs.iter().enumerate().skip(order) {
                let mut fall = 1.0;
                for k in 0..order {
                    fall *= (i - k) as f64;
                }
                acc += c * fall * tp;
                tp *= t;
            }
            out[axis] = acc;
        }
        out
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        self.derivative(t, 0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectorySample {
    pub time: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub yaw: f64,
}

/// A timed sequence of polynomial segments. `start_time` is absolute so that
/// successive replans can stay on one monotonic clock.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub start_time: f64,
    pub segments: Vec<PolynomialSegment>,
}

impl Trajectory {
    pub fn new(start_time: f64, segments: Vec<PolynomialSegment>) -> Self {
        Self { start_time, segments }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.total_duration()
    }

    pub fn with_start_time(mut self, start_time: f64) -> Self {
        self.start_time = start_time;
        self
    }

    /// Segment index and local time for relative time `t`, clamped into the
    /// trajectory's span.
    fn locate(&self, t: f64) -> Option<(usize, f64)> {
        if self.segments.is_empty() {
            return None;
        }
        let mut rest = t.max(0.0);
        for (i, seg) in self.segments.iter().enumerate() {
            if rest <= seg.duration || i + 1 == self.segments.len() {
                return Some((i, rest.min(seg.duration)));
            }
            rest -= seg.duration;
        }
        unreachable!()
    }

    /// Position, velocity and acceleration at absolute `time`, clamped to the
    /// trajectory span. `None` only for an empty trajectory.
    pub fn state_at(&self, time: f64) -> Option<(Vector3<f64>, Vector3<f64>, Vector3<f64>)> {
        let (i, lt) = self.locate(time - self.start_time)?;
        let seg = &self.segments[i];
        Some((seg.derivative(lt, 0), seg.derivative(lt, 1), seg.derivative(lt, 2)))
    }

    pub fn position_at(&self, time: f64) -> Option<Vector3<f64>> {
        self.state_at(time).map(|(p, _, _)| p)
    }

    /// Dense samples every `dt`, timestamps `start_time + k*dt`,
    /// `floor(duration/dt)+1` of them. Yaw follows the horizontal velocity
    /// heading, slew-limited, and holds when the craft is nearly still.
    pub fn sample(&self, dt: f64) -> Vec<TrajectorySample> {
        assert!(dt > 0.0);
        if self.segments.is_empty() {
            return Vec::new();
        }
        let total = self.total_duration();
        let count = (total / dt).floor() as usize + 1;
        let mut out = Vec::with_capacity(count);
        let mut yaw: Option<f64> = None;
        for k in 0..count {
            let t = k as f64 * dt;
            let (p, v, a) = self.state_at(self.start_time + t).unwrap();
            let heading_speed = v.xy().norm();
            let y = if heading_speed >= YAW_HOLD_SPEED {
                let target = v.y.atan2(v.x);
                match yaw {
                    None => target,
                    Some(cur) => slew_angle(cur, target, YAW_RATE_LIMIT * dt),
                }
            } else {
                yaw.unwrap_or(0.0)
            };
            yaw = Some(y);
            out.push(TrajectorySample {
                time: self.start_time + t,
                position: p,
                velocity: v,
                acceleration: a,
                yaw: y,
            });
        }
        out
    }

    /// Polyline length of the densely sampled trajectory.
    pub fn arc_length(&self, dt: f64) -> f64 {
        if self.segments.is_empty() {
            return 0.0;
        }
        let mut len = 0.0;
        let mut prev = self.state_at(self.start_time).unwrap().0;
        let total = self.total_duration();
        let mut t = dt;
        while t < total {
            let p = self.state_at(self.start_time + t).unwrap().0;
            len += (p - prev).norm();
            prev = p;
            t += dt;
        }
        len + (self.state_at(self.end_time()).unwrap().0 - prev).norm()
    }

    /// Largest position/velocity/acceleration jump across any segment join.
    pub fn max_join_discontinuity(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.segments.windows(2) {
            for order in 0..=2 {
                let a = w[0].derivative(w[0].duration, order);
                let b = w[1].derivative(0.0, order);
                worst = worst.max((a - b).amax());
            }
        }
        worst
    }
}

/// Rotate `from` toward `to` by at most `max_step` radians, shortest way
/// around.
fn slew_angle(from: f64, to: f64, max_step: f64) -> f64 {
    use std::f64::consts::PI;
    let mut diff = (to - from) % (2.0 * PI);
    if diff > PI {
        diff -= 2.0 * PI;
    } else if diff < -PI {
        diff += 2.0 * PI;
    }
    from + diff.clamp(-max_step, max_step)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitKind {
    Velocity,
    Acceleration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feasibility {
    Ok,
    Violation { time: f64, limit: LimitKind, value: f64 },
}

/// Dense-samples the trajectory every millisecond and reports the first
/// speed or acceleration limit violation.
pub fn check_feasibility(traj: &Trajectory, v_max: f64, a_max: f64) -> Feasibility {
    if traj.is_empty() {
        return Feasibility::Ok;
    }
    let total = traj.total_duration();
    let steps = (total / AUDIT_STEP).ceil() as usize;
    for k in 0..=steps {
        let t = (k as f64 * AUDIT_STEP).min(total);
        let (_, v, a) = traj.state_at(traj.start_time + t).unwrap();
        let speed = v.norm();
        if speed > v_max + LIMIT_SLACK {
            return Feasibility::Violation {
                time: traj.start_time + t,
                limit: LimitKind::Velocity,
                value: speed,
            };
        }
        let accel = a.norm();
        if accel > a_max + LIMIT_SLACK {
            return Feasibility::Violation {
                time: traj.start_time + t,
                limit: LimitKind::Acceleration,
                value: accel,
            };
        }
    }
    Feasibility::Ok
}
