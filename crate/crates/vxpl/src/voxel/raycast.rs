//! Exact voxel traversal of a line segment: every voxel the segment passes
//! through, in order, with no sampling gaps. Consecutive voxels always share
//! a face, and the step count per axis equals the number of boundary
//! crossings, so the walk terminates exactly at the end voxel.

use nalgebra::Vector3;

use super::GridIndex;

pub struct RayWalk {
    cur: GridIndex,
    end: GridIndex,
    steps_left: u64,
    step: [i64; 3],
    t_max: [f64; 3],
    t_delta: [f64; 3],
    done: bool,
}

/// Walk every voxel from the one containing `start` to the one containing
/// `end`, inclusive, in traversal order.
pub fn voxel_ray(start: &Vector3<f64>, end: &Vector3<f64>, voxel_size: f64) -> RayWalk {
    // Work in voxel-space coordinates so boundaries sit on integers.
    let a = start / voxel_size;
    let b = end / voxel_size;
    let cur = GridIndex::new(a.x.floor() as i64, a.y.floor() as i64, a.z.floor() as i64);
    let endv = GridIndex::new(b.x.floor() as i64, b.y.floor() as i64, b.z.floor() as i64);
    let d = b - a;

    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    let av = [a.x, a.y, a.z];
    let dv = [d.x, d.y, d.z];
    let cv = [cur.x, cur.y, cur.z];
    for axis in 0..3 {
        if dv[axis] > 0.0 {
            step[axis] = 1;
            t_max[axis] = ((cv[axis] + 1) as f64 - av[axis]) / dv[axis];
            t_delta[axis] = 1.0 / dv[axis];
        } else if dv[axis] < 0.0 {
            step[axis] = -1;
            t_max[axis] = (cv[axis] as f64 - av[axis]) / dv[axis];
            t_delta[axis] = -1.0 / dv[axis];
        }
    }

    let steps_left = cur.x.abs_diff(endv.x) + cur.y.abs_diff(endv.y) + cur.z.abs_diff(endv.z);
    RayWalk { cur, end: endv, steps_left, step, t_max, t_delta, done: false }
}

impl Iterator for RayWalk {
    type Item = GridIndex;

    fn next(&mut self) -> Option<GridIndex> {
        if self.done {
            return None;
        }
        let out = self.cur;
        if self.steps_left == 0 {
            debug_assert_eq!(self.cur, self.end);
            self.done = true;
            return Some(out);
        }
        self.steps_left -= 1;
        // Advance the axis whose boundary comes first, but never step an
        // axis that has already reached its target: the fixed per-axis step
        // budget is what guarantees we land exactly on the end voxel.
        let mut axis = usize::MAX;
        let mut best = f64::INFINITY;
        let cv = [self.cur.x, self.cur.y, self.cur.z];
        let ev = [self.end.x, self.end.y, self.end.z];
        for k in 0..3 {
            if cv[k] != ev[k] && self.t_max[k] < best {
                best = self.t_max[k];
                axis = k;
            }
        }
        debug_assert_ne!(axis, usize::MAX);
        self.t_max[axis] += self.t_delta[axis];
        match axis {
            0 => self.cur.x += self.step[0],
            1 => self.cur.y += self.step[1],
            _ => self.cur.z += self.step[2],
        }
        Some(out)
    }
}
