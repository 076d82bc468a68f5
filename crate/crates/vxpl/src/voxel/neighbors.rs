//! The 26-neighborhood kernel, ordered lexicographically so every consumer
//! visits neighbors in the same deterministic sequence.

use super::GridIndex;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, Debug)]
pub struct NeighborOffset {
    pub offset: [i64; 3],
    /// Step length in voxel units: 1, sqrt(2) or sqrt(3).
    pub step_voxels: f64,
}

impl NeighborOffset {
    pub fn grid_distance(&self, voxel_size: f64) -> f64 {
        self.step_voxels * voxel_size
    }

    pub fn apply(&self, i: &GridIndex) -> GridIndex {
        i.offset(self.offset[0], self.offset[1], self.offset[2])
    }
}

pub const NEIGHBORS_26: [NeighborOffset; 26] = {
    let mut table = [NeighborOffset { offset: [0; 3], step_voxels: 0.0 }; 26];
    let mut n = 0;
    let mut dx = -1i64;
    while dx <= 1 {
        let mut dy = -1i64;
        while dy <= 1 {
            let mut dz = -1i64;
            while dz <= 1 {
                if dx != 0 || dy != 0 || dz != 0 {
                    let nonzero = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                    table[n] = NeighborOffset {
                        offset: [dx, dy, dz],
                        step_voxels: match nonzero {
                            1 => 1.0,
                            2 => std::f64::consts::SQRT_2,
                            _ => SQRT_3,
                        },
                    };
                    n += 1;
                }
                dz += 1;
            }
            dy += 1;
        }
        dx += 1;
    }
    table
};

/// All 26 neighbors of `i` with their kernel entries, in kernel order.
pub fn neighbors26(i: GridIndex) -> impl Iterator<Item = (GridIndex, &'static NeighborOffset)> {
    NEIGHBORS_26.iter().map(move |o| (o.apply(&i), o))
}
