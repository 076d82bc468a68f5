//! Trilinear interpolation of scalar voxel fields, with the analytic
//! gradient of the interpolant. Built on voxel centers: the cell used for
//! point `p` spans the eight centers surrounding it.

use nalgebra::Vector3;

use super::{GridIndex, VoxelLayer};

/// Field access for interpolation. `None` means the voxel holds no usable
/// value at that index (unobserved, invalid), which poisons the whole cell.
pub trait ScalarVoxel {
    fn scalar(&self) -> Option<f64>;
}

/// Interpolated value and gradient at `p`, or `None` if any of the eight
/// surrounding voxels is missing or holds no value.
pub fn interpolate_trilinear<V>(
    layer: &VoxelLayer<V>,
    p: &Vector3<f64>,
) -> Option<(f64, Vector3<f64>)>
where
    V: ScalarVoxel + Clone + Default,
{
    let vs = layer.voxel_size();
    // Lattice coordinates where integer points sit on voxel centers.
    let q = p / vs - Vector3::repeat(0.5);
    let base = q.map(|c| c.floor());
    let f = q - base;
    let b = GridIndex::new(base.x as i64, base.y as i64, base.z as i64);

    let mut corner = [[[0.0f64; 2]; 2]; 2];
    for (dx, cx) in corner.iter_mut().enumerate() {
        for (dy, cy) in cx.iter_mut().enumerate() {
            for (dz, c) in cy.iter_mut().enumerate() {
                let idx = b.offset(dx as i64, dy as i64, dz as i64);
                *c = layer.get(&idx)?.scalar()?;
            }
        }
    }

    let wx = [1.0 - f.x, f.x];
    let wy = [1.0 - f.y, f.y];
    let wz = [1.0 - f.z, f.z];

    let mut value = 0.0;
    let mut grad = Vector3::zeros();
    for a in 0..2 {
        for bb in 0..2 {
            for c in 0..2 {
                let v = corner[a][bb][c];
                value += v * wx[a] * wy[bb] * wz[c];
                let sa = if a == 0 { -1.0 } else { 1.0 };
                let sb = if bb == 0 { -1.0 } else { 1.0 };
                let sc = if c == 0 { -1.0 } else { 1.0 };
                grad.x += sa * v * wy[bb] * wz[c];
                grad.y += sb * v * wx[a] * wz[c];
                grad.z += sc * v * wx[a] * wy[bb];
            }
        }
    }
    Some((value, grad / vs))
}
