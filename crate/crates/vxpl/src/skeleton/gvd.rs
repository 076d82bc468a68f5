//! Basis-point detection: a traversable voxel lies on the diagram when two
//! of its neighbors are maintained by distance sources in directions that
//! disagree by at least the metric's separation angle.

use nalgebra::Vector3;

use super::{
    SkeletonConfig, SkeletonVoxel, EDGE_NEIGHBOR_THRESHOLD, FACE_NEIGHBOR_THRESHOLD,
    VERTEX_NEIGHBOR_THRESHOLD,
};
use crate::esdf::EsdfVoxel;
use crate::voxel::{neighbors26, VoxelLayer};

/// Marks basis points of the free-space diagram, copies their clearance, and
/// classifies them by basis-neighbor count. The returned layer holds only
/// basis voxels; everything else stays unallocated.
pub fn compute_gvd(esdf: &VoxelLayer<EsdfVoxel>, cfg: &SkeletonConfig) -> VoxelLayer<SkeletonVoxel> {
    let mut out: VoxelLayer<SkeletonVoxel> = VoxelLayer::new(*esdf.config());
    // cos is monotone decreasing, so "angle >= threshold" reads as "dot <=
    // cos(threshold) * |a||b|". The slack absorbs rounding on exact
    // right-angle integer pairs.
    let cos_threshold = cfg.separation_angle().cos();

    for (idx, voxel) in esdf.iter_sorted() {
        if !voxel.observed || voxel.hallucinated || voxel.distance <= cfg.min_gvd_distance {
            continue;
        }
        let mut directions: Vec<Vector3<f64>> = Vec::with_capacity(26);
        for (n_idx, _) in neighbors26(idx) {
            let Some(n) = esdf.get(&n_idx) else { continue };
            // Only free-side neighbors vote: parents inside obstacles point
            // back at the surface and would flag every wall-adjacent voxel.
            if !n.observed || n.hallucinated || n.distance <= 0.0 {
                continue;
            }
            let Some(p) = n.parent else { continue };
            if p == Vector3::zeros() {
                continue;
            }
            directions.push(Vector3::new(f64::from(p.x), f64::from(p.y), f64::from(p.z)));
        }
        if has_separated_pair(&directions, cos_threshold) {
            let out_voxel = out.get_or_insert(&idx);
            out_voxel.is_basis = true;
            out_voxel.distance = voxel.distance;
        }
    }

    apply_threshold_flags(&mut out);
    out
}

fn has_separated_pair(directions: &[Vector3<f64>], cos_threshold: f64) -> bool {
    for (i, a) in directions.iter().enumerate() {
        for b in &directions[i + 1..] {
            if a.dot(b) <= cos_threshold * a.norm() * b.norm() + 1e-12 {
                return true;
            }
        }
    }
    false
}

/// Counts basis neighbors for every basis voxel and derives the nested
/// face / edge / vertex classification. Edge voxels seed the working diagram.
pub(crate) fn apply_threshold_flags(layer: &mut VoxelLayer<SkeletonVoxel>) {
    let basis: Vec<_> = layer
        .iter_sorted()
        .filter_map(|(idx, v)| v.is_basis.then_some(idx))
        .collect();
    for idx in basis {
        let count = neighbors26(idx)
            .filter(|(n, _)| layer.get(n).is_some_and(|v| v.is_basis))
            .count() as u8;
        let v = layer.get_mut(&idx).expect("basis voxel exists");
        v.num_basis_neighbors = count;
        v.is_face = count >= FACE_NEIGHBOR_THRESHOLD;
        v.is_edge = count >= EDGE_NEIGHBOR_THRESHOLD;
        v.is_vertex = count >= VERTEX_NEIGHBOR_THRESHOLD;
        v.on_diagram = v.is_edge;
    }
}
