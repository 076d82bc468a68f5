//! Sequential thinning of the working diagram down to a one-voxel-wide
//! structure. Only simple voxels are removed, so connectivity, loops, and
//! cavities of the diagram survive; endpoints and vertex voxels are pinned.

use nalgebra::Vector3;
use rustc_hash::FxHashSet;

use super::SkeletonVoxel;
use crate::voxel::{neighbors26, GridIndex, VoxelLayer};

/// Erodes removable diagram voxels until a fixed point, clearing their
/// `on_diagram` flag. Voxels classified as vertices and voxels with at most
/// one diagram neighbor are never removed. Returns the number of voxels
/// taken off the diagram. Running it again removes nothing.
pub fn thin_diagram(layer: &mut VoxelLayer<SkeletonVoxel>) -> usize {
    let mut diagram: FxHashSet<GridIndex> = FxHashSet::default();
    let mut pinned: FxHashSet<GridIndex> = FxHashSet::default();
    for (idx, v) in layer.iter() {
        if v.on_diagram {
            diagram.insert(idx);
            if v.is_vertex {
                pinned.insert(idx);
            }
        }
    }

    // Erosion runs in six directional subpasses. A voxel is a candidate only
    // when, at subpass start, it has background on the pass side and a
    // diagram voxel backing it on the opposite side: each subpass peels one
    // boundary layer instead of chewing through a ridge end to end, which
    // keeps the result centered and preserves extents.
    const DIRECTIONS: [Vector3<i32>; 6] = [
        Vector3::new(0, 0, -1),
        Vector3::new(0, 0, 1),
        Vector3::new(0, -1, 0),
        Vector3::new(0, 1, 0),
        Vector3::new(-1, 0, 0),
        Vector3::new(1, 0, 0),
    ];
    let mut removed_total = 0;
    loop {
        let mut removed_this_round = 0;
        for dir in &DIRECTIONS {
            let opposite = -dir;
            let mut candidates: Vec<GridIndex> = diagram
                .iter()
                .filter(|v| {
                    !diagram.contains(&v.shifted(dir)) && diagram.contains(&v.shifted(&opposite))
                })
                .copied()
                .collect();
            candidates.sort_unstable();
            for idx in candidates {
                if pinned.contains(&idx) {
                    continue;
                }
                let neighbor_count =
                    neighbors26(idx).filter(|(n, _)| diagram.contains(n)).count();
                if neighbor_count <= 1 {
                    continue;
                }
                if is_simple(&diagram, idx) {
                    diagram.remove(&idx);
                    removed_this_round += 1;
                }
            }
        }
        removed_total += removed_this_round;
        if removed_this_round == 0 {
            break;
        }
    }

    let stale: Vec<GridIndex> = layer
        .iter()
        .filter_map(|(idx, v)| (v.on_diagram && !diagram.contains(&idx)).then_some(idx))
        .collect();
    for idx in &stale {
        layer.get_mut(idx).expect("diagram voxel exists").on_diagram = false;
    }
    removed_total
}

/// Removing `v` keeps the local topology intact: its diagram neighbors stay
/// one 26-connected piece, and the background around it stays one
/// face-connected piece reaching a face neighbor.
fn is_simple(diagram: &FxHashSet<GridIndex>, v: GridIndex) -> bool {
    let mut fg = [false; 27];
    for (cell, offset) in cell_offsets().enumerate() {
        if offset == (0, 0, 0) {
            continue;
        }
        let idx =
            GridIndex::new(v.x + offset.0 as i64, v.y + offset.1 as i64, v.z + offset.2 as i64);
        fg[cell] = diagram.contains(&idx);
    }
    foreground_components_26(&fg) == 1 && background_components_6(&fg) == 1
}

fn cell_offsets() -> impl Iterator<Item = (i32, i32, i32)> {
    (0..27).map(|cell| ((cell % 3) - 1, ((cell / 3) % 3) - 1, (cell / 9) - 1))
}

fn cell_of(dx: i32, dy: i32, dz: i32) -> usize {
    ((dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)) as usize
}

fn foreground_components_26(fg: &[bool; 27]) -> usize {
    let mut seen = [false; 27];
    let mut components = 0;
    for start in 0..27 {
        if !fg[start] || seen[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(cell) = stack.pop() {
            let (cx, cy, cz) = ((cell % 3) as i32 - 1, ((cell / 3) % 3) as i32 - 1, (cell / 9) as i32 - 1);
            for (nx, ny, nz) in cell_offsets() {
                if (nx, ny, nz) == (0, 0, 0) {
                    continue;
                }
                if (nx - cx).abs() > 1 || (ny - cy).abs() > 1 || (nz - cz).abs() > 1 {
                    continue;
                }
                let n = cell_of(nx, ny, nz);
                if fg[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    components
}

// Background components within the 18-neighborhood (corners excluded),
// counting only those that touch a face neighbor of the center.
fn background_components_6(fg: &[bool; 27]) -> usize {
    let in_n18 = |x: i32, y: i32, z: i32| {
        let nonzero = [x, y, z].iter().filter(|c| **c != 0).count();
        nonzero == 1 || nonzero == 2
    };
    let mut seen = [false; 27];
    let mut components = 0;
    for (start, (sx, sy, sz)) in cell_offsets().enumerate() {
        if fg[start] || seen[start] || !in_n18(sx, sy, sz) {
            continue;
        }
        let mut touches_face_neighbor = false;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(cell) = stack.pop() {
            let (cx, cy, cz) = ((cell % 3) as i32 - 1, ((cell / 3) % 3) as i32 - 1, (cell / 9) as i32 - 1);
            if cx.abs() + cy.abs() + cz.abs() == 1 {
                touches_face_neighbor = true;
            }
            for (dx, dy, dz) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
            {
                let (nx, ny, nz) = (cx + dx, cy + dy, cz + dz);
                if nx.abs() > 1 || ny.abs() > 1 || nz.abs() > 1 {
                    continue;
                }
                if !in_n18(nx, ny, nz) {
                    continue;
                }
                let n = cell_of(nx, ny, nz);
                if !fg[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        if touches_face_neighbor {
            components += 1;
        }
    }
    components
}
