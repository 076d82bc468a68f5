//! Deterministic 26-connected A* over voxel indices. The passability
//! predicate abstracts the map: skeleton diagram membership, distance-field
//! traversability, anything voxel-shaped.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap;

use crate::voxel::{neighbors26, GridIndex};

pub const DEFAULT_EXPANSION_CAP: usize = 500_000;

/// Shortest 26-connected path from `start` to `goal`, both inclusive, using
/// step length in meters as the cost and straight-line distance as the
/// heuristic. Returns `None` when no path exists within the expansion cap
/// or either endpoint is impassable. Ties break on insertion order, so
/// identical inputs always produce identical paths.
pub fn astar_voxels(
    passable: impl Fn(&GridIndex) -> bool,
    start: GridIndex,
    goal: GridIndex,
    voxel_size: f64,
    max_expansions: usize,
) -> Option<Vec<GridIndex>> {
    if !passable(&start) || !passable(&goal) {
        return None;
    }
    if start == goal {
        return Some(vec![start]);
    }
    let h = |i: &GridIndex| (goal.center(voxel_size) - i.center(voxel_size)).norm();

    let mut g: FxHashMap<GridIndex, f64> = FxHashMap::default();
    let mut came: FxHashMap<GridIndex, GridIndex> = FxHashMap::default();
    // Non-negative f-values order correctly through their bit patterns.
    let mut open: BinaryHeap<Reverse<(u64, u64, GridIndex)>> = BinaryHeap::new();
    let mut tick = 0u64;

    g.insert(start, 0.0);
    open.push(Reverse((h(&start).to_bits(), tick, start)));

    let mut expansions = 0usize;
    while let Some(Reverse((_, _, cur))) = open.pop() {
        if cur == goal {
            let mut path = vec![cur];
            let mut node = cur;
            while let Some(&prev) = came.get(&node) {
                path.push(prev);
                node = prev;
            }
            path.reverse();
            return Some(path);
        }
        expansions += 1;
        if expansions > max_expansions {
            return None;
        }
        let g_cur = g[&cur];
        for (n, kernel) in neighbors26(cur) {
            if !passable(&n) {
                continue;
            }
            let cand = g_cur + kernel.grid_distance(voxel_size);
            if cand < g.get(&n).copied().unwrap_or(f64::INFINITY) - 1e-12 {
                g.insert(n, cand);
                came.insert(n, cur);
                tick += 1;
                open.push(Reverse(((cand + h(&n)).to_bits(), tick, n)));
            }
        }
    }
    None
}

/// Total metric length of a voxel path (sum of center-to-center steps).
pub fn path_length(path: &[GridIndex], voxel_size: f64) -> f64 {
    path.windows(2)
        .map(|w| (w[1].center(voxel_size) - w[0].center(voxel_size)).norm())
        .sum()
}
