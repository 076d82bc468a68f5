//! Incremental Euclidean signed distance field built from the truncated
//! field by three staged wavefronts: propagate (copy the fixed band, classify
//! changes), raise (brushfire-invalidate stale distance trees), lower
//! (re-expand valid values outward). Unknown space near the robot can be
//! overridden by clear/occupied spheres; those voxels are tagged hallucinated
//! and lose to any real update.

use std::collections::VecDeque;

use nalgebra::Vector3;
use thiserror::Error;

use crate::tsdf::TsdfVoxel;
use crate::voxel::io::VoxelCodec;
use crate::voxel::{
    interpolate_trilinear, neighbors26, GridIndex, ScalarVoxel, VoxelLayer,
};

/// Floating-point guard on "strictly closer" comparisons. Chosen well below
/// the 1e-6 field accuracy contract: every relaxation along a path may leave
/// an error of this size behind, and paths span dozens of steps, so the
/// guard must be small enough that the accumulated slack stays negligible.
const TIE_EPSILON: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EsdfVoxel {
    /// Signed distance, meters. Negative inside obstacles.
    pub distance: f64,
    pub observed: bool,
    /// Copied from the truncated field's band; immutable to wavefronts.
    pub fixed: bool,
    /// Value came from a clear/occupied sphere, not a real observation.
    pub hallucinated: bool,
    /// Integer offset toward this voxel's distance source. `Some(0)` for
    /// self-parented fixed voxels, `None` when the voxel holds no usable
    /// propagated value. Quasi metric stores one 26-neighbor step; full
    /// metric stores the whole offset to the seed voxel.
    pub parent: Option<Vector3<i32>>,
    /// Value measures to an implicit crossing midpoint, not to the parent
    /// voxel's center; such values are always stale under a raise wave.
    pub crossing: bool,
    pub(crate) in_lower: bool,
    pub(crate) in_raise: bool,
}

impl EsdfVoxel {
    /// Holds a distance that wavefronts may propagate from.
    fn valid_source(&self) -> bool {
        self.parent.is_some() && !self.hallucinated
    }
}

impl ScalarVoxel for EsdfVoxel {
    fn scalar(&self) -> Option<f64> {
        self.observed.then_some(self.distance)
    }
}

impl VoxelCodec for EsdfVoxel {
    const KIND: u32 = 2;
    const PAYLOAD_BYTES: usize = 15;

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.distance.to_le_bytes());
        let mut flags = 0u8;
        if self.observed {
            flags |= 1;
        }
        if self.fixed {
            flags |= 2;
        }
        if self.hallucinated {
            flags |= 4;
        }
        if self.parent.is_some() {
            flags |= 8;
        }
        if self.crossing {
            flags |= 16;
        }
        out.push(flags);
        let p = self.parent.unwrap_or_else(Vector3::zeros);
        out.extend_from_slice(&(p.x as i16).to_le_bytes());
        out.extend_from_slice(&(p.y as i16).to_le_bytes());
        out.extend_from_slice(&(p.z as i16).to_le_bytes());
    }

    fn decode(bytes: &[u8]) -> Self {
        let flags = bytes[8];
        let px = i16::from_le_bytes(bytes[9..11].try_into().unwrap()) as i32;
        let py = i16::from_le_bytes(bytes[11..13].try_into().unwrap()) as i32;
        let pz = i16::from_le_bytes(bytes[13..15].try_into().unwrap()) as i32;
        Self {
            distance: f64::from_le_bytes(bytes[..8].try_into().unwrap()),
            observed: flags & 1 != 0,
            fixed: flags & 2 != 0,
            hallucinated: flags & 4 != 0,
            parent: (flags & 8 != 0).then(|| Vector3::new(px, py, pz)),
            crossing: flags & 16 != 0,
            in_lower: false,
            in_raise: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EsdfMetric {
    /// Chamfer accumulation along 26-neighbor steps.
    QuasiEuclidean,
    /// Exact norm from each voxel center to its seed voxel's center.
    FullEuclidean,
}

#[derive(Clone, Copy, Debug)]
pub struct EsdfConfig {
    /// Truncated-field values below this magnitude are trusted verbatim.
    pub fixed_band_radius: f64,
    /// Distances are not propagated past this magnitude.
    pub max_esdf_distance: f64,
    /// Magnitude assigned to voxels with no propagated value yet.
    pub default_distance: f64,
    pub metric: EsdfMetric,
}

impl Default for EsdfConfig {
    fn default() -> Self {
        Self {
            fixed_band_radius: 0.2,
            max_esdf_distance: 4.0,
            default_distance: 4.0,
            metric: EsdfMetric::QuasiEuclidean,
        }
    }
}

#[derive(Debug, Error)]
pub enum EsdfConfigError {
    #[error("fixed_band_radius {band} must be at least voxel_size {voxel_size}")]
    BandTooSmall { band: f64, voxel_size: f64 },
    #[error("default_distance {default} must be >= max_esdf_distance {max}")]
    DefaultBelowMax { default: f64, max: f64 },
}

impl EsdfConfig {
    pub fn validate(&self, voxel_size: f64) -> Result<(), EsdfConfigError> {
        if self.fixed_band_radius < voxel_size {
            return Err(EsdfConfigError::BandTooSmall {
                band: self.fixed_band_radius,
                voxel_size,
            });
        }
        if self.default_distance < self.max_esdf_distance {
            return Err(EsdfConfigError::DefaultBelowMax {
                default: self.default_distance,
                max: self.max_esdf_distance,
            });
        }
        Ok(())
    }
}

fn sign_of(d: f64) -> f64 {
    if d < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// The two staged FIFO queues. A voxel sits in each queue at most once; the
/// in-queue flags on the voxels enforce that.
#[derive(Default)]
pub struct Wavefronts {
    pub lower: VecDeque<GridIndex>,
    pub raise: VecDeque<GridIndex>,
}

impl Wavefronts {
    fn push_lower(&mut self, layer: &mut VoxelLayer<EsdfVoxel>, i: GridIndex) {
        let v = layer.get_or_insert(&i);
        if !v.in_lower {
            v.in_lower = true;
            self.lower.push_back(i);
        }
    }

    fn push_raise(&mut self, layer: &mut VoxelLayer<EsdfVoxel>, i: GridIndex) {
        let v = layer.get_or_insert(&i);
        if !v.in_raise {
            v.in_raise = true;
            self.raise.push_back(i);
        }
    }
}

/// Classify freshly integrated voxels: copy the fixed band, assign defaults
/// to new observations, and seed the raise/lower queues with whatever moved.
pub fn propagate_from_tsdf(
    tsdf: &VoxelLayer<TsdfVoxel>,
    esdf: &mut VoxelLayer<EsdfVoxel>,
    updated: &[GridIndex],
    cfg: &EsdfConfig,
) -> Wavefronts {
    let mut fronts = Wavefronts::default();
    let default = cfg.default_distance;

    for &idx in updated {
        let Some(t) = tsdf.get(&idx) else { continue };
        if !t.observed() {
            continue;
        }
        // The epsilon keeps truncation-plateau voxels out of the band when
        // the band radius equals the truncation distance: averaging clamped
        // values drifts a few ulps below the plateau, and such voxels must
        // not seed distances as if a surface crossed them.
        let in_band = t.distance.abs() < cfg.fixed_band_radius - TIE_EPSILON;
        let old = esdf.get_or_insert(&idx).clone();

        if in_band {
            if old.fixed && (old.distance - t.distance).abs() <= TIE_EPSILON {
                continue;
            }
            let fresh = !old.observed || old.hallucinated || old.parent.is_none();
            // Anything derived from this voxel's previous state is stale if
            // the voxel switched sides, just entered the band (killing
            // crossing values measured against it), or moved away from the
            // surface. The voxel itself keeps the new band value and stays
            // a valid source throughout.
            let stale_tree = !fresh
                && (sign_of(old.distance) != sign_of(t.distance)
                    || !old.fixed
                    || t.distance.abs() > old.distance.abs() + TIE_EPSILON);
            {
                let e = esdf.get_or_insert(&idx);
                e.distance = t.distance;
                e.observed = true;
                e.fixed = true;
                e.hallucinated = false;
                e.crossing = false;
                e.parent = Some(Vector3::zeros());
            }
            if stale_tree {
                fronts.push_raise(esdf, idx);
            }
            fronts.push_lower(esdf, idx);
        } else if old.fixed {
            // Band left this voxel: its copied value is stale.
            {
                let e = esdf.get_or_insert(&idx);
                e.fixed = false;
                e.distance = sign_of(t.distance) * default;
                e.parent = None;
                e.hallucinated = false;
                e.crossing = false;
            }
            fronts.push_raise(esdf, idx);
        } else if !old.observed || old.hallucinated {
            {
                let e = esdf.get_or_insert(&idx);
                e.distance = sign_of(t.distance) * default;
                e.observed = true;
                e.hallucinated = false;
                e.parent = None;
                e.crossing = false;
            }
            // Fresh territory: pull values in from valid neighbors.
            for (n_idx, _) in neighbors26(idx) {
                if esdf.get(&n_idx).is_some_and(|n| n.observed && n.valid_source()) {
                    fronts.push_lower(esdf, n_idx);
                }
            }
        } else if sign_of(old.distance) != sign_of(t.distance) {
            // Observed voxel switched sides of the surface.
            {
                let e = esdf.get_or_insert(&idx);
                e.distance = sign_of(t.distance) * default;
                e.parent = None;
                e.crossing = false;
            }
            fronts.push_raise(esdf, idx);
        }
    }
    fronts
}

/// Brushfire invalidation of stale distance trees. Every popped voxel's
/// neighbors are checked: those whose source chain runs through invalidated
/// territory are themselves invalidated and spread the wave; the rest are
/// still-valid sources and feed the lower queue. Returns the invalidated
/// indices.
pub fn process_raise(
    esdf: &mut VoxelLayer<EsdfVoxel>,
    fronts: &mut Wavefronts,
    cfg: &EsdfConfig,
) -> Vec<GridIndex> {
    let mut invalidated = Vec::new();
    while let Some(idx) = fronts.raise.pop_front() {
        esdf.get_or_insert(&idx).in_raise = false;
        for (n_idx, _) in neighbors26(idx) {
            let Some(n) = esdf.get(&n_idx) else { continue };
            if !n.observed || n.hallucinated {
                continue;
            }
            let Some(parent) = n.parent else { continue };
            if n.fixed {
                fronts.push_lower(esdf, n_idx);
                continue;
            }
            let stale = match cfg.metric {
                // Quasi parents chain one step at a time; a child of the
                // popped voxel points straight at it.
                EsdfMetric::QuasiEuclidean => n_idx.shifted(&parent) == idx,
                // Full parents point at their seed; stale once that seed is
                // no longer a valid fixed voxel. Crossing values never
                // measure to a seed center, so the wave always retires them.
                EsdfMetric::FullEuclidean => {
                    let seed = n_idx.shifted(&parent);
                    n.crossing
                        || !esdf
                            .get(&seed)
                            .is_some_and(|s| s.fixed && s.parent.is_some())
                }
            };
            if stale {
                {
                    let e = esdf.get_or_insert(&n_idx);
                    e.distance = sign_of(e.distance) * cfg.default_distance;
                    e.parent = None;
                    e.crossing = false;
                }
                invalidated.push(n_idx);
                fronts.push_raise(esdf, n_idx);
            } else {
                fronts.push_lower(esdf, n_idx);
            }
        }
    }
    invalidated
}

/// Expand valid distances outward. Same-sign neighbors take the metric's
/// candidate; opposite-sign non-fixed pairs mark an implicit surface at
/// their shared boundary midpoint and each side measures to it.
pub fn process_lower(
    esdf: &mut VoxelLayer<EsdfVoxel>,
    fronts: &mut Wavefronts,
    cfg: &EsdfConfig,
) -> usize {
    let vs = esdf.voxel_size();
    let mut lowered = 0usize;

    while let Some(idx) = fronts.lower.pop_front() {
        let src = {
            let v = esdf.get_or_insert(&idx);
            v.in_lower = false;
            v.clone()
        };
        if !src.observed || !src.valid_source() {
            continue;
        }
        let src_sign = sign_of(src.distance);
        let src_abs = src.distance.abs();
        let seed = idx.shifted(&src.parent.expect("valid source has parent"));
        let seed_center = seed.center(vs);

        for (n_idx, kernel) in neighbors26(idx) {
            let Some(n) = esdf.get(&n_idx) else { continue };
            if !n.observed || n.fixed {
                continue;
            }
            let n_abs = n.distance.abs();
            let n_sign = sign_of(n.distance);

            if n_sign == src_sign {
                let candidate = match cfg.metric {
                    EsdfMetric::QuasiEuclidean => src_abs + kernel.grid_distance(vs),
                    EsdfMetric::FullEuclidean => (n_idx.center(vs) - seed_center).norm(),
                };
                if candidate > cfg.max_esdf_distance {
                    continue;
                }
                if candidate < n_abs - TIE_EPSILON {
                    let parent = match cfg.metric {
                        EsdfMetric::QuasiEuclidean => idx.offset_from(&n_idx),
                        EsdfMetric::FullEuclidean => seed.offset_from(&n_idx),
                    };
                    let e = esdf.get_or_insert(&n_idx);
                    e.distance = src_sign * candidate;
                    e.parent = Some(parent);
                    e.hallucinated = false;
                    e.crossing = false;
                    lowered += 1;
                    fronts.push_lower(esdf, n_idx);
                }
            } else if !src.fixed {
                // Implicit crossing: the surface sits at the midpoint of the
                // shared boundary; the neighbor keeps its own sign.
                let candidate = kernel.grid_distance(vs) / 2.0;
                if candidate < n_abs - TIE_EPSILON {
                    let e = esdf.get_or_insert(&n_idx);
                    e.distance = n_sign * candidate;
                    e.parent = Some(idx.offset_from(&n_idx));
                    e.hallucinated = false;
                    e.crossing = true;
                    lowered += 1;
                    fronts.push_lower(esdf, n_idx);
                }
            }
        }
    }
    lowered
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateSummary {
    pub lowered: usize,
    pub raised: usize,
}

/// Full incremental cycle: propagate, raise, then lower.
pub fn update_esdf(
    tsdf: &VoxelLayer<TsdfVoxel>,
    esdf: &mut VoxelLayer<EsdfVoxel>,
    updated: &[GridIndex],
    cfg: &EsdfConfig,
) -> UpdateSummary {
    cfg.validate(esdf.voxel_size()).expect("esdf config incompatible with layer");
    let mut fronts = propagate_from_tsdf(tsdf, esdf, updated, cfg);
    let raised = process_raise(esdf, &mut fronts, cfg).len();
    let lowered = process_lower(esdf, &mut fronts, cfg);
    UpdateSummary { lowered, raised }
}

/// Batch build from scratch: every observed voxel is treated as updated.
pub fn rebuild_esdf(tsdf: &VoxelLayer<TsdfVoxel>, cfg: &EsdfConfig) -> VoxelLayer<EsdfVoxel> {
    let mut esdf = VoxelLayer::new(*tsdf.config());
    let mut updated: Vec<GridIndex> = tsdf
        .iter()
        .filter(|(_, v)| v.observed())
        .map(|(i, _)| i)
        .collect();
    updated.sort_unstable();
    update_esdf(tsdf, &mut esdf, &updated, cfg);
    esdf
}

/// Mark unknown space around the robot: a clear ball of free values inside
/// `clear_radius`, an occupied shell out to `occupied_radius`. Real observed
/// voxels are never touched; a clear ball does re-free shell voxels it
/// previously hallucinated occupied. Returns the modified indices.
pub fn apply_spheres(
    esdf: &mut VoxelLayer<EsdfVoxel>,
    robot: &Vector3<f64>,
    clear_radius: f64,
    occupied_radius: f64,
) -> Vec<GridIndex> {
    assert!(clear_radius < occupied_radius);
    let vs = esdf.voxel_size();
    let vps = esdf.voxels_per_side() as i64;
    let block_side = vps as f64 * vs;
    let occ_sq = occupied_radius * occupied_radius;
    let clear_sq = clear_radius * clear_radius;
    let mut modified = Vec::new();

    let lo = GridIndex::from_point(&(robot - Vector3::repeat(occupied_radius)), block_side);
    let hi = GridIndex::from_point(&(robot + Vector3::repeat(occupied_radius)), block_side);
    for bx in lo.x..=hi.x {
        for by in lo.y..=hi.y {
            for bz in lo.z..=hi.z {
                // Skip blocks whose cube lies entirely outside the shell.
                let bmin = Vector3::new(bx as f64, by as f64, bz as f64) * block_side;
                let nearest = Vector3::new(
                    robot.x.clamp(bmin.x, bmin.x + block_side),
                    robot.y.clamp(bmin.y, bmin.y + block_side),
                    robot.z.clamp(bmin.z, bmin.z + block_side),
                );
                if (nearest - robot).norm_squared() > occ_sq {
                    continue;
                }
                let base = GridIndex::new(bx * vps, by * vps, bz * vps);
                for lx in 0..vps {
                    for ly in 0..vps {
                        for lz in 0..vps {
                            let idx = base.offset(lx, ly, lz);
                            let r_sq = (idx.center(vs) - robot).norm_squared();
                            if r_sq > occ_sq {
                                continue;
                            }
                            if r_sq <= clear_sq {
                                let e = esdf.get_or_insert(&idx);
                                let refreeable =
                                    !e.observed || (e.hallucinated && e.distance < 0.0);
                                if refreeable {
                                    e.distance = clear_radius;
                                    e.observed = true;
                                    e.hallucinated = true;
                                    e.fixed = false;
                                    e.parent = None;
                                    modified.push(idx);
                                }
                            } else {
                                let e = esdf.get_or_insert(&idx);
                                if !e.observed {
                                    e.distance = -vs;
                                    e.observed = true;
                                    e.hallucinated = true;
                                    e.fixed = false;
                                    e.parent = None;
                                    modified.push(idx);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    modified
}

/// Interpolated distance and gradient at `p`, or `None` anywhere the eight
/// surrounding voxels are not all observed. Callers treat `None` as unknown
/// space, hence untraversable.
pub fn lookup(esdf: &VoxelLayer<EsdfVoxel>, p: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
    interpolate_trilinear(esdf, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsdf::{integrate_scan, SensorScan, TsdfConfig};
    use crate::voxel::LayerConfig;
    use nalgebra::Isometry3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rustc_hash::{FxHashMap, FxHashSet};

    const VS: f64 = 0.1;

    fn grid_config() -> LayerConfig {
        LayerConfig::new(VS, 8).unwrap()
    }

    fn test_cfg(metric: EsdfMetric) -> EsdfConfig {
        EsdfConfig {
            fixed_band_radius: VS,
            max_esdf_distance: 100.0,
            default_distance: 100.0,
            metric,
        }
    }

    /// Observed truncated field over [0,n)³ holding a single zero-distance
    /// surface voxel at the center; everything else reads +truncation.
    fn single_seed_tsdf(n: i64) -> (VoxelLayer<TsdfVoxel>, GridIndex) {
        let mut tsdf = VoxelLayer::new(grid_config());
        let c = GridIndex::new(n / 2, n / 2, n / 2);
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let i = GridIndex::new(x, y, z);
                    let d = if i == c { 0.0 } else { 0.2 };
                    *tsdf.get_or_insert(&i) = TsdfVoxel { distance: d, weight: 1.0 };
                }
            }
        }
        (tsdf, c)
    }

    #[test]
    fn single_seed_quasi_values() {
        let (tsdf, c) = single_seed_tsdf(7);
        let esdf = rebuild_esdf(&tsdf, &test_cfg(EsdfMetric::QuasiEuclidean));
        let d = |dx: i64, dy: i64, dz: i64| {
            esdf.get(&c.offset(dx, dy, dz)).unwrap().distance
        };
        assert!((d(2, 2, 2) - 2.0 * 3f64.sqrt() * VS).abs() < 1e-12);
        assert!((d(3, 0, 0) - 0.3).abs() < 1e-12);
        assert!((d(1, 1, 0) - 2f64.sqrt() * VS).abs() < 1e-12);
        assert!((d(3, 3, 3) - 3.0 * 3f64.sqrt() * VS).abs() < 1e-12);
        assert_eq!(d(0, 0, 0), 0.0);
        assert!(esdf.get(&c).unwrap().fixed);
    }

    #[test]
    fn single_seed_full_is_exact_euclidean() {
        let (tsdf, c) = single_seed_tsdf(7);
        let esdf = rebuild_esdf(&tsdf, &test_cfg(EsdfMetric::FullEuclidean));
        let cc = c.center(VS);
        for (i, v) in esdf.iter() {
            if !v.observed {
                continue;
            }
            if i == c {
                assert_eq!(v.distance, 0.0);
                continue;
            }
            let expect = (i.center(VS) - cc).norm();
            assert!(
                (v.distance - expect).abs() < 1e-9,
                "voxel {i:?}: {} vs {}",
                v.distance,
                expect
            );
        }
        let d222 = esdf.get(&c.offset(2, 2, 2)).unwrap().distance;
        assert!((d222 - Vector3::new(0.2f64, 0.2, 0.2).norm()).abs() < 1e-12);
        let d300 = esdf.get(&c.offset(3, 0, 0)).unwrap().distance;
        assert!((d300 - 0.3).abs() < 1e-12);
    }

    /// Random blocky obstacle sets with band values of ±vs/2 on each side of
    /// every surface. Returns the truncated field and the occupied set.
    fn random_obstacle_tsdf(
        rng: &mut ChaCha8Rng,
        n: i64,
    ) -> (VoxelLayer<TsdfVoxel>, FxHashSet<GridIndex>) {
        let mut occupied = FxHashSet::default();
        let boxes = rng.random_range(1..5);
        for _ in 0..boxes {
            let x0 = rng.random_range(0..n - 1);
            let y0 = rng.random_range(0..n - 1);
            let z0 = rng.random_range(0..n - 1);
            let dx = rng.random_range(1..=(n - x0).min(5));
            let dy = rng.random_range(1..=(n - y0).min(5));
            let dz = rng.random_range(1..=(n - z0).min(5));
            for x in x0..x0 + dx {
                for y in y0..y0 + dy {
                    for z in z0..z0 + dz {
                        occupied.insert(GridIndex::new(x, y, z));
                    }
                }
            }
        }
        let in_grid = |i: &GridIndex| {
            (0..n).contains(&i.x) && (0..n).contains(&i.y) && (0..n).contains(&i.z)
        };
        let mut tsdf = VoxelLayer::new(grid_config());
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let i = GridIndex::new(x, y, z);
                    let occ = occupied.contains(&i);
                    let boundary = neighbors26(i)
                        .any(|(m, _)| in_grid(&m) && occupied.contains(&m) != occ);
                    let d = match (occ, boundary) {
                        (true, true) => -VS / 2.0,
                        (true, false) => -0.2,
                        (false, true) => VS / 2.0,
                        (false, false) => 0.2,
                    };
                    *tsdf.get_or_insert(&i) = TsdfVoxel { distance: d, weight: 1.0 };
                }
            }
        }
        (tsdf, occupied)
    }

    /// Reference chamfer field: Dijkstra over the 26-connected graph of one
    /// sign region, seeded by that region's band voxels at their magnitudes.
    fn dijkstra_oracle(
        region: &FxHashSet<GridIndex>,
        seeds: &[(GridIndex, f64)],
        vs: f64,
    ) -> FxHashMap<GridIndex, f64> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        let mut dist: FxHashMap<GridIndex, f64> = FxHashMap::default();
        let mut heap = BinaryHeap::new();
        for &(i, d) in seeds {
            dist.insert(i, d);
            // Non-negative floats order correctly through their bit patterns.
            heap.push(Reverse((d.to_bits(), i)));
        }
        while let Some(Reverse((bits, i))) = heap.pop() {
            let d = f64::from_bits(bits);
            if dist.get(&i).copied().unwrap_or(f64::INFINITY) < d {
                continue;
            }
            for (m, kernel) in neighbors26(i) {
                if !region.contains(&m) {
                    continue;
                }
                let nd = d + kernel.grid_distance(vs);
                if nd < dist.get(&m).copied().unwrap_or(f64::INFINITY) {
                    dist.insert(m, nd);
                    heap.push(Reverse((nd.to_bits(), m)));
                }
            }
        }
        dist
    }

    fn signed_regions(
        tsdf: &VoxelLayer<TsdfVoxel>,
    ) -> [(FxHashSet<GridIndex>, Vec<(GridIndex, f64)>); 2] {
        let mut pos = (FxHashSet::default(), Vec::new());
        let mut neg = (FxHashSet::default(), Vec::new());
        for (i, v) in tsdf.iter() {
            if !v.observed() {
                continue;
            }
            let side = if v.distance < 0.0 { &mut neg } else { &mut pos };
            side.0.insert(i);
            if v.distance.abs() < VS {
                side.1.push((i, v.distance.abs()));
            }
        }
        [pos, neg]
    }

    #[test]
    fn quasi_matches_dijkstra_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..10 {
            let (tsdf, _) = random_obstacle_tsdf(&mut rng, 16);
            let esdf = rebuild_esdf(&tsdf, &test_cfg(EsdfMetric::QuasiEuclidean));
            for (region, seeds) in signed_regions(&tsdf) {
                let oracle = dijkstra_oracle(&region, &seeds, VS);
                for &i in &region {
                    let got = esdf.get(&i).unwrap();
                    assert!(got.observed);
                    let want = oracle.get(&i).copied().unwrap_or(100.0);
                    assert!(
                        (got.distance.abs() - want).abs() <= 1e-6,
                        "voxel {i:?}: |{}| vs {want}",
                        got.distance
                    );
                }
            }
        }
    }

    #[test]
    fn full_tracks_euclidean_transform_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        for _ in 0..6 {
            let (tsdf, _) = random_obstacle_tsdf(&mut rng, 16);
            let esdf = rebuild_esdf(&tsdf, &test_cfg(EsdfMetric::FullEuclidean));
            for (region, seeds) in signed_regions(&tsdf) {
                for &i in &region {
                    let c = i.center(VS);
                    let want = seeds
                        .iter()
                        .map(|(s, _)| (s.center(VS) - c).norm())
                        .fold(f64::INFINITY, f64::min);
                    if !want.is_finite() {
                        continue;
                    }
                    let got = esdf.get(&i).unwrap().distance.abs();
                    assert!(
                        (got - want).abs() <= 3f64.sqrt() * VS + 1e-9,
                        "voxel {i:?}: |{got}| vs EDT {want}"
                    );
                }
            }
        }
    }

    fn synthetic_scans(rng: &mut ChaCha8Rng, count: usize) -> Vec<SensorScan> {
        // A fixed wall of surface points seen from shifting origins, plus
        // scattered clutter, so bands move and raise/lower both fire.
        (0..count)
            .map(|k| {
                let origin = Vector3::new(
                    0.2 + 0.1 * k as f64,
                    0.8 + rng.random_range(-0.2..0.2),
                    0.8 + rng.random_range(-0.2..0.2),
                );
                let mut points = Vec::new();
                for _ in 0..120 {
                    let wall_y = rng.random_range(0.0..1.6);
                    let wall_z = rng.random_range(0.0..1.6);
                    let target = Vector3::new(2.0, wall_y, wall_z);
                    points.push(target - origin);
                }
                for _ in 0..30 {
                    let target = Vector3::new(
                        rng.random_range(0.8..1.6),
                        rng.random_range(0.2..1.4),
                        rng.random_range(0.2..1.4),
                    );
                    points.push(target - origin);
                }
                SensorScan {
                    pose: Isometry3::translation(origin.x, origin.y, origin.z),
                    points,
                }
            })
            .collect()
    }

    #[test]
    fn incremental_equals_batch_after_scan_sequence() {
        for metric in [EsdfMetric::QuasiEuclidean, EsdfMetric::FullEuclidean] {
            let mut rng = ChaCha8Rng::seed_from_u64(404);
            let cfg = EsdfConfig {
                fixed_band_radius: 0.15,
                max_esdf_distance: 2.0,
                default_distance: 2.0,
                metric,
            };
            let tsdf_cfg = TsdfConfig { max_ray_length: 4.0, ..TsdfConfig::default() };
            let mut tsdf = VoxelLayer::new(grid_config());
            let mut esdf = VoxelLayer::new(grid_config());
            for scan in synthetic_scans(&mut rng, 6) {
                let out = integrate_scan(&mut tsdf, &scan, &tsdf_cfg);
                update_esdf(&tsdf, &mut esdf, &out.updated, &cfg);
            }
            let batch = rebuild_esdf(&tsdf, &cfg);
            let mut compared = 0;
            for (i, b) in batch.iter() {
                if !b.observed {
                    continue;
                }
                let inc = esdf.get(&i).expect("incremental field must cover batch");
                assert!(inc.observed);
                assert!(
                    (inc.distance - b.distance).abs() <= 1e-6,
                    "{metric:?} voxel {i:?}: incremental {} vs batch {}",
                    inc.distance,
                    b.distance
                );
                compared += 1;
            }
            assert!(compared > 1000, "scene too small to be meaningful");
        }
    }

    #[test]
    fn removing_one_source_raises_only_its_tree() {
        let cfg = test_cfg(EsdfMetric::QuasiEuclidean);
        let mut tsdf = VoxelLayer::new(grid_config());
        let n = 13i64;
        let a = GridIndex::new(2, 6, 6);
        let b = GridIndex::new(10, 6, 6);
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let i = GridIndex::new(x, y, z);
                    let d = if i == a || i == b { 0.0 } else { 0.2 };
                    *tsdf.get_or_insert(&i) = TsdfVoxel { distance: d, weight: 1.0 };
                }
            }
        }
        let mut esdf = rebuild_esdf(&tsdf, &cfg);
        let before: FxHashMap<GridIndex, f64> =
            esdf.iter().map(|(i, v)| (i, v.distance)).collect();

        // Surface at `a` disappears; `b` stays.
        tsdf.get_or_insert(&a).distance = 0.2;
        let summary = update_esdf(&tsdf, &mut esdf, &[a], &cfg);
        assert!(summary.raised > 0);

        let batch = rebuild_esdf(&tsdf, &cfg);
        for (i, want) in batch.iter() {
            if !want.observed {
                continue;
            }
            let got = esdf.get(&i).unwrap();
            assert!(
                (got.distance - want.distance).abs() <= 1e-6,
                "voxel {i:?} after raise: {} vs {}",
                got.distance,
                want.distance
            );
        }
        // Voxels strictly closer to b than to a never changed.
        let mut untouched = 0;
        for (i, d) in &before {
            let da = ((i.x - a.x).pow(2) + (i.y - a.y).pow(2) + (i.z - a.z).pow(2)) as f64;
            let db = ((i.x - b.x).pow(2) + (i.y - b.y).pow(2) + (i.z - b.z).pow(2)) as f64;
            if db < da / 4.0 {
                assert_eq!(esdf.get(i).unwrap().distance, *d, "voxel {i:?} near b moved");
                untouched += 1;
            }
        }
        assert!(untouched > 50);
    }

    #[test]
    fn empty_update_is_a_noop() {
        let (tsdf, _) = single_seed_tsdf(5);
        let cfg = test_cfg(EsdfMetric::QuasiEuclidean);
        let mut esdf = rebuild_esdf(&tsdf, &cfg);
        let summary = update_esdf(&tsdf, &mut esdf, &[], &cfg);
        assert_eq!(summary, UpdateSummary::default());
    }

    #[test]
    fn batch_on_empty_tsdf_is_empty() {
        let tsdf: VoxelLayer<TsdfVoxel> = VoxelLayer::new(grid_config());
        let esdf = rebuild_esdf(&tsdf, &EsdfConfig::default());
        assert_eq!(esdf.num_blocks(), 0);
    }

    #[test]
    fn resubmitting_unchanged_voxels_changes_nothing() {
        let (tsdf, _) = single_seed_tsdf(7);
        let cfg = test_cfg(EsdfMetric::QuasiEuclidean);
        let mut esdf = rebuild_esdf(&tsdf, &cfg);
        let before: FxHashMap<GridIndex, f64> =
            esdf.iter().map(|(i, v)| (i, v.distance)).collect();
        let all: Vec<GridIndex> = tsdf.iter().map(|(i, _)| i).collect();
        let summary = update_esdf(&tsdf, &mut esdf, &all, &cfg);
        assert_eq!(summary.raised, 0);
        assert_eq!(summary.lowered, 0);
        for (i, v) in esdf.iter() {
            assert_eq!(before[&i], v.distance);
        }
    }

    #[test]
    fn spheres_mark_unknown_space_and_yield_to_real_data() {
        let mut esdf: VoxelLayer<EsdfVoxel> =
            VoxelLayer::new(LayerConfig::new(0.25, 8).unwrap());
        // One pre-observed voxel inside the future occupied shell.
        let pre = GridIndex::new(8, 0, 0);
        {
            let e = esdf.get_or_insert(&pre);
            e.observed = true;
            e.distance = 1.23;
            e.parent = Some(Vector3::new(1, 0, 0));
        }
        let robot = Vector3::new(0.0, 0.0, 0.0);
        let modified = apply_spheres(&mut esdf, &robot, 1.0, 4.0);
        assert!(!modified.is_empty());

        for (i, v) in esdf.iter() {
            let r = (i.center(0.25) - robot).norm();
            if i == pre {
                assert_eq!(v.distance, 1.23, "observed voxel must stay untouched");
                assert!(!v.hallucinated);
            } else if r <= 1.0 {
                assert!(v.observed && v.hallucinated);
                assert_eq!(v.distance, 1.0);
            } else if r <= 4.0 {
                assert!(v.observed && v.hallucinated);
                assert_eq!(v.distance, -0.25);
            } else {
                assert!(!v.observed);
            }
        }

        // A later clear sphere near the shell re-frees hallucinated-occupied
        // voxels but leaves real observations alone.
        let modified2 = apply_spheres(&mut esdf, &Vector3::new(2.0, 0.0, 0.0), 1.0, 4.0);
        assert!(!modified2.is_empty());
        let near = GridIndex::from_point(&Vector3::new(2.2, 0.3, 0.0), 0.25);
        let v = esdf.get(&near).unwrap();
        assert!(v.hallucinated && v.distance == 1.0);
        assert_eq!(esdf.get(&pre).unwrap().distance, 1.23);
    }

    #[test]
    fn real_integration_overwrites_hallucinated_values() {
        let cfg = EsdfConfig {
            fixed_band_radius: 0.15,
            ..EsdfConfig::default()
        };
        let mut tsdf = VoxelLayer::new(grid_config());
        let mut esdf = VoxelLayer::new(grid_config());
        apply_spheres(&mut esdf, &Vector3::new(0.0, 0.0, 0.0), 0.5, 2.0);
        let probe = GridIndex::from_point(&Vector3::new(1.0, 0.0, 0.0), VS);
        assert!(esdf.get(&probe).unwrap().hallucinated);
        assert!(esdf.get(&probe).unwrap().distance < 0.0);

        // A real scan sees through that voxel to a wall behind it.
        let scan = SensorScan {
            pose: Isometry3::identity(),
            points: vec![Vector3::new(1.6, 0.0, 0.0)],
        };
        let out = integrate_scan(&mut tsdf, &scan, &TsdfConfig::default());
        update_esdf(&tsdf, &mut esdf, &out.updated, &cfg);
        let v = esdf.get(&probe).unwrap();
        assert!(!v.hallucinated, "real update must clear the flag");
        assert!(v.distance > 0.0, "voxel is really free space");
    }

    #[test]
    fn lookup_in_half_space_field() {
        // Obstacle fills x < 0; the projective distance is just x.
        let mut tsdf = VoxelLayer::new(grid_config());
        for x in -10..10 {
            for y in -10..10 {
                for z in -10..10 {
                    let i = GridIndex::new(x, y, z);
                    let d = i.center(VS).x.clamp(-0.2, 0.2);
                    *tsdf.get_or_insert(&i) = TsdfVoxel { distance: d, weight: 1.0 };
                }
            }
        }
        let cfg = EsdfConfig {
            fixed_band_radius: VS,
            max_esdf_distance: 100.0,
            default_distance: 100.0,
            metric: EsdfMetric::FullEuclidean,
        };
        let esdf = rebuild_esdf(&tsdf, &cfg);

        let (d, g) = lookup(&esdf, &Vector3::new(0.5, 0.0, 0.0)).unwrap();
        assert!(d > 0.3 && d < 0.7, "distance {d} out of range");
        let g_hat = g.normalize();
        assert!((g_hat - Vector3::new(1.0, 0.0, 0.0)).norm() < 0.05);
        assert!((g.norm() - 1.0).abs() < 0.05, "gradient norm {}", g.norm());

        // Fixed voxel center returns its stored value.
        let fixed_idx = GridIndex::new(0, 3, 3);
        let (df, _) = lookup(&esdf, &fixed_idx.center(VS)).unwrap();
        assert!((df - esdf.get(&fixed_idx).unwrap().distance).abs() < 1e-9);

        assert!(lookup(&esdf, &Vector3::new(5.0, 5.0, 5.0)).is_none());
    }

    #[test]
    fn parent_chains_terminate_at_fixed_voxels() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for metric in [EsdfMetric::QuasiEuclidean, EsdfMetric::FullEuclidean] {
            let (tsdf, _) = random_obstacle_tsdf(&mut rng, 12);
            let cfg = test_cfg(metric);
            let esdf = rebuild_esdf(&tsdf, &cfg);
            let max_steps = ((cfg.max_esdf_distance / VS) * 3.0) as usize;
            for (i, v) in esdf.iter() {
                if !v.observed || v.parent.is_none() {
                    continue;
                }
                let mut cur = i;
                let mut steps = 0;
                loop {
                    let cv = esdf.get(&cur).unwrap();
                    if cv.fixed {
                        break;
                    }
                    let p = cv.parent.expect("chain voxel must stay parented");
                    assert!(p != Vector3::zeros(), "non-fixed voxel self-parented at {cur:?}");
                    cur = cur.shifted(&p);
                    steps += 1;
                    assert!(steps <= max_steps.min(1000), "chain from {i:?} too long");
                }
            }
        }
    }

    #[test]
    fn adding_an_obstacle_only_shrinks_distances_outside_raised_set() {
        let cfg = test_cfg(EsdfMetric::QuasiEuclidean);
        let (mut tsdf, _) = {
            let mut rng = ChaCha8Rng::seed_from_u64(55);
            random_obstacle_tsdf(&mut rng, 14)
        };
        let mut esdf = rebuild_esdf(&tsdf, &cfg);
        let before: FxHashMap<GridIndex, f64> =
            esdf.iter().map(|(i, v)| (i, v.distance.abs())).collect();

        // Drop a fresh surface voxel into open free space.
        let spot = (0..14i64)
            .flat_map(|x| (0..14i64).map(move |y| GridIndex::new(x, y, 7)))
            .find(|i| tsdf.get(i).unwrap().distance > 0.1)
            .unwrap();
        let mut updated = vec![spot];
        tsdf.get_or_insert(&spot).distance = 0.0;
        for (m, _) in neighbors26(spot) {
            if let Some(t) = tsdf.get_mut(&m) {
                if t.observed() && t.distance > 0.0 {
                    t.distance = VS / 2.0;
                    updated.push(m);
                }
            }
        }
        updated.sort_unstable();

        let mut fronts = propagate_from_tsdf(&tsdf, &mut esdf, &updated, &cfg);
        let raised: FxHashSet<GridIndex> =
            process_raise(&mut esdf, &mut fronts, &cfg).into_iter().collect();
        process_lower(&mut esdf, &mut fronts, &cfg);

        for (i, v) in esdf.iter() {
            if !v.observed || raised.contains(&i) || updated.contains(&i) {
                continue;
            }
            let old = before[&i];
            assert!(
                v.distance.abs() <= old + 1e-9,
                "voxel {i:?} grew from {old} to {}",
                v.distance.abs()
            );
        }
    }

    #[test]
    fn esdf_layer_round_trips_bit_exact() {
        let (tsdf, _) = single_seed_tsdf(7);
        let esdf = rebuild_esdf(&tsdf, &test_cfg(EsdfMetric::QuasiEuclidean));
        let mut bytes = Vec::new();
        crate::voxel::io::save_layer(&mut bytes, &esdf).unwrap();
        let loaded: VoxelLayer<EsdfVoxel> =
            crate::voxel::io::load_layer(&mut std::io::Cursor::new(&bytes)).unwrap();
        let mut bytes2 = Vec::new();
        crate::voxel::io::save_layer(&mut bytes2, &loaded).unwrap();
        assert_eq!(bytes, bytes2);
        for (i, v) in esdf.iter() {
            assert_eq!(loaded.get(&i), Some(v));
        }
    }

    #[test]
    fn config_validation() {
        let cfg = EsdfConfig { fixed_band_radius: 0.05, ..EsdfConfig::default() };
        assert!(cfg.validate(0.1).is_err());
        let cfg = EsdfConfig { default_distance: 1.0, max_esdf_distance: 2.0, ..EsdfConfig::default() };
        assert!(cfg.validate(0.1).is_err());
        assert!(EsdfConfig::default().validate(0.1).is_ok());
    }
}
