//! Hand-built evaluation maps with exact analytic distance: unions of
//! axis-aligned boxes plus helpers that rasterize any signed distance
//! function into truncated or Euclidean field layers.

use nalgebra::Vector3;

use crate::esdf::EsdfVoxel;
use crate::tsdf::{TsdfConfig, TsdfVoxel};
use crate::voxel::{point_to_index, GridIndex, LayerConfig, VoxelLayer};

#[derive(Debug, Clone, Copy)]
pub struct BoxObstacle {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl BoxObstacle {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        assert!(min < max, "degenerate box");
        Self { min, max }
    }

    /// Exact signed distance, negative inside.
    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        let center = (self.min + self.max) / 2.0;
        let half = (self.max - self.min) / 2.0;
        let q = (p - center).abs() - half;
        let outside = q.sup(&Vector3::zeros()).norm();
        let inside = q.max().min(0.0);
        outside + inside
    }
}

/// A map made of box obstacles. `lo..hi` bounds the observed region;
/// everything outside it stays unknown when rasterized.
#[derive(Debug, Clone)]
pub struct BoxWorld {
    pub obstacles: Vec<BoxObstacle>,
    pub lo: Vector3<f64>,
    pub hi: Vector3<f64>,
}

impl BoxWorld {
    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        self.obstacles.iter().map(|b| b.sdf(p)).fold(f64::INFINITY, f64::min)
    }
}

/// Walls of thickness `t` boxing in the open region `lo..hi`.
fn shell(lo: Vector3<f64>, hi: Vector3<f64>, t: f64) -> Vec<BoxObstacle> {
    let pad_lo = lo - Vector3::repeat(t);
    let pad_hi = hi + Vector3::repeat(t);
    vec![
        BoxObstacle::new(pad_lo, Vector3::new(lo.x, pad_hi.y, pad_hi.z)),
        BoxObstacle::new(Vector3::new(hi.x, pad_lo.y, pad_lo.z), pad_hi),
        BoxObstacle::new(pad_lo, Vector3::new(pad_hi.x, lo.y, pad_hi.z)),
        BoxObstacle::new(Vector3::new(pad_lo.x, hi.y, pad_lo.z), pad_hi),
        BoxObstacle::new(pad_lo, Vector3::new(pad_hi.x, pad_hi.y, lo.z)),
        BoxObstacle::new(Vector3::new(pad_lo.x, pad_lo.y, hi.z), pad_hi),
    ]
}

/// A wall spanning the full y and z range of `lo..hi` at `x0..x1`, pierced
/// by one doorway `door_y.0..door_y.1` wide and open from the floor up to
/// `door_top`.
fn wall_with_door(
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    x0: f64,
    x1: f64,
    door_y: (f64, f64),
    door_top: f64,
) -> Vec<BoxObstacle> {
    vec![
        BoxObstacle::new(Vector3::new(x0, lo.y, lo.z), Vector3::new(x1, door_y.0, hi.z)),
        BoxObstacle::new(Vector3::new(x0, door_y.1, lo.z), Vector3::new(x1, hi.y, hi.z)),
        BoxObstacle::new(Vector3::new(x0, door_y.0, door_top), Vector3::new(x1, door_y.1, hi.z)),
    ]
}

/// Three rooms in a 12 x 8 x 3 m volume, chained by two offset doorways so
/// every cross-building route bends twice. Straight lines between rooms are
/// blocked; all queries remain solvable through the doors.
pub fn nonconvex_rooms() -> BoxWorld {
    let lo = Vector3::zeros();
    let hi = Vector3::new(12.0, 8.0, 3.0);
    let mut obstacles = shell(lo, hi, 0.3);
    obstacles.extend(wall_with_door(lo, hi, 4.0, 4.2, (4.5, 6.5), 2.4));
    obstacles.extend(wall_with_door(lo, hi, 8.0, 8.2, (1.5, 3.5), 2.4));
    BoxWorld { obstacles, lo, hi }
}

/// Two 6.4 m rooms split by a doored wall; sized so a 0.1 m grid runs 64
/// voxels per axis.
pub fn two_room_map() -> BoxWorld {
    let lo = Vector3::zeros();
    let hi = Vector3::new(6.4, 6.4, 6.4);
    let mut obstacles = shell(lo, hi, 0.3);
    obstacles.extend(wall_with_door(lo, hi, 3.0, 3.3, (2.6, 3.8), 3.0));
    BoxWorld { obstacles, lo, hi }
}

/// An L-shaped corridor of width 1 m: one leg along +x, then a turn onto +y.
/// The inner corner block forces any shortened path to keep a bend.
pub fn l_corridor() -> BoxWorld {
    let lo = Vector3::zeros();
    let hi = Vector3::new(3.0, 3.0, 1.0);
    let mut obstacles = shell(lo, hi, 0.3);
    obstacles.push(BoxObstacle::new(Vector3::new(0.0, 1.0, 0.0), Vector3::new(2.0, 3.0, 1.0)));
    BoxWorld { obstacles, lo, hi }
}

/// Rasterizes a signed distance function into a truncated field layer with
/// unit weight at every voxel whose center falls inside `lo..hi`.
pub fn tsdf_from_sdf<F: Fn(&Vector3<f64>) -> f64>(
    sdf: F,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    voxel_size: f64,
    cfg: &TsdfConfig,
) -> VoxelLayer<TsdfVoxel> {
    let mut layer: VoxelLayer<TsdfVoxel> =
        VoxelLayer::new(LayerConfig::new(voxel_size, 16).expect("fixture grid"));
    let trunc = cfg.truncation_distance;
    for_region_voxels(lo, hi, voxel_size, |idx, center| {
        let v = layer.get_or_insert(&idx);
        v.distance = sdf(&center).clamp(-trunc, trunc);
        v.weight = 1.0;
    });
    layer
}

/// Rasterizes a signed distance function directly into a Euclidean field
/// layer with exact (unclamped up to `max_distance`) values. Parents point
/// one step along -x purely so wavefront bookkeeping sees a valid tree;
/// use this for collision and smoothing tests, not incremental updates.
pub fn esdf_from_sdf<F: Fn(&Vector3<f64>) -> f64>(
    sdf: F,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    voxel_size: f64,
    max_distance: f64,
) -> VoxelLayer<EsdfVoxel> {
    let mut layer = VoxelLayer::new(LayerConfig::new(voxel_size, 16).expect("fixture grid"));
    for_region_voxels(lo, hi, voxel_size, |idx, center| {
        *layer.get_or_insert(&idx) = EsdfVoxel {
            distance: sdf(&center).min(max_distance),
            observed: true,
            parent: Some(Vector3::new(1, 0, 0)),
            ..Default::default()
        };
    });
    layer
}

/// Visits every voxel whose center lies in the half-open box `lo..hi`.
fn for_region_voxels<F: FnMut(GridIndex, Vector3<f64>)>(
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    voxel_size: f64,
    mut f: F,
) {
    let first = point_to_index(&lo, voxel_size);
    let last = point_to_index(&(hi - Vector3::repeat(voxel_size / 2.0)), voxel_size);
    for x in first.x..=last.x {
        for y in first.y..=last.y {
            for z in first.z..=last.z {
                let idx = GridIndex::new(x, y, z);
                let center = idx.center(voxel_size);
                f(idx, center);
            }
        }
    }
}
