//! Block-hashed voxel storage and the index math shared by every layer type.

use nalgebra::Vector3;
use rustc_hash::FxHashMap;
use thiserror::Error;

mod interp;
mod neighbors;
mod raycast;
pub mod io;

pub use interp::{interpolate_trilinear, ScalarVoxel};
pub use neighbors::{neighbors26, NeighborOffset, NEIGHBORS_26};
pub use raycast::{voxel_ray, RayWalk};

/// Global voxel coordinate. Voxel `i` owns the half-open cube
/// `[i*vs, (i+1)*vs)` per axis, so ownership at boundaries is unambiguous.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct GridIndex {
    pub x: i64,
    pub y: i64,
    pub z: i64,
}

impl GridIndex {
    pub fn new(x: i64, y: i64, z: i64) -> Self {
        Self { x, y, z }
    }

    /// Voxel containing `p`: floor(p / voxel_size) per component.
    pub fn from_point(p: &Vector3<f64>, voxel_size: f64) -> Self {
        Self {
            x: (p.x / voxel_size).floor() as i64,
            y: (p.y / voxel_size).floor() as i64,
            z: (p.z / voxel_size).floor() as i64,
        }
    }

    /// Center of this voxel: (i + 0.5) * voxel_size.
    pub fn center(&self, voxel_size: f64) -> Vector3<f64> {
        Vector3::new(
            (self.x as f64 + 0.5) * voxel_size,
            (self.y as f64 + 0.5) * voxel_size,
            (self.z as f64 + 0.5) * voxel_size,
        )
    }

    pub fn offset(&self, dx: i64, dy: i64, dz: i64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.z + dz)
    }

    /// Index reached by following an integer offset vector (parent pointers).
    pub fn shifted(&self, v: &Vector3<i32>) -> Self {
        self.offset(v.x as i64, v.y as i64, v.z as i64)
    }

    /// Integer offset from `other` to `self`.
    pub fn offset_from(&self, other: &GridIndex) -> Vector3<i32> {
        Vector3::new(
            (self.x - other.x) as i32,
            (self.y - other.y) as i32,
            (self.z - other.z) as i32,
        )
    }
}

/// Convenience for call sites holding a point rather than an index.
pub fn point_to_index(p: &Vector3<f64>, voxel_size: f64) -> GridIndex {
    GridIndex::from_point(p, voxel_size)
}

pub fn index_to_center(i: &GridIndex, voxel_size: f64) -> Vector3<f64> {
    i.center(voxel_size)
}

#[derive(Debug, Error)]
pub enum LayerConfigError {
    #[error("voxel_size must be positive, got {0}")]
    BadVoxelSize(f64),
    #[error("voxels_per_side must be a power of two >= 1, got {0}")]
    BadVoxelsPerSide(u32),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerConfig {
    pub voxel_size: f64,
    pub voxels_per_side: u32,
}

impl LayerConfig {
    pub fn new(voxel_size: f64, voxels_per_side: u32) -> Result<Self, LayerConfigError> {
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(LayerConfigError::BadVoxelSize(voxel_size));
        }
        if voxels_per_side == 0 || !voxels_per_side.is_power_of_two() {
            return Err(LayerConfigError::BadVoxelsPerSide(voxels_per_side));
        }
        Ok(Self { voxel_size, voxels_per_side })
    }

    pub fn voxels_per_block(&self) -> usize {
        let v = self.voxels_per_side as usize;
        v * v * v
    }
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self { voxel_size: 0.1, voxels_per_side: 16 }
    }
}

/// Sparse voxel grid: a hash map from block index to a dense cube of `V`.
/// A voxel exists iff its block is allocated; reads elsewhere return `None`,
/// which all layer kinds treat as "unobserved".
#[derive(Clone, Debug)]
pub struct VoxelLayer<V> {
    config: LayerConfig,
    blocks: FxHashMap<GridIndex, Box<[V]>>,
}

impl<V: Clone + Default> VoxelLayer<V> {
    pub fn new(config: LayerConfig) -> Self {
        Self { config, blocks: FxHashMap::default() }
    }

    pub fn config(&self) -> &LayerConfig {
        &self.config
    }

    pub fn voxel_size(&self) -> f64 {
        self.config.voxel_size
    }

    pub fn voxels_per_side(&self) -> u32 {
        self.config.voxels_per_side
    }

    /// Block index + linear in-block offset for a global voxel index.
    /// Floor division keeps the mapping consistent for negative indices.
    fn split_index(&self, i: &GridIndex) -> (GridIndex, usize) {
        let vps = self.config.voxels_per_side as i64;
        let block = GridIndex::new(
            i.x.div_euclid(vps),
            i.y.div_euclid(vps),
            i.z.div_euclid(vps),
        );
        let (lx, ly, lz) = (
            i.x.rem_euclid(vps) as usize,
            i.y.rem_euclid(vps) as usize,
            i.z.rem_euclid(vps) as usize,
        );
        let vps = vps as usize;
        (block, (lz * vps + ly) * vps + lx)
    }

    fn unsplit_index(&self, block: &GridIndex, linear: usize) -> GridIndex {
        let vps = self.config.voxels_per_side as usize;
        let lx = (linear % vps) as i64;
        let ly = ((linear / vps) % vps) as i64;
        let lz = (linear / (vps * vps)) as i64;
        let vps = vps as i64;
        GridIndex::new(block.x * vps + lx, block.y * vps + ly, block.z * vps + lz)
    }

    pub fn get(&self, i: &GridIndex) -> Option<&V> {
        let (block, linear) = self.split_index(i);
        self.blocks.get(&block).map(|b| &b[linear])
    }

    pub fn get_mut(&mut self, i: &GridIndex) -> Option<&mut V> {
        let (block, linear) = self.split_index(i);
        self.blocks.get_mut(&block).map(|b| &mut b[linear])
    }

    /// Read-modify access that allocates the containing block on demand.
    pub fn get_or_insert(&mut self, i: &GridIndex) -> &mut V {
        let (block, linear) = self.split_index(i);
        let n = self.config.voxels_per_block();
        let b = self
            .blocks
            .entry(block)
            .or_insert_with(|| vec![V::default(); n].into_boxed_slice());
        &mut b[linear]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_indices_sorted(&self) -> Vec<GridIndex> {
        let mut keys: Vec<GridIndex> = self.blocks.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn block(&self, block: &GridIndex) -> Option<&[V]> {
        self.blocks.get(block).map(|b| b.as_ref())
    }

    pub(crate) fn insert_block_raw(&mut self, block: GridIndex, voxels: Box<[V]>) {
        debug_assert_eq!(voxels.len(), self.config.voxels_per_block());
        self.blocks.insert(block, voxels);
    }

    /// Iterate every allocated voxel in unspecified order.
    pub fn iter(&self) -> impl Iterator<Item = (GridIndex, &V)> {
        self.blocks.iter().flat_map(move |(block, voxels)| {
            voxels
                .iter()
                .enumerate()
                .map(move |(linear, v)| (self.unsplit_index(block, linear), v))
        })
    }

    /// Iterate every allocated voxel in ascending block/linear order.
    /// Pipelines that must be deterministic iterate through this.
    pub fn iter_sorted(&self) -> impl Iterator<Item = (GridIndex, &V)> {
        self.block_indices_sorted().into_iter().flat_map(move |block| {
            let voxels = &self.blocks[&block];
            voxels
                .iter()
                .enumerate()
                .map(move |(linear, v)| (self.unsplit_index(&block, linear), v))
        })
    }

    /// World-space bounds of all allocated blocks, if any.
    pub fn aabb(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let mut keys = self.blocks.keys();
        let first = *keys.next()?;
        let (mut lo, mut hi) = (first, first);
        for k in keys {
            lo.x = lo.x.min(k.x);
            lo.y = lo.y.min(k.y);
            lo.z = lo.z.min(k.z);
            hi.x = hi.x.max(k.x);
            hi.y = hi.y.max(k.y);
            hi.z = hi.z.max(k.z);
        }
        let side = self.config.voxels_per_side as f64 * self.config.voxel_size;
        let lo = Vector3::new(lo.x as f64, lo.y as f64, lo.z as f64) * side;
        let hi = Vector3::new((hi.x + 1) as f64, (hi.y + 1) as f64, (hi.z + 1) as f64) * side;
        Some((lo, hi))
    }
}
