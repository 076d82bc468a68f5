//! Projective truncated signed distance fusion.
//!
//! Scans are fused one at a time. Points are first grouped by the voxel
//! containing their world-frame endpoint; each group is reduced to its
//! weighted centroid and summed weight, and one exact voxel walk per group
//! applies the weighted-average merge. Grouping keeps the result insensitive
//! to point order within a scan (up to float reassociation) and cuts the ray
//! walks by roughly the point-per-voxel multiplicity.

use nalgebra::{Isometry3, Point3, Vector3};
use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::voxel::io::VoxelCodec;
use crate::voxel::{voxel_ray, GridIndex, ScalarVoxel, VoxelLayer};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TsdfVoxel {
    /// Projective signed distance, meters. Positive in front of the surface.
    pub distance: f64,
    /// Accumulated observation weight; zero means unobserved.
    pub weight: f64,
}

impl TsdfVoxel {
    pub fn observed(&self) -> bool {
        self.weight > 0.0
    }
}

impl ScalarVoxel for TsdfVoxel {
    fn scalar(&self) -> Option<f64> {
        self.observed().then_some(self.distance)
    }
}

impl VoxelCodec for TsdfVoxel {
    const KIND: u32 = 1;
    const PAYLOAD_BYTES: usize = 16;

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.distance.to_le_bytes());
        out.extend_from_slice(&self.weight.to_le_bytes());
    }

    fn decode(bytes: &[u8]) -> Self {
        Self {
            distance: f64::from_le_bytes(bytes[..8].try_into().unwrap()),
            weight: f64::from_le_bytes(bytes[8..16].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightMode {
    /// 1.0 per point.
    Constant,
    /// 1 / depth^2 per point, the usual stereo noise model.
    InverseSquareDepth,
}

#[derive(Clone, Copy, Debug)]
pub struct TsdfConfig {
    pub truncation_distance: f64,
    pub max_ray_length: f64,
    pub max_weight: f64,
    pub weight_mode: WeightMode,
}

impl Default for TsdfConfig {
    fn default() -> Self {
        Self {
            truncation_distance: 0.2,
            max_ray_length: 8.0,
            max_weight: 10_000.0,
            weight_mode: WeightMode::Constant,
        }
    }
}

#[derive(Debug, Error)]
pub enum TsdfConfigError {
    #[error("truncation_distance {trunc} must be >= voxel_size {voxel_size}")]
    TruncationTooSmall { trunc: f64, voxel_size: f64 },
    #[error("max_ray_length {max_ray} must exceed truncation_distance {trunc}")]
    RayShorterThanTruncation { max_ray: f64, trunc: f64 },
}

impl TsdfConfig {
    pub fn validate(&self, voxel_size: f64) -> Result<(), TsdfConfigError> {
        if self.truncation_distance < voxel_size {
            return Err(TsdfConfigError::TruncationTooSmall {
                trunc: self.truncation_distance,
                voxel_size,
            });
        }
        if self.max_ray_length <= self.truncation_distance {
            return Err(TsdfConfigError::RayShorterThanTruncation {
                max_ray: self.max_ray_length,
                trunc: self.truncation_distance,
            });
        }
        Ok(())
    }
}

/// One depth scan: sensor pose in the world frame plus points in the sensor
/// frame.
#[derive(Clone, Debug)]
pub struct SensorScan {
    pub pose: Isometry3<f64>,
    pub points: Vec<Vector3<f64>>,
}

#[derive(Clone, Debug, Default)]
pub struct IntegrationOutcome {
    /// Every voxel index written by this scan, ascending, deduplicated.
    pub updated: Vec<GridIndex>,
    pub surface_points: usize,
    pub clearing_points: usize,
    pub skipped_points: usize,
}

#[derive(Clone, Copy, Default)]
struct Bundle {
    weighted_point: Vector3<f64>,
    weight: f64,
}

fn merge(v: &mut TsdfVoxel, d_new: f64, w_new: f64, cfg: &TsdfConfig) {
    let w_sum = v.weight + w_new;
    let d = (v.weight * v.distance + w_new * d_new) / w_sum;
    v.distance = d.clamp(-cfg.truncation_distance, cfg.truncation_distance);
    v.weight = w_sum.min(cfg.max_weight);
}

/// Fuse one scan into the layer. Returns the touched voxel set plus point
/// tallies. Non-finite and zero-depth points are skipped and counted.
pub fn integrate_scan(
    layer: &mut VoxelLayer<TsdfVoxel>,
    scan: &SensorScan,
    cfg: &TsdfConfig,
) -> IntegrationOutcome {
    cfg.validate(layer.voxel_size()).expect("tsdf config incompatible with layer");
    let vs = layer.voxel_size();
    let origin: Vector3<f64> = scan.pose.translation.vector;

    let mut out = IntegrationOutcome::default();
    let mut surface: FxHashMap<GridIndex, Bundle> = FxHashMap::default();
    let mut clearing: FxHashMap<GridIndex, Bundle> = FxHashMap::default();

    for p_sensor in &scan.points {
        if !(p_sensor.x.is_finite() && p_sensor.y.is_finite() && p_sensor.z.is_finite()) {
            out.skipped_points += 1;
            continue;
        }
        let depth = p_sensor.norm();
        if depth < 1e-9 {
            out.skipped_points += 1;
            continue;
        }
        let weight = match cfg.weight_mode {
            WeightMode::Constant => 1.0,
            WeightMode::InverseSquareDepth => 1.0 / (depth * depth),
        };
        let p_world = scan.pose.transform_point(&Point3::from(*p_sensor)).coords;
        if depth > cfg.max_ray_length {
            // Too far to trust the surface: clear free space up to the ray
            // limit and record nothing behind it.
            let dir = (p_world - origin) / depth;
            let end = origin + dir * cfg.max_ray_length;
            let b = clearing.entry(GridIndex::from_point(&end, vs)).or_default();
            b.weighted_point += end * weight;
            b.weight += weight;
            out.clearing_points += 1;
        } else {
            let b = surface.entry(GridIndex::from_point(&p_world, vs)).or_default();
            b.weighted_point += p_world * weight;
            b.weight += weight;
            out.surface_points += 1;
        }
    }

    let mut updated: FxHashSet<GridIndex> = FxHashSet::default();
    let sorted = |m: FxHashMap<GridIndex, Bundle>| {
        let mut v: Vec<(GridIndex, Bundle)> = m.into_iter().collect();
        v.sort_unstable_by_key(|(i, _)| *i);
        v
    };

    for (_, bundle) in sorted(surface) {
        let p = bundle.weighted_point / bundle.weight;
        let to_p = p - origin;
        let range = to_p.norm();
        if range < 1e-9 {
            continue;
        }
        let dir = to_p / range;
        let end = p + dir * cfg.truncation_distance;
        for idx in voxel_ray(&origin, &end, vs) {
            let d = (p - idx.center(vs)).dot(&dir);
            let d = d.clamp(-cfg.truncation_distance, cfg.truncation_distance);
            merge(layer.get_or_insert(&idx), d, bundle.weight, cfg);
            updated.insert(idx);
        }
    }

    for (_, bundle) in sorted(clearing) {
        let end = bundle.weighted_point / bundle.weight;
        for idx in voxel_ray(&origin, &end, vs) {
            merge(layer.get_or_insert(&idx), cfg.truncation_distance, bundle.weight, cfg);
            updated.insert(idx);
        }
    }

    out.updated = updated.into_iter().collect();
    out.updated.sort_unstable();
    out
}

pub mod scan_io {
    //! Scan file format, little-endian: per record a world-frame pose as
    //! translation (3 x f64) and rotation quaternion in x, y, z, w order
    //! (4 x f64), then point count (u64) and sensor-frame points (3 x f32).

    use std::io::{self, Read, Write};

    use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
    use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};

    use super::SensorScan;

    pub fn save_scans<W: Write>(w: &mut W, scans: &[SensorScan]) -> io::Result<()> {
        for scan in scans {
            let t = scan.pose.translation.vector;
            w.write_f64::<LittleEndian>(t.x)?;
            w.write_f64::<LittleEndian>(t.y)?;
            w.write_f64::<LittleEndian>(t.z)?;
            let q = scan.pose.rotation.quaternion().coords;
            for c in q.iter() {
                w.write_f64::<LittleEndian>(*c)?;
            }
            w.write_u64::<LittleEndian>(scan.points.len() as u64)?;
            for p in &scan.points {
                w.write_f32::<LittleEndian>(p.x as f32)?;
                w.write_f32::<LittleEndian>(p.y as f32)?;
                w.write_f32::<LittleEndian>(p.z as f32)?;
            }
        }
        Ok(())
    }

    pub fn load_scans<R: Read>(r: &mut R) -> io::Result<Vec<SensorScan>> {
        let mut scans = Vec::new();
        loop {
            let tx = match r.read_f64::<LittleEndian>() {
                Ok(v) => v,
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e),
            };
            let ty = r.read_f64::<LittleEndian>()?;
            let tz = r.read_f64::<LittleEndian>()?;
            let qx = r.read_f64::<LittleEndian>()?;
            let qy = r.read_f64::<LittleEndian>()?;
            let qz = r.read_f64::<LittleEndian>()?;
            let qw = r.read_f64::<LittleEndian>()?;
            let count = r.read_u64::<LittleEndian>()?;
            let mut points = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let x = r.read_f32::<LittleEndian>()? as f64;
                let y = r.read_f32::<LittleEndian>()? as f64;
                let z = r.read_f32::<LittleEndian>()? as f64;
                points.push(Vector3::new(x, y, z));
            }
            scans.push(SensorScan {
                pose: Isometry3::from_parts(
                    Translation3::new(tx, ty, tz),
                    UnitQuaternion::from_quaternion(Quaternion::new(qw, qx, qy, qz)),
                ),
                points,
            });
        }
        Ok(scans)
    }
}
