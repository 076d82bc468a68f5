//! Sparse topology extraction: marks the generalized Voronoi diagram of the
//! free space in a distance field, thins it to a one-voxel-wide ridge, and
//! condenses the ridge into a small vertex/edge graph for planning.

mod graph;
mod gvd;
mod thin;

pub use graph::{
    build_sparse_graph, read_graph_text, reconnect_subgraphs, simplify_graph, write_graph_text,
    GraphParseError, GraphVertex, SparseGraph,
};
pub use gvd::compute_gvd;
pub use thin::thin_diagram;

use crate::esdf::EsdfMetric;
use crate::voxel::io::VoxelCodec;

/// Basis-neighbor counts at which a voxel is considered part of a diagram
/// face, edge, or vertex. Each threshold implies the ones below it.
pub const FACE_NEIGHBOR_THRESHOLD: u8 = 9;
pub const EDGE_NEIGHBOR_THRESHOLD: u8 = 12;
pub const VERTEX_NEIGHBOR_THRESHOLD: u8 = 16;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SkeletonVoxel {
    /// Clearance copied from the distance field, meters.
    pub distance: f64,
    /// Lies on the medial structure: two of its neighbors are maintained by
    /// sources in sufficiently different directions.
    pub is_basis: bool,
    /// Count of 26-neighbors that are basis points.
    pub num_basis_neighbors: u8,
    pub is_face: bool,
    pub is_edge: bool,
    pub is_vertex: bool,
    /// Still part of the working diagram; thinning clears this, the raw
    /// classification flags above are left as computed.
    pub on_diagram: bool,
}

impl VoxelCodec for SkeletonVoxel {
    const KIND: u32 = 3;
    const PAYLOAD_BYTES: usize = 10;

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.distance.to_le_bytes());
        out.push(self.num_basis_neighbors);
        let mut flags = 0u8;
        if self.is_basis {
            flags |= 1;
        }
        if self.is_face {
            flags |= 2;
        }
        if self.is_edge {
            flags |= 4;
        }
        if self.is_vertex {
            flags |= 8;
        }
        if self.on_diagram {
            flags |= 16;
        }
        out.push(flags);
    }

    fn decode(bytes: &[u8]) -> Self {
        let flags = bytes[9];
        Self {
            distance: f64::from_le_bytes(bytes[..8].try_into().unwrap()),
            num_basis_neighbors: bytes[8],
            is_basis: flags & 1 != 0,
            is_face: flags & 2 != 0,
            is_edge: flags & 4 != 0,
            is_vertex: flags & 8 != 0,
            on_diagram: flags & 16 != 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SkeletonConfig {
    /// Minimum clearance for a voxel to take part in the diagram. Matches
    /// the radius of the vehicle the graph is meant to carry.
    pub min_gvd_distance: f64,
    /// Must match the metric the distance field was built with; it decides
    /// how discriminating the basis-point angle test can afford to be.
    pub metric: EsdfMetric,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        Self { min_gvd_distance: 0.5, metric: EsdfMetric::QuasiEuclidean }
    }
}

impl SkeletonConfig {
    /// Smallest angle, radians, between two neighbor parent directions that
    /// makes the voxel between them a basis point. Single-step quasi parents
    /// quantize direction hard, so only right-angle separation is trusted;
    /// full-offset parents resolve finer angles.
    pub fn separation_angle(&self) -> f64 {
        match self.metric {
            EsdfMetric::QuasiEuclidean => std::f64::consts::FRAC_PI_2,
            EsdfMetric::FullEuclidean => std::f64::consts::FRAC_PI_4,
        }
    }
}
