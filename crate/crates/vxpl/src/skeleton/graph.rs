//! Condenses the thinned diagram into a sparse vertex/edge graph, simplifies
//! near-collinear chains, and reconnects components that the diagram alone
//! fails to join.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::Vector3;
use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use super::{SkeletonConfig, SkeletonVoxel};
use crate::esdf::EsdfVoxel;
use crate::geom::point_segment_distance;
use crate::plan::astar_voxels;
use crate::voxel::{neighbors26, GridIndex, VoxelLayer};

#[derive(Clone, Debug)]
pub struct GraphVertex {
    pub position: Vector3<f64>,
    /// Distance-field clearance at the vertex, meters.
    pub clearance: f64,
    /// Connected-component label, recomputed whenever topology changes.
    pub subgraph_id: usize,
    /// Diagram voxel the vertex was lifted from.
    pub voxel: GridIndex,
}

#[derive(Clone, Debug, Default)]
pub struct SparseGraph {
    pub vertices: Vec<GraphVertex>,
    /// Unordered vertex-id pairs, stored with the smaller id first. No
    /// self-loops, no duplicates.
    pub edges: Vec<[usize; 2]>,
}

impl SparseGraph {
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            adj[e[0]].push(e[1]);
            adj[e[1]].push(e[0]);
        }
        adj
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = [a.min(b), a.max(b)];
        self.edges.iter().any(|e| *e == key)
    }

    /// Inserts an edge unless it would be a self-loop or a duplicate.
    pub fn add_edge(&mut self, a: usize, b: usize) -> bool {
        if a == b || self.has_edge(a, b) {
            return false;
        }
        self.edges.push([a.min(b), a.max(b)]);
        true
    }

    /// Relabels `subgraph_id` by connected component. Components are
    /// numbered in order of their lowest vertex id. Returns the count.
    pub fn assign_subgraph_ids(&mut self) -> usize {
        let adj = self.adjacency();
        let mut label = vec![usize::MAX; self.vertices.len()];
        let mut next = 0;
        for start in 0..self.vertices.len() {
            if label[start] != usize::MAX {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            label[start] = next;
            while let Some(v) = queue.pop_front() {
                for &n in &adj[v] {
                    if label[n] == usize::MAX {
                        label[n] = next;
                        queue.push_back(n);
                    }
                }
            }
            next += 1;
        }
        for (v, l) in self.vertices.iter_mut().zip(&label) {
            v.subgraph_id = *l;
        }
        next
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e[0] == v || e[1] == v).count()
    }
}

/// Lifts the thinned diagram into a graph. Vertex voxels become graph
/// vertices; diagram runs between two distinct vertices become edges. Runs
/// that reach three or more vertices are split by promoting the meeting
/// voxel to a vertex of its own, and runs that never leave one vertex's
/// neighborhood are dropped.
pub fn build_sparse_graph(skeleton: &VoxelLayer<SkeletonVoxel>) -> SparseGraph {
    let voxel_size = skeleton.config().voxel_size;
    let mut diagram: Vec<GridIndex> = skeleton
        .iter_sorted()
        .filter_map(|(idx, v)| v.on_diagram.then_some(idx))
        .collect();
    diagram.sort_unstable();
    let diagram_set: FxHashSet<GridIndex> = diagram.iter().copied().collect();

    let mut vertex_voxels: Vec<GridIndex> = skeleton
        .iter_sorted()
        .filter_map(|(idx, v)| (v.on_diagram && v.is_vertex).then_some(idx))
        .collect();
    vertex_voxels.sort_unstable();

    let clearance_of = |idx: &GridIndex| skeleton.get(idx).map_or(0.0, |v| v.distance);

    let mut promotion_rounds = 0;
    let (labels, promoted) = loop {
        let labels = label_diagram(&diagram_set, &vertex_voxels);
        promotion_rounds += 1;
        if promotion_rounds > 64 {
            log::debug!("junction promotion did not settle, keeping current labels");
            break (labels, vertex_voxels.len());
        }
        let mut junctions: Vec<GridIndex> = Vec::new();
        let vertex_set: FxHashSet<GridIndex> = vertex_voxels.iter().copied().collect();
        for &idx in &diagram {
            if vertex_set.contains(&idx) {
                continue;
            }
            let Some(&own) = labels.get(&idx) else { continue };
            let mut seen = FxHashSet::default();
            seen.insert(own);
            for (n, _) in neighbors26(idx) {
                if let Some(&l) = labels.get(&n) {
                    seen.insert(l);
                }
            }
            if seen.len() >= 3 {
                junctions.push(idx);
            }
        }
        if junctions.is_empty() {
            break (labels, vertex_voxels.len());
        }
        // Every voxel around a meeting point sees three labels, so promote
        // one representative per connected cluster of candidates: the one
        // nearest the cluster's centroid.
        let promoted = cluster_representatives(&junctions);
        log::debug!(
            "promoting {} diagram junction voxels that carry no vertex mark",
            promoted.len()
        );
        vertex_voxels.extend(promoted);
        vertex_voxels.sort_unstable();
        vertex_voxels.dedup();
    };
    let promoted_count = promoted.saturating_sub(
        skeleton.iter().filter(|(_, v)| v.on_diagram && v.is_vertex).count(),
    );
    if promoted_count > 0 {
        log::debug!("sparse graph gained {promoted_count} promoted junction vertices");
    }

    let mut graph = SparseGraph::default();
    for &idx in &vertex_voxels {
        graph.vertices.push(GraphVertex {
            position: idx.center(voxel_size),
            clearance: clearance_of(&idx),
            subgraph_id: 0,
            voxel: idx,
        });
    }
    let mut dropped = 0usize;
    for &idx in &diagram {
        if !labels.contains_key(&idx) {
            dropped += 1;
            continue;
        }
        for (n, _) in neighbors26(idx) {
            if n <= idx || !diagram_set.contains(&n) {
                continue;
            }
            let (Some(&la), Some(&lb)) = (labels.get(&idx), labels.get(&n)) else { continue };
            if la != lb {
                graph.add_edge(la, lb);
            }
        }
    }
    if dropped > 0 {
        log::debug!("dropped {dropped} diagram voxels in runs that touch no vertex");
    }

    graph.assign_subgraph_ids();
    graph
}

// One voxel per 26-connected cluster, chosen by distance to the cluster
// centroid with lexicographic order breaking ties.
fn cluster_representatives(candidates: &[GridIndex]) -> Vec<GridIndex> {
    let pool: FxHashSet<GridIndex> = candidates.iter().copied().collect();
    let mut sorted: Vec<GridIndex> = candidates.to_vec();
    sorted.sort_unstable();
    let mut seen: FxHashSet<GridIndex> = FxHashSet::default();
    let mut representatives = Vec::new();
    for &start in &sorted {
        if seen.contains(&start) {
            continue;
        }
        let mut cluster = vec![start];
        seen.insert(start);
        let mut cursor = 0;
        while cursor < cluster.len() {
            let v = cluster[cursor];
            cursor += 1;
            for (n, _) in neighbors26(v) {
                if pool.contains(&n) && seen.insert(n) {
                    cluster.push(n);
                }
            }
        }
        cluster.sort_unstable();
        let inv = 1.0 / cluster.len() as f64;
        let centroid = cluster.iter().fold(Vector3::zeros(), |acc, i| {
            acc + Vector3::new(i.x as f64, i.y as f64, i.z as f64) * inv
        });
        let representative = cluster
            .iter()
            .copied()
            .min_by(|a, b| {
                let da = (Vector3::new(a.x as f64, a.y as f64, a.z as f64) - centroid)
                    .norm_squared();
                let db = (Vector3::new(b.x as f64, b.y as f64, b.z as f64) - centroid)
                    .norm_squared();
                da.total_cmp(&db).then(a.cmp(b))
            })
            .expect("cluster is nonempty");
        representatives.push(representative);
    }
    representatives
}

// Multi-source BFS from the vertex voxels across the diagram. Every reached
// voxel is labeled with the vertex id whose wave arrived first; ties resolve
// by vertex order, which keeps the result deterministic.
fn label_diagram(
    diagram_set: &FxHashSet<GridIndex>,
    vertex_voxels: &[GridIndex],
) -> FxHashMap<GridIndex, usize> {
    let mut labels: FxHashMap<GridIndex, usize> = FxHashMap::default();
    let mut queue: VecDeque<GridIndex> = VecDeque::new();
    for (id, idx) in vertex_voxels.iter().enumerate() {
        labels.insert(*idx, id);
        queue.push_back(*idx);
    }
    while let Some(v) = queue.pop_front() {
        let label = labels[&v];
        for (n, _) in neighbors26(v) {
            if diagram_set.contains(&n) && !labels.contains_key(&n) {
                labels.insert(n, label);
                queue.push_back(n);
            }
        }
    }
    labels
}

/// Collapses chains: a degree-2 vertex whose position sits within
/// `2 * voxel_size` of the segment joining its two neighbors is removed and
/// the neighbors joined directly. Runs to a fixed point; ids are compacted
/// afterwards. Returns the number of vertices removed.
pub fn simplify_graph(graph: &mut SparseGraph, voxel_size: f64) -> usize {
    let tolerance = 2.0 * voxel_size;
    let mut alive: Vec<bool> = vec![true; graph.vertices.len()];
    let mut removed = 0usize;

    loop {
        let mut changed = false;
        for b in 0..graph.vertices.len() {
            if !alive[b] {
                continue;
            }
            let incident: Vec<usize> = graph
                .edges
                .iter()
                .enumerate()
                .filter_map(|(i, e)| (e[0] == b || e[1] == b).then_some(i))
                .collect();
            if incident.len() != 2 {
                continue;
            }
            let other = |e: [usize; 2]| if e[0] == b { e[1] } else { e[0] };
            let a = other(graph.edges[incident[0]]);
            let c = other(graph.edges[incident[1]]);
            if a == c {
                continue;
            }
            let displacement = point_segment_distance(
                &graph.vertices[b].position,
                &graph.vertices[a].position,
                &graph.vertices[c].position,
            );
            if displacement > tolerance {
                continue;
            }
            // Drop the higher-index edge first so the first index stays valid.
            graph.edges.remove(incident[1]);
            graph.edges.remove(incident[0]);
            graph.add_edge(a, c);
            alive[b] = false;
            removed += 1;
            changed = true;
        }
        if !changed {
            break;
        }
    }

    if removed > 0 {
        let mut remap = vec![usize::MAX; graph.vertices.len()];
        let mut kept = Vec::with_capacity(graph.vertices.len() - removed);
        for (i, v) in graph.vertices.drain(..).enumerate() {
            if alive[i] {
                remap[i] = kept.len();
                kept.push(v);
            }
        }
        graph.vertices = kept;
        for e in &mut graph.edges {
            *e = [remap[e[0]].min(remap[e[1]]), remap[e[0]].max(remap[e[1]])];
        }
        graph.edges.sort_unstable();
        graph.assign_subgraph_ids();
    }
    removed
}

/// Tries to join disconnected graph components. For each component pair,
/// the closest two vertices are connected by a path search on the diagram
/// itself, falling back to a search through traversable field space that is
/// accepted only when it stays nearly straight. Successful connections add
/// an edge and merge labels; the process repeats until nothing merges.
/// Returns the number of edges added.
pub fn reconnect_subgraphs(
    graph: &mut SparseGraph,
    skeleton: &VoxelLayer<SkeletonVoxel>,
    esdf: &VoxelLayer<EsdfVoxel>,
    cfg: &SkeletonConfig,
) -> usize {
    let voxel_size = skeleton.config().voxel_size;
    let straightness_tolerance = 4.0 * voxel_size;
    let on_diagram =
        |i: &GridIndex| skeleton.get(i).is_some_and(|v| v.on_diagram);
    let traversable = |i: &GridIndex| {
        esdf.get(i).is_some_and(|v| {
            v.observed && !v.hallucinated && v.distance > cfg.min_gvd_distance
        })
    };

    let mut added = 0usize;
    loop {
        let component_count = graph.assign_subgraph_ids();
        if component_count <= 1 {
            break;
        }
        // Closest vertex pair for every component pair, tried nearest first.
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..graph.vertices.len() {
            for j in i + 1..graph.vertices.len() {
                if graph.vertices[i].subgraph_id == graph.vertices[j].subgraph_id {
                    continue;
                }
                let d = (graph.vertices[i].position - graph.vertices[j].position).norm();
                candidates.push((d, i, j));
            }
        }
        candidates.sort_by(|a, b| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        });
        let mut best: FxHashMap<(usize, usize), (f64, usize, usize)> = FxHashMap::default();
        for (d, i, j) in candidates {
            let si = graph.vertices[i].subgraph_id;
            let sj = graph.vertices[j].subgraph_id;
            let key = (si.min(sj), si.max(sj));
            best.entry(key).or_insert((d, i, j));
        }
        let mut attempts: Vec<(f64, usize, usize)> = best.into_values().collect();
        attempts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut merged = false;
        for (_, u, v) in attempts {
            let start = graph.vertices[u].voxel;
            let goal = graph.vertices[v].voxel;
            let via_diagram =
                astar_voxels(on_diagram, start, goal, voxel_size, 500_000).is_some();
            let accepted = via_diagram
                || astar_voxels(traversable, start, goal, voxel_size, 500_000)
                    .is_some_and(|path| {
                        let a = graph.vertices[u].position;
                        let b = graph.vertices[v].position;
                        path.iter().all(|i| {
                            point_segment_distance(&i.center(voxel_size), &a, &b)
                                <= straightness_tolerance
                        })
                    });
            if accepted {
                graph.add_edge(u, v);
                added += 1;
                merged = true;
                break;
            }
        }
        if !merged {
            break;
        }
    }
    graph.assign_subgraph_ids();
    added
}

#[derive(Debug, Error)]
pub enum GraphParseError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("edge on line {line} references unknown vertex {vertex}")]
    UnknownVertex { line: usize, vertex: usize },
}

/// Plain-text graph form: one `V id x y z clearance` line per vertex, then
/// one `E id v1 v2` line per edge. Lines starting with `#` are ignored.
pub fn write_graph_text(graph: &SparseGraph) -> String {
    let mut out = String::new();
    for (id, v) in graph.vertices.iter().enumerate() {
        writeln!(
            out,
            "V {id} {} {} {} {}",
            v.position.x, v.position.y, v.position.z, v.clearance
        )
        .expect("string write");
    }
    for (id, e) in graph.edges.iter().enumerate() {
        writeln!(out, "E {id} {} {}", e[0], e[1]).expect("string write");
    }
    out
}

/// Parses the plain-text graph form. `voxel_size` recovers each vertex's
/// voxel origin from its position, since the text form does not carry it.
pub fn read_graph_text(text: &str, voxel_size: f64) -> Result<SparseGraph, GraphParseError> {
    let mut graph = SparseGraph::default();
    let malformed = |line: usize, reason: &str| GraphParseError::Malformed {
        line,
        reason: reason.to_string(),
    };
    for (number, raw) in text.lines().enumerate() {
        let line = number + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match fields[0] {
            "V" => {
                if fields.len() != 6 {
                    return Err(malformed(line, "vertex lines take 5 fields"));
                }
                let id: usize =
                    fields[1].parse().map_err(|_| malformed(line, "bad vertex id"))?;
                if id != graph.vertices.len() {
                    return Err(malformed(line, "vertex ids must be dense and in order"));
                }
                let mut nums = [0.0f64; 4];
                for (slot, field) in nums.iter_mut().zip(&fields[2..]) {
                    *slot =
                        field.parse().map_err(|_| malformed(line, "bad number"))?;
                }
                let position = Vector3::new(nums[0], nums[1], nums[2]);
                graph.vertices.push(GraphVertex {
                    position,
                    clearance: nums[3],
                    subgraph_id: 0,
                    voxel: GridIndex::from_point(&position, voxel_size),
                });
            }
            "E" => {
                if fields.len() != 4 {
                    return Err(malformed(line, "edge lines take 3 fields"));
                }
                let a: usize =
                    fields[2].parse().map_err(|_| malformed(line, "bad vertex id"))?;
                let b: usize =
                    fields[3].parse().map_err(|_| malformed(line, "bad vertex id"))?;
                for v in [a, b] {
                    if v >= graph.vertices.len() {
                        return Err(GraphParseError::UnknownVertex { line, vertex: v });
                    }
                }
                graph.add_edge(a, b);
            }
            _ => return Err(malformed(line, "expected V or E")),
        }
    }
    graph.assign_subgraph_ids();
    Ok(graph)
}
