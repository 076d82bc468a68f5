//! Planning over the sparse topology graph: snap the query endpoints to
//! nearby graph vertices, search the graph, and stitch the ends together
//! with grid search through the distance field.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::Vector3;

use super::{astar_esdf, CollisionChecker, WaypointPath, DEFAULT_EXPANSION_CAP};
use crate::plan::kdtree::PointIndex;
use crate::skeleton::SparseGraph;

/// How many nearest vertices are tried on each side of the query.
const CANDIDATE_VERTICES: usize = 5;

/// Plans start → graph → goal. All candidate entry/exit vertex pairs are
/// scored by straight-leg length plus graph path length, and the best pair
/// whose legs can actually be connected through the field wins. Graph edges
/// that fail a straight-line check are bridged by grid search as well, so
/// the returned path is fully motion-valid.
pub fn plan_skeleton(
    graph: &SparseGraph,
    cc: &CollisionChecker,
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
) -> Option<WaypointPath> {
    if graph.vertices.is_empty() || !cc.is_state_valid(start) || !cc.is_state_valid(goal) {
        return None;
    }
    let index = PointIndex::build(graph.vertices.iter().map(|v| v.position).collect());
    let entries = index.k_nearest(start, CANDIDATE_VERTICES);
    let exits = index.k_nearest(goal, CANDIDATE_VERTICES);
    let adjacency = graph.adjacency();

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for &(entry, entry_leg) in &entries {
        for &(exit, exit_leg) in &exits {
            let Some(through) = graph_distance(graph, &adjacency, entry, exit) else {
                continue;
            };
            pairs.push((entry_leg + through + exit_leg, entry, exit));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    for (_, entry, exit) in pairs {
        let chain = graph_path(graph, &adjacency, entry, exit)?;
        if let Some(path) = assemble(cc, start, goal, graph, &chain) {
            return Some(path);
        }
    }
    None
}

fn graph_distance(
    graph: &SparseGraph,
    adjacency: &[Vec<usize>],
    from: usize,
    to: usize,
) -> Option<f64> {
    graph_search(graph, adjacency, from, to).map(|(d, _)| d)
}

fn graph_path(
    graph: &SparseGraph,
    adjacency: &[Vec<usize>],
    from: usize,
    to: usize,
) -> Option<Vec<usize>> {
    graph_search(graph, adjacency, from, to).map(|(_, p)| p)
}

// A* over graph vertices with Euclidean edge weights and heuristic.
fn graph_search(
    graph: &SparseGraph,
    adjacency: &[Vec<usize>],
    from: usize,
    to: usize,
) -> Option<(f64, Vec<usize>)> {
    let position = |v: usize| graph.vertices[v].position;
    let h = |v: usize| (position(v) - position(to)).norm();
    let mut dist = vec![f64::INFINITY; graph.vertices.len()];
    let mut prev = vec![usize::MAX; graph.vertices.len()];
    let mut open: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    dist[from] = 0.0;
    open.push(Reverse((h(from).to_bits(), from)));
    while let Some(Reverse((_, v))) = open.pop() {
        if v == to {
            let mut chain = vec![to];
            let mut node = to;
            while prev[node] != usize::MAX {
                node = prev[node];
                chain.push(node);
            }
            chain.reverse();
            return Some((dist[to], chain));
        }
        for &n in &adjacency[v] {
            let candidate = dist[v] + (position(n) - position(v)).norm();
            if candidate < dist[n] - 1e-12 {
                dist[n] = candidate;
                prev[n] = v;
                open.push(Reverse(((candidate + h(n)).to_bits(), n)));
            }
        }
    }
    None
}

// Start leg, vertex chain with invalid edges bridged by grid search, goal
// leg. Any unbridgeable hop abandons this candidate pair.
fn assemble(
    cc: &CollisionChecker,
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
    graph: &SparseGraph,
    chain: &[usize],
) -> Option<WaypointPath> {
    let mut points: Vec<Vector3<f64>> = Vec::new();
    let entry_position = graph.vertices[*chain.first()?].position;
    points.extend(connect(cc, start, &entry_position)?);
    for pair in chain.windows(2) {
        let a = graph.vertices[pair[0]].position;
        let b = graph.vertices[pair[1]].position;
        if cc.is_motion_valid(&a, &b) {
            points.push(b);
        } else {
            points.extend(connect(cc, &a, &b)?.into_iter().skip(1));
        }
    }
    let exit_position = graph.vertices[*chain.last()?].position;
    points.extend(connect(cc, &exit_position, goal)?.into_iter().skip(1));
    Some(WaypointPath::new(points))
}

fn connect(
    cc: &CollisionChecker,
    from: &Vector3<f64>,
    to: &Vector3<f64>,
) -> Option<Vec<Vector3<f64>>> {
    if cc.is_motion_valid(from, to) {
        return Some(vec![*from, *to]);
    }
    astar_esdf(cc, from, to, DEFAULT_EXPANSION_CAP).map(|p| p.waypoints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::testmap::*;
    use crate::skeleton::GraphVertex;
    use crate::voxel::GridIndex;

    fn vertex(x: f64, y: f64, z: f64) -> GraphVertex {
        GraphVertex {
            position: Vector3::new(x, y, z),
            clearance: 1.0,
            subgraph_id: 0,
            voxel: GridIndex::from_point(&Vector3::new(x, y, z), 0.1),
        }
    }

    #[test]
    fn start_and_goal_near_one_vertex() {
        let esdf = esdf_free_box(20, 0.1);
        let cc = CollisionChecker::EsdfPoint { esdf: &esdf, robot_radius: 0.1 };
        let mut graph = SparseGraph::default();
        graph.vertices.push(vertex(1.0, 1.0, 1.0));
        let start = Vector3::new(0.8, 1.0, 1.0);
        let goal = Vector3::new(1.2, 1.0, 1.0);
        let path = plan_skeleton(&graph, &cc, &start, &goal).unwrap();
        assert_eq!(path.waypoints.first().unwrap(), &start);
        assert_eq!(path.waypoints.last().unwrap(), &goal);
        assert!(path
            .waypoints
            .iter()
            .any(|p| (p - Vector3::new(1.0, 1.0, 1.0)).norm() < 1e-9));
    }

    #[test]
    fn routes_through_the_doorway_vertex() {
        // Two rooms split by a wall at x = 1.0 with a hole; the graph knows
        // a vertex in each room plus one in the doorway.
        let hole = GridIndex::new(10, 4, 4);
        let esdf = esdf_wall_with_hole(20, 0.1, 10, Some(hole));
        let cc = CollisionChecker::EsdfPoint { esdf: &esdf, robot_radius: 0.1 };
        let mut graph = SparseGraph::default();
        graph.vertices.push(vertex(0.5, 0.45, 0.45)); // room A
        graph.vertices.push(vertex(1.05, 0.45, 0.45)); // doorway
        graph.vertices.push(vertex(1.6, 0.45, 0.45)); // room B
        graph.add_edge(0, 1);
        graph.add_edge(1, 2);
        let start = Vector3::new(0.2, 0.8, 0.8);
        let goal = Vector3::new(1.8, 0.8, 0.8);
        let path = plan_skeleton(&graph, &cc, &start, &goal).unwrap();
        let doorway = Vector3::new(1.05, 0.45, 0.45);
        assert!(path.waypoints.iter().any(|p| (p - doorway).norm() < 1e-9));
        assert!(path.waypoints.windows(2).all(|w| cc.is_motion_valid(&w[0], &w[1])));
    }

    #[test]
    fn disconnected_pocket_fails() {
        let esdf = esdf_wall_with_hole(20, 0.1, 10, None);
        let cc = CollisionChecker::EsdfPoint { esdf: &esdf, robot_radius: 0.1 };
        let mut graph = SparseGraph::default();
        graph.vertices.push(vertex(0.5, 0.45, 0.45));
        graph.vertices.push(vertex(1.6, 0.45, 0.45));
        // The graph claims a link, but the field cannot realize it.
        graph.add_edge(0, 1);
        let start = Vector3::new(0.2, 0.8, 0.8);
        let goal = Vector3::new(1.8, 0.8, 0.8);
        assert!(plan_skeleton(&graph, &cc, &start, &goal).is_none());
    }

    #[test]
    fn empty_graph_fails() {
        let esdf = esdf_free_box(8, 0.1);
        let cc = CollisionChecker::EsdfPoint { esdf: &esdf, robot_radius: 0.1 };
        let graph = SparseGraph::default();
        assert!(plan_skeleton(
            &graph,
            &cc,
            &Vector3::new(0.4, 0.4, 0.4),
            &Vector3::new(0.5, 0.5, 0.5)
        )
        .is_none());
    }
}
