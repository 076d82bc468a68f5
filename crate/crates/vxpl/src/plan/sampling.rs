//! Sampling-based planners. All of them draw from a seeded generator and
//! bound their work by iteration count first, wall clock second, so a fixed
//! seed and iteration budget reproduces the exact same path.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kdtree::PointIndex;
use super::{CollisionChecker, PlanBudget, WaypointPath};

/// Steer length in voxels for tree extension and goal connection.
const STEER_VOXELS: f64 = 10.0;
/// Rewire-radius scale for the shrinking-ball schedule.
const REWIRE_GAMMA: f64 = 3.0;
/// Chance of sampling the goal instead of the volume.
const GOAL_BIAS: f64 = 0.05;
/// Default roadmap degree: each node tries to link to this many neighbors.
pub const PRM_CONNECTIONS_PER_NODE: usize = 10;

struct TreeNode {
    position: Vector3<f64>,
    parent: Option<usize>,
}

struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    fn rooted_at(position: Vector3<f64>) -> Self {
        Self { nodes: vec![TreeNode { position, parent: None }] }
    }

    fn nearest(&self, p: &Vector3<f64>) -> usize {
        self.nodes
            .iter()
            .enumerate()
            .min_by(|(ia, a), (ib, b)| {
                let da = (a.position - p).norm_squared();
                let db = (b.position - p).norm_squared();
                da.total_cmp(&db).then(ia.cmp(ib))
            })
            .expect("tree is never empty")
            .0
    }

    /// One bounded step from the nearest node toward `target`; lands exactly
    /// on `target` when it is within reach so joins compare equal.
    fn extend(
        &mut self,
        cc: &CollisionChecker,
        target: &Vector3<f64>,
        steer: f64,
    ) -> Option<usize> {
        let from = self.nearest(target);
        let base = self.nodes[from].position;
        let offset = target - base;
        let distance = offset.norm();
        if distance < 1e-12 {
            return None;
        }
        let new_position =
            if distance <= steer { *target } else { base + offset * (steer / distance) };
        if !cc.is_motion_valid(&base, &new_position) {
            return None;
        }
        self.nodes.push(TreeNode { position: new_position, parent: Some(from) });
        Some(self.nodes.len() - 1)
    }

    /// Repeated extension toward `target` until it is reached or blocked.
    fn connect(&mut self, cc: &CollisionChecker, target: &Vector3<f64>, steer: f64) -> Option<usize> {
        loop {
            let new = self.extend(cc, target, steer)?;
            if (self.nodes[new].position - target).norm() < 1e-12 {
                return Some(new);
            }
        }
    }

    /// Root-to-node position chain.
    fn branch(&self, mut node: usize) -> Vec<Vector3<f64>> {
        let mut chain = vec![self.nodes[node].position];
        while let Some(parent) = self.nodes[node].parent {
            chain.push(self.nodes[parent].position);
            node = parent;
        }
        chain.reverse();
        chain
    }
}

/// Volume the samplers draw from: the allocated map box, stretched to cover
/// the query endpoints, padded by one steer length.
fn sampling_box(
    cc: &CollisionChecker,
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
    pad: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let bounds = match cc {
        CollisionChecker::EsdfPoint { esdf, .. } => esdf.aabb(),
        CollisionChecker::TsdfSphere { tsdf, .. } => tsdf.aabb(),
    };
    let (mut lo, mut hi) = bounds.unwrap_or((*start, *goal));
    lo = lo.inf(start).inf(goal) - Vector3::repeat(pad);
    hi = hi.sup(start).sup(goal) + Vector3::repeat(pad);
    (lo, hi)
}

fn sample_in(rng: &mut ChaCha8Rng, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(lo.x..=hi.x),
        rng.random_range(lo.y..=hi.y),
        rng.random_range(lo.z..=hi.z),
    )
}

/// Bidirectional first-found search: grows a tree from each endpoint and
/// returns as soon as they meet. A direct segment check runs first, so
/// trivially solvable queries come back as two waypoints.
pub fn plan_rrt_connect(
    cc: &CollisionChecker,
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
    budget: &PlanBudget,
    seed: u64,
) -> Option<WaypointPath> {
    if !cc.is_state_valid(start) || !cc.is_state_valid(goal) {
        return None;
    }
    if cc.is_motion_valid(start, goal) {
        return Some(WaypointPath::new(vec![*start, *goal]));
    }
    let steer = STEER_VOXELS * cc.voxel_size();
    let (lo, hi) = sampling_box(cc, start, goal, steer);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start_tree = Tree::rooted_at(*start);
    let mut goal_tree = Tree::rooted_at(*goal);
    let mut extend_start_tree = true;
    let mut clock = budget.start();

    for _ in 0..budget.max_iterations {
        if clock.expired() {
            break;
        }
        let sample = sample_in(&mut rng, &lo, &hi);
        let (grower, chaser) = if extend_start_tree {
            (&mut start_tree, &mut goal_tree)
        } else {
            (&mut goal_tree, &mut start_tree)
        };
        if let Some(new) = grower.extend(cc, &sample, steer) {
            let meet = grower.nodes[new].position;
            if let Some(reached) = chaser.connect(cc, &meet, steer) {
                let (start_branch, goal_branch) = if extend_start_tree {
                    (start_tree.branch(new), goal_tree.branch(reached))
                } else {
                    (start_tree.branch(reached), goal_tree.branch(new))
                };
                let mut points = start_branch;
                points.extend(goal_branch.into_iter().rev());
                return Some(WaypointPath::new(points));
            }
        }
        extend_start_tree = !extend_start_tree;
    }
    None
}

/// Asymptotically optimizing variant: keeps sampling, picks the cheapest
/// valid parent in a shrinking neighborhood, rewires that neighborhood
/// through the new node, and reports the best goal connection found by the
/// time the budget runs out.
pub fn plan_rrt_star(
    cc: &CollisionChecker,
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
    budget: &PlanBudget,
    seed: u64,
) -> Option<WaypointPath> {
    if !cc.is_state_valid(start) || !cc.is_state_valid(goal) {
        return None;
    }
    let steer = STEER_VOXELS * cc.voxel_size();
    let (lo, hi) = sampling_box(cc, start, goal, steer);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut positions: Vec<Vector3<f64>> = vec![*start];
    let mut parents: Vec<Option<usize>> = vec![None];
    let mut costs: Vec<f64> = vec![0.0];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    // Nodes with a validated straight connection to the goal and its length.
    let mut goal_links: Vec<(usize, f64)> = Vec::new();
    let mut clock = budget.start();

    for _ in 0..budget.max_iterations {
        if clock.expired() {
            break;
        }
        let sample = if rng.random::<f64>() < GOAL_BIAS {
            *goal
        } else {
            sample_in(&mut rng, &lo, &hi)
        };
        let nearest = positions
            .iter()
            .enumerate()
            .min_by(|(ia, a), (ib, b)| {
                let da = (*a - sample).norm_squared();
                let db = (*b - sample).norm_squared();
                da.total_cmp(&db).then(ia.cmp(ib))
            })
            .expect("tree nonempty")
            .0;
        let base = positions[nearest];
        let offset = sample - base;
        let distance = offset.norm();
        if distance < 1e-12 {
            continue;
        }
        let new_position =
            if distance <= steer { sample } else { base + offset * (steer / distance) };
        if !cc.is_state_valid(&new_position) {
            continue;
        }

        let n = positions.len() as f64;
        let radius = (REWIRE_GAMMA * (n.ln().max(0.0) / n).cbrt()).min(steer);
        let mut neighbors: Vec<usize> = positions
            .iter()
            .enumerate()
            .filter_map(|(i, p)| ((p - new_position).norm() <= radius).then_some(i))
            .collect();
        if !neighbors.contains(&nearest) {
            neighbors.push(nearest);
        }

        let mut best: Option<(usize, f64)> = None;
        for &candidate in &neighbors {
            let edge = (positions[candidate] - new_position).norm();
            let through = costs[candidate] + edge;
            if best.is_some_and(|(_, c)| through >= c) {
                continue;
            }
            if cc.is_motion_valid(&positions[candidate], &new_position) {
                best = Some((candidate, through));
            }
        }
        let Some((parent, cost)) = best else { continue };
        let new_index = positions.len();
        positions.push(new_position);
        parents.push(Some(parent));
        costs.push(cost);
        children.push(Vec::new());
        children[parent].push(new_index);

        // Rewire the neighborhood through the new node where it is cheaper.
        for &neighbor in &neighbors {
            let edge = (positions[neighbor] - new_position).norm();
            let through = cost + edge;
            if through + 1e-12 >= costs[neighbor] {
                continue;
            }
            if !cc.is_motion_valid(&new_position, &positions[neighbor]) {
                continue;
            }
            if let Some(old) = parents[neighbor] {
                children[old].retain(|&c| c != neighbor);
            }
            parents[neighbor] = Some(new_index);
            children[new_index].push(neighbor);
            let delta = through - costs[neighbor];
            let mut stack = vec![neighbor];
            while let Some(v) = stack.pop() {
                costs[v] += delta;
                stack.extend(children[v].iter().copied());
            }
        }

        if (new_position - goal).norm() <= steer && cc.is_motion_valid(&new_position, goal) {
            goal_links.push((new_index, (new_position - goal).norm()));
        }
    }

    let (best_node, _) = goal_links
        .iter()
        .map(|&(node, exit)| (node, costs[node] + exit))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?;
    let mut points = Vec::new();
    let mut node = best_node;
    points.push(positions[node]);
    while let Some(parent) = parents[node] {
        points.push(positions[parent]);
        node = parent;
    }
    points.reverse();
    points.push(*goal);
    Some(WaypointPath::new(points))
}

/// Reusable roadmap: valid samples joined to their nearest neighbors by
/// validated straight edges. Built once per map snapshot; queries only read.
pub struct Roadmap {
    pub nodes: Vec<Vector3<f64>>,
    /// Per-node list of (neighbor id, edge length).
    pub adjacency: Vec<Vec<(usize, f64)>>,
    index: PointIndex,
    connections_per_node: usize,
}

impl Roadmap {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Samples the volume for the budget and wires up the roadmap. The
/// iteration budget counts sample attempts; when a wall clock is set,
/// sampling stops at half of it so connection work fits in the rest.
pub fn build_roadmap(
    cc: &CollisionChecker,
    volume_lo: &Vector3<f64>,
    volume_hi: &Vector3<f64>,
    budget: &PlanBudget,
    seed: u64,
) -> Roadmap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<Vector3<f64>> = Vec::new();
    let sample_budget = PlanBudget {
        max_iterations: budget.max_iterations,
        wall_clock: budget.wall_clock.map(|d| d / 2),
    };
    let mut clock = sample_budget.start();
    for _ in 0..sample_budget.max_iterations {
        if clock.expired() {
            break;
        }
        let p = sample_in(&mut rng, volume_lo, volume_hi);
        if cc.is_state_valid(&p) {
            nodes.push(p);
        }
    }

    let index = PointIndex::build(nodes.clone());
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes.len()];
    let mut full_clock = budget.start();
    'outer: for i in 0..nodes.len() {
        if full_clock.expired() {
            break 'outer;
        }
        for (j, d) in index.k_nearest(&nodes[i], PRM_CONNECTIONS_PER_NODE + 1) {
            if j <= i {
                continue;
            }
            if cc.is_motion_valid(&nodes[i], &nodes[j]) {
                adjacency[i].push((j, d));
                adjacency[j].push((i, d));
            }
        }
    }
    Roadmap { nodes, adjacency, index, connections_per_node: PRM_CONNECTIONS_PER_NODE }
}

/// Query against a prebuilt roadmap: link the endpoints to their nearest
/// roadmap nodes with validated segments, then search the roadmap.
pub fn plan_prm(
    cc: &CollisionChecker,
    roadmap: &Roadmap,
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
    budget: &PlanBudget,
) -> Option<WaypointPath> {
    if roadmap.nodes.is_empty() || !cc.is_state_valid(start) || !cc.is_state_valid(goal) {
        return None;
    }
    let clock = budget.start();
    let link = |p: &Vector3<f64>| -> Vec<(usize, f64)> {
        roadmap
            .index
            .k_nearest(p, roadmap.connections_per_node)
            .into_iter()
            .filter(|&(node, _)| cc.is_motion_valid(p, &roadmap.nodes[node]))
            .collect()
    };
    let entries = link(start);
    let exits = link(goal);
    if entries.is_empty() || exits.is_empty() {
        return None;
    }
    let exit_cost: rustc_hash::FxHashMap<usize, f64> = exits.iter().copied().collect();

    // Dijkstra from the virtual start over the roadmap, settled against the
    // best entry+path+exit total seen so far.
    let mut dist = vec![f64::INFINITY; roadmap.nodes.len()];
    let mut prev = vec![usize::MAX; roadmap.nodes.len()];
    let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<(u64, usize)>> =
        std::collections::BinaryHeap::new();
    for &(node, d) in &entries {
        if d < dist[node] {
            dist[node] = d;
            heap.push(std::cmp::Reverse((d.to_bits(), node)));
        }
    }
    let mut best: Option<(f64, usize)> = None;
    let mut pops = 0usize;
    while let Some(std::cmp::Reverse((bits, node))) = heap.pop() {
        if clock.expired_now() {
            return None;
        }
        pops += 1;
        if pops > budget.max_iterations {
            return None;
        }
        let d = f64::from_bits(bits);
        if d > dist[node] {
            continue;
        }
        if best.is_some_and(|(total, _)| d >= total) {
            break;
        }
        if let Some(&exit) = exit_cost.get(&node) {
            let total = d + exit;
            if best.is_none_or(|(t, _)| total < t) {
                best = Some((total, node));
            }
        }
        for &(next, w) in &roadmap.adjacency[node] {
            let candidate = d + w;
            if candidate < dist[next] {
                dist[next] = candidate;
                prev[next] = node;
                heap.push(std::cmp::Reverse((candidate.to_bits(), next)));
            }
        }
    }

    let (_, exit_node) = best?;
    let mut chain = vec![exit_node];
    let entry_set: rustc_hash::FxHashSet<usize> = entries.iter().map(|&(n, _)| n).collect();
    let mut node = exit_node;
    while prev[node] != usize::MAX {
        node = prev[node];
        chain.push(node);
    }
    debug_assert!(entry_set.contains(chain.last().unwrap()));
    chain.reverse();
    let mut points = vec![*start];
    points.extend(chain.into_iter().map(|n| roadmap.nodes[n]));
    points.push(*goal);
    Some(WaypointPath::new(points))
}
