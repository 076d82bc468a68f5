//! Static 3D point index: median-split tree built once over a point set,
//! answering k-nearest queries. Ties resolve by point id so queries are
//! reproducible regardless of build-time ordering quirks.

use nalgebra::Vector3;

pub struct PointIndex {
    points: Vec<Vector3<f64>>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

impl PointIndex {
    pub fn build(points: Vec<Vector3<f64>>) -> Self {
        let mut ids: Vec<usize> = (0..points.len()).collect();
        let mut tree = Self { points, nodes: Vec::new(), root: None };
        tree.nodes.reserve(ids.len());
        tree.root = tree.split(&mut ids, 0);
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn split(&mut self, ids: &mut [usize], depth: usize) -> Option<usize> {
        if ids.is_empty() {
            return None;
        }
        let axis = depth % 3;
        ids.sort_unstable_by(|&a, &b| {
            self.points[a][axis].total_cmp(&self.points[b][axis]).then(a.cmp(&b))
        });
        let mid = ids.len() / 2;
        let point = ids[mid];
        let node = self.nodes.len();
        self.nodes.push(Node { point, axis, left: None, right: None });
        let (lo, rest) = ids.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.split(lo, depth + 1);
        let right = self.split(hi, depth + 1);
        self.nodes[node].left = left;
        self.nodes[node].right = right;
        Some(node)
    }

    /// Ids and distances of the `k` nearest points, nearest first.
    pub fn k_nearest(&self, query: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        // Worst-of-k kept at the end; linear insertion is fine for small k.
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if let Some(root) = self.root {
            self.search(root, query, k, &mut best);
        }
        best
    }

    fn search(&self, node: usize, query: &Vector3<f64>, k: usize, best: &mut Vec<(usize, f64)>) {
        let Node { point, axis, left, right } = self.nodes[node];
        let d = (self.points[point] - query).norm();
        let slot = best
            .iter()
            .position(|&(id, bd)| d.total_cmp(&bd).then(point.cmp(&id)).is_lt())
            .unwrap_or(best.len());
        best.insert(slot, (point, d));
        best.truncate(k);

        let delta = query[axis] - self.points[point][axis];
        let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
        if let Some(n) = near {
            self.search(n, query, k, best);
        }
        let prune = best.len() == k && delta.abs() > best.last().expect("nonempty").1;
        if !prune {
            if let Some(f) = far {
                self.search(f, query, k, best);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(points: &[Vector3<f64>], q: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> =
            points.iter().enumerate().map(|(i, p)| (i, (p - q).norm())).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let points: Vec<Vector3<f64>> = (0..200)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    )
                })
                .collect();
            let tree = PointIndex::build(points.clone());
            for _ in 0..10 {
                let q = Vector3::new(
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-6.0..6.0),
                );
                for k in [1, 5, 17] {
                    let got = tree.k_nearest(&q, k);
                    let want = brute_force(&points, &q, k);
                    assert_eq!(got.len(), want.len());
                    for (g, w) in got.iter().zip(&want) {
                        assert_eq!(g.0, w.0);
                        assert!((g.1 - w.1).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn small_and_empty_sets() {
        let empty = PointIndex::build(Vec::new());
        assert!(empty.is_empty());
        assert!(empty.k_nearest(&Vector3::zeros(), 3).is_empty());

        let one = PointIndex::build(vec![Vector3::new(1.0, 2.0, 3.0)]);
        let hits = one.k_nearest(&Vector3::zeros(), 5);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0, 0);
    }

    #[test]
    fn duplicate_points_tie_break_by_id() {
        let p = Vector3::new(1.0, 1.0, 1.0);
        let tree = PointIndex::build(vec![p, p, p]);
        let hits = tree.k_nearest(&p, 2);
        assert_eq!(hits.iter().map(|h| h.0).collect::<Vec<_>>(), vec![0, 1]);
    }
}
