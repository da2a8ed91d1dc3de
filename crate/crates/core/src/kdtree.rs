//! Static 3D kd-tree for exact nearest-neighbor queries.

use rayon::prelude::*;

use crate::math::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Balanced kd-tree over a fixed point set. Queries are exact and read-only,
/// so a built tree can be shared across threads.
#[derive(Debug, Clone)]
pub struct KdTree {
    /// Points permuted into leaf order.
    points: Vec<Vec3>,
    /// `original[k]` is the input index of `points[k]`.
    original: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(points, &mut order, 0, &mut nodes);
        }
        KdTree {
            points: order.iter().map(|&i| points[i]).collect(),
            original: order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index (into the construction slice) and squared distance of the
    /// nearest point. Ties resolve to whichever point the traversal meets
    /// first; the distance is exact either way.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut [0.0; 3], 0.0, &mut best);
        Some((self.original[best.0], best.1))
    }

    /// Whether any point lies within squared distance `r2` of `q`.
    pub fn any_within(&self, q: &Vec3, r2: f64) -> bool {
        !self.nodes.is_empty() && self.probe(0, q, &mut [0.0; 3], 0.0, r2)
    }

    /// Euclidean distance from each query to its nearest neighbor.
    pub fn nearest_distances(&self, queries: &[Vec3]) -> Vec<f64> {
        queries
            .par_iter()
            .map(|q| self.nearest(q).map_or(f64::INFINITY, |(_, d2)| d2.sqrt()))
            .collect()
    }

    // `off[a]` is the query's offset from the current cell along axis `a`
    // (zero when inside the slab) and `rd` the squared cell distance.
    fn search(&self, node: usize, q: &Vec3, off: &mut [f64; 3], rd: f64, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for k in start..end {
                    let d2 = (self.points[k] - q).norm_squared();
                    if d2 < best.1 {
                        *best = (k, d2);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, off, rd, best);
                let old = off[axis];
                let far_rd = rd - old * old + diff * diff;
                if far_rd < best.1 {
                    off[axis] = diff;
                    self.search(far, q, off, far_rd, best);
                    off[axis] = old;
                }
            }
        }
    }

    fn probe(&self, node: usize, q: &Vec3, off: &mut [f64; 3], rd: f64, r2: f64) -> bool {
        match self.nodes[node] {
            Node::Leaf { start, end } => self.points[start..end].iter().any(|p| (p - q).norm_squared() <= r2),
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                if self.probe(near, q, off, rd, r2) {
                    return true;
                }
                let old = off[axis];
                let far_rd = rd - old * old + diff * diff;
                if far_rd > r2 {
                    return false;
                }
                off[axis] = diff;
                let hit = self.probe(far, q, off, far_rd, r2);
                off[axis] = old;
                hit
            }
        }
    }
}

fn build(points: &[Vec3], order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for &i in order.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let axis = (hi - lo).imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[order[mid]][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build(points, l, offset, nodes);
    let right = build(points, r, offset + mid, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_tree() {
        assert!(KdTree::new(&[]).nearest(&Vec3::zeros()).is_none());
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| Vec3::new(rng.gen(), rng.gen::<f64>() * 0.1, rng.gen()))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..200 {
            let q = Vec3::new(rng.gen(), rng.gen(), rng.gen()) * 1.2;
            let (idx, d2) = tree.nearest(&q).unwrap();
            let scan = pts.iter().map(|p| (p - q).norm_squared()).fold(f64::INFINITY, f64::min);
            assert_eq!(d2, scan);
            assert_eq!((pts[idx] - q).norm_squared(), d2);
        }
    }

    #[test]
    fn radius_probe_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec3> = (0..400).map(|_| Vec3::new(rng.gen(), rng.gen(), 0.0)).collect();
        let tree = KdTree::new(&pts);
        for _ in 0..500 {
            let q = Vec3::new(rng.gen(), rng.gen(), rng.gen::<f64>() * 0.2) * 1.1;
            let r2 = rng.gen::<f64>() * 0.01;
            let scan = pts.iter().any(|p| (p - q).norm_squared() <= r2);
            assert_eq!(tree.any_within(&q, r2), scan);
        }
        assert!(!KdTree::new(&[]).any_within(&Vec3::zeros(), 1.0));
    }

    #[test]
    fn duplicate_points() {
        let pts = vec![Vec3::new(1.0, 1.0, 1.0); 50];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Vec3::zeros()).unwrap().1, 3.0);
    }
}
