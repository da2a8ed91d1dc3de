//! Bounding volume hierarchy over triangles for closest-point and ray
//! queries.

use crate::math::{Aabb, Vec3};
use crate::types::TriangleMesh;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf when `count > 0`: triangles `first..first + count` of `order`.
    /// Inner nodes keep their left child at the next index and the right
    /// child at `right`.
    first: usize,
    count: usize,
    right: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub face: usize,
    pub point: Vec3,
    pub distance_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub face: usize,
    /// Ray parameter: the hit point is `origin + t * dir`.
    pub t: f64,
}

/// Immutable triangle BVH. Face indices refer to the source mesh.
#[derive(Debug, Clone)]
pub struct Bvh {
    tris: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl Bvh {
    pub fn new(mesh: &TriangleMesh) -> Self {
        Self::from_triangles(mesh.triangles())
    }

    pub fn from_triangles(tris: Vec<[Vec3; 3]>) -> Self {
        let mut order: Vec<usize> = (0..tris.len()).collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut nodes = Vec::new();
        if !tris.is_empty() {
            build(&tris, &centroids, &mut order, 0, &mut nodes);
        }
        Bvh { tris, order, nodes }
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    pub fn triangle(&self, face: usize) -> &[Vec3; 3] {
        &self.tris[face]
    }

    /// Exact closest point on the surface. Among equidistant faces the lowest
    /// index wins.
    pub fn closest_point(&self, p: &Vec3) -> Option<ClosestHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<ClosestHit> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let bound = best.map_or(f64::INFINITY, |b| b.distance_squared);
            if node.bounds.distance_squared(p) > bound {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.first..node.first + node.count] {
                    let q = closest_point_on_triangle(p, &self.tris[f]);
                    let d2 = (q - p).norm_squared();
                    let better = match best {
                        None => true,
                        Some(b) => d2 < b.distance_squared || (d2 == b.distance_squared && f < b.face),
                    };
                    if better {
                        best = Some(ClosestHit {
                            face: f,
                            point: q,
                            distance_squared: d2,
                        });
                    }
                }
            } else {
                let (l, r) = (n + 1, node.right);
                let dl = self.nodes[l].bounds.distance_squared(p);
                let dr = self.nodes[r].bounds.distance_squared(p);
                // push the farther child first so the nearer is visited first
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best
    }

    /// Nearest intersection with `t` in `(0, t_max]`. Triangles are
    /// two-sided; ties on `t` resolve to the lowest face index.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = dir.map(|d| 1.0 / d);
        let prep = RayPrep::new(origin, dir);
        let mut best: Option<RayHit> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let limit = best.map_or(t_max, |b| b.t);
            if node.bounds.ray_entry(origin, &inv, limit).is_none() {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.first..node.first + node.count] {
                    if let Some(t) = prep.intersect(&self.tris[f], limit) {
                        let better = match best {
                            None => true,
                            Some(b) => t < b.t || (t == b.t && f < b.face),
                        };
                        if better {
                            best = Some(RayHit { face: f, t });
                        }
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(n + 1);
            }
        }
        best
    }
}

fn build(tris: &[[Vec3; 3]], centroids: &[Vec3], order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    let bounds = order
        .iter()
        .fold(Aabb::empty(), |b, &f| b.merge(&Aabb::from_points(&tris[f])));
    if order.len() <= LEAF_SIZE {
        nodes.push(Node {
            bounds,
            first: offset,
            count: order.len(),
            right: 0,
        });
        return id;
    }
    let cb = Aabb::from_points(order.iter().map(|&f| &centroids[f]));
    let axis = cb.extent().imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    nodes.push(Node {
        bounds,
        first: 0,
        count: 0,
        right: 0,
    });
    let (l, r) = order.split_at_mut(mid);
    build(tris, centroids, l, offset, nodes);
    let right = build(tris, centroids, r, offset + mid, nodes);
    nodes[id].right = right;
    id
}

/// Closest point on triangle `t` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, t: &[Vec3; 3]) -> Vec3 {
    let [a, b, c] = *t;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Per-ray constants of the watertight ray/triangle test (shear to a
/// ray-aligned frame, then 2D edge functions). Rays through a shared edge
/// or vertex hit at least one of the adjacent triangles.
struct RayPrep {
    origin: Vec3,
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl RayPrep {
    fn new(origin: &Vec3, dir: &Vec3) -> Self {
        let kz = dir.iamax();
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        if dir[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        RayPrep {
            origin: *origin,
            kx,
            ky,
            kz,
            sx: dir[kx] / dir[kz],
            sy: dir[ky] / dir[kz],
            sz: 1.0 / dir[kz],
        }
    }

    fn intersect(&self, tri: &[Vec3; 3], t_max: f64) -> Option<f64> {
        let a = tri[0] - self.origin;
        let b = tri[1] - self.origin;
        let c = tri[2] - self.origin;
        let (kx, ky, kz) = (self.kx, self.ky, self.kz);
        let ax = a[kx] - self.sx * a[kz];
        let ay = a[ky] - self.sy * a[kz];
        let bx = b[kx] - self.sx * b[kz];
        let by = b[ky] - self.sy * b[kz];
        let cx = c[kx] - self.sx * c[kz];
        let cy = c[ky] - self.sy * c[kz];
        let u = cx * by - cy * bx;
        let v = ax * cy - ay * cx;
        let w = bx * ay - by * ax;
        if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
            return None;
        }
        let det = u + v + w;
        if det == 0.0 {
            return None;
        }
        let az = self.sz * a[kz];
        let bz = self.sz * b[kz];
        let cz = self.sz * c[kz];
        let t_scaled = u * az + v * bz + w * cz;
        let t = t_scaled / det;
        if t > 0.0 && t <= t_max {
            Some(t)
        } else {
            None
        }
    }
}
