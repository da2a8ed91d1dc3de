//! Procedural meshes and analytic fields used by fixtures, data generation
//! and the analytic predictors. All meshes are closed (except [`quad`]) and
//! wound counter-clockwise when seen from outside.

use std::collections::HashMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::math::Vec3;
use crate::types::{FieldKind, ScalarField, TriangleMesh};

/// Geodesic sphere from a subdivided icosahedron.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vec3::from(*v).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| v * radius).collect();
    TriangleMesh::new(verts, faces).expect("icosphere is well formed")
}

/// Axis-aligned box with the given center and edge lengths.
pub fn cuboid(center: Vec3, size: Vec3) -> TriangleMesh {
    let h = size * 0.5;
    let verts: Vec<Vec3> = (0..8)
        .map(|i| {
            let s = Vec3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            );
            center + s.component_mul(&h)
        })
        .collect();
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let faces = quads
        .iter()
        .flat_map(|&[a, b, c, d]| [[a, b, c], [a, c, d]])
        .collect();
    TriangleMesh::new(verts, faces).expect("cuboid is well formed")
}

/// Unit cube centered at the origin.
pub fn unit_cube() -> TriangleMesh {
    cuboid(Vec3::zeros(), Vec3::repeat(1.0))
}

/// Torus around the z axis.
pub fn torus(major: f64, minor: f64, n_major: usize, n_minor: usize) -> TriangleMesh {
    let idx = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let mut verts = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let u = TAU * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let v = TAU * j as f64 / n_minor as f64;
            let ring = major + minor * v.cos();
            verts.push(Vec3::new(ring * u.cos(), ring * u.sin(), minor * v.sin()));
        }
    }
    let mut faces = Vec::with_capacity(2 * n_major * n_minor);
    for i in 0..n_major {
        for j in 0..n_minor {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh::new(verts, faces).expect("torus is well formed")
}

/// Open square of side `side` in the plane `z = center.z`, facing -z.
pub fn quad(center: Vec3, side: f64) -> TriangleMesh {
    let h = side / 2.0;
    let verts = vec![
        center + Vec3::new(-h, -h, 0.0),
        center + Vec3::new(h, -h, 0.0),
        center + Vec3::new(h, h, 0.0),
        center + Vec3::new(-h, h, 0.0),
    ];
    TriangleMesh::new(verts, vec![[0, 2, 1], [0, 3, 2]]).expect("quad is well formed")
}

/// Closed-form shapes usable as fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum AnalyticShape {
    Sphere { center: [f64; 3], radius: f64 },
    /// Torus around the z axis through `center`.
    Torus { center: [f64; 3], major: f64, minor: f64 },
    Cuboid { center: [f64; 3], size: [f64; 3] },
}

impl AnalyticShape {
    /// Exact signed distance (negative inside).
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        match *self {
            AnalyticShape::Sphere { center, radius } => (p - Vec3::from(center)).norm() - radius,
            AnalyticShape::Torus { center, major, minor } => {
                let q = p - Vec3::from(center);
                let ring = (q.x * q.x + q.y * q.y).sqrt() - major;
                (ring * ring + q.z * q.z).sqrt() - minor
            }
            AnalyticShape::Cuboid { center, size } => {
                let q = (p - Vec3::from(center)).abs() - Vec3::from(size) * 0.5;
                let outside = q.sup(&Vec3::zeros()).norm();
                outside + q.max().min(0.0)
            }
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.signed_distance(p) <= 0.0
    }
}

/// An analytic shape presented as a field of the requested kind.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticField {
    pub shape: AnalyticShape,
    pub kind: FieldKind,
}

impl AnalyticField {
    pub fn sdf(shape: AnalyticShape) -> Self {
        AnalyticField {
            shape,
            kind: FieldKind::Sdf,
        }
    }

    pub fn occupancy(shape: AnalyticShape) -> Self {
        AnalyticField {
            shape,
            kind: FieldKind::Occupancy,
        }
    }
}

impl ScalarField for AnalyticField {
    fn kind(&self) -> FieldKind {
        self.kind
    }

    fn value(&self, p: &Vec3) -> f64 {
        let d = self.shape.signed_distance(p);
        match self.kind {
            FieldKind::Sdf => d,
            FieldKind::Occupancy => {
                if d <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Field with the same value everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField {
    pub kind: FieldKind,
    pub value: f64,
}

impl ScalarField for ConstantField {
    fn kind(&self) -> FieldKind {
        self.kind
    }

    fn value(&self, _: &Vec3) -> f64 {
        self.value
    }
}
