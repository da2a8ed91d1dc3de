//! Inside/outside classification and signed distance grids for closed
//! meshes.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::bvh::Bvh;
use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};
use crate::types::{lattice_point, FieldKind, PointCloud, SdfGrid, TriangleMesh, VoxelGrid};

/// Grid resolution used for ground-truth signed distances.
pub const SDF_RESOLUTION: usize = 32;

/// Generalized winding number of `mesh` at `p`: the signed solid angle
/// subtended by all faces over 4π. Close to 1 inside a closed outward-wound
/// surface and 0 outside.
pub fn winding_number(mesh: &TriangleMesh, p: &Vec3) -> f64 {
    let total: f64 = (0..mesh.faces().len())
        .map(|f| triangle_solid_angle(&mesh.triangle(f), p))
        .sum();
    total / (4.0 * PI)
}

#[inline]
fn triangle_solid_angle(t: &[Vec3; 3], p: &Vec3) -> f64 {
    let a = t[0] - p;
    let b = t[1] - p;
    let c = t[2] - p;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let det = a.dot(&b.cross(&c));
    let denom = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
    2.0 * det.atan2(denom)
}

/// True where the generalized winding number exceeds 0.5.
pub fn inside_mesh(mesh: &TriangleMesh, points: &PointCloud) -> Result<Vec<bool>> {
    if mesh.is_empty() {
        return Err(Error::InvalidMesh("inside test on an empty mesh".into()));
    }
    points
        .points()
        .par_iter()
        .map(|p| {
            let w = winding_number(mesh, p);
            if w.is_finite() {
                Ok(w > 0.5)
            } else {
                Err(Error::InvalidMesh(format!(
                    "winding number at ({}, {}, {}) is not finite",
                    p.x, p.y, p.z
                )))
            }
        })
        .collect()
}

/// Signed distance to `mesh` sampled on a lattice over `bounds`: magnitude
/// from the exact closest point (BVH), sign from the winding-number inside
/// test.
pub fn sdf_from_mesh(mesh: &TriangleMesh, resolution: [usize; 3], bounds: Aabb) -> Result<SdfGrid> {
    if mesh.is_empty() {
        return Err(Error::InvalidMesh("cannot compute SDF of an empty mesh".into()));
    }
    let report = mesh.edge_report();
    if !report.is_watertight() {
        return Err(Error::NotWatertight {
            boundary_edges: report.boundary_or_nonmanifold,
            inconsistent_edges: report.inconsistent,
        });
    }
    // validate the lattice before doing any work
    let n: usize = resolution.iter().product();
    VoxelGrid::new(resolution, bounds, FieldKind::Sdf, vec![0.0; n])?;

    let bvh = Bvh::new(mesh);
    let [nx, ny, _] = resolution;
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let p = lattice_point(&bounds, resolution, [idx % nx, (idx / nx) % ny, idx / (nx * ny)]);
            let dist = bvh
                .closest_point(&p)
                .expect("mesh is non-empty")
                .distance_squared
                .sqrt();
            let w = winding_number(mesh, &p);
            if !w.is_finite() {
                return Err(Error::InvalidMesh("non-finite winding number".into()));
            }
            Ok(if w > 0.5 { -dist } else { dist })
        })
        .collect::<Result<_>>()?;
    SdfGrid::new(VoxelGrid::new(resolution, bounds, FieldKind::Sdf, values)?)
}
