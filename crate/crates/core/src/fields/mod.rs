//! Implicit-field machinery: lattice sampling, isosurface extraction and
//! ground-truth occupancy/SDF from closed meshes.

mod marching_cubes;
mod mesh_sdf;
mod tables;

use rayon::prelude::*;

pub use marching_cubes::marching_cubes;
pub use mesh_sdf::{inside_mesh, sdf_from_mesh, winding_number, SDF_RESOLUTION};

use crate::error::{Error, Result};
use crate::math::Aabb;
use crate::types::{lattice_point, FieldKind, ScalarField, SdfGrid, VoxelGrid};

/// Default lattice resolution for extracting predicted surfaces.
pub const EVAL_RESOLUTION: usize = 128;

/// Default extraction bounds, `[-1, 1]^3`.
pub fn eval_bounds() -> Aabb {
    Aabb::cube(1.0)
}

/// Evaluates `field` at every node of a `resolution` lattice spanning
/// `bounds` inclusively.
pub fn grid_sample(field: &dyn ScalarField, resolution: [usize; 3], bounds: Aabb) -> Result<VoxelGrid> {
    if resolution.iter().any(|&n| n < 2) {
        return Err(Error::InvalidGrid(format!(
            "resolution must be at least 2 per axis, got {resolution:?}"
        )));
    }
    if !bounds.is_valid() {
        return Err(Error::InvalidGrid("bounds must satisfy min < max per axis".into()));
    }
    let [nx, ny, nz] = resolution;
    let values = (0..nx * ny * nz)
        .into_par_iter()
        .map(|idx| {
            let p = lattice_point(&bounds, resolution, [idx % nx, (idx / nx) % ny, idx / (nx * ny)]);
            let v = field.value(&p);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteField {
                    x: p.x,
                    y: p.y,
                    z: p.z,
                    value: v,
                })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    VoxelGrid::new(resolution, bounds, field.kind(), values)
}

/// 1 where the signed distance is `<= 0`, else 0.
pub fn occupancy_from_sdf(grid: &SdfGrid) -> VoxelGrid {
    let values = grid.values().iter().map(|&d| if d <= 0.0 { 1.0 } else { 0.0 }).collect();
    grid.with_kind_and_values(FieldKind::Occupancy, values)
}

/// Extracts the surface at the conventional level for the grid's kind
/// (0.5 for occupancy, 0 for SDF).
pub fn extract_surface(grid: &VoxelGrid) -> crate::types::TriangleMesh {
    marching_cubes(grid, grid.kind().surface_level())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::shapes::ConstantField;
    use crate::types::FnField;

    #[test]
    fn constant_field() {
        let f = ConstantField {
            kind: FieldKind::Sdf,
            value: 0.0,
        };
        let g = grid_sample(&f, [4, 5, 6], Aabb::cube(1.0)).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        assert_eq!(g.values().len(), 120);
    }

    #[test]
    fn linear_field_slices() {
        let f = FnField::new(FieldKind::Sdf, |p: &Vec3| p.x);
        let g = grid_sample(&f, [3, 3, 3], Aabb::cube(1.0)).unwrap();
        for z in 0..3 {
            for y in 0..3 {
                assert_eq!([g.get(0, y, z), g.get(1, y, z), g.get(2, y, z)], [-1.0, 0.0, 1.0]);
            }
        }
    }

    #[test]
    fn rejects_non_finite_field() {
        let f = FnField::new(FieldKind::Sdf, |p: &Vec3| if p.x > 0.9 { f64::NAN } else { 0.0 });
        assert!(matches!(
            grid_sample(&f, [3, 3, 3], Aabb::cube(1.0)),
            Err(Error::NonFiniteField { .. })
        ));
        assert!(grid_sample(&f, [1, 3, 3], Aabb::cube(1.0)).is_err());
    }

    #[test]
    fn occupancy_threshold() {
        let g = VoxelGrid::new([2, 2, 2], Aabb::cube(1.0), FieldKind::Sdf, vec![1.0, 0.0, -1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let occ = occupancy_from_sdf(&SdfGrid::new(g.clone()).unwrap());
        assert_eq!(occ.kind(), FieldKind::Occupancy);
        assert_eq!(&occ.values()[..4], &[0.0, 1.0, 1.0, 0.0]);

        let all_pos = g.with_kind_and_values(FieldKind::Sdf, vec![0.5; 8]);
        let occ = occupancy_from_sdf(&SdfGrid::new(all_pos).unwrap());
        assert!(occ.values().iter().all(|&v| v == 0.0));
    }
}
