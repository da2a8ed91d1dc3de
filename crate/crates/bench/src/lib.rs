//! Fixtures shared by the kernel benchmarks.

use shape_eval_core::metrics::sample_surface;
use shape_eval_core::shapes::{icosphere, torus};
use shape_eval_core::{PointCloud, TriangleMesh};

/// Torus mesh fine enough that ray casting and SDF costs are realistic.
pub fn torus_mesh() -> TriangleMesh {
    torus(0.35, 0.12, 64, 32)
}

/// Two independent `n`-point samplings of a sphere and a torus.
pub fn cloud_pair(n: usize) -> (PointCloud, PointCloud) {
    (
        sample_surface(&icosphere(0.5, 4), n, 1).expect("non-empty mesh"),
        sample_surface(&torus_mesh(), n, 2).expect("non-empty mesh"),
    )
}
