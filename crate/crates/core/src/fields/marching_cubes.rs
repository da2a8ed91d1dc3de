use std::collections::HashMap;

use rayon::prelude::*;

use super::tables::{CORNERS, EDGES, TRIANGLES};
use crate::math::Vec3;
use crate::types::{lattice_point, TriangleMesh, VoxelGrid};

/// A lattice edge: the node at its lower end and the axis it runs along.
type EdgeKey = (usize, u8);

/// Extracts the `iso_level` surface of `grid` with the classic 256-case
/// table and linear interpolation along cell edges.
///
/// Vertices are shared between neighboring cells, so a surface that stays
/// inside the grid comes out closed. Faces are wound so their normals point
/// toward the outside of the shape: toward higher values for signed
/// distances, toward lower values for occupancy. The result is empty iff no
/// cell edge straddles the level.
pub fn marching_cubes(grid: &VoxelGrid, iso_level: f64) -> TriangleMesh {
    let [nx, ny, nz] = grid.resolution();
    let values = grid.values();
    let node = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);

    let layers: Vec<Vec<[EdgeKey; 3]>> = (0..nz - 1)
        .into_par_iter()
        .map(|z| {
            let mut tris = Vec::new();
            for y in 0..ny - 1 {
                for x in 0..nx - 1 {
                    let mut case = 0usize;
                    for (c, off) in CORNERS.iter().enumerate() {
                        if values[node(x + off[0], y + off[1], z + off[2])] < iso_level {
                            case |= 1 << c;
                        }
                    }
                    if case == 0 || case == 255 {
                        continue;
                    }
                    let edge_key = |e: usize| -> EdgeKey {
                        let [a, b] = EDGES[e];
                        let (pa, pb) = (CORNERS[a], CORNERS[b]);
                        let lo = [pa[0].min(pb[0]), pa[1].min(pb[1]), pa[2].min(pb[2])];
                        let axis = (0..3).find(|&k| pa[k] != pb[k]).expect("edge spans one axis");
                        (node(x + lo[0], y + lo[1], z + lo[2]), axis as u8)
                    };
                    for t in TRIANGLES[case].chunks_exact(3).take_while(|t| t[0] >= 0) {
                        tris.push([edge_key(t[0] as usize), edge_key(t[1] as usize), edge_key(t[2] as usize)]);
                    }
                }
            }
            tris
        })
        .collect();

    // The table winds faces toward the corners below the level. Flip when
    // "outside" is the high side.
    let flip = !grid.kind().inside_is_high();
    let bounds = grid.bounds();
    let res = grid.resolution();
    let mut welded: HashMap<EdgeKey, usize> = HashMap::new();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces = Vec::new();
    for tri in layers.iter().flatten() {
        let ids = tri.map(|key| {
            *welded.entry(key).or_insert_with(|| {
                let (n0, axis) = key;
                let step = [1, nx, nx * ny][axis as usize];
                let n1 = n0 + step;
                let idx = |n: usize| [n % nx, (n / nx) % ny, n / (nx * ny)];
                let (p0, p1) = (lattice_point(bounds, res, idx(n0)), lattice_point(bounds, res, idx(n1)));
                let (v0, v1) = (values[n0], values[n1]);
                let t = (iso_level - v0) / (v1 - v0);
                vertices.push(p0 + (p1 - p0) * t);
                vertices.len() - 1
            })
        });
        faces.push(if flip { [ids[0], ids[2], ids[1]] } else { ids });
    }
    TriangleMesh::new(vertices, faces).expect("marching cubes produces valid indices")
}
