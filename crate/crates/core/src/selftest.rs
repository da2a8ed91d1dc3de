//! Built-in oracle checks: every accelerated kernel against a brute-force
//! or closed-form reference, and every loss gradient against central
//! finite differences.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::alignment::{align_frames, AlignmentConfig};
use crate::bvh::{closest_point_on_triangle, Bvh};
use crate::datagen::{look_at, raycast_depth};
use crate::error::Result;
use crate::fields::{extract_surface, grid_sample, winding_number};
use crate::geometry::unproject;
use crate::kdtree::KdTree;
use crate::losses::{occupancy_bce, projection_loss_from_depth, ssimae_depth_loss};
use crate::math::{Aabb, Vec3};
use crate::metrics::{chamfer, fscore};
use crate::shapes::{self, AnalyticField, AnalyticShape};
use crate::types::{CameraIntrinsics, DepthMap, PointCloud};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn run(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let t = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult {
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud::new((0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect()).expect("finite")
}

fn brute_nn(p: &Vec3, set: &[Vec3]) -> f64 {
    set.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)
}

fn random_intrinsics(rng: &mut ChaCha8Rng, w: usize, h: usize) -> CameraIntrinsics {
    let fx = rng.gen_range(20.0..200.0);
    let fy = rng.gen_range(20.0..200.0);
    CameraIntrinsics::new(fx, fy, rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64), w, h).expect("valid")
}

fn check_unproject() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (w, h) = (rng.gen_range(4..24), rng.gen_range(4..24));
        let k = random_intrinsics(&mut rng, w, h);
        let d = DepthMap::from_fn(w, h, |_, _| Some(rng.gen_range(0.1..10.0)))?;
        let p = unproject(&d, &k)?;
        for j in 0..h {
            for i in 0..w {
                let (u, v) = k.project(&p.get(i, j).expect("masked")).expect("in front");
                worst = worst.max((u - i as f64).abs()).max((v - j as f64).abs());
            }
        }
    }
    Ok((worst <= 1e-9, format!("max reprojection error {worst:.2e} px")))
}

fn check_kdtree() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pts = random_cloud(&mut rng, 600);
    let tree = KdTree::new(pts.points());
    let mut worst: f64 = 0.0;
    for _ in 0..300 {
        let q = Vec3::new(rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5));
        let (_, d2) = tree.nearest(&q).expect("non-empty");
        worst = worst.max((d2.sqrt() - brute_nn(&q, pts.points())).abs());
    }
    Ok((worst <= 1e-12, format!("max nearest-distance deviation {worst:.2e}")))
}

fn check_metrics() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (na, nb) = (rng.gen_range(50..400), rng.gen_range(50..400));
        let a = random_cloud(&mut rng, na);
        let b = random_cloud(&mut rng, nb);
        let ab: Vec<f64> = a.points().iter().map(|p| brute_nn(p, b.points())).collect();
        let ba: Vec<f64> = b.points().iter().map(|p| brute_nn(p, a.points())).collect();
        let cd = 0.5 * ab.iter().sum::<f64>() / ab.len() as f64 + 0.5 * ba.iter().sum::<f64>() / ba.len() as f64;
        worst = worst.max((chamfer(&a, &b)? - cd).abs());
        let d = 0.05;
        let p = ab.iter().filter(|&&x| x <= d).count() as f64 / ab.len() as f64;
        let r = ba.iter().filter(|&&x| x <= d).count() as f64 / ba.len() as f64;
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        worst = worst.max((fscore(&a, &b, d)?.fscore - f).abs());
    }
    Ok((worst <= 1e-12, format!("max deviation from brute force {worst:.2e}")))
}

fn check_bvh() -> Result<(bool, String)> {
    let mesh = shapes::torus(0.6, 0.2, 24, 12);
    let bvh = Bvh::new(&mesh);
    let tris = mesh.triangles();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let p = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5));
        let brute = tris
            .iter()
            .map(|t| (closest_point_on_triangle(&p, t) - p).norm_squared())
            .fold(f64::INFINITY, f64::min);
        let hit = bvh.closest_point(&p).expect("non-empty");
        worst = worst.max((hit.distance_squared.sqrt() - brute.sqrt()).abs());
    }
    Ok((worst <= 1e-12, format!("max closest-point deviation {worst:.2e}")))
}

fn ray_parity_inside(tris: &[[Vec3; 3]], p: &Vec3) -> bool {
    let dir = Vec3::new(0.5773, 0.5774, 0.5775).normalize();
    let mut hits = 0;
    for t in tris {
        let e1 = t[1] - t[0];
        let e2 = t[2] - t[0];
        let h = dir.cross(&e2);
        let a = e1.dot(&h);
        if a.abs() < 1e-14 {
            continue;
        }
        let s = (p - t[0]) / a;
        let u = s.dot(&h);
        let q = s.cross(&e1);
        let v = dir.dot(&q);
        if u < 0.0 || v < 0.0 || u + v > 1.0 {
            continue;
        }
        if e2.dot(&q) > 0.0 {
            hits += 1;
        }
    }
    hits % 2 == 1
}

fn check_winding() -> Result<(bool, String)> {
    let mesh = shapes::torus(0.6, 0.2, 24, 12);
    let tris = mesh.triangles();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut mismatches = 0;
    for _ in 0..300 {
        let p = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.4..0.4));
        if (winding_number(&mesh, &p) > 0.5) != ray_parity_inside(&tris, &p) {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} of 300 inside/outside disagreements")))
}

fn check_marching_cubes() -> Result<(bool, String)> {
    let shape = AnalyticShape::Sphere {
        center: [0.0; 3],
        radius: 0.7,
    };
    let grid = grid_sample(&AnalyticField::sdf(shape), [48, 48, 48], Aabb::cube(1.0))?;
    let cell = grid.spacing().max();
    let mesh = extract_surface(&grid);
    let worst = mesh
        .vertices()
        .iter()
        .map(|v| shape.signed_distance(v).abs())
        .fold(0.0, f64::max);
    let chi = mesh.euler_characteristic();
    Ok((
        worst <= 2.0 * cell && chi == 2 && mesh.edge_report().is_watertight(),
        format!("max vertex offset {:.3} cells, Euler characteristic {chi}", worst / cell),
    ))
}

fn check_alignment() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let cfg = AlignmentConfig::default();
    let cands = cfg.rotation_grid.candidates();
    let gt: Vec<Vec3> = (0..600)
        .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5), rng.gen_range(-0.2..0.2)))
        .collect();
    let g = cands[rng.gen_range(0..cands.len())];
    let pred: Vec<Vec3> = gt.iter().map(|p| g.transpose() * p + Vec3::new(0.3, -0.1, 0.2)).collect();
    let r = align_frames(&PointCloud::new(pred)?, &PointCloud::new(gt)?, &cfg)?;
    Ok((r.aligned_cd < 1e-9, format!("aligned Chamfer distance {:.2e}", r.aligned_cd)))
}

fn check_render() -> Result<(bool, String)> {
    let mesh = shapes::icosphere(0.5, 3);
    let k = CameraIntrinsics::new(60.0, 60.0, 31.5, 31.5, 64, 64)?;
    let pose = look_at(&Vec3::new(1.2, -1.5, 0.8), &Vec3::zeros())?;
    let depth = raycast_depth(&mesh, &k, &pose)?;
    let cam_mesh = mesh.transformed(&pose)?;
    let bvh = Bvh::new(&cam_mesh);
    let pts = unproject(&depth, &k)?.masked_points();
    let worst = pts
        .iter()
        .map(|p| bvh.closest_point(p).map_or(f64::INFINITY, |h| h.distance_squared.sqrt()))
        .fold(0.0, f64::max);
    Ok((
        worst < 1e-6 && !pts.is_empty(),
        format!("{} rendered points, max distance to mesh {worst:.2e}", pts.len()),
    ))
}

/// Kernel-versus-oracle suite.
pub fn run_selftest() -> Vec<CheckResult> {
    vec![
        run("unproject reprojection", check_unproject),
        run("kd-tree nearest neighbour", check_kdtree),
        run("chamfer and f-score", check_metrics),
        run("bvh closest point", check_bvh),
        run("winding number vs ray parity", check_winding),
        run("marching cubes sphere", check_marching_cubes),
        run("alignment planted rotation", check_alignment),
        run("ray-cast depth on surface", check_render),
    ]
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn check_projection_gradients() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (w, h) = (rng.gen_range(3..8), rng.gen_range(3..8));
        let k = random_intrinsics(&mut rng, w, h);
        let d = DepthMap::from_fn(w, h, |_, _| Some(rng.gen_range(0.5..3.0)))?;
        let gt_d = DepthMap::from_fn(w, h, |_, _| Some(rng.gen_range(0.5..3.0)))?;
        let gt = unproject(&gt_d, &random_intrinsics(&mut rng, w, h))?;
        let l = projection_loss_from_depth(&d, &k, &gt)?;
        let g = l.gradients.expect("gradients");
        let eps = 1e-5;
        let dd = g.depth.expect("depth gradient");
        for idx in 0..w * h {
            let bump = |s: f64| -> Result<f64> {
                let mut v = d.values().to_vec();
                v[idx] += s;
                Ok(projection_loss_from_depth(&DepthMap::new(w, h, v, d.mask().to_vec())?, &k, &gt)?.value)
            };
            worst = worst.max(rel_err((bump(eps)? - bump(-eps)?) / (2.0 * eps), dd[idx]));
        }
        let dk = g.intrinsics.expect("intrinsics gradient");
        for (p, &analytic) in dk.iter().enumerate() {
            let q0 = [k.fx, k.fy, k.cx, k.cy];
            // Step relative to the parameter: intrinsics gradients are small
            // next to the loss, so absolute steps drown in rounding.
            let eps = 1e-6 * q0[p].abs().max(1.0);
            let bump = |s: f64| -> Result<f64> {
                let mut q = q0;
                q[p] += s;
                let k2 = CameraIntrinsics { fx: q[0], fy: q[1], cx: q[2], cy: q[3], ..k };
                Ok(projection_loss_from_depth(&d, &k2, &gt)?.value)
            };
            worst = worst.max(rel_err((bump(eps)? - bump(-eps)?) / (2.0 * eps), analytic));
        }
    }
    Ok((worst <= 1e-4, format!("max relative gradient error {worst:.2e}")))
}

fn check_bce_gradients() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.gen_range(5..50);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
        let y: Vec<f64> = (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect();
        let g = occupancy_bce(&p, &y)?.gradients.and_then(|g| g.probabilities).expect("gradient");
        let eps = 1e-7;
        for i in 0..n {
            let bump = |s: f64| -> Result<f64> {
                let mut q = p.clone();
                q[i] += s;
                Ok(occupancy_bce(&q, &y)?.value)
            };
            worst = worst.max(rel_err((bump(eps)? - bump(-eps)?) / (2.0 * eps), g[i]));
        }
    }
    Ok((worst <= 1e-4, format!("max relative gradient error {worst:.2e}")))
}

fn check_ssimae_invariance() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let d = DepthMap::from_fn(16, 12, |_, _| rng.gen_bool(0.8).then(|| rng.gen_range(0.5..5.0)))?;
    let mut worst: f64 = 0.0;
    for a in [0.5, 3.0] {
        for b in [-7.0, 7.0] {
            worst = worst.max(ssimae_depth_loss(&d.map_masked(|v| a * v + b)?, &d)?.value);
        }
    }
    Ok((worst < 1e-9, format!("max loss under affine change {worst:.2e}")))
}

/// Finite-difference and invariance checks for the losses.
pub fn run_loss_check() -> Vec<CheckResult> {
    vec![
        run("projection loss gradients", check_projection_gradients),
        run("occupancy bce gradients", check_bce_gradients),
        run("ssimae affine invariance", check_ssimae_invariance),
    ]
}
