//! Independent reference implementations. Deliberately naive: they share no
//! code with the library beyond its plain data types.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shape_eval_core::{CameraIntrinsics, Vec3};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_point(rng: &mut impl Rng, half: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-half..half), rng.gen_range(-half..half), rng.gen_range(-half..half))
}

pub fn random_points(rng: &mut impl Rng, n: usize, half: f64) -> Vec<Vec3> {
    (0..n).map(|_| random_point(rng, half)).collect()
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = random_point(rng, 1.0);
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Valid intrinsics with the principal point anywhere inside the image.
pub fn random_intrinsics(rng: &mut impl Rng, w: usize, h: usize) -> CameraIntrinsics {
    CameraIntrinsics::new(
        rng.gen_range(20.0..800.0),
        rng.gen_range(20.0..800.0),
        rng.gen_range(0.0..w as f64),
        rng.gen_range(0.0..h as f64),
        w,
        h,
    )
    .unwrap()
}

pub fn brute_nn(p: &Vec3, set: &[Vec3]) -> f64 {
    set.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)
}

/// Symmetric Chamfer distance by double loop, averaged in plain order.
pub fn brute_chamfer(x: &[Vec3], y: &[Vec3]) -> f64 {
    let a: f64 = x.iter().map(|p| brute_nn(p, y)).sum::<f64>() / x.len() as f64;
    let b: f64 = y.iter().map(|p| brute_nn(p, x)).sum::<f64>() / y.len() as f64;
    0.5 * a + 0.5 * b
}

/// (precision, recall, fscore) by double loop.
pub fn brute_fscore(pred: &[Vec3], gt: &[Vec3], d: f64) -> (f64, f64, f64) {
    let p = pred.iter().filter(|x| brute_nn(x, gt) <= d).count() as f64 / pred.len() as f64;
    let r = gt.iter().filter(|x| brute_nn(x, pred) <= d).count() as f64 / gt.len() as f64;
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Point-triangle distance: plane projection when it falls inside the
/// triangle (same-side test), otherwise the nearest of the three edges.
pub fn point_triangle_distance(p: &Vec3, t: &[Vec3; 3]) -> f64 {
    let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
    let nn = n.norm_squared();
    if nn > 0.0 {
        let q = p - n * ((p - t[0]).dot(&n) / nn);
        let inside = (0..3).all(|k| {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            (b - a).cross(&(q - a)).dot(&n) >= 0.0
        });
        if inside {
            return (p - q).norm();
        }
    }
    (0..3)
        .map(|k| segment_distance(p, &t[k], &t[(k + 1) % 3]))
        .fold(f64::INFINITY, f64::min)
}

pub fn brute_mesh_distance(p: &Vec3, tris: &[[Vec3; 3]]) -> f64 {
    tris.iter().map(|t| point_triangle_distance(p, t)).fold(f64::INFINITY, f64::min)
}

/// Moller-Trumbore; hit parameter along `dir`, two-sided.
pub fn ray_triangle(o: &Vec3, dir: &Vec3, t: &[Vec3; 3]) -> Option<f64> {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let pv = dir.cross(&e2);
    let det = e1.dot(&pv);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let tv = o - t[0];
    let u = tv.dot(&pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qv = tv.cross(&e1);
    let v = dir.dot(&qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let s = e2.dot(&qv) * inv;
    (s > 0.0).then_some(s)
}

/// Majority vote of crossing parity along three fixed generic directions.
pub fn ray_parity_inside(p: &Vec3, tris: &[[Vec3; 3]]) -> bool {
    const DIRS: [[f64; 3]; 3] = [[0.5773, 0.5774, 0.5773], [-0.3113, 0.8117, 0.4943], [0.1271, -0.4213, 0.8979]];
    let votes = DIRS
        .iter()
        .filter(|d| {
            let d = Vec3::from(**d);
            tris.iter().filter(|t| ray_triangle(p, &d, t).is_some()).count() % 2 == 1
        })
        .count();
    votes >= 2
}

/// Central finite difference of `f` at `x` with step `h`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Relative error with a small absolute floor on the denominator.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}
