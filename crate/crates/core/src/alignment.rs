//! Brute-force rotation search and ICP refinement that bring a predicted
//! cloud into the ground-truth frame before scoring.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::math::{centroid, mean, Mat3, Vec3};
use crate::metrics::NearestDistances;
use crate::types::{nearest_rotation, PointCloud, RigidTransform};

/// Candidate rotations: every proper rotation of the cube, each swept about
/// its own vertical (y) axis in equal azimuth steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RotationGrid {
    /// Use the 24 cube rotations as base orientations; otherwise identity only.
    pub octahedral: bool,
    /// Azimuth samples per base orientation (60 gives 6° steps).
    pub azimuth_steps: usize,
}

impl Default for RotationGrid {
    fn default() -> Self {
        RotationGrid {
            octahedral: true,
            azimuth_steps: 60,
        }
    }
}

impl RotationGrid {
    /// Candidate `base * azimuth_steps + step` is `O_base * R_y(step * 2π / steps)`.
    /// Candidate 0 is the identity.
    pub fn candidates(&self) -> Vec<Mat3> {
        let bases = if self.octahedral {
            octahedral_rotations()
        } else {
            vec![Mat3::identity()]
        };
        let steps = self.azimuth_steps.max(1);
        let mut out = Vec::with_capacity(bases.len() * steps);
        for o in &bases {
            for s in 0..steps {
                let theta = std::f64::consts::TAU * s as f64 / steps as f64;
                out.push(o * rotation_y(theta));
            }
        }
        out
    }
}

fn rotation_y(theta: f64) -> Mat3 {
    if theta == 0.0 {
        return Mat3::identity();
    }
    let (s, c) = theta.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// The 24 signed permutation matrices with determinant +1, identity first.
pub fn octahedral_rotations() -> Vec<Mat3> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(24);
    for perm in PERMS {
        for signs in 0..8u32 {
            let sign = |k: u32| if signs >> k & 1 == 0 { 1.0 } else { -1.0 };
            let m = Mat3::from_fn(|i, j| if perm[i] == j { sign(i as u32) } else { 0.0 });
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    pub rotation_grid: RotationGrid,
    /// Points per cloud used by the search.
    pub subsample: usize,
    pub refine_icp: bool,
    pub icp_max_iterations: usize,
    /// Stop when the objective improves by less than this fraction.
    pub icp_tolerance: f64,
    /// Also search a global scale factor.
    pub allow_scale: bool,
    pub seed: u64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            rotation_grid: RotationGrid::default(),
            subsample: 1024,
            refine_icp: true,
            icp_max_iterations: 30,
            icp_tolerance: 1e-6,
            allow_scale: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Maps prediction coordinates into the ground-truth frame.
    pub transform: RigidTransform,
    /// Chamfer distance between the transformed prediction subsample and the
    /// ground-truth subsample.
    pub aligned_cd: f64,
    /// Index of the winning grid candidate.
    pub candidate: usize,
    /// Chamfer distance of the winning candidate before refinement.
    pub grid_cd: f64,
    pub icp: Option<IcpOutcome>,
}

/// Picks `m` of `len` indices; the choice depends only on `(len, m, seed)`,
/// so equally sized clouds get the same positions.
fn subsample_indices(len: usize, m: usize, seed: u64) -> Vec<usize> {
    if len <= m {
        (0..len).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, len, m).into_vec();
        idx.sort_unstable();
        idx
    }
}

fn check_cloud(name: &str, c: &PointCloud) -> Result<()> {
    if c.len() < 3 {
        return Err(Error::Degenerate(format!("{name} cloud needs at least 3 points, has {}", c.len())));
    }
    let first = c.points()[0];
    if c.points().iter().all(|p| *p == first) {
        return Err(Error::Degenerate(format!("all {name} points coincide")));
    }
    Ok(())
}

fn cd_against(points: &[Vec3], target: &[Vec3], target_tree: &KdTree) -> f64 {
    let tree = KdTree::new(points);
    NearestDistances::with_trees(points, &tree, target, target_tree).chamfer()
}

fn rms_radius(points: &[Vec3]) -> f64 {
    let d2: Vec<f64> = points.iter().map(|p| p.norm_squared()).collect();
    mean(&d2).unwrap_or(0.0).sqrt()
}

/// Searches the rotation grid for the transform minimizing symmetric
/// Chamfer distance between subsamples of `pred` and `gt`, optionally
/// refining the winner with ICP.
///
/// Both subsamples are centered first (and, with `allow_scale`, matched in
/// RMS radius); that pre-normalization is folded into the returned
/// transform. Ties between candidates go to the lower index.
pub fn align_frames(pred: &PointCloud, gt: &PointCloud, cfg: &AlignmentConfig) -> Result<AlignmentResult> {
    check_cloud("predicted", pred)?;
    check_cloud("ground-truth", gt)?;
    if cfg.subsample < 3 {
        return Err(Error::InvalidArgument("alignment subsample must be at least 3".into()));
    }
    let pick = |c: &PointCloud| -> Vec<Vec3> {
        subsample_indices(c.len(), cfg.subsample, cfg.seed)
            .into_iter()
            .map(|i| c.points()[i])
            .collect()
    };
    let pred_sub = pick(pred);
    let gt_sub = pick(gt);
    let cp = centroid(&pred_sub).expect("non-empty");
    let cg = centroid(&gt_sub).expect("non-empty");
    let pc: Vec<Vec3> = pred_sub.iter().map(|p| p - cp).collect();
    let gc: Vec<Vec3> = gt_sub.iter().map(|p| p - cg).collect();

    let mut scale = 1.0;
    if cfg.allow_scale {
        let (rp, rg) = (rms_radius(&pc), rms_radius(&gc));
        if !(rp > 0.0 && rg > 0.0) {
            return Err(Error::Degenerate("cloud has zero extent".into()));
        }
        scale = rg / rp;
    }

    let gt_tree = KdTree::new(&gc);
    let pc_tree = KdTree::new(&pc);
    let candidates = cfg.rotation_grid.candidates();
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("rotation grid is empty".into()));
    }
    // Best full cost so far, as f64 bits (order-preserving for non-negative
    // values). Abandoned candidates are provably worse than some evaluated
    // one, so the winner does not depend on evaluation order.
    let bound = AtomicU64::new(f64::INFINITY.to_bits());
    let costs: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|r| {
            let limit = f64::from_bits(bound.load(Ordering::Relaxed));
            let cost = candidate_cost(r, scale, &pc, &pc_tree, &gc, &gt_tree, limit)?;
            bound.fetch_min(cost.to_bits(), Ordering::Relaxed);
            Some(cost)
        })
        .collect();
    let (best, grid_cd) = costs
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|c| (i, c)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("the first evaluated candidate is never abandoned");
    let rot = candidates[best];

    if cfg.allow_scale {
        let cost = |s: f64| {
            let moved: Vec<Vec3> = pc.iter().map(|p| s * (rot * p)).collect();
            cd_against(&moved, &gc, &gt_tree)
        };
        scale = golden_section(cost, scale * 0.5, scale * 2.0, 48);
    }

    let grid_transform = RigidTransform::new(rot, cg - scale * (rot * cp), scale)?;
    let pred_sub_cloud = PointCloud::from_trusted(pred_sub);
    let gt_sub_cloud = PointCloud::from_trusted(gt_sub);
    let score = |t: &RigidTransform| {
        let moved: Vec<Vec3> = pred_sub_cloud.points().iter().map(|p| t.apply(p)).collect();
        let tree = KdTree::new(gt_sub_cloud.points());
        cd_against(&moved, gt_sub_cloud.points(), &tree)
    };
    let mut transform = grid_transform;
    let mut aligned_cd = score(&grid_transform);
    let mut icp = None;
    if cfg.refine_icp {
        let outcome = icp_refine(&pred_sub_cloud, &gt_sub_cloud, &grid_transform, cfg)?;
        let refined_cd = score(&outcome.transform);
        if refined_cd <= aligned_cd {
            transform = outcome.transform;
            aligned_cd = refined_cd;
        }
        icp = Some(outcome);
    }
    Ok(AlignmentResult {
        transform,
        aligned_cd,
        candidate: best,
        grid_cd,
        icp,
    })
}

/// Chamfer distance between `scale * r * pc` and `gc`, or `None` once a
/// running lower bound exceeds `limit`. The ground-truth to prediction
/// direction queries `r^T g / scale` against the fixed prediction tree,
/// so no tree is built per candidate.
fn candidate_cost(
    r: &Mat3,
    scale: f64,
    pc: &[Vec3],
    pc_tree: &KdTree,
    gc: &[Vec3],
    gt_tree: &KdTree,
    limit: f64,
) -> Option<f64> {
    const CHECK_EVERY: usize = 32;
    let rt = r.transpose();
    let (wp, wg) = (0.5 / pc.len() as f64, 0.5 / gc.len() as f64);
    let cutoff = limit * (1.0 + 1e-9);
    let mut to_gt = Vec::with_capacity(pc.len());
    let mut to_pred = Vec::with_capacity(gc.len());
    let (mut sp, mut sg) = (0.0, 0.0);
    for k in 0..pc.len().max(gc.len()) {
        if let Some(p) = pc.get(k) {
            let (_, d2) = gt_tree.nearest(&(scale * (r * p))).expect("non-empty tree");
            let d = d2.sqrt();
            sp += d;
            to_gt.push(d);
        }
        if let Some(g) = gc.get(k) {
            let (_, d2) = pc_tree.nearest(&(rt * g / scale)).expect("non-empty tree");
            let d = scale * d2.sqrt();
            sg += d;
            to_pred.push(d);
        }
        if k % CHECK_EVERY == CHECK_EVERY - 1 && wp * sp + wg * sg > cutoff {
            return None;
        }
    }
    Some(0.5 * mean(&to_gt).unwrap_or(0.0) + 0.5 * mean(&to_pred).unwrap_or(0.0))
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpOutcome {
    /// Best iterate found.
    pub transform: RigidTransform,
    pub converged: bool,
    pub iterations: usize,
    /// Mean squared nearest-neighbor distance after each accepted step,
    /// starting with the initial transform. Non-increasing.
    pub objective: Vec<f64>,
}

fn icp_objective(points: &[Vec3], t: &RigidTransform, tree: &KdTree, target: &[Vec3]) -> (f64, Vec<Vec3>) {
    let moved: Vec<Vec3> = points.iter().map(|p| t.apply(p)).collect();
    let matches: Vec<(Vec3, f64)> = moved
        .par_iter()
        .map(|p| {
            let (i, d2) = tree.nearest(p).expect("non-empty target");
            (target[i], d2)
        })
        .collect();
    let d2: Vec<f64> = matches.iter().map(|m| m.1).collect();
    (mean(&d2).unwrap_or(0.0), matches.into_iter().map(|m| m.0).collect())
}

/// Point-to-point ICP starting from `init`. Each step matches every
/// transformed predicted point to its nearest ground-truth point and solves
/// the rotation in closed form (orthogonal Procrustes with a determinant
/// guard); the scale of `init` is kept. Only improving steps are accepted,
/// so the objective never increases.
pub fn icp_refine(pred: &PointCloud, gt: &PointCloud, init: &RigidTransform, cfg: &AlignmentConfig) -> Result<IcpOutcome> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Empty("ICP needs two non-empty clouds".into()));
    }
    let tree = KdTree::new(gt.points());
    let scale = init.scale();
    let src: Vec<Vec3> = pred.points().iter().map(|p| p * scale).collect();
    let src_mean = centroid(&src).expect("non-empty");

    let mut current = *init;
    let (mut obj, mut matched) = icp_objective(pred.points(), &current, &tree, gt.points());
    let mut history = vec![obj];
    let mut converged = obj == 0.0;
    let mut iterations = 0;
    while !converged && iterations < cfg.icp_max_iterations {
        iterations += 1;
        let dst_mean = centroid(&matched).expect("non-empty");
        let mut h = Mat3::zeros();
        for (a, b) in src.iter().zip(&matched) {
            h += (a - src_mean) * (b - dst_mean).transpose();
        }
        // R maps source onto destination: R = V diag(1, 1, d) U^T for H = U S V^T
        let rot = nearest_rotation(&h.transpose());
        let next = RigidTransform::from_approx_rotation(&rot, dst_mean - rot * src_mean, scale)?;
        let (next_obj, next_matched) = icp_objective(pred.points(), &next, &tree, gt.points());
        if !(next_obj < obj) {
            converged = true;
            break;
        }
        let improvement = obj - next_obj;
        current = next;
        matched = next_matched;
        obj = next_obj;
        history.push(obj);
        if obj == 0.0 || improvement <= cfg.icp_tolerance * (obj + improvement) {
            converged = true;
        }
    }
    Ok(IcpOutcome {
        transform: current,
        converged,
        iterations,
        objective: history,
    })
}
