//! Depth unprojection, its analytic Jacobians, and visible-surface
//! normalization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{centroid, Vec3};
use crate::types::{CameraIntrinsics, DepthMap, PointCloud, ProjectionMap, RigidTransform};

fn check_dims(depth: &DepthMap, k: &CameraIntrinsics) -> Result<()> {
    if depth.width() != k.width || depth.height() != k.height {
        return Err(Error::DimensionMismatch(format!(
            "depth map is {}x{} but intrinsics describe a {}x{} image",
            depth.width(),
            depth.height(),
            k.width,
            k.height
        )));
    }
    Ok(())
}

fn checked_depth(depth: &DepthMap, idx: usize) -> Result<f64> {
    let d = depth.values()[idx];
    let (i, j) = (idx % depth.width(), idx / depth.width());
    if !d.is_finite() {
        return Err(Error::NonFiniteDepth { i, j });
    }
    if d <= 0.0 {
        return Err(Error::NonPositiveDepth { i, j, value: d });
    }
    Ok(d)
}

/// Lifts every masked pixel to `P_ij = D_ij K^-1 [i, j, 1]^T`.
pub fn unproject(depth: &DepthMap, k: &CameraIntrinsics) -> Result<ProjectionMap> {
    check_dims(depth, k)?;
    let w = depth.width();
    let points: Vec<Vec3> = (0..w * depth.height())
        .into_par_iter()
        .map(|idx| {
            if !depth.mask()[idx] {
                return Ok(Vec3::zeros());
            }
            let d = checked_depth(depth, idx)?;
            Ok(k.ray((idx % w) as f64, (idx / w) as f64) * d)
        })
        .collect::<Result<_>>()?;
    ProjectionMap::new(w, depth.height(), points, depth.mask().to_vec())
}

/// Partial derivatives of one unprojected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelJacobian {
    /// `dP/dD`.
    pub depth: Vec3,
    /// `dP/dfx, dP/dfy, dP/dcx, dP/dcy`.
    pub intrinsics: [Vec3; 4],
}

/// Per-pixel Jacobians of [`unproject`]; `None` for unmasked pixels.
#[derive(Debug, Clone)]
pub struct UnprojectJacobian {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Option<PixelJacobian>>,
}

/// Analytic derivatives of the unprojection with respect to the depth value
/// and the four intrinsics parameters.
pub fn unproject_gradients(depth: &DepthMap, k: &CameraIntrinsics) -> Result<UnprojectJacobian> {
    check_dims(depth, k)?;
    let w = depth.width();
    let pixels = (0..w * depth.height())
        .into_par_iter()
        .map(|idx| {
            if !depth.mask()[idx] {
                return Ok(None);
            }
            let d = checked_depth(depth, idx)?;
            let (i, j) = ((idx % w) as f64, (idx / w) as f64);
            let ray = k.ray(i, j);
            Ok(Some(PixelJacobian {
                depth: ray,
                intrinsics: [
                    Vec3::new(-d * (i - k.cx) / (k.fx * k.fx), 0.0, 0.0),
                    Vec3::new(0.0, -d * (j - k.cy) / (k.fy * k.fy), 0.0),
                    Vec3::new(-d / k.fx, 0.0, 0.0),
                    Vec3::new(0.0, -d / k.fy, 0.0),
                ],
            }))
        })
        .collect::<Result<_>>()?;
    Ok(UnprojectJacobian {
        width: w,
        height: depth.height(),
        pixels,
    })
}

/// Centering and scaling that maps a surface to zero mean and unit radius:
/// `normalized = (p - centroid) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub centroid: Vec3,
    pub scale: f64,
}

impl NormalizationRecord {
    pub fn identity() -> Self {
        NormalizationRecord {
            centroid: Vec3::zeros(),
            scale: 1.0,
        }
    }

    /// Fits the record to `points`: centroid by pairwise mean, scale so the
    /// farthest point lands on the unit sphere.
    pub fn fit(points: &[Vec3]) -> Result<Self> {
        let c = centroid(points).ok_or_else(|| Error::Empty("cannot normalize an empty surface".into()))?;
        let radius = points.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Degenerate("all surface points coincide".into()));
        }
        Ok(NormalizationRecord {
            centroid: c,
            scale: 1.0 / radius,
        })
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - self.centroid) * self.scale
    }

    #[inline]
    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p / self.scale + self.centroid
    }

    /// The record as a similarity transform.
    pub fn as_transform(&self) -> RigidTransform {
        RigidTransform::new(
            crate::math::Mat3::identity(),
            -self.centroid * self.scale,
            self.scale,
        )
        .expect("normalization scale is positive")
    }
}

/// Minimum number of masked pixels for a normalizable surface.
pub const MIN_SURFACE_POINTS: usize = 3;

/// Normalizes the masked surface to zero mean and unit maximum radius.
pub fn normalize_surface(p: &ProjectionMap) -> Result<(ProjectionMap, NormalizationRecord)> {
    let pts = p.masked_points();
    if pts.len() < MIN_SURFACE_POINTS {
        return Err(Error::Degenerate(format!(
            "need at least {MIN_SURFACE_POINTS} masked pixels, got {}",
            pts.len()
        )));
    }
    let rec = NormalizationRecord::fit(&pts)?;
    let out = map_masked(p, |x| rec.apply(x))?;
    Ok((out, rec))
}

/// Undoes [`normalize_surface`].
pub fn denormalize_surface(p: &ProjectionMap, rec: &NormalizationRecord) -> Result<ProjectionMap> {
    map_masked(p, |x| rec.invert(x))
}

fn map_masked(p: &ProjectionMap, f: impl Fn(&Vec3) -> Vec3 + Sync) -> Result<ProjectionMap> {
    let points = p
        .points()
        .par_iter()
        .zip(p.mask().par_iter())
        .map(|(x, &m)| if m { f(x) } else { Vec3::zeros() })
        .collect();
    ProjectionMap::new(p.width(), p.height(), points, p.mask().to_vec())
}

/// Maps every point through `t`.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud::from_trusted(cloud.points().iter().map(|x| t.apply(x)).collect())
}
