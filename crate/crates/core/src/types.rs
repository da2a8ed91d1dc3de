//! Shared domain types and coordinate conventions.
//!
//! Pixel `(i, j)` is column `i` (x) and row `j` (y), sampled at integer
//! coordinates. The camera frame is right-handed with +x right, +y down and
//! +z into the scene, so depth is the camera-frame z coordinate. Lengths are
//! meters unless a surface has been explicitly normalized.

use std::collections::HashMap;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Aabb, Mat3, Vec3};

/// Pinhole intrinsics.
///
/// The principal point of a freshly constructed camera must lie inside the
/// image; intrinsics derived by cropping may move it outside (a crop that
/// excludes the optical center is legal), so that check is not repeated on
/// derived values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRepr")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Deserialize)]
struct IntrinsicsRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl TryFrom<IntrinsicsRepr> for CameraIntrinsics {
    type Error = Error;

    fn try_from(r: IntrinsicsRepr) -> Result<Self> {
        CameraIntrinsics::from_parts(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

/// A crop rectangle in source pixel units. Fractional values are allowed so
/// that chained crops compose into a single box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl CropBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Self {
        CropBox {
            x,
            y,
            width,
            height,
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        CropBox::new(0.0, 0.0, width as f64, height as f64)
    }
}

impl CameraIntrinsics {
    /// Validated constructor: positive focal lengths and a principal point
    /// inside the image.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self::from_parts(fx, fy, cx, cy, width, height)?;
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(k)
    }

    fn from_parts(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite principal point".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidIntrinsics("image must be at least 1x1".into()));
        }
        Ok(CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// `K = [[fx, 0, cx], [0, fy, cy], [0, 0, 1]]`.
    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Closed-form inverse of [`matrix`](Self::matrix).
    pub fn inverse_matrix(&self) -> Mat3 {
        Mat3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// `K^-1 [u, v, 1]^T`: the ray through pixel coordinate `(u, v)` scaled
    /// to unit depth.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point to pixel coordinates. `None` if the point
    /// is not in front of the camera.
    #[inline]
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Intrinsics after cropping `crop` out of the image and resizing it to
    /// `new_size`. A point projecting to `p` before projects to
    /// `(p - crop_origin) * new_size / crop_size` after.
    pub fn adjust_for_crop_resize(&self, crop: &CropBox, new_size: (usize, usize)) -> Result<Self> {
        let inside = crop.x >= 0.0
            && crop.y >= 0.0
            && crop.width > 0.0
            && crop.height > 0.0
            && crop.x + crop.width <= self.width as f64
            && crop.y + crop.height <= self.height as f64;
        if !inside {
            return Err(Error::CropOutOfBounds {
                x: crop.x.floor() as i64,
                y: crop.y.floor() as i64,
                x_end: (crop.x + crop.width).ceil() as i64,
                y_end: (crop.y + crop.height).ceil() as i64,
                width: self.width,
                height: self.height,
            });
        }
        self.crop_resize_unbounded(crop, new_size)
    }

    /// As [`adjust_for_crop_resize`](Self::adjust_for_crop_resize) but allows
    /// boxes that extend past the image border (padded crops).
    pub fn crop_resize_unbounded(&self, crop: &CropBox, new_size: (usize, usize)) -> Result<Self> {
        if new_size.0 == 0 || new_size.1 == 0 {
            return Err(Error::InvalidArgument("output size must be at least 1x1".into()));
        }
        if !(crop.width > 0.0 && crop.height > 0.0) {
            return Err(Error::InvalidArgument("crop box must have positive size".into()));
        }
        let sx = new_size.0 as f64 / crop.width;
        let sy = new_size.1 as f64 / crop.height;
        Self::from_parts(
            self.fx * sx,
            self.fy * sy,
            (self.cx - crop.x) * sx,
            (self.cy - crop.y) * sy,
            new_size.0,
            new_size.1,
        )
    }
}

/// Free-function form of [`CameraIntrinsics::matrix`].
pub fn intrinsics_matrix(k: &CameraIntrinsics) -> Mat3 {
    k.matrix()
}

/// Free-function form of [`CameraIntrinsics::adjust_for_crop_resize`].
pub fn adjust_intrinsics_for_crop_resize(
    k: &CameraIntrinsics,
    crop: &CropBox,
    new_size: (usize, usize),
) -> Result<CameraIntrinsics> {
    k.adjust_for_crop_resize(crop, new_size)
}

fn check_grid_len(what: &str, width: usize, height: usize, len: usize, mask_len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::DimensionMismatch(format!("{what} must be at least 1x1")));
    }
    if len != width * height || mask_len != width * height {
        return Err(Error::DimensionMismatch(format!(
            "{what} {width}x{height} needs {} entries, got {len} values and {mask_len} mask entries",
            width * height
        )));
    }
    Ok(())
}

/// Per-pixel depth with a foreground mask. Row-major, x fastest.
///
/// Masked values must be finite. Positivity is checked by consumers that need
/// metric depth (unprojection); the depth loss also accepts affine-shifted
/// predictions that may go negative.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        check_grid_len("depth map", width, height, values.len(), mask.len())?;
        for (idx, (&v, &m)) in values.iter().zip(&mask).enumerate() {
            if m && !v.is_finite() {
                return Err(Error::NonFiniteDepth {
                    i: idx % width,
                    j: idx / width,
                });
            }
        }
        Ok(DepthMap {
            width,
            height,
            values,
            mask,
        })
    }

    /// Builds a map from a per-pixel closure returning `Some(depth)` for
    /// foreground pixels.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        let mut mask = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                match f(i, j) {
                    Some(d) => {
                        values.push(d);
                        mask.push(true);
                    }
                    None => {
                        values.push(0.0);
                        mask.push(false);
                    }
                }
            }
        }
        DepthMap::new(width, height, values, mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let idx = self.index(i, j);
        self.mask[idx].then(|| self.values[idx])
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Applies `f` to every masked value.
    pub fn map_masked(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self
            .values
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| if m { f(v) } else { v })
            .collect();
        DepthMap::new(self.width, self.height, values, self.mask.clone())
    }
}

/// Per-pixel camera-frame 3D points with a mask. Unmasked entries hold the
/// zero vector and must be ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMap {
    width: usize,
    height: usize,
    points: Vec<Vec3>,
    mask: Vec<bool>,
}

impl ProjectionMap {
    pub fn new(width: usize, height: usize, mut points: Vec<Vec3>, mask: Vec<bool>) -> Result<Self> {
        check_grid_len("projection map", width, height, points.len(), mask.len())?;
        for (idx, (p, &m)) in points.iter_mut().zip(&mask).enumerate() {
            if m {
                if !p.iter().all(|c| c.is_finite()) {
                    return Err(Error::NonFiniteDepth {
                        i: idx % width,
                        j: idx / width,
                    });
                }
            } else {
                *p = Vec3::zeros();
            }
        }
        Ok(ProjectionMap {
            width,
            height,
            points,
            mask,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, i: usize, j: usize) -> Option<Vec3> {
        let idx = j * self.width + i;
        self.mask[idx].then(|| self.points[idx])
    }

    /// Masked points in pixel order.
    pub fn masked_points(&self) -> Vec<Vec3> {
        self.points
            .iter()
            .zip(&self.mask)
            .filter_map(|(p, &m)| m.then_some(*p))
            .collect()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn to_point_cloud(&self) -> PointCloud {
        PointCloud {
            points: self.masked_points(),
        }
    }
}

/// Indexed triangle mesh. Construction drops faces with repeated indices or
/// zero area.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(v) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not finite")));
        }
        let n = vertices.len();
        let mut kept = Vec::with_capacity(faces.len());
        for (fi, f) in faces.into_iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex out of range (have {n})"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                continue;
            }
            let [a, b, c] = f.map(|i| vertices[i]);
            if (b - a).cross(&(c - a)).norm_squared() == 0.0 {
                continue;
            }
            kept.push(f);
        }
        Ok(TriangleMesh {
            vertices,
            faces: kept,
        })
    }

    pub fn empty() -> Self {
        TriangleMesh::default()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    #[inline]
    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].map(|i| self.vertices[i])
    }

    pub fn triangles(&self) -> Vec<[Vec3; 3]> {
        (0..self.faces.len()).map(|f| self.triangle(f)).collect()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        let areas: Vec<f64> = (0..self.faces.len()).map(|f| self.face_area(f)).collect();
        crate::math::pairwise_sum(&areas)
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.faces.iter().flatten().map(|&i| &self.vertices[i]))
    }

    /// Volume enclosed by the surface; positive for outward-facing winding.
    pub fn signed_volume(&self) -> f64 {
        let vols: Vec<f64> = (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .collect();
        crate::math::pairwise_sum(&vols)
    }

    /// Maps every vertex through `f`.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Self> {
        TriangleMesh::new(self.vertices.iter().map(f).collect(), self.faces.clone())
    }

    pub fn transformed(&self, t: &RigidTransform) -> Result<Self> {
        self.map_vertices(|v| t.apply(v))
    }

    /// Reverses the winding of every face.
    pub fn flipped(&self) -> Self {
        TriangleMesh {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    /// Counts edges not shared by exactly two faces, and shared edges whose
    /// two faces traverse them in the same direction.
    pub fn edge_report(&self) -> EdgeReport {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        let mut undirected: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (&(a, b), &c) in &directed {
            let e = undirected.entry((a.min(b), a.max(b))).or_default();
            if a < b {
                e.0 += c;
            } else {
                e.1 += c;
            }
        }
        let mut report = EdgeReport {
            edges: undirected.len(),
            ..EdgeReport::default()
        };
        for &(fwd, back) in undirected.values() {
            if fwd + back != 2 {
                report.boundary_or_nonmanifold += 1;
            } else if fwd != 1 {
                report.inconsistent += 1;
            }
        }
        report
    }

    /// `V - E + F` over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &i in f {
                used[i] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_report().edges as i64 + self.faces.len() as i64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeReport {
    pub edges: usize,
    pub boundary_or_nonmanifold: usize,
    pub inconsistent: usize,
}

impl EdgeReport {
    pub fn is_watertight(&self) -> bool {
        self.boundary_or_nonmanifold == 0 && self.inconsistent == 0
    }
}

/// A list of finite 3D points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidArgument(format!("point {i} is not finite")));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub(crate) fn from_trusted(points: Vec<Vec3>) -> Self {
        PointCloud { points }
    }
}

/// `x -> scale * R * x + t` with `R` a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
    scale: f64,
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    #[serde(default = "one")]
    scale: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = Error;

    fn try_from(r: TransformRepr) -> Result<Self> {
        let m = Mat3::from_fn(|i, j| r.rotation[i][j]);
        RigidTransform::new(m, Vec3::from(r.translation), r.scale)
    }
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        TransformRepr {
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| t.rotation[(i, j)])),
            translation: t.translation.into(),
            scale: t.scale,
        }
    }
}

pub const ROTATION_TOLERANCE: f64 = 1e-9;

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidTransform(format!("scale must be positive, got {scale}")));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        let ortho = (rotation * rotation.transpose() - Mat3::identity()).abs().max();
        if !(ortho <= ROTATION_TOLERANCE) {
            return Err(Error::InvalidTransform(format!("rotation not orthonormal (error {ortho:e})")));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= ROTATION_TOLERANCE) {
            return Err(Error::InvalidTransform(format!("rotation determinant is {det}")));
        }
        Ok(RigidTransform {
            rotation,
            translation,
            scale,
        })
    }

    /// Builds from a matrix that is a rotation up to rounding, projecting it
    /// back onto SO(3).
    pub fn from_approx_rotation(rotation: &Mat3, translation: Vec3, scale: f64) -> Result<Self> {
        RigidTransform::new(nearest_rotation(rotation), translation, scale)
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            scale: 1.0,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        RigidTransform {
            translation: t,
            ..RigidTransform::identity()
        }
    }

    /// Rotation of `angle` radians about `axis`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        RigidTransform {
            rotation: *r.matrix(),
            ..RigidTransform::identity()
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.scale * (self.rotation * x) + self.translation
    }

    /// Applies only the linear part (for directions).
    #[inline]
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.scale * (self.rotation * v)
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * first.rotation,
            translation: self.scale * (self.rotation * first.translation) + self.translation,
            scale: self.scale * first.scale,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
            scale: 1.0 / self.scale,
        }
    }

    /// Rotation angle in radians of `R`.
    pub fn rotation_angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Nearest proper rotation to `m` in the Frobenius norm.
pub(crate) fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = (u * v_t).determinant().signum();
    u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t
}

/// What a scalar field encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    /// Probability of being inside, in `[0, 1]`; surface at 0.5.
    Occupancy,
    /// Signed distance, negative inside; surface at 0.
    Sdf,
}

impl FieldKind {
    /// Iso level at which the surface is extracted.
    pub fn surface_level(self) -> f64 {
        match self {
            FieldKind::Occupancy => 0.5,
            FieldKind::Sdf => 0.0,
        }
    }

    /// Whether values above the iso level mean "inside".
    pub fn inside_is_high(self) -> bool {
        matches!(self, FieldKind::Occupancy)
    }
}

/// An implicit shape: a deterministic map from points to scalars. Must be
/// safe to query from several threads at once.
pub trait ScalarField: Send + Sync {
    fn kind(&self) -> FieldKind;
    fn value(&self, p: &Vec3) -> f64;
}

/// Adapts a closure into a [`ScalarField`].
pub struct FnField<F> {
    kind: FieldKind,
    f: F,
}

impl<F: Fn(&Vec3) -> f64 + Send + Sync> FnField<F> {
    pub fn new(kind: FieldKind, f: F) -> Self {
        FnField { kind, f }
    }
}

impl<F: Fn(&Vec3) -> f64 + Send + Sync> ScalarField for FnField<F> {
    fn kind(&self) -> FieldKind {
        self.kind
    }

    fn value(&self, p: &Vec3) -> f64 {
        (self.f)(p)
    }
}

impl<T: ScalarField + ?Sized> ScalarField for Box<T> {
    fn kind(&self) -> FieldKind {
        (**self).kind()
    }

    fn value(&self, p: &Vec3) -> f64 {
        (**self).value(p)
    }
}

/// Scalars sampled on a regular lattice spanning `bounds` inclusively.
/// Storage is x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    resolution: [usize; 3],
    bounds: Aabb,
    kind: FieldKind,
    values: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(resolution: [usize; 3], bounds: Aabb, kind: FieldKind, values: Vec<f64>) -> Result<Self> {
        if resolution.iter().any(|&n| n < 2) {
            return Err(Error::InvalidGrid(format!(
                "resolution must be at least 2 per axis, got {resolution:?}"
            )));
        }
        if !bounds.is_valid() {
            return Err(Error::InvalidGrid("bounds must satisfy min < max per axis".into()));
        }
        let n: usize = resolution.iter().product();
        if values.len() != n {
            return Err(Error::InvalidGrid(format!("expected {n} values, got {}", values.len())));
        }
        Ok(VoxelGrid {
            resolution,
            bounds,
            kind,
            values,
        })
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Lattice spacing per axis.
    pub fn spacing(&self) -> Vec3 {
        let e = self.bounds.extent();
        Vec3::new(
            e.x / (self.resolution[0] - 1) as f64,
            e.y / (self.resolution[1] - 1) as f64,
            e.z / (self.resolution[2] - 1) as f64,
        )
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.resolution[0] * (y + self.resolution[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    /// World position of lattice node `(x, y, z)`.
    #[inline]
    pub fn point(&self, x: usize, y: usize, z: usize) -> Vec3 {
        lattice_point(&self.bounds, self.resolution, [x, y, z])
    }

    pub(crate) fn with_kind_and_values(&self, kind: FieldKind, values: Vec<f64>) -> VoxelGrid {
        VoxelGrid {
            resolution: self.resolution,
            bounds: self.bounds,
            kind,
            values,
        }
    }
}

/// Lattice node position; the last node lands exactly on `bounds.max`.
#[inline]
pub(crate) fn lattice_point(bounds: &Aabb, res: [usize; 3], idx: [usize; 3]) -> Vec3 {
    Vec3::from_fn(|a, _| {
        let n = res[a] - 1;
        if idx[a] == n {
            bounds.max[a]
        } else {
            bounds.min[a] + (bounds.max[a] - bounds.min[a]) * (idx[a] as f64 / n as f64)
        }
    })
}

/// A [`VoxelGrid`] holding signed distances (negative inside).
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid(VoxelGrid);

impl SdfGrid {
    pub fn new(grid: VoxelGrid) -> Result<Self> {
        if grid.kind() != FieldKind::Sdf {
            return Err(Error::InvalidGrid("SdfGrid requires a grid of kind sdf".into()));
        }
        Ok(SdfGrid(grid))
    }

    pub fn into_inner(self) -> VoxelGrid {
        self.0
    }
}

impl Deref for SdfGrid {
    type Target = VoxelGrid;

    fn deref(&self) -> &VoxelGrid {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_intrinsics_matrix() {
        let k = CameraIntrinsics::from_parts(1.0, 1.0, 0.0, 0.0, 1, 1).unwrap();
        assert_eq!(k.matrix(), Mat3::identity());
    }

    #[test]
    fn explicit_intrinsics_matrix() {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap();
        assert_eq!(
            k.matrix(),
            Mat3::new(100.0, 0.0, 50.0, 0.0, 100.0, 50.0, 0.0, 0.0, 1.0)
        );
        let id = k.matrix() * k.inverse_matrix();
        assert!((id - Mat3::identity()).abs().max() < 1e-12);
        let c = k.inverse_matrix() * Vec3::new(50.0, 50.0, 1.0);
        assert_eq!(c, Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, -1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, -0.1, 4, 4).is_err());
    }

    #[test]
    fn full_frame_crop_is_identity() {
        let k = CameraIntrinsics::new(500.0, 480.0, 300.0, 290.0, 600, 600).unwrap();
        let k2 = k.adjust_for_crop_resize(&CropBox::full(600, 600), (600, 600)).unwrap();
        assert_eq!(k, k2);
    }

    #[test]
    fn full_frame_resize_scales_focal_and_center() {
        let k = CameraIntrinsics::new(500.0, 500.0, 300.0, 300.0, 600, 600).unwrap();
        let k2 = k.adjust_for_crop_resize(&CropBox::full(600, 600), (224, 224)).unwrap();
        let s = 224.0 / 600.0;
        assert!((k2.fx - 500.0 * s).abs() < 1e-12);
        assert!((k2.cx - 300.0 * s).abs() < 1e-12);
        assert_eq!((k2.width, k2.height), (224, 224));
    }

    #[test]
    fn crop_outside_image_is_rejected() {
        let k = CameraIntrinsics::new(500.0, 500.0, 300.0, 300.0, 600, 600).unwrap();
        let err = k.adjust_for_crop_resize(&CropBox::new(500.0, 0.0, 200.0, 200.0), (224, 224));
        assert!(matches!(err, Err(Error::CropOutOfBounds { .. })));
        assert!(k.crop_resize_unbounded(&CropBox::new(500.0, 0.0, 200.0, 200.0), (224, 224)).is_ok());
    }

    #[test]
    fn mesh_filters_degenerate_faces() {
        let v = vec![
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        let m = TriangleMesh::new(v.clone(), vec![[0, 1, 2], [0, 1, 1], [0, 1, 3]]).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
        assert!(TriangleMesh::new(v, vec![[0, 1, 9]]).is_err());
    }

    #[test]
    fn transform_validation() {
        assert!(RigidTransform::new(Mat3::identity() * 2.0, Vec3::zeros(), 1.0).is_err());
        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(reflect, Vec3::zeros(), 1.0).is_err());
        assert!(RigidTransform::new(Mat3::identity(), Vec3::zeros(), 0.0).is_err());
    }

    #[test]
    fn transform_inverse_and_compose() {
        let a = RigidTransform::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.7)
            .compose(&RigidTransform::from_translation(Vec3::new(0.5, -1.0, 2.0)));
        let a = RigidTransform::new(*a.rotation(), *a.translation(), 2.5).unwrap();
        let p = Vec3::new(0.3, -0.2, 0.9);
        let back = a.inverse().apply(&a.apply(&p));
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn transform_json_round_trip() {
        let t = RigidTransform::from_axis_angle(&Vec3::z(), 0.3);
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"rotation\""));
        let back: RigidTransform = serde_json::from_str(&s).unwrap();
        assert!((back.rotation() - t.rotation()).abs().max() < 1e-15);
        let bad = r#"{"rotation":[[2,0,0],[0,1,0],[0,0,1]],"translation":[0,0,0]}"#;
        assert!(serde_json::from_str::<RigidTransform>(bad).is_err());
    }

    #[test]
    fn voxel_grid_validation() {
        let b = Aabb::cube(1.0);
        assert!(VoxelGrid::new([1, 2, 2], b, FieldKind::Sdf, vec![0.0; 4]).is_err());
        assert!(VoxelGrid::new([2, 2, 2], b, FieldKind::Sdf, vec![0.0; 7]).is_err());
        let g = VoxelGrid::new([2, 2, 2], b, FieldKind::Sdf, vec![0.0; 8]).unwrap();
        assert_eq!(g.point(1, 1, 1), Vec3::repeat(1.0));
        assert!(SdfGrid::new(g.with_kind_and_values(FieldKind::Occupancy, vec![0.0; 8])).is_err());
    }

    #[test]
    fn depth_map_rejects_non_finite_masked() {
        assert!(DepthMap::new(2, 1, vec![1.0, f64::NAN], vec![true, true]).is_err());
        assert!(DepthMap::new(2, 1, vec![1.0, f64::NAN], vec![true, false]).is_ok());
    }
}
