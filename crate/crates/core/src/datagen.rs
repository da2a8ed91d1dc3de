//! Synthetic ground truth without an external renderer: camera sampling,
//! ray-cast depth and masks, and crop/resize bookkeeping.
//!
//! World frame is the normalized mesh frame, z up. Camera frame is +x
//! right, +y down, +z forward.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvh::Bvh;
use crate::error::{Error, Result};
use crate::fields::{sdf_from_mesh, SDF_RESOLUTION};
use crate::geometry::{unproject, NormalizationRecord, MIN_SURFACE_POINTS};
use crate::harness::{Manifest, ManifestEntry};
use crate::io;
use crate::math::{Aabb, Mat3, Vec3};
use crate::metrics::derive_seed;
use crate::types::{CameraIntrinsics, CropBox, DepthMap, ProjectionMap, RigidTransform, TriangleMesh};

/// Distribution of cameras around a normalized object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSampleConfig {
    /// 35mm-equivalent focal length range, millimetres.
    pub focal_mm: [f64; 2],
    pub sensor_width_mm: f64,
    /// Elevation above the xy plane, degrees.
    pub elevation_deg: [f64; 2],
    pub azimuth_deg: [f64; 2],
    /// Camera-to-target distance in multiples of `object_radius`.
    pub distance_radii: [f64; 2],
    /// Look-at jitter ball radius in multiples of `object_radius`.
    pub jitter_radii: f64,
    /// Bounding radius of the normalized object (half-diagonal of the unit cube).
    pub object_radius: f64,
    /// `[width, height]` in pixels.
    pub image_size: [usize; 2],
    pub seed: u64,
}

impl Default for CameraSampleConfig {
    fn default() -> Self {
        CameraSampleConfig {
            focal_mm: [30.0, 70.0],
            sensor_width_mm: 36.0,
            elevation_deg: [5.0, 65.0],
            azimuth_deg: [0.0, 360.0],
            distance_radii: [1.5, 3.5],
            jitter_radii: 0.2,
            object_radius: 3f64.sqrt() / 2.0,
            image_size: [600, 600],
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} range {r:?} must be finite with min <= max")))
    }
}

impl CameraSampleConfig {
    pub fn validate(&self) -> Result<()> {
        check_range("focal", self.focal_mm)?;
        check_range("elevation", self.elevation_deg)?;
        check_range("azimuth", self.azimuth_deg)?;
        check_range("distance", self.distance_radii)?;
        if self.focal_mm[0] <= 0.0 || !(self.sensor_width_mm > 0.0) {
            return Err(Error::InvalidArgument("focal length and sensor width must be positive".into()));
        }
        if self.elevation_deg[0] <= -90.0 || self.elevation_deg[1] >= 90.0 {
            return Err(Error::InvalidArgument("elevation must lie strictly between -90 and 90 degrees".into()));
        }
        if self.distance_radii[0] <= 0.0 || !(self.object_radius > 0.0) {
            return Err(Error::InvalidArgument("distance and object radius must be positive".into()));
        }
        if !(self.jitter_radii >= 0.0 && self.jitter_radii.is_finite()) {
            return Err(Error::InvalidArgument("jitter must be finite and non-negative".into()));
        }
        if self.image_size[0] == 0 || self.image_size[1] == 0 {
            return Err(Error::InvalidArgument("image size must be at least 1x1".into()));
        }
        Ok(())
    }
}

/// Centers the bounding box at the origin and scales its longest edge to 1.
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<TriangleMesh> {
    if mesh.is_empty() {
        return Err(Error::Empty("cannot normalize an empty mesh".into()));
    }
    let b = mesh.bounds();
    let longest = b.extent().max();
    if !(longest > 0.0) {
        return Err(Error::Degenerate("mesh has zero extent".into()));
    }
    let c = b.center();
    mesh.map_vertices(|v| (v - c) / longest)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    r[0] + (r[1] - r[0]) * rng.gen::<f64>()
}

/// World-to-camera pose for a camera at `eye` looking at `target`, with
/// world +z projecting upward in the image.
pub fn look_at(eye: &Vec3, target: &Vec3) -> Result<RigidTransform> {
    let f = (target - eye).try_normalize(1e-12).ok_or_else(|| Error::Degenerate("eye coincides with target".into()))?;
    let right = f
        .cross(&Vec3::z())
        .try_normalize(1e-9)
        .ok_or_else(|| Error::Degenerate("view direction parallel to the up axis".into()))?;
    let down = f.cross(&right);
    let r = Mat3::from_rows(&[right.transpose(), down.transpose(), f.transpose()]);
    RigidTransform::new(r, -(r * eye), 1.0)
}

/// Draws intrinsics and a world-to-camera pose from `cfg`.
pub fn sample_camera<R: Rng + ?Sized>(cfg: &CameraSampleConfig, rng: &mut R) -> Result<(CameraIntrinsics, RigidTransform)> {
    cfg.validate()?;
    let [w, h] = cfg.image_size;
    let f_mm = uniform(rng, cfg.focal_mm);
    let fx = f_mm / cfg.sensor_width_mm * w as f64;
    let k = CameraIntrinsics::new(fx, fx, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, w, h)?;

    let elev = uniform(rng, cfg.elevation_deg).to_radians();
    let azim = uniform(rng, cfg.azimuth_deg).to_radians();
    let dist = uniform(rng, cfg.distance_radii) * cfg.object_radius;
    let jitter = cfg.jitter_radii * cfg.object_radius;
    let target = if jitter > 0.0 {
        loop {
            let v = Vec3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()) * 2.0 - Vec3::repeat(1.0);
            if v.norm_squared() <= 1.0 {
                break v * jitter;
            }
        }
    } else {
        Vec3::zeros()
    };
    let dir = Vec3::new(elev.cos() * azim.cos(), elev.cos() * azim.sin(), elev.sin());
    let pose = look_at(&(target + dir * dist), &target)?;
    Ok((k, pose))
}

/// Casts one ray per pixel through `K^-1 [i, j, 1]` and records the
/// camera-frame depth of the nearest hit. Missed pixels are unmasked.
pub fn raycast_depth(mesh: &TriangleMesh, k: &CameraIntrinsics, pose: &RigidTransform) -> Result<DepthMap> {
    if mesh.is_empty() {
        return Err(Error::Empty("cannot render an empty mesh".into()));
    }
    let bvh = Bvh::new(&mesh.transformed(pose)?);
    let (w, h) = (k.width, k.height);
    let rows: Vec<Vec<Option<f64>>> = (0..h)
        .into_par_iter()
        .map(|j| {
            (0..w)
                .map(|i| {
                    let dir = k.ray(i as f64, j as f64);
                    bvh.raycast(&Vec3::zeros(), &dir, f64::INFINITY).map(|hit| hit.t)
                })
                .collect()
        })
        .collect();
    DepthMap::from_fn(w, h, |i, j| rows[j][i])
}

/// One rendered view with everything needed for supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderSample {
    pub intrinsics: CameraIntrinsics,
    /// World-to-camera.
    pub pose: RigidTransform,
    pub depth: DepthMap,
    /// `unproject(depth, intrinsics)`.
    pub projection: ProjectionMap,
    /// Visible-surface normalization of `projection`.
    pub normalization: NormalizationRecord,
    pub mesh_path: Option<PathBuf>,
}

fn finish_sample(
    depth: DepthMap,
    intrinsics: CameraIntrinsics,
    pose: RigidTransform,
    mesh_path: Option<PathBuf>,
) -> Result<RenderSample> {
    let projection = unproject(&depth, &intrinsics)?;
    let pts = projection.masked_points();
    if pts.len() < MIN_SURFACE_POINTS {
        return Err(Error::Empty(format!(
            "object covers {} pixels, need at least {MIN_SURFACE_POINTS}",
            pts.len()
        )));
    }
    let normalization = NormalizationRecord::fit(&pts)?;
    Ok(RenderSample {
        intrinsics,
        pose,
        depth,
        projection,
        normalization,
        mesh_path,
    })
}

/// Renders depth, mask and projection map of `mesh` (world frame).
pub fn render_sample(
    mesh: &TriangleMesh,
    k: &CameraIntrinsics,
    pose: &RigidTransform,
    mesh_path: Option<PathBuf>,
) -> Result<RenderSample> {
    let depth = raycast_depth(mesh, k, pose)?;
    finish_sample(depth, *k, *pose, mesh_path)
}

/// Pixel bounding box `(i_min, j_min, i_max, j_max)` of the mask, inclusive.
pub fn mask_bbox(depth: &DepthMap) -> Option<(usize, usize, usize, usize)> {
    let w = depth.width();
    let mut bb: Option<(usize, usize, usize, usize)> = None;
    for (idx, _) in depth.mask().iter().enumerate().filter(|(_, &m)| m) {
        let (i, j) = (idx % w, idx / w);
        bb = Some(match bb {
            None => (i, j, i, j),
            Some((a, b, c, d)) => (a.min(i), b.min(j), c.max(i), d.max(j)),
        });
    }
    bb
}

/// Square crop around the mask bounding box, widened by `margin` (a
/// fraction of the box side on each edge) and resized to `out_size` with
/// nearest-neighbour depth sampling. Crops may extend past the image;
/// padded pixels are unmasked.
pub fn crop_and_resize(sample: &RenderSample, out_size: (usize, usize), margin: f64) -> Result<RenderSample> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidArgument(format!("crop margin must be non-negative, got {margin}")));
    }
    let (i0, j0, i1, j1) = mask_bbox(&sample.depth).ok_or_else(|| Error::Empty("mask touches no pixels".into()))?;
    let side = ((i1 - i0 + 1).max(j1 - j0 + 1)) as f64 * (1.0 + 2.0 * margin);
    let center = ((i0 + i1) as f64 / 2.0, (j0 + j1) as f64 / 2.0);
    // Place the bbox center on the output's central pixel coordinate.
    let sx = out_size.0 as f64 / side;
    let sy = out_size.1 as f64 / side;
    let crop = CropBox::new(
        center.0 - (out_size.0 as f64 - 1.0) / (2.0 * sx),
        center.1 - (out_size.1 as f64 - 1.0) / (2.0 * sy),
        side,
        side,
    );
    crop_and_resize_with_box(sample, &crop, out_size)
}

/// [`crop_and_resize`] with an explicit crop box.
pub fn crop_and_resize_with_box(sample: &RenderSample, crop: &CropBox, out_size: (usize, usize)) -> Result<RenderSample> {
    if sample.depth.masked_count() == 0 {
        return Err(Error::Empty("mask touches no pixels".into()));
    }
    let k = &sample.intrinsics;
    let k2 = k.crop_resize_unbounded(crop, out_size)?;
    let sx = out_size.0 as f64 / crop.width;
    let sy = out_size.1 as f64 / crop.height;
    let src = &sample.depth;
    let (w, h) = (src.width() as f64, src.height() as f64);
    let depth = DepthMap::from_fn(out_size.0, out_size.1, |u, v| {
        let i = (u as f64 / sx + crop.x).round();
        let j = (v as f64 / sy + crop.y).round();
        if i < 0.0 || j < 0.0 || i >= w || j >= h {
            return None;
        }
        src.get(i as usize, j as usize)
    })?;
    let out = finish_sample(depth, k2, sample.pose, sample.mesh_path.clone())?;

    // Each output ray must stay within one source pixel of the ray it copied
    // depth from.
    let footprint = (1.0 / k.fx).max(1.0 / k.fy);
    for v in 0..out_size.1 {
        for u in 0..out_size.0 {
            let Some(d) = out.depth.get(u, v) else { continue };
            let i = (u as f64 / sx + crop.x).round();
            let j = (v as f64 / sy + crop.y).round();
            let before = k.ray(i, j) * d;
            let after = out.projection.get(u, v).expect("masked pixel");
            if (after - before).norm() > d * footprint + 1e-9 * (1.0 + d) {
                return Err(Error::Postcondition(format!(
                    "cropped pixel ({u}, {v}) drifted {} from its source point",
                    (after - before).norm()
                )));
            }
        }
    }
    Ok(out)
}

/// Output crop settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropConfig {
    pub size: usize,
    pub margin: f64,
}

impl Default for CropConfig {
    fn default() -> Self {
        CropConfig { size: 224, margin: 0.1 }
    }
}

/// Settings for [`generate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatagenConfig {
    pub camera: CameraSampleConfig,
    pub views_per_object: usize,
    /// `None` keeps the full frame.
    pub crop: Option<CropConfig>,
    pub sdf_resolution: usize,
    /// Padding around the unit cube for the SDF lattice.
    pub sdf_padding: f64,
    /// Camera redraws allowed when a view misses the object.
    pub max_attempts: usize,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            camera: CameraSampleConfig::default(),
            views_per_object: 1,
            crop: Some(CropConfig::default()),
            sdf_resolution: SDF_RESOLUTION,
            sdf_padding: 0.05,
            max_attempts: 16,
        }
    }
}

/// Camera metadata written next to each sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub intrinsics: CameraIntrinsics,
    pub pose: RigidTransform,
    pub normalization: NormalizationRecord,
    pub source_mesh: Option<PathBuf>,
}

/// What [`generate_dataset`] produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatagenSummary {
    pub samples: Vec<String>,
    /// `(object or sample id, reason)`.
    pub skipped: Vec<(String, String)>,
}

/// Mesh files under `dir`: `*.obj`/`*.ply` at the top level (category
/// `default`) or one directory deep (category = directory name). Sorted.
pub fn discover_meshes(dir: &Path) -> Result<Vec<(String, String, PathBuf)>> {
    let is_mesh = |p: &Path| {
        matches!(
            p.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).as_deref(),
            Some("obj" | "ply")
        )
    };
    let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            let cat = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            for sub in fs::read_dir(&p).map_err(|e| Error::io(&p, e))? {
                let q = sub.map_err(|e| Error::io(&p, e))?.path();
                if q.is_file() && is_mesh(&q) {
                    out.push((format!("{cat}-{}", stem(&q)), cat.clone(), q));
                }
            }
        } else if is_mesh(&p) {
            out.push((stem(&p), "default".to_string(), p));
        }
    }
    out.sort();
    Ok(out)
}

/// Renders `views_per_object` samples of every mesh under `mesh_dir` into
/// `out_dir/<id>/`, and writes `out_dir/manifest.json` so the output can be
/// used directly as a benchmark directory.
pub fn generate_dataset(mesh_dir: &Path, out_dir: &Path, cfg: &DatagenConfig) -> Result<DatagenSummary> {
    cfg.camera.validate()?;
    if cfg.views_per_object == 0 {
        return Err(Error::InvalidArgument("views_per_object must be at least 1".into()));
    }
    let meshes = discover_meshes(mesh_dir)?;
    if meshes.is_empty() {
        return Err(Error::Empty(format!("no .obj or .ply meshes in {}", mesh_dir.display())));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    type ObjectOutput = (Vec<ManifestEntry>, Vec<(String, String)>);
    let per_object: Vec<ObjectOutput> = meshes
        .par_iter()
        .enumerate()
        .map(|(idx, (name, category, path))| match generate_object(idx, name, category, path, out_dir, cfg) {
            Ok(r) => r,
            Err(e) => (Vec::new(), vec![(name.clone(), e.to_string())]),
        })
        .collect();

    let mut summary = DatagenSummary::default();
    let mut manifest = Manifest::new();
    for (entries, skipped) in per_object {
        summary.samples.extend(entries.iter().map(|e| e.id.clone()));
        manifest.instances.extend(entries);
        summary.skipped.extend(skipped);
    }
    io::write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(summary)
}

type ObjectOutput = (Vec<ManifestEntry>, Vec<(String, String)>);

fn generate_object(
    idx: usize,
    name: &str,
    category: &str,
    path: &Path,
    out_dir: &Path,
    cfg: &DatagenConfig,
) -> Result<ObjectOutput> {
    let mesh = normalize_mesh(&io::read_mesh(path)?)?;
    let half = 0.5 + cfg.sdf_padding;
    let r = cfg.sdf_resolution;
    let sdf = sdf_from_mesh(&mesh, [r, r, r], Aabb::cube(half));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.camera.seed, idx as u64 + 1));
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    if let Err(e) = &sdf {
        skipped.push((name.to_string(), format!("sdf skipped: {e}")));
    }
    for view in 0..cfg.views_per_object {
        let id = format!("{name}_v{view:03}");
        let mut last_err = None;
        let mut sample = None;
        for _ in 0..cfg.max_attempts.max(1) {
            let (k, pose) = sample_camera(&cfg.camera, &mut rng)?;
            let rendered = render_sample(&mesh, &k, &pose, Some(path.to_path_buf())).and_then(|s| match cfg.crop {
                Some(c) => crop_and_resize(&s, (c.size, c.size), c.margin),
                None => Ok(s),
            });
            match rendered {
                Ok(s) => {
                    sample = Some(s);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        let Some(sample) = sample else {
            let reason = last_err.map(|e| e.to_string()).unwrap_or_default();
            skipped.push((id, reason));
            continue;
        };
        let dir = out_dir.join(&id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        io::write_depth_map(&dir.join("depth.raw"), &sample.depth)?;
        io::write_projection_map(&dir.join("projection.raw"), &sample.projection)?;
        if let Ok(sdf) = &sdf {
            io::write_voxel_grid(&dir.join("sdf.raw"), sdf)?;
        }
        io::write_mesh(&dir.join("mesh.obj"), &mesh.transformed(&sample.pose)?)?;
        let record = CameraRecord {
            intrinsics: sample.intrinsics,
            pose: sample.pose,
            normalization: sample.normalization,
            source_mesh: Some(path.to_path_buf()),
        };
        io::write_json(&dir.join("camera.json"), &record)?;
        entries.push(ManifestEntry {
            id: id.clone(),
            category: category.to_string(),
            mesh: format!("{id}/mesh.obj"),
            depth: Some(format!("{id}/depth.json")),
            intrinsics: Some(sample.intrinsics),
            pose: sample.pose,
            source: "datagen".to_string(),
            provenance: Some(format!("{} view {view}", path.display())),
        });
    }
    Ok((entries, skipped))
}
