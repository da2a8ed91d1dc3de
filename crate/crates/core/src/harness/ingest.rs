use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_benchmark, BenchmarkInstance, FailureReason, InstanceFailure, Manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::io;
use crate::math::{Mat3, Vec3};
use crate::types::{CameraIntrinsics, RigidTransform, TriangleMesh};

/// How instances are laid out in the source directory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// `manifest.json` with camera-frame meshes, as written by this crate.
    #[default]
    Unified,
    /// `<id>/mesh.{obj,ply}` in an object frame plus `<id>/camera.json`
    /// (`intrinsics`, `pose`, optional `category`) and optional
    /// `<id>/depth.json`.
    PerInstance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    #[default]
    M,
    Cm,
    Mm,
}

impl LengthUnit {
    pub fn to_metres(self) -> f64 {
        match self {
            LengthUnit::M => 1.0,
            LengthUnit::Cm => 0.01,
            LengthUnit::Mm => 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpAxis {
    #[default]
    Y,
    Z,
}

/// Camera axis convention of the source poses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraConvention {
    /// +x right, +y down, +z forward.
    #[default]
    Opencv,
    /// +x right, +y up, looking down -z.
    Opengl,
}

/// Declared conventions of a source dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConventionSpec {
    pub layout: Layout,
    /// Unit of mesh coordinates, pose translations and depth.
    pub unit: LengthUnit,
    /// Up axis of the mesh files (per-instance layout only).
    pub mesh_up_axis: UpAxis,
    /// Up axis of the world frame the poses were authored in.
    pub pose_up_axis: UpAxis,
    pub camera: CameraConvention,
    pub source_tag: Option<String>,
}

impl Default for ConventionSpec {
    fn default() -> Self {
        ConventionSpec {
            layout: Layout::Unified,
            unit: LengthUnit::M,
            mesh_up_axis: UpAxis::Y,
            pose_up_axis: UpAxis::Y,
            camera: CameraConvention::Opencv,
            source_tag: None,
        }
    }
}

impl ConventionSpec {
    /// Rotation taking mesh-file coordinates into the pose world frame.
    fn up_conversion(&self) -> Mat3 {
        match (self.mesh_up_axis, self.pose_up_axis) {
            // (x, y, z) -> (x, z, -y)
            (UpAxis::Z, UpAxis::Y) => Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0),
            // (x, y, z) -> (x, -z, y)
            (UpAxis::Y, UpAxis::Z) => Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0),
            _ => Mat3::identity(),
        }
    }

    /// Source camera frame (source units) to the output camera frame (metres).
    fn camera_conversion(&self) -> RigidTransform {
        let g = match self.camera {
            CameraConvention::Opencv => Mat3::identity(),
            CameraConvention::Opengl => Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)),
        };
        RigidTransform::new(g, Vec3::zeros(), self.unit.to_metres()).expect("axis flip is a rotation")
    }
}

#[derive(Debug, Clone, Deserialize)]
struct PerInstanceCamera {
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    intrinsics: Option<CameraIntrinsics>,
    #[serde(default = "RigidTransform::identity")]
    pose: RigidTransform,
}

struct SourceInstance {
    id: String,
    category: String,
    mesh: PathBuf,
    depth: Option<PathBuf>,
    intrinsics: Option<CameraIntrinsics>,
    /// Mesh-file coordinates to source camera frame.
    mesh_to_camera: RigidTransform,
    /// Recorded pose before conversion.
    pose: RigidTransform,
    source: String,
}

fn list_sources(src: &Path, spec: &ConventionSpec) -> Result<(Vec<SourceInstance>, Vec<InstanceFailure>)> {
    let tag = spec.source_tag.clone();
    match spec.layout {
        Layout::Unified => {
            let manifest: Manifest = io::read_json(&src.join("manifest.json"))?;
            let items = manifest
                .instances
                .into_iter()
                .map(|e| SourceInstance {
                    mesh: src.join(&e.mesh),
                    depth: e.depth.as_ref().map(|d| src.join(d)),
                    intrinsics: e.intrinsics,
                    mesh_to_camera: RigidTransform::identity(),
                    pose: e.pose,
                    source: tag.clone().unwrap_or(e.source),
                    id: e.id,
                    category: e.category,
                })
                .collect();
            Ok((items, manifest.flagged))
        }
        Layout::PerInstance => {
            let mut dirs: Vec<PathBuf> = fs::read_dir(src)
                .map_err(|e| Error::io(src, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            dirs.sort();
            let mut items = Vec::new();
            let mut flagged = Vec::new();
            let up = RigidTransform::new(spec.up_conversion(), Vec3::zeros(), 1.0).expect("axis swap is a rotation");
            for d in dirs {
                let id = d.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let cam: PerInstanceCamera = match io::read_json(&d.join("camera.json")) {
                    Ok(c) => c,
                    Err(e) => {
                        flagged.push(InstanceFailure::new(&id, FailureReason::InconsistentMetadata, e));
                        continue;
                    }
                };
                let mesh = ["mesh.obj", "mesh.ply"].iter().map(|n| d.join(n)).find(|p| p.is_file());
                let Some(mesh) = mesh else {
                    flagged.push(InstanceFailure::new(&id, FailureReason::MeshLoad, "no mesh.obj or mesh.ply"));
                    continue;
                };
                let depth = Some(d.join("depth.json")).filter(|p| p.is_file());
                items.push(SourceInstance {
                    category: cam.category.unwrap_or_else(|| "default".into()),
                    mesh,
                    depth,
                    intrinsics: cam.intrinsics,
                    mesh_to_camera: cam.pose.compose(&up),
                    pose: cam.pose,
                    source: tag.clone().unwrap_or_else(|| src.display().to_string()),
                    id,
                });
            }
            Ok((items, flagged))
        }
    }
}

fn convert_instance(s: &SourceInstance, spec: &ConventionSpec, out: &Path) -> std::result::Result<ManifestEntry, InstanceFailure> {
    let to_out = spec.camera_conversion();
    let mesh = (|| -> Result<TriangleMesh> {
        let m = io::read_mesh(&s.mesh)?;
        if m.is_empty() {
            return Err(Error::InvalidMesh(format!("{} has no faces", s.mesh.display())));
        }
        m.transformed(&to_out.compose(&s.mesh_to_camera))
    })()
    .map_err(|e| InstanceFailure::new(&s.id, FailureReason::MeshLoad, e))?;
    write_instance(s, spec, out, &to_out, &mesh).map_err(|e| InstanceFailure::new(&s.id, FailureReason::InconsistentMetadata, e))
}

fn write_instance(
    s: &SourceInstance,
    spec: &ConventionSpec,
    out: &Path,
    to_out: &RigidTransform,
    mesh: &TriangleMesh,
) -> Result<ManifestEntry> {
    let depth = s.depth.as_ref().map(|p| io::read_depth_map(p)).transpose()?;
    let depth = depth.map(|d| d.map_masked(|v| v * spec.unit.to_metres())).transpose()?;
    let inst = BenchmarkInstance {
        id: s.id.clone(),
        category: s.category.clone(),
        mesh_path: PathBuf::new(),
        depth: depth.clone(),
        intrinsics: s.intrinsics,
        pose: s.pose,
        source: s.source.clone(),
    };
    inst.validate()?;

    let dir = out.join(&s.id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    io::write_mesh(&dir.join("mesh.obj"), mesh)?;
    if let Some(d) = &depth {
        io::write_depth_map(&dir.join("depth.raw"), d)?;
    }
    let pose = match spec.layout {
        Layout::Unified => to_out.compose(&s.pose),
        Layout::PerInstance => to_out.compose(&s.mesh_to_camera),
    };
    Ok(ManifestEntry {
        id: s.id.clone(),
        category: s.category.clone(),
        mesh: format!("{}/mesh.obj", s.id),
        depth: depth.as_ref().map(|_| format!("{}/depth.json", s.id)),
        intrinsics: s.intrinsics,
        pose,
        source: s.source.clone(),
        provenance: Some(format!(
            "{} ({:?} layout, unit {:?}, mesh up {:?}, pose up {:?}, {:?} camera)",
            s.mesh.display(),
            spec.layout,
            spec.unit,
            spec.mesh_up_axis,
            spec.pose_up_axis,
            spec.camera
        )),
    })
}

/// Converts `src` into a unified benchmark directory at `out` and loads
/// it back. Problems with individual instances are flagged in the manifest
/// and returned; the remaining instances are still ingested.
pub fn ingest_dataset(
    src: &Path,
    spec: &ConventionSpec,
    out: &Path,
) -> Result<(Vec<BenchmarkInstance>, Vec<InstanceFailure>)> {
    let (sources, mut flagged) = list_sources(src, spec)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = Manifest::new();
    for s in &sources {
        match convert_instance(s, spec, out) {
            Ok(e) => manifest.instances.push(e),
            Err(f) => flagged.push(f),
        }
    }
    flagged.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    manifest.flagged = flagged;
    io::write_json(&out.join("manifest.json"), &manifest)?;
    load_benchmark(out)
}
