use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BenchmarkInstance, FailureReason, HarnessConfig, InstanceFailure};
use crate::error::{Error, Result};
use crate::fields::{extract_surface, grid_sample};
use crate::geometry::NormalizationRecord;
use crate::io;
use crate::kdtree::KdTree;
use crate::math::Vec3;
use crate::shapes::{AnalyticField, AnalyticShape, ConstantField};
use crate::types::{FieldKind, ScalarField, TriangleMesh};

pub const DEFAULT_SHELL_EPS: f64 = 0.02;

fn default_shell_eps() -> f64 {
    DEFAULT_SHELL_EPS
}

fn occupancy() -> FieldKind {
    FieldKind::Occupancy
}

/// Frame an external prediction mesh is expressed in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionFrame {
    /// The instance camera frame (same as the ground-truth mesh).
    #[default]
    Camera,
    /// The visible-surface normalized frame.
    Normalized,
}

/// Stand-in reconstructors. Field predictors are evaluated in the
/// evaluation frame of each instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PredictorSpec {
    AnalyticShape {
        shape: AnalyticShape,
        #[serde(default = "occupancy")]
        field: FieldKind,
    },
    VisibleShell {
        #[serde(default = "default_shell_eps")]
        shell_eps: f64,
    },
    Constant {
        value: f64,
        #[serde(default = "occupancy")]
        field: FieldKind,
    },
    /// Meshes named `<id>.obj`, `<id>.ply`, `<id>/mesh.obj` or `<id>/mesh.ply`.
    ExternalMeshDir {
        dir: PathBuf,
        #[serde(default)]
        frame: PredictionFrame,
    },
}

/// Occupancy 1 within `shell_eps` of the normalized visible surface.
pub struct VisibleShell {
    tree: KdTree,
    eps_sq: f64,
}

impl ScalarField for VisibleShell {
    fn kind(&self) -> FieldKind {
        FieldKind::Occupancy
    }

    fn value(&self, p: &Vec3) -> f64 {
        if self.tree.any_within(p, self.eps_sq) {
            1.0
        } else {
            0.0
        }
    }
}

/// Shell field around the instance's visible surface, in its normalized frame.
pub fn visible_shell_predictor(instance: &BenchmarkInstance, shell_eps: f64) -> Result<VisibleShell> {
    if !(shell_eps > 0.0 && shell_eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("shell_eps must be positive, got {shell_eps}")));
    }
    let pts = instance
        .visible_points()?
        .ok_or_else(|| Error::InvalidArgument(format!("instance {} has no depth", instance.id)))?;
    let frame = instance.eval_frame()?;
    let normalized: Vec<Vec3> = pts.iter().map(|p| frame.apply(p)).collect();
    Ok(VisibleShell {
        tree: KdTree::new(&normalized),
        eps_sq: shell_eps * shell_eps,
    })
}

fn find_external(dir: &Path, id: &str) -> Option<PathBuf> {
    [
        dir.join(format!("{id}.obj")),
        dir.join(format!("{id}.ply")),
        dir.join(id).join("mesh.obj"),
        dir.join(id).join("mesh.ply"),
    ]
    .into_iter()
    .find(|p| p.is_file())
}

impl PredictorSpec {
    /// Predicted mesh in the evaluation frame `frame` of `inst`.
    pub fn predict(
        &self,
        inst: &BenchmarkInstance,
        frame: &NormalizationRecord,
        cfg: &HarnessConfig,
    ) -> std::result::Result<TriangleMesh, InstanceFailure> {
        let id = inst.id.as_str();
        let field: Box<dyn ScalarField> = match self {
            PredictorSpec::AnalyticShape { shape, field } => Box::new(AnalyticField { shape: *shape, kind: *field }),
            PredictorSpec::Constant { value, field } => Box::new(ConstantField {
                kind: *field,
                value: *value,
            }),
            PredictorSpec::VisibleShell { shell_eps } => {
                if inst.depth.is_none() {
                    return Err(InstanceFailure::new(id, FailureReason::MissingDepth, "visible-shell needs depth"));
                }
                let f = visible_shell_predictor(inst, *shell_eps)
                    .map_err(|e| InstanceFailure::new(id, FailureReason::InconsistentMetadata, e))?;
                Box::new(f)
            }
            PredictorSpec::ExternalMeshDir { dir, frame: pframe } => {
                let path = find_external(dir, id).ok_or_else(|| {
                    InstanceFailure::new(id, FailureReason::PredictionMissing, format!("no mesh for {id} in {}", dir.display()))
                })?;
                let load = |p: &Path| -> Result<TriangleMesh> {
                    let m = io::read_mesh(p)?;
                    match pframe {
                        PredictionFrame::Camera => m.transformed(&frame.as_transform()),
                        PredictionFrame::Normalized => Ok(m),
                    }
                };
                let m = load(&path).map_err(|e| InstanceFailure::new(id, FailureReason::PredictionLoad, e))?;
                if m.is_empty() {
                    return Err(InstanceFailure::new(id, FailureReason::EmptyExtraction, "prediction mesh has no faces"));
                }
                return Ok(m);
            }
        };
        let r = cfg.resolution;
        let grid = grid_sample(field.as_ref(), [r, r, r], cfg.bounds)
            .map_err(|e| InstanceFailure::new(id, FailureReason::Evaluation, e))?;
        let mesh = extract_surface(&grid);
        if mesh.is_empty() {
            return Err(InstanceFailure::new(id, FailureReason::EmptyExtraction, "predicted field has no surface"));
        }
        Ok(mesh)
    }
}
