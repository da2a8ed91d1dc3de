//! Benchmark runner: unified instance format, predictors, per-instance
//! evaluation and aggregate reports.
//!
//! A benchmark directory holds `manifest.json` plus one ground-truth mesh
//! per instance, expressed in that instance's camera frame (metres,
//! +x right, +y down, +z forward). Instances with depth are evaluated in
//! the visible-surface normalized frame, others in the camera frame.

mod ingest;
mod predictor;
mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ingest::{ingest_dataset, CameraConvention, ConventionSpec, Layout, LengthUnit, UpAxis};
pub use predictor::{visible_shell_predictor, PredictionFrame, PredictorSpec, VisibleShell, DEFAULT_SHELL_EPS};
pub use report::{Aggregate, EvalReport, InstanceRow, ThresholdMean};

use crate::alignment::AlignmentConfig;
use crate::error::{Error, Result};
use crate::fields::{eval_bounds, EVAL_RESOLUTION};
use crate::geometry::{unproject, NormalizationRecord, MIN_SURFACE_POINTS};
use crate::io;
use crate::math::{Aabb, Vec3};
use crate::metrics::{evaluate_pair, EvalConfig, DEFAULT_SAMPLE_POINTS, DEFAULT_THRESHOLDS};
use crate::types::{CameraIntrinsics, DepthMap, RigidTransform, TriangleMesh};

pub const UNIFIED_FORMAT: &str = "shape-eval-unified";
pub const UNIFIED_VERSION: u32 = 1;

/// One `manifest.json` record. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default = "default_category")]
    pub category: String,
    pub mesh: String,
    /// Depth sidecar (`.json`) path.
    #[serde(default)]
    pub depth: Option<String>,
    #[serde(default)]
    pub intrinsics: Option<CameraIntrinsics>,
    /// Source object frame to camera frame.
    #[serde(default = "RigidTransform::identity")]
    pub pose: RigidTransform,
    #[serde(default)]
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

fn default_category() -> String {
    "default".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub instances: Vec<ManifestEntry>,
    /// Instances rejected while building the directory.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<InstanceFailure>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest {
            format: UNIFIED_FORMAT.to_string(),
            version: UNIFIED_VERSION,
            instances: Vec::new(),
            flagged: Vec::new(),
        }
    }
}

impl Default for Manifest {
    fn default() -> Self {
        Self::new()
    }
}

/// Why an instance produced no metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    MeshLoad,
    MissingDepth,
    InconsistentMetadata,
    PredictionMissing,
    PredictionLoad,
    EmptyExtraction,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFailure {
    pub instance_id: String,
    pub reason: FailureReason,
    pub message: String,
}

impl InstanceFailure {
    pub fn new(id: &str, reason: FailureReason, message: impl ToString) -> Self {
        InstanceFailure {
            instance_id: id.to_string(),
            reason,
            message: message.to_string(),
        }
    }
}

/// A ground-truth shape with optional observation.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkInstance {
    pub id: String,
    pub category: String,
    /// Camera-frame ground-truth mesh.
    pub mesh_path: PathBuf,
    pub depth: Option<DepthMap>,
    pub intrinsics: Option<CameraIntrinsics>,
    pub pose: RigidTransform,
    pub source: String,
}

impl BenchmarkInstance {
    /// Checks that intrinsics are present exactly when depth is, with
    /// matching dimensions.
    pub fn validate(&self) -> Result<()> {
        match (&self.depth, &self.intrinsics) {
            (None, None) => Ok(()),
            (Some(d), Some(k)) if d.width() == k.width && d.height() == k.height => Ok(()),
            (Some(d), Some(k)) => Err(Error::DimensionMismatch(format!(
                "depth is {}x{} but intrinsics are {}x{}",
                d.width(),
                d.height(),
                k.width,
                k.height
            ))),
            (Some(_), None) => Err(Error::InvalidArgument("depth without intrinsics".into())),
            (None, Some(_)) => Err(Error::InvalidArgument("intrinsics without depth".into())),
        }
    }

    pub fn load_mesh(&self) -> Result<TriangleMesh> {
        let m = io::read_mesh(&self.mesh_path)?;
        if m.is_empty() {
            return Err(Error::InvalidMesh(format!("{} has no faces", self.mesh_path.display())));
        }
        Ok(m)
    }

    /// Camera-frame visible surface points, if depth is present.
    pub fn visible_points(&self) -> Result<Option<Vec<Vec3>>> {
        match (&self.depth, &self.intrinsics) {
            (Some(d), Some(k)) => Ok(Some(unproject(d, k)?.masked_points())),
            _ => Ok(None),
        }
    }

    /// Camera frame to evaluation frame.
    pub fn eval_frame(&self) -> Result<NormalizationRecord> {
        match self.visible_points()? {
            Some(pts) if pts.len() >= MIN_SURFACE_POINTS => NormalizationRecord::fit(&pts),
            Some(pts) => Err(Error::Degenerate(format!(
                "depth has {} masked pixels, need at least {MIN_SURFACE_POINTS}",
                pts.len()
            ))),
            None => Ok(NormalizationRecord::identity()),
        }
    }
}

/// Reads `dir/manifest.json`. Instances whose metadata cannot be loaded are
/// returned as failures instead of aborting.
pub fn load_benchmark(dir: &Path) -> Result<(Vec<BenchmarkInstance>, Vec<InstanceFailure>)> {
    let manifest: Manifest = io::read_json(&dir.join("manifest.json"))?;
    if manifest.format != UNIFIED_FORMAT {
        return Err(Error::parse(dir.join("manifest.json"), format!("unknown format {:?}", manifest.format)));
    }
    let mut instances = Vec::new();
    let mut failures = manifest.flagged.clone();
    for e in &manifest.instances {
        let loaded = (|| -> Result<BenchmarkInstance> {
            let depth = e.depth.as_ref().map(|p| io::read_depth_map(&dir.join(p))).transpose()?;
            let inst = BenchmarkInstance {
                id: e.id.clone(),
                category: e.category.clone(),
                mesh_path: dir.join(&e.mesh),
                depth,
                intrinsics: e.intrinsics,
                pose: e.pose,
                source: e.source.clone(),
            };
            inst.validate()?;
            Ok(inst)
        })();
        match loaded {
            Ok(i) => instances.push(i),
            Err(err) => failures.push(InstanceFailure::new(&e.id, FailureReason::InconsistentMetadata, err)),
        }
    }
    Ok((instances, failures))
}

/// Evaluation protocol settings, embedded verbatim in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    /// Lattice nodes per axis for field predictors.
    pub resolution: usize,
    /// Extraction bounds in the evaluation frame.
    pub bounds: Aabb,
    pub n_points: usize,
    pub seed: u64,
    pub thresholds: Vec<f64>,
    pub align: bool,
    pub alignment: AlignmentConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            resolution: EVAL_RESOLUTION,
            bounds: eval_bounds(),
            n_points: DEFAULT_SAMPLE_POINTS,
            seed: 0,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            align: true,
            alignment: AlignmentConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            n_points: self.n_points,
            seed: self.seed,
            thresholds: self.thresholds.clone(),
            alignment: self.align.then(|| self.alignment.clone()),
        }
    }
}

type InstanceOutcome = std::result::Result<InstanceRow, InstanceFailure>;

fn evaluate_instance(inst: &BenchmarkInstance, predictor: &PredictorSpec, cfg: &HarnessConfig) -> InstanceOutcome {
    let id = inst.id.as_str();
    let gt = inst
        .load_mesh()
        .map_err(|e| InstanceFailure::new(id, FailureReason::MeshLoad, e))?;
    let frame = inst
        .eval_frame()
        .map_err(|e| InstanceFailure::new(id, FailureReason::InconsistentMetadata, e))?;
    let gt_eval = gt
        .transformed(&frame.as_transform())
        .map_err(|e| InstanceFailure::new(id, FailureReason::MeshLoad, e))?;
    let pred = predictor.predict(inst, &frame, cfg)?;
    let eval = evaluate_pair(&pred, &gt_eval, &cfg.eval_config())
        .map_err(|e| InstanceFailure::new(id, FailureReason::Evaluation, e))?;
    Ok(InstanceRow {
        instance_id: inst.id.clone(),
        category: inst.category.clone(),
        metrics: eval.metrics,
        seed: cfg.seed,
        aligned_cd: eval.alignment.map(|a| a.aligned_cd),
    })
}

/// Scores `predictor` on every instance. Instance-level problems become
/// failure records; only an empty instance list or an invalid config is
/// an error.
pub fn run_benchmark(instances: &[BenchmarkInstance], predictor: &PredictorSpec, cfg: &HarnessConfig) -> Result<EvalReport> {
    run_benchmark_with_failures(instances, Vec::new(), predictor, cfg)
}

/// [`run_benchmark`] that also carries failures recorded while loading.
pub fn run_benchmark_with_failures(
    instances: &[BenchmarkInstance],
    prior_failures: Vec<InstanceFailure>,
    predictor: &PredictorSpec,
    cfg: &HarnessConfig,
) -> Result<EvalReport> {
    if instances.is_empty() && prior_failures.is_empty() {
        return Err(Error::Empty("benchmark has no instances".into()));
    }
    if cfg.resolution < 2 || !cfg.bounds.is_valid() || cfg.n_points == 0 {
        return Err(Error::InvalidArgument(
            "harness config needs resolution >= 2, valid bounds and n_points > 0".into(),
        ));
    }
    let outcomes: Vec<InstanceOutcome> = instances.par_iter().map(|i| evaluate_instance(i, predictor, cfg)).collect();
    let mut rows = Vec::new();
    let mut failures = prior_failures;
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(f) => failures.push(f),
        }
    }
    EvalReport::new(rows, failures, cfg.clone(), predictor.clone())
}
