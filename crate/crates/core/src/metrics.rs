//! Surface sampling, Chamfer distance and F-score.
//!
//! Chamfer distance is the mean of accuracy (prediction to ground truth) and
//! completeness (ground truth to prediction), both with plain Euclidean
//! distances. F-score@d is the harmonic mean of the fraction of predicted
//! points within `d` of the ground truth and the fraction of ground-truth
//! points within `d` of the prediction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{align_frames, AlignmentConfig, AlignmentResult};
use crate::error::{Error, Result};
use crate::geometry::{apply_transform, NormalizationRecord};
use crate::kdtree::KdTree;
use crate::math::{mean, Vec3};
use crate::types::{PointCloud, RigidTransform, TriangleMesh};

/// Points sampled per surface by the evaluation protocol.
pub const DEFAULT_SAMPLE_POINTS: usize = 10_000;

/// F-score thresholds, in units of the normalized ground truth (unit ball).
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.01, 0.02, 0.05];

/// Draws `n` points uniformly by area: faces with probability proportional
/// to area, then uniform barycentric coordinates.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if mesh.is_empty() {
        return Err(Error::Empty("cannot sample an empty mesh".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = cumulative.len() - 1;
    let points = (0..n)
        .map(|_| {
            let r = rng.gen::<f64>() * total;
            let f = cumulative.partition_point(|&c| c <= r).min(last);
            let [a, b, c] = mesh.triangle(f);
            let s = rng.gen::<f64>().sqrt();
            let t = rng.gen::<f64>();
            a * (1.0 - s) + b * (s * (1.0 - t)) + c * (s * t)
        })
        .collect();
    Ok(PointCloud::from_trusted(points))
}

/// Nearest-neighbor distances in both directions between a prediction and a
/// ground truth cloud. Every metric derives from these two vectors.
#[derive(Debug, Clone)]
pub struct NearestDistances {
    /// For each predicted point, distance to the closest ground-truth point.
    pub pred_to_gt: Vec<f64>,
    /// For each ground-truth point, distance to the closest predicted point.
    pub gt_to_pred: Vec<f64>,
}

impl NearestDistances {
    pub fn compute(pred: &PointCloud, gt: &PointCloud) -> Result<Self> {
        check_non_empty(pred, gt)?;
        let pred_tree = KdTree::new(pred.points());
        let gt_tree = KdTree::new(gt.points());
        Ok(Self::with_trees(pred.points(), &pred_tree, gt.points(), &gt_tree))
    }

    pub(crate) fn with_trees(pred: &[Vec3], pred_tree: &KdTree, gt: &[Vec3], gt_tree: &KdTree) -> Self {
        NearestDistances {
            pred_to_gt: gt_tree.nearest_distances(pred),
            gt_to_pred: pred_tree.nearest_distances(gt),
        }
    }

    pub fn chamfer(&self) -> f64 {
        let acc = mean(&self.pred_to_gt).unwrap_or(0.0);
        let comp = mean(&self.gt_to_pred).unwrap_or(0.0);
        0.5 * acc + 0.5 * comp
    }

    pub fn score(&self, threshold: f64) -> ThresholdScore {
        let frac = |d: &[f64]| d.iter().filter(|&&x| x <= threshold).count() as f64 / d.len() as f64;
        let precision = frac(&self.pred_to_gt);
        let recall = frac(&self.gt_to_pred);
        ThresholdScore {
            threshold,
            precision,
            recall,
            fscore: harmonic_mean(precision, recall),
        }
    }
}

fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check_non_empty(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("metrics need two non-empty point clouds".into()));
    }
    Ok(())
}

/// Symmetric Chamfer distance.
pub fn chamfer(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    Ok(NearestDistances::compute(x, y)?.chamfer())
}

/// Precision, recall and F-score of prediction `x` against ground truth `y`
/// at distance `d`.
pub fn fscore(x: &PointCloud, y: &PointCloud, d: f64) -> Result<ThresholdScore> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidArgument(format!("F-score threshold must be positive, got {d}")));
    }
    Ok(NearestDistances::compute(x, y)?.score(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScore {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

/// Chamfer distance plus per-threshold scores for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub cd: f64,
    /// Sorted by increasing threshold.
    pub scores: Vec<ThresholdScore>,
    pub n_points: usize,
}

impl MetricResult {
    pub fn from_distances(nd: &NearestDistances, thresholds: &[f64], n_points: usize) -> Result<Self> {
        let mut ts = thresholds.to_vec();
        if let Some(bad) = ts.iter().find(|&&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument(format!("F-score threshold must be positive, got {bad}")));
        }
        ts.sort_by(f64::total_cmp);
        Ok(MetricResult {
            cd: nd.chamfer(),
            scores: ts.iter().map(|&d| nd.score(d)).collect(),
            n_points,
        })
    }

    /// Score at exactly `threshold`, if it was evaluated.
    pub fn at(&self, threshold: f64) -> Option<&ThresholdScore> {
        self.scores.iter().find(|s| s.threshold == threshold)
    }

    pub fn fs(&self, threshold: f64) -> Option<f64> {
        self.at(threshold).map(|s| s.fscore)
    }
}

/// Metrics on two clouds without sampling or alignment.
pub fn cloud_metrics(pred: &PointCloud, gt: &PointCloud, thresholds: &[f64]) -> Result<MetricResult> {
    let nd = NearestDistances::compute(pred, gt)?;
    MetricResult::from_distances(&nd, thresholds, pred.len().max(gt.len()))
}

/// Settings for scoring one predicted mesh against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_points: usize,
    pub seed: u64,
    pub thresholds: Vec<f64>,
    /// Frame alignment; `None` compares the meshes as given.
    pub alignment: Option<AlignmentConfig>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_points: DEFAULT_SAMPLE_POINTS,
            seed: 0,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            alignment: Some(AlignmentConfig::default()),
        }
    }
}

/// Outcome of [`evaluate_pair`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEvaluation {
    pub metrics: MetricResult,
    /// Transform applied to the prediction before scoring.
    pub transform: RigidTransform,
    pub alignment: Option<AlignmentResult>,
    /// Ground-truth normalization applied to both clouds.
    pub normalization: NormalizationRecord,
}

/// Independent sampling streams derived from one seed.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) const GT_STREAM: u64 = 1;
pub(crate) const PRED_STREAM: u64 = 2;

/// Samples both surfaces, aligns the prediction to the ground truth when
/// configured, normalizes both clouds by the ground truth's centroid and
/// unit-ball scale, then scores.
pub fn evaluate_pair(pred_mesh: &TriangleMesh, gt_mesh: &TriangleMesh, cfg: &EvalConfig) -> Result<PairEvaluation> {
    let gt = sample_surface(gt_mesh, cfg.n_points, derive_seed(cfg.seed, GT_STREAM))?;
    let pred = sample_surface(pred_mesh, cfg.n_points, derive_seed(cfg.seed, PRED_STREAM))?;
    evaluate_clouds(&pred, &gt, cfg)
}

/// [`evaluate_pair`] on already-sampled clouds.
pub fn evaluate_clouds(pred: &PointCloud, gt: &PointCloud, cfg: &EvalConfig) -> Result<PairEvaluation> {
    check_non_empty(pred, gt)?;
    let (transform, alignment) = match &cfg.alignment {
        Some(acfg) => {
            let res = align_frames(pred, gt, acfg)?;
            (res.transform, Some(res))
        }
        None => (RigidTransform::identity(), None),
    };
    let norm = NormalizationRecord::fit(gt.points())?;
    let to_unit = norm.as_transform();
    let gt_n = apply_transform(gt, &to_unit);
    let pred_n = apply_transform(pred, &to_unit.compose(&transform));
    let metrics = cloud_metrics(&pred_n, &gt_n, &cfg.thresholds)?;
    Ok(PairEvaluation {
        metrics,
        transform,
        alignment,
        normalization: norm,
    })
}

/// Chamfer distance between two independent `n`-point samplings of the
/// same mesh after ground-truth normalization. This is the floor any
/// prediction can reach at that sample count.
pub fn self_chamfer(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<f64> {
    let a = sample_surface(mesh, n, derive_seed(seed, GT_STREAM))?;
    let b = sample_surface(mesh, n, derive_seed(seed, PRED_STREAM ^ 0xa5a5))?;
    let norm = NormalizationRecord::fit(a.points())?.as_transform();
    chamfer(&apply_transform(&b, &norm), &apply_transform(&a, &norm))
}

/// Upper bound on Chamfer distance attributable to sampling alone: twice
/// the two-seed self-evaluation.
pub fn sampling_noise_bound(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<f64> {
    Ok(2.0 * self_chamfer(mesh, n, seed)?)
}
