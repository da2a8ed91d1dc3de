//! Training objectives as pure functions: scale/shift-invariant depth loss,
//! projection-map MSE and occupancy binary cross-entropy.
//!
//! Reductions use pairwise summation so values are reproducible across
//! thread counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{unproject, unproject_gradients};
use crate::math::{pairwise_sum, Vec3};
use crate::types::{CameraIntrinsics, DepthMap, ProjectionMap};

/// Lower bound on the MAD scale in the depth alignment.
pub const MAD_EPSILON: f64 = 1e-12;

/// Probability clamp for binary cross-entropy.
pub const BCE_EPSILON: f64 = 1e-7;

/// Default number of occupancy queries per training example.
pub const OCCUPANCY_BATCH: usize = 4096;

/// A loss value and, where available, its gradients with respect to the
/// differentiated inputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradients: Option<LossGradients>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossGradients {
    /// Per pixel, row-major; zero for unmasked pixels.
    pub depth: Option<Vec<f64>>,
    /// `d/dfx, d/dfy, d/dcx, d/dcy`.
    pub intrinsics: Option<[f64; 4]>,
    /// Per pixel, w.r.t. the predicted projection map.
    pub points: Option<Vec<Vec3>>,
    /// Per query, w.r.t. the predicted probability.
    pub probabilities: Option<Vec<f64>>,
}

/// How the depth loss removes scale and shift.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthAlignment {
    /// Each map is shifted by its median and divided by its mean absolute
    /// deviation from that median.
    #[default]
    MedianMad,
    /// The prediction is mapped onto the ground truth by the least-squares
    /// optimal scale and shift.
    LeastSquares,
}

fn masked_values(d: &DepthMap) -> Vec<f64> {
    d.values()
        .iter()
        .zip(d.mask())
        .filter_map(|(&v, &m)| m.then_some(v))
        .collect()
}

fn check_same_mask(a: &[bool], b: &[bool], wa: usize, wb: usize) -> Result<()> {
    if a.len() != b.len() || wa != wb {
        return Err(Error::DimensionMismatch("maps have different sizes".into()));
    }
    if a != b {
        return Err(Error::InvalidArgument("prediction and ground truth masks differ".into()));
    }
    Ok(())
}

/// Lower median (the `(n-1)/2`-th order statistic) and its position in `v`.
fn lower_median(v: &[f64]) -> (f64, usize) {
    let mut order: Vec<usize> = (0..v.len()).collect();
    let k = (v.len() - 1) / 2;
    order.select_nth_unstable_by(k, |&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    (v[order[k]], order[k])
}

struct MedianMad {
    shift: f64,
    scale: f64,
    median_index: usize,
    /// Whether the epsilon guard replaced the MAD.
    guarded: bool,
}

fn median_mad(v: &[f64]) -> MedianMad {
    let (shift, median_index) = lower_median(v);
    let dev: Vec<f64> = v.iter().map(|x| (x - shift).abs()).collect();
    let mad = pairwise_sum(&dev) / v.len() as f64;
    MedianMad {
        shift,
        scale: mad.max(MAD_EPSILON),
        median_index,
        guarded: mad < MAD_EPSILON,
    }
}

/// Scale- and shift-invariant mean absolute error over the shared mask.
///
/// With [`DepthAlignment::MedianMad`] the gradient w.r.t. the predicted depth
/// is returned; the median contributes through a subgradient at the lower
/// median element.
pub fn ssimae_depth_loss(pred: &DepthMap, gt: &DepthMap) -> Result<LossValue> {
    ssimae_depth_loss_with(pred, gt, DepthAlignment::MedianMad)
}

pub fn ssimae_depth_loss_with(pred: &DepthMap, gt: &DepthMap, alignment: DepthAlignment) -> Result<LossValue> {
    check_same_mask(pred.mask(), gt.mask(), pred.width(), gt.width())?;
    let p = masked_values(pred);
    let g = masked_values(gt);
    if p.is_empty() {
        return Err(Error::Empty("depth loss over an empty mask".into()));
    }
    if p.len() < 2 {
        return Err(Error::InvalidArgument("depth loss needs at least 2 masked pixels".into()));
    }
    let n = p.len() as f64;
    match alignment {
        DepthAlignment::MedianMad => {
            let sp = median_mad(&p);
            let sg = median_mad(&g);
            let pa: Vec<f64> = p.iter().map(|x| (x - sp.shift) / sp.scale).collect();
            let ga: Vec<f64> = g.iter().map(|x| (x - sg.shift) / sg.scale).collect();
            let residual: Vec<f64> = pa.iter().zip(&ga).map(|(a, b)| (a - b).abs()).collect();
            let value = pairwise_sum(&residual) / n;

            // dL/dp_k = (1/n) sum_i r_i * d(pa_i)/d(p_k), r_i = sign(pa_i - ga_i)
            let r: Vec<f64> = pa.iter().zip(&ga).map(|(a, b)| sign(a - b)).collect();
            let m = sp.median_index;
            let s = sp.scale;
            let sum_r = pairwise_sum(&r);
            let r_dev: Vec<f64> = r.iter().zip(&p).map(|(ri, x)| ri * (x - sp.shift)).collect();
            let sum_r_dev = pairwise_sum(&r_dev);
            let dev_sign: Vec<f64> = p.iter().map(|x| sign(x - sp.shift)).collect();
            let sum_dev_sign = pairwise_sum(&dev_sign);
            let mut grad: Vec<f64> = (0..p.len())
                .map(|k| {
                    // d(shift)/dp_k = [k == m]; d(scale)/dp_k = (sign_k - [k == m] * sum sign) / n
                    let is_m = if k == m { 1.0 } else { 0.0 };
                    let dshift = is_m;
                    let dscale = if sp.guarded {
                        0.0
                    } else {
                        (dev_sign[k] - is_m * sum_dev_sign) / n
                    };
                    (r[k] - dshift * sum_r) / s - sum_r_dev * dscale / (s * s)
                })
                .collect();
            for gk in &mut grad {
                *gk /= n;
            }
            Ok(LossValue {
                value,
                gradients: Some(LossGradients {
                    depth: Some(scatter(&grad, pred.mask())),
                    ..Default::default()
                }),
            })
        }
        DepthAlignment::LeastSquares => {
            let mp = pairwise_sum(&p) / n;
            let mg = pairwise_sum(&g) / n;
            let cov: Vec<f64> = p.iter().zip(&g).map(|(a, b)| (a - mp) * (b - mg)).collect();
            let var: Vec<f64> = p.iter().map(|a| (a - mp) * (a - mp)).collect();
            let var = pairwise_sum(&var);
            let scale = if var > 0.0 { pairwise_sum(&cov) / var } else { 0.0 };
            let shift = mg - scale * mp;
            let residual: Vec<f64> = p.iter().zip(&g).map(|(a, b)| (scale * a + shift - b).abs()).collect();
            Ok(LossValue {
                value: pairwise_sum(&residual) / n,
                gradients: None,
            })
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn scatter(values: &[f64], mask: &[bool]) -> Vec<f64> {
    let mut it = values.iter();
    mask.iter()
        .map(|&m| if m { *it.next().expect("one value per masked pixel") } else { 0.0 })
        .collect()
}

/// Mean squared Euclidean distance between masked points, with the gradient
/// w.r.t. the predicted points.
pub fn projection_loss(pred: &ProjectionMap, gt: &ProjectionMap) -> Result<LossValue> {
    check_same_mask(pred.mask(), gt.mask(), pred.width(), gt.width())?;
    let count = pred.masked_count();
    if count == 0 {
        return Err(Error::Empty("projection loss over an empty mask".into()));
    }
    let n = count as f64;
    let sq: Vec<f64> = pred
        .points()
        .iter()
        .zip(gt.points())
        .zip(pred.mask())
        .filter(|(_, &m)| m)
        .map(|((a, b), _)| (a - b).norm_squared())
        .collect();
    let grad = pred
        .points()
        .iter()
        .zip(gt.points())
        .zip(pred.mask())
        .map(|((a, b), &m)| if m { (a - b) * (2.0 / n) } else { Vec3::zeros() })
        .collect();
    Ok(LossValue {
        value: pairwise_sum(&sq) / n,
        gradients: Some(LossGradients {
            points: Some(grad),
            ..Default::default()
        }),
    })
}

/// Projection loss of `unproject(depth, k)` against `gt`, with gradients
/// carried back to every depth value and to the four intrinsics.
pub fn projection_loss_from_depth(depth: &DepthMap, k: &CameraIntrinsics, gt: &ProjectionMap) -> Result<LossValue> {
    let pred = unproject(depth, k)?;
    let mut loss = projection_loss(&pred, gt)?;
    let jac = unproject_gradients(depth, k)?;
    let dpoints = loss
        .gradients
        .as_ref()
        .and_then(|g| g.points.clone())
        .expect("projection loss returns point gradients");
    let mut ddepth = vec![0.0; dpoints.len()];
    let mut per_param: [Vec<f64>; 4] = Default::default();
    for (idx, (g, j)) in dpoints.iter().zip(&jac.pixels).enumerate() {
        if let Some(j) = j {
            ddepth[idx] = g.dot(&j.depth);
            for (slot, dj) in per_param.iter_mut().zip(&j.intrinsics) {
                slot.push(g.dot(dj));
            }
        }
    }
    let dk = per_param.map(|v| pairwise_sum(&v));
    loss.gradients = Some(LossGradients {
        depth: Some(ddepth),
        intrinsics: Some(dk),
        points: Some(dpoints),
        probabilities: None,
    });
    Ok(loss)
}

/// Mean binary cross-entropy with probabilities clamped to
/// `[BCE_EPSILON, 1 - BCE_EPSILON]`. Labels must be exactly 0 or 1.
pub fn occupancy_bce(pred_prob: &[f64], labels: &[f64]) -> Result<LossValue> {
    if pred_prob.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions but {} labels",
            pred_prob.len(),
            labels.len()
        )));
    }
    if pred_prob.is_empty() {
        return Err(Error::Empty("occupancy loss over an empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidLabel(bad));
    }
    if pred_prob.iter().any(|p| p.is_nan()) {
        return Err(Error::InvalidArgument("NaN probability".into()));
    }
    let n = pred_prob.len() as f64;
    let clamped: Vec<f64> = pred_prob.iter().map(|p| p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON)).collect();
    let terms: Vec<f64> = clamped
        .iter()
        .zip(labels)
        .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
        .collect();
    let grad = clamped
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - y) / (p * (1.0 - p)) / n)
        .collect();
    Ok(LossValue {
        value: pairwise_sum(&terms) / n,
        gradients: Some(LossGradients {
            probabilities: Some(grad),
            ..Default::default()
        }),
    })
}
