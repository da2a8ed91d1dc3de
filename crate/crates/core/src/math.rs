//! Small numeric helpers shared across modules.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

const PAIRWISE_BLOCK: usize = 64;

/// Pairwise (cascade) summation. The split points depend only on the slice
/// length, so the result is identical across runs and thread counts.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

pub fn pairwise_sum_vec3(values: &[Vec3]) -> Vec3 {
    if values.len() <= PAIRWISE_BLOCK {
        values.iter().fold(Vec3::zeros(), |acc, v| acc + v)
    } else {
        let mid = values.len() / 2;
        pairwise_sum_vec3(&values[..mid]) + pairwise_sum_vec3(&values[mid..])
    }
}

/// Mean with pairwise summation; `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(pairwise_sum(values) / values.len() as f64)
    }
}

pub fn centroid(points: &[Vec3]) -> Option<Vec3> {
    if points.is_empty() {
        None
    } else {
        Some(pairwise_sum_vec3(points) / points.len() as f64)
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    /// The cube `[-half, half]^3`.
    pub fn cube(half: f64) -> Self {
        Aabb::new(Vec3::repeat(-half), Vec3::repeat(half))
    }

    pub fn empty() -> Self {
        Aabb::new(Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY))
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|a| self.min[a].is_finite() && self.max[a].is_finite() && self.min[a] < self.max[a])
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.min[a] {
                self.min[a] - p[a]
            } else if p[a] > self.max[a] {
                p[a] - self.max[a]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }

    /// Slab test; returns the entry parameter if the ray hits within `[0, t_max]`.
    pub fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0_f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut near = (self.min[a] - origin[a]) * inv_dir[a];
            let mut far = (self.max[a] - origin[a]) * inv_dir[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf: treat the slab as unbounded on that axis
            if near.is_nan() || far.is_nan() {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            // widen by a few ulps so boundary hits are not dropped
            far *= 1.0 + 4.0 * f64::EPSILON;
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 55.0);
    }

    #[test]
    fn pairwise_sum_is_accurate_on_long_input() {
        let v = vec![0.1; 1_000_000];
        assert!((pairwise_sum(&v) - 100_000.0).abs() < 1e-8);
    }

    #[test]
    fn box_distance() {
        let b = Aabb::cube(1.0);
        assert_eq!(b.distance_squared(&Vec3::zeros()), 0.0);
        assert_eq!(b.distance_squared(&Vec3::new(3.0, 0.0, 0.0)), 4.0);
    }

    #[test]
    fn ray_slab() {
        let b = Aabb::cube(1.0);
        let o = Vec3::new(0.0, 0.0, -5.0);
        let d = Vec3::new(0.0, 0.0, 1.0);
        let inv = d.map(|x| 1.0 / x);
        assert_eq!(b.ray_entry(&o, &inv, f64::INFINITY), Some(4.0));
        let o2 = Vec3::new(2.0, 0.0, -5.0);
        assert_eq!(b.ray_entry(&o2, &inv, f64::INFINITY), None);
    }
}
