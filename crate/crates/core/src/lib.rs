//! Evaluation toolkit for view-centric single-image 3D shape reconstruction:
//! depth unprojection, implicit-field extraction, Chamfer/F-score metrics,
//! frame alignment, training losses, synthetic data generation and a
//! benchmark harness.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod bvh;
pub mod datagen;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod kdtree;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod selftest;
pub mod shapes;
pub mod types;

pub use error::{Error, Result};
pub use math::{Aabb, Mat3, Vec3};
pub use types::*;
