#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN.

pub mod agent;
pub mod expert;
pub mod geometry;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod predict;
pub mod raster;
pub mod synthetic;
pub mod training;
