//! Geometry for object understanding in 360° equirectangular panoramas.
//!
//! Everything here is pure computation over in-memory rasters and runs
//! without `std` (an allocator is required). File formats, configuration
//! and the command line live in the `panoroom` crate.
//!
//! Module map:
//!
//! * [`sphere`] – pixel/direction conversions, geodesic arcs, wrap-aware spans.
//! * [`equiconv`] – distortion-adaptive convolution sampling, forward and
//!   backward, with gradient and equivariance self-checks.
//! * [`anchors`] – panoramic default boxes, wrap-aware IoU, rotation augmentation.
//! * [`maskgen`] – spherical polygon rasterization and occlusion-aware composition.
//! * [`instances`] – Gaussian box models and Mahalanobis pixel assignment.
//! * [`layout3d`] – Manhattan room model, plane map, mask refinement, RANSAC
//!   boundary lines and object placement.
//! * [`synth`] – ray-cast synthetic rooms used as ground truth.
//! * [`pipeline`] – class routing and the detections-to-scene pipeline.
//! * [`metrics`] – AP / weighted mAP / mIoU.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod math;

pub mod anchors;
pub mod equiconv;
pub mod grid;
pub mod instances;
pub mod layout3d;
pub mod maskgen;
pub mod metrics;
pub mod pipeline;
pub mod sphere;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{BinaryMask, ClassId, EquirectGrid, SemanticMap};
pub use math::Vec3;
pub use sphere::{PixelCoord, SphereDir};
