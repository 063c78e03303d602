//! Instance maps from detections and a semantic map, assigning each pixel to
//! the closest same-class detection under a Gaussian model of its box.

use alloc::vec;
use alloc::vec::Vec;

use crate::anchors::PanoBox;
use crate::grid::{ClassId, EquirectGrid, SemanticMap};
use crate::sphere::{wrapped_delta, PixelCoord};
use crate::{Error, Result};

/// χ² quantile at 0.99 for two degrees of freedom.
pub const CHI2_99_2DOF: f64 = 9.21;

/// Axis-aligned Gaussian with σ = extent / 6, so that the box holds about
/// 99% of the mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianInstance {
    pub instance_id: u16,
    pub class_id: ClassId,
    pub mean: PixelCoord,
    pub sigma_w: f64,
    pub sigma_h: f64,
}

impl GaussianInstance {
    pub fn from_box(instance_id: u16, b: &PanoBox) -> Result<Self> {
        if !(b.w > 0.0 && b.h > 0.0) {
            return Err(Error::InvalidParameter("box extent must be positive"));
        }
        Ok(Self {
            instance_id,
            class_id: b.class_id,
            mean: PixelCoord::new(b.cx, b.cy),
            sigma_w: b.w / 6.0,
            sigma_h: b.h / 6.0,
        })
    }
}

/// Squared Mahalanobis distance, taking the shorter way around the seam.
pub fn mahalanobis2(p: PixelCoord, g: &GaussianInstance, width: usize) -> f64 {
    let du = wrapped_delta(g.mean.u, p.u, width) / g.sigma_w;
    let dv = (p.v - g.mean.v) / g.sigma_h;
    du * du + dv * dv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceInfo {
    pub id: u16,
    pub class_id: ClassId,
    pub pixel_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMap {
    /// Instance id per pixel, 0 where unassigned.
    pub ids: EquirectGrid<u16>,
    /// Semantic class per pixel; for assigned pixels it equals the
    /// instance's class.
    pub semantic: SemanticMap,
    pub instances: Vec<InstanceInfo>,
}

impl InstanceMap {
    pub fn width(&self) -> usize {
        self.ids.width()
    }

    pub fn height(&self) -> usize {
        self.ids.height()
    }

    pub fn info(&self, id: u16) -> Option<&InstanceInfo> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Recounts pixels per instance after edits to `ids`.
    pub fn recount(&mut self) {
        for info in &mut self.instances {
            info.pixel_count = 0;
        }
        for &id in self.ids.data() {
            if id > 0 {
                if let Some(info) = self.instances.iter_mut().find(|i| i.id == id) {
                    info.pixel_count += 1;
                }
            }
        }
    }
}

/// Assigns every labelled pixel to the same-class detection of minimum
/// Mahalanobis distance, if that distance passes `chi2_threshold`. Detection
/// `i` becomes instance `i + 1`; ties go to the earlier detection.
pub fn assign_instances(sem: &SemanticMap, dets: &[PanoBox], chi2_threshold: f64) -> Result<InstanceMap> {
    if dets.len() >= u16::MAX as usize {
        return Err(Error::InvalidParameter("too many detections"));
    }
    let (w, h) = (sem.width(), sem.height());
    let gaussians = dets
        .iter()
        .enumerate()
        .map(|(i, d)| GaussianInstance::from_box(i as u16 + 1, d))
        .collect::<Result<Vec<_>>>()?;
    let mut ids = EquirectGrid::filled(w, h, 1, 0u16)?;
    let mut counts = vec![0usize; gaussians.len()];
    for row in 0..h {
        for col in 0..w {
            let class = sem.get(col, row);
            if class == 0 {
                continue;
            }
            let p = PixelCoord::new(col as f64, row as f64);
            let mut best: Option<(usize, f64)> = None;
            for (i, g) in gaussians.iter().enumerate().filter(|(_, g)| g.class_id == class) {
                let d = mahalanobis2(p, g, w);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            if let Some((i, d)) = best {
                if d <= chi2_threshold {
                    ids.set(col, row, gaussians[i].instance_id);
                    counts[i] += 1;
                }
            }
        }
    }
    let instances = gaussians
        .iter()
        .zip(counts)
        .map(|(g, pixel_count)| InstanceInfo {
            id: g.instance_id,
            class_id: g.class_id,
            pixel_count,
        })
        .collect();
    Ok(InstanceMap {
        ids,
        semantic: sem.clone(),
        instances,
    })
}

/// Collapses instances back to classes: assigned pixels take their
/// instance's class, the rest keep the semantic label.
pub fn instance_to_semantic(im: &InstanceMap) -> SemanticMap {
    let mut out = im.semantic.clone();
    for (k, &id) in im.ids.data().iter().enumerate() {
        if id > 0 {
            if let Some(info) = im.info(id) {
                out.data_mut()[k] = info.class_id;
            }
        }
    }
    out
}
