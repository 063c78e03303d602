//! Panoramic default boxes, wrap-aware IoU, matching, NMS and the
//! horizontal-rotation augmentation.

use alloc::vec::Vec;

use crate::grid::{BinaryMask, ClassId, EquirectGrid, SemanticMap};
use crate::math;
use crate::sphere::{wrap_interval_overlap, ColumnSpan};
use crate::{Error, Result};

/// Axis-aligned box on the panorama. `cx` is periodic; `(cx, cy)` are index
/// coordinates (pixel centers at integers), so a box that exactly covers
/// columns `a..=b` has `cx = (a + b) / 2`, `w = b - a + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanoBox {
    pub class_id: ClassId,
    pub score: f64,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl PanoBox {
    pub fn new(class_id: ClassId, score: f64, cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            class_id,
            score,
            cx,
            cy,
            w,
            h,
        }
    }

    /// Checks the box invariants against a `width × height` panorama and
    /// returns it with `cx` reduced into `[0, W)`.
    pub fn validated(self, width: usize, height: usize) -> Result<Self> {
        let (w, h) = (width as f64, height as f64);
        if !(self.w > 0.0 && self.w <= w && self.h > 0.0 && self.h <= h) {
            return Err(Error::InvalidParameter("box extent outside (0, W] x (0, H]"));
        }
        if !(self.cy >= -0.5 && self.cy <= h - 0.5) || !self.cx.is_finite() {
            return Err(Error::InvalidParameter("box center outside the panorama"));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidParameter("score outside [0, 1]"));
        }
        Ok(self.normalized(width))
    }

    pub fn normalized(mut self, width: usize) -> Self {
        self.cx = math::rem_euclid(self.cx, width as f64);
        self
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn col_span(&self) -> ColumnSpan {
        ColumnSpan::new(self.cx - self.w / 2.0, self.w)
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    /// Whether pixel `(col, row)` lies inside, columns taken modulo `width`.
    pub fn contains_pixel(&self, col: usize, row: usize, width: usize) -> bool {
        let r = row as f64;
        if r < self.top() || r >= self.bottom() {
            return false;
        }
        let start = self.cx - self.w / 2.0;
        math::rem_euclid(col as f64 - start, width as f64) < self.w
    }

    pub fn shifted(mut self, k: i64, width: usize) -> Self {
        self.cx = math::rem_euclid(self.cx + k as f64, width as f64);
        self
    }
}

/// Intersection over union with horizontal wrap-around.
pub fn pano_iou(a: &PanoBox, b: &PanoBox, width: usize) -> f64 {
    let iw = wrap_interval_overlap(a.col_span(), b.col_span(), width);
    let top = a.top().max(b.top());
    let bottom = a.bottom().min(b.bottom());
    let ih = (bottom - top).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorConfig {
    /// `(rows, cols)` per feature layer, finest first.
    pub grids: Vec<(usize, usize)>,
    pub ratios: Vec<f64>,
    /// Smallest and largest anchor side as a fraction of the panorama height.
    pub s_min: f64,
    pub s_max: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        let grids = (0..8).map(|i| (128usize >> i, 256usize >> i)).collect();
        Self {
            grids,
            ratios: alloc::vec![1.0, 2.0, 0.5, 3.0, 1.0 / 3.0],
            s_min: 0.05,
            s_max: 0.9,
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grids.is_empty() || self.ratios.is_empty() {
            return Err(Error::InvalidParameter("anchor config needs grids and ratios"));
        }
        if self.grids.iter().any(|&(r, c)| r == 0 || c != 2 * r) {
            return Err(Error::InvalidParameter("anchor grids need cols == 2 * rows"));
        }
        if self.ratios.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidParameter("aspect ratios must be positive"));
        }
        if !(self.s_min > 0.0 && self.s_min <= self.s_max) {
            return Err(Error::InvalidParameter("need 0 < s_min <= s_max"));
        }
        Ok(())
    }

    /// Anchor side for layer `l`, linearly interpolated from `s_min` to `s_max`.
    pub fn layer_scale(&self, l: usize, height: usize) -> f64 {
        let m = self.grids.len();
        let frac = if m == 1 {
            self.s_min
        } else {
            self.s_min + (self.s_max - self.s_min) * l as f64 / (m - 1) as f64
        };
        frac * height as f64
    }

    pub fn anchor_count(&self) -> usize {
        self.grids.iter().map(|(r, c)| r * c).sum::<usize>() * self.ratios.len()
    }
}

/// One anchor per (layer, cell, ratio), layer-major, row-major, ratio-minor.
/// Extents are capped at the panorama size.
pub fn generate_anchors(cfg: &AnchorConfig, width: usize, height: usize) -> Result<Vec<PanoBox>> {
    cfg.validate()?;
    crate::grid::check_dims(width, height)?;
    let (wf, hf) = (width as f64, height as f64);
    let mut out = Vec::with_capacity(cfg.anchor_count());
    for (l, &(rows, cols)) in cfg.grids.iter().enumerate() {
        let s = cfg.layer_scale(l, height);
        let (cell_w, cell_h) = (wf / cols as f64, hf / rows as f64);
        for r in 0..rows {
            let cy = (r as f64 + 0.5) * cell_h - 0.5;
            for c in 0..cols {
                let cx = (c as f64 + 0.5) * cell_w - 0.5;
                for &ratio in &cfg.ratios {
                    let q = math::sqrt(ratio);
                    let w = (s * q).min(wf);
                    let h = (s / q).min(hf);
                    out.push(PanoBox::new(0, 0.0, cx, cy, w, h));
                }
            }
        }
    }
    Ok(out)
}

/// Index of the anchor with the highest IoU for every ground-truth box
/// (first index wins ties).
pub fn best_anchor_per_gt(anchors: &[PanoBox], gts: &[PanoBox], width: usize) -> Vec<Option<usize>> {
    gts.iter()
        .map(|g| {
            let mut best: Option<(usize, f64)> = None;
            for (i, a) in anchors.iter().enumerate() {
                let iou = pano_iou(a, g, width);
                if iou > 0.0 && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((i, iou));
                }
            }
            best.map(|(i, _)| i)
        })
        .collect()
}

/// Training-style matching: every anchor takes its best ground truth when the
/// IoU reaches `positive_iou`, and every ground truth claims its best anchor.
pub fn assign_anchors(
    anchors: &[PanoBox],
    gts: &[PanoBox],
    width: usize,
    positive_iou: f64,
) -> Vec<Option<usize>> {
    let mut assigned: Vec<Option<usize>> = anchors
        .iter()
        .map(|a| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                let iou = pano_iou(a, g, width);
                if iou >= positive_iou && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            best.map(|(j, _)| j)
        })
        .collect();
    for (j, best) in best_anchor_per_gt(anchors, gts, width).into_iter().enumerate() {
        if let Some(i) = best {
            assigned[i] = Some(j);
        }
    }
    assigned
}

/// Greedy per-class non-maximum suppression with wrap-aware IoU. Returns the
/// kept indices in descending score order (ties by input order).
pub fn nms(boxes: &[PanoBox], iou_threshold: f64, width: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let suppressed = kept.iter().any(|&k| {
            boxes[k].class_id == boxes[i].class_id && pano_iou(&boxes[k], &boxes[i], width) > iou_threshold
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

/// Image, boxes and rasters that travel together through augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoSample<T> {
    pub image: EquirectGrid<T>,
    pub boxes: Vec<PanoBox>,
    pub masks: Vec<BinaryMask>,
    pub labels: Vec<SemanticMap>,
}

/// Column shift that realizes a yaw of `degrees` on a `width`-column panorama.
pub fn rotation_columns(degrees: f64, width: usize) -> i64 {
    let d = math::rem_euclid(degrees, 360.0);
    (math::round(d * width as f64 / 360.0) as i64).rem_euclid(width as i64)
}

/// Horizontal rotation augmentation: every raster is column-shifted by
/// `round(δ·W/360)` and every box center moves with it.
pub fn rotate_horizontal<T: Copy>(sample: &PanoSample<T>, degrees: f64) -> PanoSample<T> {
    let width = sample.image.width();
    let k = rotation_columns(degrees, width);
    PanoSample {
        image: sample.image.shift_columns(k),
        boxes: sample.boxes.iter().map(|b| b.shifted(k, width)).collect(),
        masks: sample.masks.iter().map(|m| m.shift_columns(k)).collect(),
        labels: sample.labels.iter().map(|m| m.shift_columns(k)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    const W: usize = 512;
    const H: usize = 256;

    fn raster_iou(a: &PanoBox, b: &PanoBox) -> f64 {
        let (mut inter, mut uni) = (0usize, 0usize);
        for r in 0..H {
            for c in 0..W {
                let (x, y) = (a.contains_pixel(c, r, W), b.contains_pixel(c, r, W));
                inter += (x && y) as usize;
                uni += (x || y) as usize;
            }
        }
        inter as f64 / uni as f64
    }

    #[test]
    fn single_coarse_layer_gives_ten_anchors() {
        let cfg = AnchorConfig {
            grids: vec![(1, 2)],
            ..AnchorConfig::default()
        };
        assert_eq!(generate_anchors(&cfg, W, H).unwrap().len(), 10);
    }

    #[test]
    fn default_anchor_count_matches_closed_form() {
        let cfg = AnchorConfig::default();
        let expected: usize = (0..8).map(|i| 5 * (128 >> i) * (256 >> i)).sum();
        assert_eq!(expected, 218_450);
        assert_eq!(generate_anchors(&cfg, W, H).unwrap().len(), expected);
    }

    #[test]
    fn unit_ratio_anchors_are_square_and_ordered() {
        let cfg = AnchorConfig {
            grids: vec![(2, 4), (1, 2)],
            ..AnchorConfig::default()
        };
        let a = generate_anchors(&cfg, W, H).unwrap();
        for b in a.iter().step_by(5) {
            assert_eq!(b.w, b.h);
        }
        // layer 0, cell (0, 1), first ratio
        assert_eq!(a[5].cx, 1.5 * 128.0 - 0.5);
        assert_eq!(a[5].cy, 63.5);
        assert!(a.iter().all(|b| b.w <= W as f64 && b.h <= H as f64));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = AnchorConfig::default();
        cfg.grids.push((3, 5));
        assert!(generate_anchors(&cfg, W, H).is_err());
        let cfg = AnchorConfig {
            ratios: vec![1.0, -2.0],
            ..AnchorConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn iou_identity_and_seam() {
        let a = PanoBox::new(1, 0.9, 0.0, 100.0, 40.0, 30.0);
        assert_eq!(pano_iou(&a, &a, W), 1.0);
        let b = PanoBox { cx: W as f64, ..a };
        assert_eq!(pano_iou(&a, &b, W), 1.0);
    }

    #[test]
    fn iou_half_overlap_matches_raster() {
        let a = PanoBox::new(1, 1.0, 99.5, 99.5, 40.0, 20.0);
        let b = PanoBox::new(1, 1.0, 119.5, 99.5, 40.0, 20.0);
        let got = pano_iou(&a, &b, W);
        assert!((got - 1.0 / 3.0).abs() < 1e-12);
        assert!((got - raster_iou(&a, &b)).abs() <= 1.0 / 800.0);
    }

    #[test]
    fn iou_with_subpixel_edges_stays_near_raster() {
        // edges off the pixel grid: the raster differs by at most a perimeter strip
        let a = PanoBox::new(1, 1.0, 98.0, 105.0, 187.0, 33.0);
        let b = PanoBox::new(1, 1.0, 0.0, 72.0, 35.0, 34.0);
        let strip = (a.w + a.h + b.w + b.h) / a.area().min(b.area());
        assert!((pano_iou(&a, &b, W) - raster_iou(&a, &b)).abs() <= strip);
    }

    #[test]
    fn validation() {
        assert!(PanoBox::new(1, 0.5, 10.0, 10.0, 0.0, 5.0).validated(W, H).is_err());
        assert!(PanoBox::new(1, 0.5, 10.0, 10.0, 600.0, 5.0).validated(W, H).is_err());
        assert!(PanoBox::new(1, 1.5, 10.0, 10.0, 6.0, 5.0).validated(W, H).is_err());
        let ok = PanoBox::new(1, 0.5, -10.0, 10.0, 6.0, 5.0).validated(W, H).unwrap();
        assert_eq!(ok.cx, W as f64 - 10.0);
    }

    #[test]
    fn rotation_identities() {
        let img = EquirectGrid::from_fn(16, 8, |c, r| (c * 8 + r) as u16).unwrap();
        let mask = EquirectGrid::from_fn(16, 8, |c, r| c == 3 && r == 2).unwrap();
        let s = PanoSample {
            image: img,
            boxes: vec![PanoBox::new(2, 0.7, 3.0, 2.0, 4.0, 2.0)],
            masks: vec![mask],
            labels: vec![],
        };
        assert_eq!(rotate_horizontal(&s, 0.0), s);
        assert_eq!(rotate_horizontal(&s, 360.0), s);
        for d in [22.5, 45.0, 90.0, 202.5, 337.5] {
            let back = rotate_horizontal(&rotate_horizontal(&s, d), 360.0 - d);
            assert_eq!(back, s, "δ = {d}");
        }
        let r = rotate_horizontal(&s, 90.0);
        assert_eq!(r.boxes[0].cx, 7.0);
        assert!(r.masks[0].get(7, 2));
    }

    #[test]
    fn nms_keeps_best_and_respects_wrap() {
        let a = PanoBox::new(1, 0.9, 1.0, 50.0, 20.0, 20.0);
        let b = PanoBox::new(1, 0.8, W as f64 - 1.0, 50.0, 20.0, 20.0);
        let c = PanoBox::new(2, 0.7, W as f64 - 1.0, 50.0, 20.0, 20.0);
        assert_eq!(nms(&[b, a, c], 0.5, W), vec![1, 2]);
    }

    #[test]
    fn assignment_claims_best_anchor() {
        let cfg = AnchorConfig {
            grids: vec![(8, 16), (4, 8)],
            ..AnchorConfig::default()
        };
        let anchors = generate_anchors(&cfg, W, H).unwrap();
        let gt = PanoBox::new(3, 1.0, 200.0, 77.0, 35.0, 60.0);
        let m = assign_anchors(&anchors, &[gt], W, 0.99);
        let best = best_anchor_per_gt(&anchors, &[gt], W)[0].unwrap();
        assert_eq!(m[best], Some(0));
        assert_eq!(m.iter().filter(|x| x.is_some()).count(), 1);
    }

    /// Boxes whose edges fall on pixel boundaries (what a raster can represent).
    fn arb_box() -> impl Strategy<Value = PanoBox> {
        (0i32..512, 20i32..200, 2i32..200, 2i32..40).prop_map(|(left, top, w, h)| {
            let cx = left as f64 - 0.5 + w as f64 / 2.0;
            let cy = top as f64 - 0.5 + h as f64 / 2.0;
            PanoBox::new(1, 1.0, cx, cy, w as f64, h as f64)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn iou_is_symmetric_and_matches_raster(a in arb_box(), b in arb_box()) {
            let x = pano_iou(&a, &b, W);
            prop_assert_eq!(x, pano_iou(&b, &a, W));
            prop_assert!((0.0..=1.0).contains(&x));
            let min_area = a.area().min(b.area());
            prop_assert!((x - raster_iou(&a, &b)).abs() <= 1.0 / min_area);
        }

        #[test]
        fn iou_invariant_under_column_shift(a in arb_box(), b in arb_box(), k in 0i64..512) {
            prop_assert_eq!(pano_iou(&a, &b, W), pano_iou(&a.shifted(k, W), &b.shifted(k, W), W));
        }

        #[test]
        fn best_anchor_follows_half_turn(g in arb_box()) {
            // the anchor grid is invariant under a half turn, so the argmax moves with it
            let cfg = AnchorConfig { grids: vec![(8, 16), (2, 4), (1, 2)], ..AnchorConfig::default() };
            let anchors = generate_anchors(&cfg, W, H).unwrap();
            let k = (W / 2) as i64;
            let g2 = g.shifted(k, W);
            let a = best_anchor_per_gt(&anchors, &[g], W)[0].unwrap();
            let b = best_anchor_per_gt(&anchors, &[g2], W)[0].unwrap();
            // the shifted argmax is an argmax of the shifted problem (ties allowed)
            let moved = anchors[a].shifted(k, W);
            prop_assert!((pano_iou(&moved, &g2, W) - pano_iou(&anchors[b], &g2, W)).abs() < 1e-12);
            prop_assert!(anchors.iter().any(|x| x.shifted(0, W) == moved));
        }
    }
}
