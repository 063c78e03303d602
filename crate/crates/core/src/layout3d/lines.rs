//! Great-circle fits to mask outlines.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ManhattanFrame;
use crate::grid::BinaryMask;
use crate::math::{self, Vec3, FRAC_PI_2};
use crate::sphere::{pixel_to_dir, PixelCoord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFitParams {
    /// Perpendicularity tolerance for direction labels, radians.
    pub theta_th: f64,
    /// Angular distance from the great circle that counts as an inlier.
    pub inlier_tol: f64,
    pub iterations: usize,
    /// Minimum support per line as a fraction of all boundary points.
    pub min_inlier_frac: f64,
    /// Absolute floor on the support per line.
    pub min_inliers: usize,
    pub max_lines: usize,
    pub seed: u64,
}

impl Default for LineFitParams {
    fn default() -> Self {
        Self {
            theta_th: 0.5f64.to_radians(),
            inlier_tol: 0.3f64.to_radians(),
            iterations: 500,
            min_inlier_frac: 0.05,
            min_inliers: 5,
            max_lines: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineLabel {
    X,
    Y,
    Z,
    None,
}

impl LineLabel {
    pub fn axis(self) -> Option<usize> {
        match self {
            LineLabel::X => Some(0),
            LineLabel::Y => Some(1),
            LineLabel::Z => Some(2),
            LineLabel::None => None,
        }
    }

    pub fn from_axis(k: usize) -> Self {
        match k {
            0 => LineLabel::X,
            1 => LineLabel::Y,
            2 => LineLabel::Z,
            _ => LineLabel::None,
        }
    }
}

/// Midpoint of a pixel edge between the mask and its complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub pixel: PixelCoord,
    pub dir: Vec3,
    /// The neighbouring pixel outside the mask, `(col, row)`.
    pub outside: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedLine {
    /// Unit normal of the plane through the camera.
    pub normal: Vec3,
    pub inliers: Vec<BoundaryPoint>,
    pub label: LineLabel,
}

/// The Manhattan axis the plane normal is perpendicular to within
/// `theta_th`, preferring the closest and then x, y, z.
pub fn label_normal(n: Vec3, frame: &ManhattanFrame, theta_th: f64) -> LineLabel {
    let mut best: Option<(usize, f64)> = None;
    for k in 0..3 {
        let dev = (math::acos(n.dot(frame.axis(k))) - FRAC_PI_2).abs();
        if dev <= theta_th && best.is_none_or(|(_, d)| dev < d) {
            best = Some((k, dev));
        }
    }
    best.map_or(LineLabel::None, |(k, _)| LineLabel::from_axis(k))
}

/// Edge midpoints between mask pixels and their 4-neighbours outside it.
///
/// Points are ordered by column starting after the widest run of empty
/// columns, then by row, so the order is unchanged by column shifts.
pub fn boundary_points(mask: &BinaryMask) -> Vec<BoundaryPoint> {
    let (w, h) = (mask.width(), mask.height());
    let start = mask.column_span().map_or(0, |s| s.0);
    let mut keyed: Vec<((usize, usize), BoundaryPoint)> = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if !mask.get(col, row) {
                continue;
            }
            let mut push = |oc: usize, or: usize, du2: i64, dv2: i64| {
                let u2 = 2 * col as i64 + du2;
                let v2 = 2 * row as i64 + dv2;
                let rel = (u2 - 2 * start as i64 + 1).rem_euclid(2 * w as i64) as usize;
                let pixel = PixelCoord::new(u2 as f64 / 2.0, v2 as f64 / 2.0);
                keyed.push((
                    (rel, v2 as usize),
                    BoundaryPoint {
                        pixel,
                        dir: pixel_to_dir(pixel, w, h).vec(),
                        outside: (oc, or),
                    },
                ));
            };
            let (left, right) = ((col + w - 1) % w, (col + 1) % w);
            if !mask.get(left, row) {
                push(left, row, -1, 0);
            }
            if !mask.get(right, row) {
                push(right, row, 1, 0);
            }
            if row > 0 && !mask.get(col, row - 1) {
                push(col, row - 1, 0, -1);
            }
            if row + 1 < h && !mask.get(col, row + 1) {
                push(col, row + 1, 0, 1);
            }
        }
    }
    keyed.sort_by_key(|e| e.0);
    keyed.into_iter().map(|e| e.1).collect()
}

fn inliers_of(n: Vec3, pts: &[BoundaryPoint], pool: &[usize], tol: f64) -> Vec<usize> {
    pool.iter().copied().filter(|&i| n.dot(pts[i].dir).abs() <= tol).collect()
}

/// Least-squares plane through the origin for the given directions.
fn refit(pts: &[BoundaryPoint], idx: &[usize]) -> Vec3 {
    let mut m = [[0.0; 3]; 3];
    for &i in idx {
        let p = pts[i].dir.to_array();
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += p[r] * p[c];
            }
        }
    }
    math::smallest_eigenvector(m)
}

/// Least-squares plane through the origin whose normal is perpendicular to
/// frame axis `k`.
fn refit_perpendicular(pts: &[BoundaryPoint], idx: &[usize], frame: &ManhattanFrame, k: usize) -> Vec3 {
    let (e1, e2) = (frame.axis((k + 1) % 3), frame.axis((k + 2) % 3));
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for &i in idx {
        let (x, y) = (pts[i].dir.dot(e1), pts[i].dir.dot(e2));
        a += x * x;
        b += x * y;
        c += y * y;
    }
    // minor axis of the 2x2 scatter matrix
    let t = 0.5 * math::atan2(2.0 * b, a - c) + FRAC_PI_2;
    e1 * math::cos(t) + e2 * math::sin(t)
}

/// Snaps an unlabelled line onto the Manhattan direction whose constrained
/// fit keeps the most of its inliers, provided it keeps at least
/// `SNAP_KEEP` of them. Short nearly-horizontal edges quantize to a
/// slightly tilted circle that would otherwise miss the label.
const SNAP_KEEP: f64 = 0.9;

fn snap(pts: &[BoundaryPoint], inl: &[usize], frame: &ManhattanFrame, tol: f64) -> Option<(Vec3, usize)> {
    let mut best: Option<(Vec3, usize, usize)> = None;
    for k in 0..3 {
        let n = refit_perpendicular(pts, inl, frame, k);
        let kept = inliers_of(n, pts, inl, tol).len();
        if kept as f64 >= SNAP_KEEP * inl.len() as f64 && best.is_none_or(|(_, c, _)| kept > c) {
            best = Some((n, kept, k));
        }
    }
    best.map(|(n, _, k)| (n, k))
}

/// Fits up to `max_lines` great circles to the mask outline by sequential
/// RANSAC, removing each line's inliers before the next search, and labels
/// each against the frame axes.
pub fn fit_boundary_lines(mask: &BinaryMask, frame: &ManhattanFrame, params: &LineFitParams) -> Result<Vec<FittedLine>> {
    if params.iterations == 0 || !(params.inlier_tol > 0.0) || !(params.theta_th >= 0.0) {
        return Err(Error::InvalidParameter("line fit parameters"));
    }
    let pts = boundary_points(mask);
    let n = pts.len();
    let min_inl = ((params.min_inlier_frac * n as f64) as usize).max(params.min_inliers).max(2);
    if n < 2 * min_inl {
        return Err(Error::InsufficientBoundary {
            boundary: n,
            required: 2 * min_inl,
        });
    }
    let tol = math::sin(params.inlier_tol);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pool: Vec<usize> = (0..n).collect();
    let mut lines = Vec::new();
    while lines.len() < params.max_lines && pool.len() >= min_inl.max(2) {
        let m = pool.len();
        // hypotheses are scored by truncated quadratic residuals, which
        // prefers tight fits over lines grazing two adjacent edges
        let mut best: Option<(Vec3, f64)> = None;
        for _ in 0..params.iterations {
            let i = rng.random_range(0..m);
            let mut j = rng.random_range(0..m - 1);
            if j >= i {
                j += 1;
            }
            let Some(cand) = pts[pool[i]].dir.cross(pts[pool[j]].dir).normalized() else {
                continue;
            };
            let score: f64 = pool
                .iter()
                .map(|&k| {
                    let r = cand.dot(pts[k].dir) / tol;
                    (1.0 - r * r).max(0.0)
                })
                .sum();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((cand, score));
            }
        }
        let Some((mut normal, _)) = best else { break };
        if inliers_of(normal, &pts, &pool, tol).len() < min_inl {
            break;
        }
        let mut inl = inliers_of(normal, &pts, &pool, tol);
        for _ in 0..20 {
            let next_normal = refit(&pts, &inl);
            let next = inliers_of(next_normal, &pts, &pool, tol);
            if next.len() < min_inl {
                break;
            }
            normal = next_normal;
            if next == inl {
                break;
            }
            inl = next;
        }
        let mut label = label_normal(normal, frame, params.theta_th);
        if label == LineLabel::None {
            if let Some((n, k)) = snap(&pts, &inl, frame, tol) {
                normal = n;
                label = LineLabel::from_axis(k);
            }
        }
        if normal.z < 0.0 || (normal.z == 0.0 && normal.x < 0.0) {
            normal = -normal;
        }
        let mut taken = vec![false; n];
        for &i in &inl {
            taken[i] = true;
        }
        pool.retain(|&i| !taken[i]);
        lines.push(FittedLine {
            normal,
            label,
            inliers: inl.iter().map(|&i| pts[i]).collect(),
        });
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::EquirectGrid;
    use proptest::prelude::*;

    const W: usize = 1024;
    const H: usize = 512;

    /// Pixels whose center ray hits the rectangle `y in ys, z in zs` on the
    /// wall plane `x = x0` (frame at yaw 0).
    fn wall_rect(x0: f64, ys: (f64, f64), zs: (f64, f64)) -> BinaryMask {
        EquirectGrid::from_fn(W, H, |c, r| {
            let d = pixel_to_dir(PixelCoord::new(c as f64, r as f64), W, H).vec();
            if d.x <= 0.0 {
                return false;
            }
            let p = d * (x0 / d.x);
            p.y > ys.0 && p.y < ys.1 && p.z > zs.0 && p.z < zs.1
        })
        .unwrap()
    }

    #[test]
    fn rectangle_on_a_wall_gives_two_vertical_and_two_horizontal_lines() {
        let frame = ManhattanFrame::from_yaw(0.0);
        let mask = wall_rect(2.0, (-0.6, 0.5), (-0.4, 0.6));
        let lines = fit_boundary_lines(&mask, &frame, &LineFitParams::default()).unwrap();
        assert_eq!(lines.len(), 4);
        let count = |l: LineLabel| lines.iter().filter(|x| x.label == l).count();
        assert_eq!((count(LineLabel::Z), count(LineLabel::Y)), (2, 2));
        for l in &lines {
            assert!((l.normal.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equator_band_has_no_vertical_lines() {
        let frame = ManhattanFrame::from_yaw(0.0);
        let mask = EquirectGrid::from_fn(W, H, |_, r| (250..262).contains(&r)).unwrap();
        let lines = fit_boundary_lines(&mask, &frame, &LineFitParams::default()).unwrap();
        assert!(!lines.is_empty());
        assert!(lines.iter().all(|l| l.label != LineLabel::Z));
    }

    #[test]
    fn small_masks_are_rejected() {
        let frame = ManhattanFrame::from_yaw(0.0);
        let mask = EquirectGrid::from_fn(W, H, |c, r| c == 5 && r == 200).unwrap();
        assert!(matches!(
            fit_boundary_lines(&mask, &frame, &LineFitParams::default()),
            Err(Error::InsufficientBoundary { .. })
        ));
    }

    #[test]
    fn constrained_refit_recovers_manhattan_circles() {
        let frame = ManhattanFrame::from_yaw(0.4);
        for k in 0..3 {
            let truth = frame.axis(k).cross(frame.axis((k + 1) % 3) * 0.3 + frame.axis((k + 2) % 3)).normalized().unwrap();
            let (e1, e2) = (frame.axis(k), truth.cross(frame.axis(k)));
            let pts: Vec<BoundaryPoint> = (0..12)
                .map(|i| {
                    let t = 0.1 * i as f64;
                    BoundaryPoint {
                        pixel: PixelCoord::new(0.0, 0.0),
                        dir: e1 * math::cos(t) + e2 * math::sin(t),
                        outside: (0, 0),
                    }
                })
                .collect();
            let idx: Vec<usize> = (0..pts.len()).collect();
            let n = refit_perpendicular(&pts, &idx, &frame, k);
            assert!(n.dot(frame.axis(k)).abs() < 1e-12);
            assert!((n.dot(truth).abs() - 1.0).abs() < 1e-12);
            let (sn, sk) = snap(&pts, &idx, &frame, 1e-9).unwrap();
            assert_eq!(sk, k);
            assert!((sn.dot(truth).abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_points_lie_between_pixels() {
        let mask = EquirectGrid::from_fn(16, 8, |c, r| (c == 15 || c == 0) && r == 3).unwrap();
        let pts = boundary_points(&mask);
        assert_eq!(pts.len(), 6);
        // ordering starts at the left edge of column 15
        assert_eq!(pts[0].pixel, PixelCoord::new(14.5, 3.0));
        assert_eq!(pts[0].outside, (14, 3));
        assert_eq!(pts.last().unwrap().pixel, PixelCoord::new(0.5, 3.0));
    }

    #[test]
    fn zero_threshold_labels_random_normals_none() {
        let frame = ManhattanFrame::from_yaw(0.3);
        let n = Vec3::new(0.31, -0.52, 0.79).normalized().unwrap();
        assert_eq!(label_normal(n, &frame, 0.0), LineLabel::None);
        assert_eq!(label_normal(Vec3::Z, &ManhattanFrame::from_yaw(0.0), 0.0), LineLabel::X);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn perpendicular_normal_gets_its_label(yaw in 0.0f64..6.3, k in 0usize..3, t in 0.0f64..6.3, th in 1e-9f64..0.2) {
            let frame = ManhattanFrame::from_yaw(yaw);
            // unit normal perpendicular to axis k
            let (a, b) = (frame.axis((k + 1) % 3), frame.axis((k + 2) % 3));
            let t = 0.2 + (t % 1.2);
            let n = a * math::cos(t) + b * math::sin(t);
            prop_assert_eq!(label_normal(n, &frame, th), LineLabel::from_axis(k));
        }
    }

    #[test]
    fn fit_is_unchanged_by_column_shift() {
        let frame = ManhattanFrame::from_yaw(0.0);
        let mask = wall_rect(2.5, (-0.4, 0.9), (-0.5, 0.3));
        let params = LineFitParams::default();
        let a = fit_boundary_lines(&mask, &frame, &params).unwrap();
        for k in [256i64, 600] {
            let angle = k as f64 * math::TAU / W as f64;
            let b = fit_boundary_lines(&mask.shift_columns(k), &frame.rotated(angle), &params).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.label, y.label);
                assert_eq!(x.inliers.len(), y.inliers.len());
                let rn = x.normal.rotate_z(angle);
                assert!((rn - y.normal).norm() < 1e-9 || (rn + y.normal).norm() < 1e-9);
            }
        }
    }
}
