//! Placing masks in the room: wall rectangles, ceiling rectangles and
//! floor-standing cuboids.

use alloc::vec::Vec;

use super::lines::{boundary_points, FittedLine};
use super::{coord, wall_id, LayoutModel, ObjectKind, Object3D, PlaneMap, CEILING, FLOOR};
use crate::grid::{BinaryMask, ClassId};
use crate::math::{self, Vec3, TAU};
use crate::sphere::{pixel_to_dir, PixelCoord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactParams {
    /// Neighbourhood radius around each inlier's outside pixel, in pixels.
    pub radius: usize,
    /// Fraction of inliers that must see the plane.
    pub min_fraction: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            radius: 2,
            min_fraction: 0.3,
        }
    }
}

/// Planes touched by a line, with the number of inliers seeing each one in
/// the neighbourhood of their outside pixel. Only planes reaching
/// `min_fraction` of the inliers are returned, by ascending id.
pub fn line_contacts(line: &FittedLine, pm: &PlaneMap, params: &ContactParams) -> Vec<(u16, usize)> {
    let (w, h) = (pm.width() as i64, pm.height() as i64);
    let r = params.radius as i64;
    let mut counts: Vec<(u16, usize)> = Vec::new();
    let mut seen: Vec<u16> = Vec::new();
    for p in &line.inliers {
        seen.clear();
        let (oc, or) = (p.outside.0 as i64, p.outside.1 as i64);
        for dr in -r..=r {
            let row = or + dr;
            if row < 0 || row >= h {
                continue;
            }
            for dc in -r..=r {
                let id = pm.get((oc + dc).rem_euclid(w) as usize, row as usize);
                if !seen.contains(&id) {
                    seen.push(id);
                }
            }
        }
        for &id in &seen {
            match counts.iter_mut().find(|e| e.0 == id) {
                Some(e) => e.1 += 1,
                None => counts.push((id, 1)),
            }
        }
    }
    let need = params.min_fraction * line.inliers.len() as f64;
    counts.retain(|e| e.1 as f64 >= need && e.1 > 0);
    counts.sort();
    counts
}

fn majority_wall(mask: &BinaryMask, layout: &LayoutModel) -> Option<usize> {
    let (w, h) = (mask.width(), mask.height());
    let mut hist = alloc::vec![0usize; layout.walls().len()];
    for row in 0..h {
        for col in 0..w {
            if !mask.get(col, row) {
                continue;
            }
            let d = pixel_to_dir(PixelCoord::new(col as f64, row as f64), w, h).vec();
            if let Some(hit) = layout.cast(d) {
                if hit.plane >= 2 {
                    hist[hit.plane as usize - 2] += 1;
                }
            }
        }
    }
    let (i, &n) = hist.iter().enumerate().rev().max_by_key(|e| e.1)?;
    (n > 0).then_some(i)
}

/// Projects the outline of a wall-mounted object onto its majority wall and
/// returns the bounding rectangle on that wall.
pub fn place_wall_object(mask: &BinaryMask, layout: &LayoutModel, class_id: ClassId) -> Result<Object3D> {
    let wi = majority_wall(mask, layout).ok_or(Error::NoWallIntersection)?;
    let wall = layout.walls()[wi];
    let (a, b) = (wall.axis, wall.along_axis());
    let frame = layout.frame();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in boundary_points(mask) {
        let d = frame.to_frame(p.dir);
        let t = wall.offset / coord(d, a);
        if !(t > 0.0) || !t.is_finite() {
            continue;
        }
        let q = d * t;
        let (s, z) = (coord(q, b), q.z);
        lo = [lo[0].min(s), lo[1].min(z)];
        hi = [hi[0].max(s), hi[1].max(z)];
    }
    if !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return Err(Error::NoWallIntersection);
    }
    let mut c = [0.0; 3];
    c[a] = wall.offset;
    c[b] = (lo[0] + hi[0]) / 2.0;
    c[2] = (lo[1] + hi[1]) / 2.0;
    Ok(Object3D {
        kind: ObjectKind::WallRect,
        class_id,
        position: frame.to_world(Vec3::new(c[0], c[1], c[2])),
        dims: [hi[0] - lo[0], 0.0, hi[1] - lo[1]],
        yaw: layout.wall_yaw(wi),
        plane: wall_id(wi),
        approximate: false,
    })
}

/// Projects the outline of a ceiling-mounted object onto the ceiling and
/// returns its bounding rectangle, aligned with the frame axes.
pub fn place_ceiling_object(mask: &BinaryMask, layout: &LayoutModel, class_id: ClassId) -> Result<Object3D> {
    let frame = layout.frame();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in boundary_points(mask) {
        let d = frame.to_frame(p.dir);
        if d.z <= 1e-9 {
            continue;
        }
        let q = d * (layout.ceiling_z() / d.z);
        lo = [lo[0].min(q.x), lo[1].min(q.y)];
        hi = [hi[0].max(q.x), hi[1].max(q.y)];
    }
    if !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return Err(Error::NoWallIntersection);
    }
    let c = Vec3::new((lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, layout.ceiling_z());
    Ok(Object3D {
        kind: ObjectKind::CeilingRect,
        class_id,
        position: frame.to_world(c),
        dims: [hi[0] - lo[0], hi[1] - lo[1], 0.0],
        yaw: frame.yaw(),
        plane: CEILING,
        approximate: false,
    })
}

/// Inlier rays projected onto the line's great circle, keeping the longest
/// run whose neighbours are at most `max_gap` radians apart.
fn segment_rays(line: &FittedLine, max_gap: f64) -> Vec<Vec3> {
    let n = line.normal;
    let proj: Vec<Vec3> = line
        .inliers
        .iter()
        .filter_map(|p| (p.dir - n * n.dot(p.dir)).normalized())
        .collect();
    let Some(e1) = proj.iter().fold(Vec3::ZERO, |acc, v| acc + *v).normalized() else {
        return proj;
    };
    let e2 = n.cross(e1);
    let mut keyed: Vec<(f64, Vec3)> = proj.iter().map(|v| (math::atan2(v.dot(e2), v.dot(e1)), *v)).collect();
    keyed.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut best, mut start) = ((0usize, 0usize), 0usize);
    for i in 0..keyed.len() {
        if i > 0 && keyed[i].0 - keyed[i - 1].0 > max_gap {
            start = i;
        }
        if i + 1 - start > best.1 - best.0 {
            best = (start, i + 1);
        }
    }
    keyed[best.0..best.1].iter().map(|e| e.1).collect()
}

/// Share of mask pixels whose rays must hit a recovered box for it to be
/// accepted. Occlusion only removes mask pixels, so this stays near 1 for a
/// correct box even when it is partly hidden.
const SILHOUETTE_COVERAGE: f64 = 0.95;

/// Recovers a floor-standing box pushed against a wall from two boundary
/// lines running along that wall: the one touching the wall (top back edge)
/// gives the height, the one touching the floor (bottom front edge) gives
/// the front face position and the width.
///
/// Wall candidates are tried by how many inliers see the wall, floor
/// candidates by inlier count, and the first box whose silhouette covers
/// the mask is returned.
pub fn place_cuboid(
    mask: &BinaryMask,
    lines: &[FittedLine],
    layout: &LayoutModel,
    pm: &PlaneMap,
    contact: &ContactParams,
    class_id: ClassId,
) -> Result<Object3D> {
    if !mask.same_shape(pm) {
        return Err(Error::ShapeMismatch("mask and plane map differ in size"));
    }
    let contacts: Vec<Vec<(u16, usize)>> = lines.iter().map(|l| line_contacts(l, pm, contact)).collect();

    // a side edge can have a wall behind it in the image, so wall lines are
    // ranked by how many inliers see the wall rather than by total support
    let mut wall_cands: Vec<(usize, usize, usize)> = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        let Some(axis) = l.label.axis().filter(|&k| k < 2) else { continue };
        let touching = contacts[i]
            .iter()
            .filter(|(id, _)| layout.wall(*id).is_some_and(|w| w.along_axis() == axis))
            .max_by(|x, y| x.1.cmp(&y.1).then(y.0.cmp(&x.0)));
        if let Some(&(id, seen)) = touching {
            wall_cands.push((i, id as usize - 2, seen));
        }
    }
    wall_cands.sort_by(|x, y| y.2.cmp(&x.2).then(x.0.cmp(&y.0)));
    if wall_cands.is_empty() {
        return Err(Error::UnderconstrainedCuboid("no line along a wall touches it"));
    }

    let mut floor_found = false;
    let mut built = false;
    for &(wl, wi, _) in &wall_cands {
        let mut floor_cands: Vec<usize> = (0..lines.len())
            .filter(|&i| i != wl && lines[i].label == lines[wl].label && contacts[i].iter().any(|c| c.0 == FLOOR))
            .collect();
        floor_cands.sort_by(|&x, &y| lines[y].inliers.len().cmp(&lines[x].inliers.len()).then(x.cmp(&y)));
        for fl in floor_cands {
            floor_found = true;
            let Some((obj, lo, hi)) = box_from_lines(&lines[wl], &lines[fl], wi, mask.width(), layout, class_id) else {
                continue;
            };
            built = true;
            if silhouette_coverage(mask, layout, lo, hi) >= SILHOUETTE_COVERAGE {
                return Ok(obj);
            }
        }
    }
    Err(Error::UnderconstrainedCuboid(if !floor_found {
        "no line along the wall touches the floor"
    } else if !built {
        "contact lines give an empty box"
    } else {
        "no box from the contact lines covers the mask"
    }))
}

fn box_from_lines(
    wall_line: &FittedLine,
    floor_line: &FittedLine,
    wi: usize,
    width_px: usize,
    layout: &LayoutModel,
    class_id: ClassId,
) -> Option<(Object3D, [f64; 3], [f64; 3])> {
    let frame = layout.frame();
    let wall = layout.walls()[wi];
    let (a, b) = (wall.axis, wall.along_axis());
    let gap = 4.0 * TAU / width_px as f64;

    let mut ztop = (0.0, 0usize);
    for r in segment_rays(wall_line, gap) {
        let d = frame.to_frame(r);
        let t = wall.offset / coord(d, a);
        if t > 0.0 && t.is_finite() {
            ztop = (ztop.0 + d.z * t, ztop.1 + 1);
        }
    }
    let (mut front, mut nfront, mut lo, mut hi) = (0.0, 0usize, f64::INFINITY, f64::NEG_INFINITY);
    for r in segment_rays(floor_line, gap) {
        let d = frame.to_frame(r);
        if d.z >= -1e-9 {
            continue;
        }
        let q = d * (-1.0 / d.z);
        front += coord(q, a);
        nfront += 1;
        lo = lo.min(coord(q, b));
        hi = hi.max(coord(q, b));
    }
    if ztop.1 == 0 || nfront == 0 {
        return None;
    }
    let z_top = ztop.0 / ztop.1 as f64;
    let front = front / nfront as f64;
    let depth = (wall.offset - front) * wall.offset.signum();
    let (width, height) = (hi - lo, z_top + 1.0);
    if !(depth > 0.0 && width > 0.0 && height > 0.0) {
        return None;
    }
    let (mut bmin, mut bmax) = ([0.0, 0.0, -1.0], [0.0, 0.0, z_top]);
    bmin[a] = wall.offset.min(front);
    bmax[a] = wall.offset.max(front);
    bmin[b] = lo;
    bmax[b] = hi;
    let c: [f64; 3] = core::array::from_fn(|k| (bmin[k] + bmax[k]) / 2.0);
    let obj = Object3D {
        kind: ObjectKind::Cuboid,
        class_id,
        position: frame.to_world(Vec3::new(c[0], c[1], c[2])),
        dims: [width, depth, height],
        yaw: layout.wall_yaw(wi),
        plane: FLOOR,
        approximate: false,
    };
    Some((obj, bmin, bmax))
}

/// Fraction of mask pixels whose center ray hits the frame-aligned box
/// `[lo, hi]`.
fn silhouette_coverage(mask: &BinaryMask, layout: &LayoutModel, lo: [f64; 3], hi: [f64; 3]) -> f64 {
    let frame = layout.frame();
    let (w, h) = (mask.width(), mask.height());
    let (mut hit, mut total) = (0usize, 0usize);
    for row in 0..h {
        for col in 0..w {
            if !mask.get(col, row) {
                continue;
            }
            total += 1;
            let d = frame.to_frame(pixel_to_dir(PixelCoord::new(col as f64, row as f64), w, h).vec());
            if ray_hits_box(d.to_array(), lo, hi) {
                hit += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

fn ray_hits_box(d: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> bool {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if lo[k] > 0.0 || hi[k] < 0.0 {
                return false;
            }
            continue;
        }
        let (a, b) = (lo[k] / d[k], hi[k] / d[k]);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    t0 <= t1
}

/// Rough box from the mask alone: the floor hits of each column's lowest
/// pixel bound the footprint, and the highest pixel of each column, taken
/// at the distance of its floor hit, gives the height.
pub fn estimate_footprint(mask: &BinaryMask, layout: &LayoutModel, class_id: ClassId) -> Result<Object3D> {
    let (w, h) = (mask.width(), mask.height());
    let frame = layout.frame();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    let mut top = f64::NEG_INFINITY;
    for col in 0..w {
        let Some(first) = (0..h).find(|&r| mask.get(col, r)) else { continue };
        let last = (0..h).rev().find(|&r| mask.get(col, r)).unwrap_or(first);
        let dir = |v: f64| frame.to_frame(pixel_to_dir(PixelCoord::new(col as f64, v), w, h).vec());
        let d = dir(last as f64 + 0.5);
        if d.z >= -1e-9 {
            continue;
        }
        let q = d * (-1.0 / d.z);
        lo = [lo[0].min(q.x), lo[1].min(q.y)];
        hi = [hi[0].max(q.x), hi[1].max(q.y)];
        let u = dir(first as f64 - 0.5);
        let horiz = math::hypot(u.x, u.y);
        if horiz > 1e-9 {
            top = top.max(u.z * math::hypot(q.x, q.y) / horiz);
        }
    }
    if !(hi[0] >= lo[0]) || !top.is_finite() {
        return Err(Error::UnderconstrainedCuboid("mask never reaches below the horizon"));
    }
    let height = (top + 1.0).max(0.0);
    let c = Vec3::new((lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, height / 2.0 - 1.0);
    Ok(Object3D {
        kind: ObjectKind::Cuboid,
        class_id,
        position: frame.to_world(c),
        dims: [hi[0] - lo[0], hi[1] - lo[1], height],
        yaw: frame.yaw(),
        plane: FLOOR,
        approximate: true,
    })
}
