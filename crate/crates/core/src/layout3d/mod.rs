//! Manhattan room model and object placement.
//!
//! Room geometry lives in frame coordinates `(p·vx, p·vy, p·vz)` with the
//! camera at the origin and the floor at `z = -1` (camera height is the unit
//! of length). Results are reported in world coordinates.

use alloc::vec::Vec;

use crate::grid::{ClassId, EquirectGrid};
use crate::math::{self, Vec3};
use crate::sphere::{dir_to_pixel, pixel_to_dir, PixelCoord, SphereDir};
use crate::{Error, Result};

mod lines;
mod place;
mod refine;

pub use lines::{boundary_points, fit_boundary_lines, label_normal, BoundaryPoint, FittedLine, LineFitParams, LineLabel};
pub use place::{
    estimate_footprint, line_contacts, place_ceiling_object, place_cuboid, place_wall_object, ContactParams,
};
pub use refine::{fill_holes, refine_masks, RefineRules};

/// Plane ids in a [`PlaneMap`].
pub const FLOOR: u16 = 0;
pub const CEILING: u16 = 1;

pub const fn wall_id(index: usize) -> u16 {
    index as u16 + 2
}

/// Per-pixel plane ids: [`FLOOR`], [`CEILING`], or [`wall_id`].
pub type PlaneMap = EquirectGrid<u16>;

/// Three orthonormal scene axes in world coordinates, `z` vertical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManhattanFrame {
    axes: [Vec3; 3],
}

impl ManhattanFrame {
    pub fn new(x: Vec3, y: Vec3, z: Vec3) -> Result<Self> {
        let axes = [x, y, z];
        for a in axes {
            if (a.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter("frame axes must be unit vectors"));
            }
        }
        if x.dot(y).abs() >= 1e-6 || y.dot(z).abs() >= 1e-6 || z.dot(x).abs() >= 1e-6 {
            return Err(Error::InvalidParameter("frame axes must be orthogonal"));
        }
        if z.dot(Vec3::Z) < 1.0 - 1e-6 {
            return Err(Error::InvalidParameter("frame z axis must point up"));
        }
        Ok(Self { axes })
    }

    /// Frame whose x axis points at azimuth `yaw`.
    pub fn from_yaw(yaw: f64) -> Self {
        let x = Vec3::new(math::cos(yaw), math::sin(yaw), 0.0);
        Self {
            axes: [x, Vec3::Z.cross(x), Vec3::Z],
        }
    }

    pub fn axis(&self, k: usize) -> Vec3 {
        self.axes[k]
    }

    pub fn axes(&self) -> [Vec3; 3] {
        self.axes
    }

    pub fn yaw(&self) -> f64 {
        math::atan2(self.axes[0].y, self.axes[0].x)
    }

    pub fn to_frame(&self, v: Vec3) -> Vec3 {
        Vec3::new(v.dot(self.axes[0]), v.dot(self.axes[1]), v.dot(self.axes[2]))
    }

    pub fn to_world(&self, f: Vec3) -> Vec3 {
        self.axes[0] * f.x + self.axes[1] * f.y + self.axes[2] * f.z
    }

    pub fn rotated(&self, angle: f64) -> Self {
        Self {
            axes: self.axes.map(|a| a.rotate_z(angle)),
        }
    }
}

pub(crate) fn coord(v: Vec3, k: usize) -> f64 {
    match k {
        0 => v.x,
        1 => v.y,
        _ => v.z,
    }
}

/// A wall on the plane `coord(axis) == offset`, between two floor corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub axis: usize,
    pub offset: f64,
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl Wall {
    /// Horizontal frame axis running along the wall.
    pub fn along_axis(&self) -> usize {
        1 - self.axis
    }

    pub fn lateral_range(&self) -> (f64, f64) {
        let b = self.along_axis();
        (self.start[b].min(self.end[b]), self.start[b].max(self.end[b]))
    }
}

/// Closed Manhattan room: walls alternate between x- and y-planes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutModel {
    frame: ManhattanFrame,
    corners: Vec<[f64; 2]>,
    walls: Vec<Wall>,
    ceiling_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneHit {
    pub plane: u16,
    pub t: f64,
    /// Hit point in frame coordinates.
    pub point: Vec3,
}

impl LayoutModel {
    /// Builds the room from floor corners `(x, y)` in frame coordinates.
    /// Corners are reordered by azimuth and snapped to axis-aligned walls.
    pub fn from_corners(frame: ManhattanFrame, floor: &[[f64; 2]], ceiling_z: f64) -> Result<Self> {
        if floor.len() < 4 || floor.len() % 2 != 0 {
            return Err(Error::OpenLayout("need an even number of at least 4 corners"));
        }
        if !(ceiling_z > 0.0) {
            return Err(Error::OpenLayout("ceiling must be above the camera"));
        }
        let mut pts = floor.to_vec();
        pts.sort_by(|a, b| math::atan2(a[1], a[0]).total_cmp(&math::atan2(b[1], b[0])));
        let n = pts.len();
        let mut axes = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        for i in 0..n {
            let (p, q) = (pts[i], pts[(i + 1) % n]);
            let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
            let (axis, major, minor) = if dx.abs() < dy.abs() { (0, dy, dx) } else { (1, dx, dy) };
            if major.abs() < 1e-9 || minor.abs() > major.abs() * math::tan(10f64.to_radians()) {
                return Err(Error::OpenLayout("wall not aligned with the Manhattan frame"));
            }
            axes.push(axis);
            offsets.push((p[axis] + q[axis]) / 2.0);
        }
        for i in 0..n {
            if axes[i] == axes[(i + 1) % n] {
                return Err(Error::OpenLayout("adjacent walls are parallel"));
            }
        }
        let corners: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let (prev, cur) = ((i + n - 1) % n, i);
                let mut c = [0.0; 2];
                c[axes[prev]] = offsets[prev];
                c[axes[cur]] = offsets[cur];
                c
            })
            .collect();
        let walls: Vec<Wall> = (0..n)
            .map(|i| Wall {
                axis: axes[i],
                offset: offsets[i],
                start: corners[i],
                end: corners[(i + 1) % n],
            })
            .collect();
        let winding: f64 = (0..n)
            .map(|i| {
                let (a, b) = (corners[i], corners[(i + 1) % n]);
                math::atan2(a[0] * b[1] - a[1] * b[0], a[0] * b[0] + a[1] * b[1])
            })
            .sum();
        if winding.abs() < math::PI || walls.iter().any(|w| w.offset.abs() < 1e-6) {
            return Err(Error::OpenLayout("camera is not inside the room"));
        }
        Ok(Self {
            frame,
            corners,
            walls,
            ceiling_z,
        })
    }

    /// Builds the room from paired ceiling/floor corner pixels. The ceiling
    /// height is averaged over the corners.
    pub fn from_corner_pixels(
        frame: ManhattanFrame,
        ceiling: &[PixelCoord],
        floor: &[PixelCoord],
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if ceiling.len() != floor.len() {
            return Err(Error::OpenLayout("ceiling and floor corner counts differ"));
        }
        let mut pts = Vec::with_capacity(floor.len());
        let mut zsum = 0.0;
        for (c, f) in ceiling.iter().zip(floor) {
            let df = frame.to_frame(pixel_to_dir(*f, width, height).vec());
            let dc = frame.to_frame(pixel_to_dir(*c, width, height).vec());
            if df.z >= -1e-9 || dc.z <= 1e-9 {
                return Err(Error::OpenLayout("floor corner above or ceiling corner below the horizon"));
            }
            let p = df * (-1.0 / df.z);
            let r = math::hypot(p.x, p.y);
            zsum += dc.z * r / math::hypot(dc.x, dc.y);
            pts.push([p.x, p.y]);
        }
        if pts.is_empty() {
            return Err(Error::OpenLayout("no corners"));
        }
        Self::from_corners(frame, &pts, zsum / pts.len() as f64)
    }

    /// Projected ceiling and floor corners, in the model's corner order.
    pub fn corner_pixels(&self, width: usize, height: usize) -> (Vec<PixelCoord>, Vec<PixelCoord>) {
        let project = |z: f64| {
            self.corners
                .iter()
                .map(|c| {
                    let w = self.frame.to_world(Vec3::new(c[0], c[1], z));
                    dir_to_pixel(SphereDir::new(w).expect("corner away from camera"), width, height)
                })
                .collect()
        };
        (project(self.ceiling_z), project(-1.0))
    }

    pub fn frame(&self) -> &ManhattanFrame {
        &self.frame
    }

    pub fn corners(&self) -> &[[f64; 2]] {
        &self.corners
    }

    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    pub fn wall(&self, plane: u16) -> Option<&Wall> {
        (plane >= 2).then(|| self.walls.get(plane as usize - 2)).flatten()
    }

    pub fn ceiling_z(&self) -> f64 {
        self.ceiling_z
    }

    pub fn floor_z(&self) -> f64 {
        -1.0
    }

    /// Nearest surface hit by the world-space ray `dir` from the camera.
    pub fn cast(&self, dir: Vec3) -> Option<PlaneHit> {
        self.cast_frame(self.frame.to_frame(dir))
    }

    pub fn cast_frame(&self, d: Vec3) -> Option<PlaneHit> {
        let mut best: Option<PlaneHit> = None;
        let mut consider = |plane: u16, t: f64| {
            if t > 0.0 && best.is_none_or(|b| t < b.t) {
                best = Some(PlaneHit { plane, t, point: d * t });
            }
        };
        if d.z < 0.0 {
            consider(FLOOR, -1.0 / d.z);
        } else if d.z > 0.0 {
            consider(CEILING, self.ceiling_z / d.z);
        }
        for (i, w) in self.walls.iter().enumerate() {
            let da = coord(d, w.axis);
            if da.abs() < 1e-15 {
                continue;
            }
            let t = w.offset / da;
            if t <= 0.0 {
                continue;
            }
            let p = d * t;
            let (lo, hi) = w.lateral_range();
            let eps = 1e-9 * (1.0 + t);
            let b = coord(p, w.along_axis());
            if b >= lo - eps && b <= hi + eps && p.z >= -1.0 - eps && p.z <= self.ceiling_z + eps {
                consider(wall_id(i), t);
            }
        }
        best
    }

    /// World yaw of the direction running along wall `i` (its frame axis,
    /// positive sense).
    pub fn wall_yaw(&self, i: usize) -> f64 {
        let a = self.frame.axis(self.walls[i].along_axis());
        math::atan2(a.y, a.x)
    }

    /// Same room seen after rotating the panorama by `angle` about `z`.
    pub fn rotated(&self, angle: f64) -> Self {
        Self {
            frame: self.frame.rotated(angle),
            ..self.clone()
        }
    }

    /// Extent of the room along each horizontal frame axis.
    pub fn extent(&self) -> [f64; 2] {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for c in &self.corners {
            for k in 0..2 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        [hi[0] - lo[0], hi[1] - lo[1]]
    }

    /// Whether `(x, y)` lies inside the floor polygon.
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        let n = self.corners.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (self.corners[i], self.corners[(i + 1) % n]);
            if (a[1] > y) != (b[1] > y) && x < a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]) {
                inside = !inside;
            }
        }
        inside
    }
}

/// Labels every pixel with the first surface its ray hits.
pub fn build_plane_map(layout: &LayoutModel, width: usize, height: usize) -> Result<PlaneMap> {
    let mut out = PlaneMap::filled(width, height, 1, FLOOR)?;
    for row in 0..height {
        for col in 0..width {
            let d = pixel_to_dir(PixelCoord::new(col as f64, row as f64), width, height).vec();
            let hit = layout.cast(d).ok_or(Error::OpenLayout("ray escapes the room"))?;
            out.set(col, row, hit.plane);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectKind {
    WallRect,
    Cuboid,
    CeilingRect,
}

/// A placed object. `dims` are `[along local x, along local y, vertical]`;
/// local x points at world azimuth `yaw`. Wall rectangles have zero
/// thickness, ceiling rectangles zero height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Object3D {
    pub kind: ObjectKind,
    pub class_id: ClassId,
    pub position: Vec3,
    pub dims: [f64; 3],
    pub yaw: f64,
    /// Supporting plane id.
    pub plane: u16,
    /// Set for footprint estimates made without contact lines.
    pub approximate: bool,
}

impl Object3D {
    pub fn rotated(&self, angle: f64) -> Self {
        Self {
            position: self.position.rotate_z(angle),
            yaw: self.yaw + angle,
            ..*self
        }
    }
}
