//! Synthetic Manhattan rooms rendered by ray casting, used as ground truth
//! for the placement round trip.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::anchors::PanoBox;
use crate::grid::{BinaryMask, ClassId, EquirectGrid, SemanticMap};
use crate::layout3d::{coord, wall_id, LayoutModel, ManhattanFrame, ObjectKind, Object3D, FLOOR};
use crate::math::{self, Vec3};
use crate::sphere::{pixel_to_dir, PixelCoord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthShape {
    /// Axis-aligned box in frame coordinates. `wall` names the wall it backs
    /// onto, which fixes its reported orientation.
    Cuboid { min: Vec3, max: Vec3, wall: Option<usize> },
    /// Rectangle on a wall: `lateral` along the wall, `vertical` in z.
    WallRect { wall: usize, lateral: (f64, f64), vertical: (f64, f64) },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthObject {
    pub class_id: ClassId,
    pub shape: SynthShape,
}

impl SynthObject {
    /// A box standing on the floor with its back against wall `wall`.
    pub fn cuboid_on_wall(
        layout: &LayoutModel,
        class_id: ClassId,
        wall: usize,
        center: f64,
        width: f64,
        depth: f64,
        height: f64,
    ) -> Self {
        let wl = layout.walls()[wall];
        let (a, b) = (wl.axis, wl.along_axis());
        let front = wl.offset - depth * wl.offset.signum();
        let (mut min, mut max) = ([0.0; 3], [0.0; 3]);
        min[a] = wl.offset.min(front);
        max[a] = wl.offset.max(front);
        min[b] = center - width / 2.0;
        max[b] = center + width / 2.0;
        min[2] = -1.0;
        max[2] = height - 1.0;
        Self {
            class_id,
            shape: SynthShape::Cuboid {
                min: Vec3::from_array(min),
                max: Vec3::from_array(max),
                wall: Some(wall),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub layout: LayoutModel,
    pub objects: Vec<SynthObject>,
}

/// Rendered ground truth. Object `i` has instance id `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Render {
    /// Visible pixels of each object.
    pub masks: Vec<BinaryMask>,
    pub semantic: SemanticMap,
    pub instances: EquirectGrid<u16>,
}

const EPS: f64 = 1e-9;

fn slab(d: Vec3, min: Vec3, max: Vec3) -> Option<f64> {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for k in 0..3 {
        let (dk, lo, hi) = (coord(d, k), coord(min, k), coord(max, k));
        if dk.abs() < 1e-15 {
            if lo > 0.0 || hi < 0.0 {
                return None;
            }
            continue;
        }
        let (a, b) = (lo / dk, hi / dk);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1 && t0 > 0.0).then_some(t0)
}

impl SyntheticScene {
    /// Checks every object against the room; `ObjectOutsideRoom(i)` names
    /// the first offender.
    pub fn new(layout: LayoutModel, objects: Vec<SynthObject>) -> Result<Self> {
        let top = layout.ceiling_z();
        for (i, o) in objects.iter().enumerate() {
            let ok = match o.shape {
                SynthShape::Cuboid { min, max, wall } => {
                    let inward = |x: f64, lo: f64, hi: f64| if x == lo { x + EPS } else if x == hi { x - EPS } else { x };
                    let corners_in = [(min.x, min.y), (min.x, max.y), (max.x, min.y), (max.x, max.y)]
                        .iter()
                        .all(|&(x, y)| layout.contains_xy(inward(x, min.x, max.x), inward(y, min.y, max.y)));
                    let camera_out = min.x > 0.0 || max.x < 0.0 || min.y > 0.0 || max.y < 0.0 || min.z > 0.0 || max.z < 0.0;
                    min.x < max.x
                        && min.y < max.y
                        && min.z < max.z
                        && min.z >= -1.0 - EPS
                        && max.z <= top + EPS
                        && corners_in
                        && camera_out
                        && wall.is_none_or(|w| w < layout.walls().len())
                }
                SynthShape::WallRect { wall, lateral, vertical } => layout.walls().get(wall).is_some_and(|w| {
                    let (lo, hi) = w.lateral_range();
                    lateral.0 < lateral.1
                        && vertical.0 < vertical.1
                        && lateral.0 >= lo - EPS
                        && lateral.1 <= hi + EPS
                        && vertical.0 >= -1.0 - EPS
                        && vertical.1 <= top + EPS
                }),
            };
            if !ok {
                return Err(Error::ObjectOutsideRoom(i));
            }
        }
        Ok(Self { layout, objects })
    }

    /// Distance along the frame ray `d` to object `o`, if hit.
    fn hit(&self, o: &SynthObject, d: Vec3) -> Option<f64> {
        match o.shape {
            SynthShape::Cuboid { min, max, .. } => slab(d, min, max),
            SynthShape::WallRect { wall, lateral, vertical } => {
                let w = self.layout.walls()[wall];
                let t = w.offset / coord(d, w.axis);
                if !(t > 0.0) || !t.is_finite() {
                    return None;
                }
                let p = d * t;
                let s = coord(p, w.along_axis());
                (s > lateral.0 && s < lateral.1 && p.z > vertical.0 && p.z < vertical.1).then_some(t)
            }
        }
    }

    /// Index of the object seen along the world ray `dir`, if any. Wall
    /// rectangles win over their wall at equal depth.
    pub fn object_at(&self, dir: Vec3) -> Option<usize> {
        let d = self.layout.frame().to_frame(dir);
        let room = self.layout.cast_frame(d)?.t;
        let mut best: Option<(usize, f64)> = None;
        for (i, o) in self.objects.iter().enumerate() {
            if let Some(t) = self.hit(o, d) {
                if t <= room * (1.0 + EPS) && best.is_none_or(|(_, b)| t < b) {
                    best = Some((i, t));
                }
            }
        }
        best.map(|b| b.0)
    }

    pub fn render(&self, width: usize, height: usize) -> Result<Render> {
        let mut masks = vec![BinaryMask::empty(width, height)?; self.objects.len()];
        let mut semantic = SemanticMap::filled(width, height, 1, 0)?;
        let mut instances = EquirectGrid::filled(width, height, 1, 0u16)?;
        for row in 0..height {
            for col in 0..width {
                let d = pixel_to_dir(PixelCoord::new(col as f64, row as f64), width, height).vec();
                if let Some(i) = self.object_at(d) {
                    masks[i].set(col, row, true);
                    semantic.set(col, row, self.objects[i].class_id);
                    instances.set(col, row, i as u16 + 1);
                }
            }
        }
        Ok(Render {
            masks,
            semantic,
            instances,
        })
    }

    /// Ground-truth placements in world coordinates, in the conventions of
    /// the placement functions.
    pub fn ground_truth(&self) -> Vec<Object3D> {
        let frame = self.layout.frame();
        self.objects
            .iter()
            .map(|o| match o.shape {
                SynthShape::Cuboid { min, max, wall } => {
                    let c = (min + max) / 2.0;
                    let ext = max - min;
                    let (dims, yaw) = match wall {
                        Some(w) => {
                            let wl = self.layout.walls()[w];
                            let (a, b) = (wl.axis, wl.along_axis());
                            ([coord(ext, b), coord(ext, a), ext.z], self.layout.wall_yaw(w))
                        }
                        None => ([ext.x, ext.y, ext.z], frame.yaw()),
                    };
                    Object3D {
                        kind: ObjectKind::Cuboid,
                        class_id: o.class_id,
                        position: frame.to_world(c),
                        dims,
                        yaw,
                        plane: FLOOR,
                        approximate: false,
                    }
                }
                SynthShape::WallRect { wall, lateral, vertical } => {
                    let wl = self.layout.walls()[wall];
                    let mut c = [0.0; 3];
                    c[wl.axis] = wl.offset;
                    c[wl.along_axis()] = (lateral.0 + lateral.1) / 2.0;
                    c[2] = (vertical.0 + vertical.1) / 2.0;
                    Object3D {
                        kind: ObjectKind::WallRect,
                        class_id: o.class_id,
                        position: frame.to_world(Vec3::from_array(c)),
                        dims: [lateral.1 - lateral.0, 0.0, vertical.1 - vertical.0],
                        yaw: self.layout.wall_yaw(wall),
                        plane: wall_id(wall),
                        approximate: false,
                    }
                }
            })
            .collect()
    }

    /// The same scene after turning the panorama by `angle` about `z`.
    pub fn rotated(&self, angle: f64) -> Self {
        Self {
            layout: self.layout.rotated(angle),
            objects: self.objects.clone(),
        }
    }
}

/// Smallest box enclosing the mask in index coordinates, wrapping across
/// the seam when that is shorter.
pub fn tight_box(mask: &BinaryMask, class_id: ClassId, score: f64) -> Option<PanoBox> {
    let (start, len) = mask.column_span()?;
    let (top, bottom) = mask.row_span()?;
    let w = mask.width() as f64;
    Some(PanoBox::new(
        class_id,
        score,
        math::rem_euclid(start as f64 + (len as f64 - 1.0) / 2.0, w),
        (top + bottom) as f64 / 2.0,
        len as f64,
        (bottom - top + 1) as f64,
    ))
}

/// Settings for [`random_box_scene`]. Lengths are in camera heights.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSceneParams {
    /// Inclusive range for the number of cuboids (one per wall at most).
    pub cuboids: (usize, usize),
    pub wall_objects: usize,
    pub cuboid_classes: Vec<ClassId>,
    pub wall_classes: Vec<ClassId>,
    /// Distance range from the camera to each wall.
    pub wall_distance: (f64, f64),
    /// Ceiling height above the camera.
    pub ceiling: (f64, f64),
}

impl Default for RandomSceneParams {
    fn default() -> Self {
        Self {
            cuboids: (1, 4),
            wall_objects: 2,
            cuboid_classes: vec![1],
            wall_classes: vec![2],
            wall_distance: (1.6, 3.4),
            ceiling: (0.9, 1.5),
        }
    }
}

fn azimuth_interval(min: Vec3, max: Vec3) -> (f64, f64) {
    let center = math::atan2((min.y + max.y) / 2.0, (min.x + max.x) / 2.0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (x, y) in [(min.x, min.y), (min.x, max.y), (max.x, min.y), (max.x, max.y)] {
        let a = math::rem_euclid(math::atan2(y, x) - center + math::PI, math::TAU) - math::PI;
        lo = lo.min(a + center);
        hi = hi.max(a + center);
    }
    (lo, hi)
}

fn intervals_clear(a: (f64, f64), b: (f64, f64), margin: f64) -> bool {
    (-1..=1).all(|k| {
        let s = k as f64 * math::TAU;
        a.1 + margin < b.0 + s || b.1 + s + margin < a.0
    })
}

/// A random box-shaped room with cuboids against distinct walls and
/// rectangles on the walls above the horizon.
///
/// Objects keep clear of each other in view and of the configurations where
/// edge directions become ambiguous (horizontal edges at camera height,
/// vertical edges straight along a frame axis).
pub fn random_box_scene<R: Rng + ?Sized>(rng: &mut R, params: &RandomSceneParams) -> Result<SyntheticScene> {
    let (dmin, dmax) = params.wall_distance;
    if !(dmin >= 1.2 && dmax >= dmin) || params.cuboids.0 > params.cuboids.1 || params.cuboids.1 > 4 {
        return Err(Error::InvalidParameter("random scene parameters"));
    }
    if params.cuboid_classes.is_empty() || params.wall_classes.is_empty() {
        return Err(Error::InvalidParameter("random scene needs object classes"));
    }
    let mut dist = || rng.random_range(dmin..=dmax);
    let (xp, xn, yp, yn) = (dist(), dist(), dist(), dist());
    let yaw = rng.random_range(0.0..math::TAU);
    let ceiling = rng.random_range(params.ceiling.0..=params.ceiling.1);
    let layout = LayoutModel::from_corners(
        ManhattanFrame::from_yaw(yaw),
        &[[xp, yp], [-xn, yp], [-xn, -yn], [xp, -yn]],
        ceiling,
    )?;

    let mut objects: Vec<SynthObject> = Vec::new();
    let mut views: Vec<(f64, f64)> = Vec::new();
    let mut walls: Vec<usize> = (0..layout.walls().len()).collect();
    for i in (1..walls.len()).rev() {
        walls.swap(i, rng.random_range(0..=i));
    }
    let want = rng.random_range(params.cuboids.0..=params.cuboids.1);
    for &wi in walls.iter().take(want) {
        let wl = layout.walls()[wi];
        let (lo, hi) = wl.lateral_range();
        for _ in 0..200 {
            let width = rng.random_range(0.6..=(hi - lo - 0.6).min(1.6));
            let depth = rng.random_range(0.4..=(wl.offset.abs() - 0.6).min(0.9));
            let height = rng.random_range(0.35..=0.75);
            let center = rng.random_range(lo + 0.3 + width / 2.0..=hi - 0.3 - width / 2.0);
            let class_id = params.cuboid_classes[rng.random_range(0..params.cuboid_classes.len())];
            let o = SynthObject::cuboid_on_wall(&layout, class_id, wi, center, width, depth, height);
            let SynthShape::Cuboid { min, max, .. } = o.shape else { unreachable!() };
            let view = azimuth_interval(min, max);
            if views.iter().all(|v| intervals_clear(*v, view, 3f64.to_radians())) {
                views.push(view);
                objects.push(o);
                break;
            }
        }
    }
    if objects.len() < params.cuboids.0 {
        return Err(Error::InvalidParameter("could not fit the requested cuboids"));
    }

    let mut rects: Vec<(usize, (f64, f64))> = Vec::new();
    let mut placed = 0;
    for _ in 0..200 * params.wall_objects.max(1) {
        if placed == params.wall_objects {
            break;
        }
        let wi = rng.random_range(0..layout.walls().len());
        let (lo, hi) = layout.walls()[wi].lateral_range();
        let width = rng.random_range(0.4..=1.0);
        let center = rng.random_range(lo + 0.2 + width / 2.0..=hi - 0.2 - width / 2.0);
        let lateral = (center - width / 2.0, center + width / 2.0);
        let z0 = rng.random_range(0.1..=ceiling - 0.4);
        let h = rng.random_range(0.3..=(ceiling - 0.1 - z0).min(0.8));
        let clear_of_axes = lateral.0.abs() >= 0.15 && lateral.1.abs() >= 0.15;
        let apart = rects
            .iter()
            .all(|(w, r)| *w != wi || lateral.1 + 0.1 < r.0 || r.1 + 0.1 < lateral.0);
        if !clear_of_axes || !apart {
            continue;
        }
        rects.push((wi, lateral));
        objects.push(SynthObject {
            class_id: params.wall_classes[rng.random_range(0..params.wall_classes.len())],
            shape: SynthShape::WallRect {
                wall: wi,
                lateral,
                vertical: (z0, z0 + h),
            },
        });
        placed += 1;
    }
    if placed < params.wall_objects {
        return Err(Error::InvalidParameter("could not fit the requested wall objects"));
    }
    SyntheticScene::new(layout, objects)
}
