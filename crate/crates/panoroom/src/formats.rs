//! JSON records exchanged with other tools, and their conversion to the
//! core types.
//!
//! Schema violations are reported as [`Error::Schema`] with a JSON pointer
//! to the offending value.

use std::fs;
use std::path::Path;

use panoroom_core::anchors::PanoBox;
use panoroom_core::layout3d::{LayoutModel, ManhattanFrame, ObjectKind, Object3D};
use panoroom_core::maskgen::ObjectAnnotation;
use panoroom_core::pipeline::ClassTable;
use panoroom_core::{ClassId, PixelCoord, Vec3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One detected box. `class` is a class name from the class table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub class: String,
    pub score: f64,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// Room layout as paired corner pixels plus the Manhattan axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutRecord {
    pub ceiling_corners: Vec<[f64; 2]>,
    pub floor_corners: Vec<[f64; 2]>,
    pub axes: [[f64; 3]; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKindRecord {
    WallRect,
    Cuboid,
    CeilingRect,
}

/// A placed object in room coordinates. See [`Object3D`] for the meaning
/// of `dims` and `yaw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRecord {
    pub kind: ObjectKindRecord,
    pub class: String,
    pub position: [f64; 3],
    pub dims: [f64; 3],
    pub yaw: f64,
    pub plane: u16,
    #[serde(default)]
    pub approximate: bool,
}

/// Polygon annotation of one object, vertices in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub class: String,
    pub instance: u16,
    pub points: Vec<[f64; 2]>,
}

/// Entry of a mask index: a 1-bit PNG next to the index file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskEntry {
    pub file: String,
    pub class: String,
    pub instance: u16,
}

pub(crate) fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn parse_json<T: DeserializeOwned>(bytes: &[u8], file: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| Error::schema(file, pointer_of(e.path()), e.inner().to_string()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_bytes(path)?, path)
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("records serialize");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_bytes(value)).map_err(|e| Error::io(path, e))
}

fn class_id(classes: &ClassTable, name: &str, file: &Path, pointer: String) -> Result<ClassId> {
    classes
        .by_name(name)
        .filter(|c| c.id != 0)
        .map(|c| c.id)
        .ok_or_else(|| Error::schema(file, pointer, format!("unknown class '{name}'")))
}

pub fn class_name(classes: &ClassTable, id: ClassId) -> String {
    classes.get(id).map_or_else(|| id.to_string(), |c| c.name.clone())
}

/// Detection records as boxes, checked against a `width × height`
/// panorama.
pub fn detections_from_records(
    records: &[DetectionRecord],
    classes: &ClassTable,
    width: usize,
    height: usize,
    file: &Path,
) -> Result<Vec<PanoBox>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let class = class_id(classes, &r.class, file, format!("/{i}/class"))?;
            for (field, v) in [("score", r.score), ("cx", r.cx), ("cy", r.cy), ("w", r.w), ("h", r.h)] {
                if !v.is_finite() {
                    return Err(Error::schema(file, format!("/{i}/{field}"), "not a finite number"));
                }
            }
            PanoBox::new(class, r.score, r.cx, r.cy, r.w, r.h)
                .validated(width, height)
                .map_err(|e| Error::schema(file, format!("/{i}"), e.to_string()))
        })
        .collect()
}

pub fn detection_record(b: &PanoBox, classes: &ClassTable) -> DetectionRecord {
    DetectionRecord {
        class: class_name(classes, b.class_id),
        score: b.score,
        cx: b.cx,
        cy: b.cy,
        w: b.w,
        h: b.h,
    }
}

pub fn layout_from_record(r: &LayoutRecord, width: usize, height: usize, file: &Path) -> Result<LayoutModel> {
    let [x, y, z] = r.axes.map(Vec3::from_array);
    let frame = ManhattanFrame::new(x, y, z).map_err(|e| Error::schema(file, "/axes", e.to_string()))?;
    let px = |c: &[[f64; 2]]| c.iter().map(|p| PixelCoord::new(p[0], p[1])).collect::<Vec<_>>();
    LayoutModel::from_corner_pixels(frame, &px(&r.ceiling_corners), &px(&r.floor_corners), width, height)
        .map_err(|e| Error::schema(file, "/floor_corners", e.to_string()))
}

pub fn layout_record(layout: &LayoutModel, width: usize, height: usize) -> LayoutRecord {
    let (ceiling, floor) = layout.corner_pixels(width, height);
    let pairs = |v: Vec<PixelCoord>| v.iter().map(|p| [p.u, p.v]).collect();
    LayoutRecord {
        ceiling_corners: pairs(ceiling),
        floor_corners: pairs(floor),
        axes: layout.frame().axes().map(|a| a.to_array()),
    }
}

pub fn object_record(o: &Object3D, classes: &ClassTable) -> ObjectRecord {
    ObjectRecord {
        kind: match o.kind {
            ObjectKind::WallRect => ObjectKindRecord::WallRect,
            ObjectKind::Cuboid => ObjectKindRecord::Cuboid,
            ObjectKind::CeilingRect => ObjectKindRecord::CeilingRect,
        },
        class: class_name(classes, o.class_id),
        position: o.position.to_array(),
        dims: o.dims,
        yaw: o.yaw,
        plane: o.plane,
        approximate: o.approximate,
    }
}

pub fn objects_from_records(records: &[ObjectRecord], classes: &ClassTable, file: &Path) -> Result<Vec<Object3D>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(Object3D {
                kind: match r.kind {
                    ObjectKindRecord::WallRect => ObjectKind::WallRect,
                    ObjectKindRecord::Cuboid => ObjectKind::Cuboid,
                    ObjectKindRecord::CeilingRect => ObjectKind::CeilingRect,
                },
                class_id: class_id(classes, &r.class, file, format!("/{i}/class"))?,
                position: Vec3::from_array(r.position),
                dims: r.dims,
                yaw: r.yaw,
                plane: r.plane,
                approximate: r.approximate,
            })
        })
        .collect()
}

pub fn annotations_from_records(
    records: &[AnnotationRecord],
    classes: &ClassTable,
    file: &Path,
) -> Result<Vec<ObjectAnnotation>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::schema(file, format!("/{i}/points"), "not a finite number"));
            }
            Ok(ObjectAnnotation {
                class_id: class_id(classes, &r.class, file, format!("/{i}/class"))?,
                instance_id: r.instance,
                points: r.points.iter().map(|p| PixelCoord::new(p[0], p[1])).collect(),
            })
        })
        .collect()
}
