//! End-to-end composition: instances, layout refinement and placement.

use alloc::string::String;
use alloc::vec::Vec;

use crate::anchors::PanoBox;
use crate::grid::{BinaryMask, ClassId, SemanticMap};
use crate::instances::{assign_instances, mahalanobis2, GaussianInstance, InstanceMap, CHI2_99_2DOF};
use crate::layout3d::{
    build_plane_map, estimate_footprint, fit_boundary_lines, place_ceiling_object, place_cuboid, place_wall_object,
    refine_masks, ContactParams, LayoutModel, LineFitParams, Object3D, PlaneMap, RefineRules,
};
use crate::sphere::PixelCoord;
use crate::{Error, Result};

/// How a class is placed in the room.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Wall,
    Cuboid,
    Ceiling,
    Ignore,
}

/// Which layout rule cleans up a class's masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    None,
    ClipToWall,
    ExtendToFloor,
    DropCeiling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassInfo {
    pub id: ClassId,
    pub name: String,
    pub route: Route,
    pub refinement: Refinement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassTable {
    pub classes: Vec<ClassInfo>,
}

impl ClassTable {
    /// Background plus fourteen indoor object classes.
    pub fn indoor() -> Self {
        use Refinement as R;
        use Route::*;
        let spec: [(&str, Route, Refinement); 14] = [
            ("bed", Cuboid, R::DropCeiling),
            ("painting", Wall, R::ClipToWall),
            ("table", Cuboid, R::DropCeiling),
            ("mirror", Wall, R::ClipToWall),
            ("window", Wall, R::ClipToWall),
            ("curtain", Wall, R::None),
            ("chair", Cuboid, R::DropCeiling),
            ("light", Ceiling, R::None),
            ("sofa", Cuboid, R::DropCeiling),
            ("door", Wall, R::ExtendToFloor),
            ("cabinet", Cuboid, R::DropCeiling),
            ("bedside", Cuboid, R::DropCeiling),
            ("tv", Wall, R::ClipToWall),
            ("shelf", Wall, R::None),
        ];
        let mut classes = alloc::vec![ClassInfo {
            id: 0,
            name: "background".into(),
            route: Ignore,
            refinement: R::None,
        }];
        classes.extend(spec.iter().enumerate().map(|(i, (name, route, refinement))| ClassInfo {
            id: i as ClassId + 1,
            name: (*name).into(),
            route: *route,
            refinement: *refinement,
        }));
        Self { classes }
    }

    pub fn get(&self, id: ClassId) -> Option<&ClassInfo> {
        self.classes.iter().find(|c| c.id == id)
    }

    pub fn by_name(&self, name: &str) -> Option<&ClassInfo> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn route(&self, id: ClassId) -> Route {
        self.get(id).map_or(Route::Ignore, |c| c.route)
    }

    /// Number of labels, background included.
    pub fn len(&self) -> usize {
        self.classes.iter().map(|c| c.id as usize + 1).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn refine_rules(&self, fill_holes: bool) -> RefineRules {
        let with = |r: Refinement| self.classes.iter().filter(|c| c.refinement == r).map(|c| c.id).collect();
        RefineRules {
            wall_bound: with(Refinement::ClipToWall),
            doors: with(Refinement::ExtendToFloor),
            floor_standing: with(Refinement::DropCeiling),
            fill_holes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub chi2_threshold: f64,
    /// Detections below this score are dropped.
    pub confidence: f64,
    pub lines: LineFitParams,
    pub contact: ContactParams,
    pub fill_holes: bool,
    pub classes: ClassTable,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            chi2_threshold: CHI2_99_2DOF,
            confidence: 0.5,
            lines: LineFitParams::default(),
            contact: ContactParams::default(),
            fill_holes: true,
            classes: ClassTable::indoor(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let l = &self.lines;
        let positive = [self.chi2_threshold, l.inlier_tol, l.min_inlier_frac, self.contact.min_fraction];
        if positive.iter().any(|v| !(*v > 0.0)) || !(l.theta_th >= 0.0) || l.iterations == 0 || l.max_lines == 0 {
            return Err(Error::InvalidParameter("thresholds must be positive"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidParameter("confidence cut outside [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedObject {
    pub instance_id: u16,
    /// Index into the input detection list.
    pub detection: usize,
    pub object: Object3D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementFailure {
    pub instance_id: u16,
    pub detection: usize,
    pub error: Error,
    /// Whether an approximate footprint was placed instead.
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub instances: InstanceMap,
    pub refined: InstanceMap,
    pub plane_map: PlaneMap,
    pub objects: Vec<PlacedObject>,
    pub failures: Vec<PlacementFailure>,
}

/// Pixels used to place instance `id`: its own pixels plus unassigned
/// pixels of its class inside its box, where it is the closest box of that
/// class containing them. The χ² gate leaves the box corners unassigned;
/// this puts them back for the outline fit.
pub fn support_mask(map: &InstanceMap, boxes: &[PanoBox], id: u16) -> BinaryMask {
    let (w, h) = (map.width(), map.height());
    let me = &boxes[id as usize - 1];
    let mut mask = map.ids.map(|&v| v == id);
    let gaussians: Vec<Option<GaussianInstance>> = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| GaussianInstance::from_box(i as u16 + 1, b).ok())
        .collect();
    for row in 0..h {
        for col in 0..w {
            if map.ids.get(col, row) != 0 || map.semantic.get(col, row) != me.class_id || !me.contains_pixel(col, row, w) {
                continue;
            }
            let p = PixelCoord::new(col as f64, row as f64);
            let closest = boxes
                .iter()
                .zip(&gaussians)
                .filter(|(b, _)| b.class_id == me.class_id && b.contains_pixel(col, row, w))
                .filter_map(|(_, g)| g.map(|g| (g.instance_id, mahalanobis2(p, &g, w))))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            if closest.is_some_and(|c| c.0 == id) {
                mask.set(col, row, true);
            }
        }
    }
    mask
}

fn object_seed(seed: u64, id: u16) -> u64 {
    seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Detections passing the confidence cut, validated against the panorama.
/// Returns their indices into `detections` and the boxes; kept box `i`
/// becomes instance `i + 1`.
pub fn select_detections(
    detections: &[PanoBox],
    cfg: &PipelineConfig,
    width: usize,
    height: usize,
) -> Result<(Vec<usize>, Vec<PanoBox>)> {
    let kept: Vec<usize> = (0..detections.len()).filter(|&i| detections[i].score >= cfg.confidence).collect();
    let boxes = kept
        .iter()
        .map(|&i| detections[i].validated(width, height))
        .collect::<Result<_>>()?;
    Ok((kept, boxes))
}

/// Places every routed instance of a refined map. `boxes` are the kept
/// detections and `kept` their indices in the caller's list.
pub fn place_instances(
    refined: &InstanceMap,
    boxes: &[PanoBox],
    kept: &[usize],
    layout: &LayoutModel,
    plane_map: &PlaneMap,
    cfg: &PipelineConfig,
) -> Result<(Vec<PlacedObject>, Vec<PlacementFailure>)> {
    if boxes.len() != kept.len() || refined.instances.iter().any(|i| i.id == 0 || i.id as usize > boxes.len()) {
        return Err(Error::ShapeMismatch("instance ids do not match the detections"));
    }
    let mut objects = Vec::new();
    let mut failures = Vec::new();
    for info in &refined.instances {
        let (id, class) = (info.id, info.class_id);
        let detection = kept[id as usize - 1];
        let route = cfg.classes.route(class);
        if route == Route::Ignore {
            continue;
        }
        let mask = support_mask(refined, boxes, id);
        let placed = match route {
            Route::Wall => place_wall_object(&mask, layout, class),
            Route::Ceiling => place_ceiling_object(&mask, layout, class),
            Route::Cuboid => {
                let params = LineFitParams {
                    seed: object_seed(cfg.lines.seed, id),
                    ..cfg.lines
                };
                fit_boundary_lines(&mask, layout.frame(), &params)
                    .and_then(|lines| place_cuboid(&mask, &lines, layout, plane_map, &cfg.contact, class))
            }
            Route::Ignore => continue,
        };
        match placed {
            Ok(object) => objects.push(PlacedObject {
                instance_id: id,
                detection,
                object,
            }),
            Err(error) => {
                let fallback = (route == Route::Cuboid)
                    .then(|| estimate_footprint(&mask, layout, class).ok())
                    .flatten();
                failures.push(PlacementFailure {
                    instance_id: id,
                    detection,
                    error,
                    fell_back: fallback.is_some(),
                });
                if let Some(object) = fallback {
                    objects.push(PlacedObject {
                        instance_id: id,
                        detection,
                        object,
                    });
                }
            }
        }
    }
    Ok((objects, failures))
}

/// Instances from detections, layout refinement, then placement of every
/// routed instance. Placement errors are collected, not returned.
pub fn run_pipeline(
    semantic: &SemanticMap,
    detections: &[PanoBox],
    layout: &LayoutModel,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let (w, h) = (semantic.width(), semantic.height());
    let (kept, boxes) = select_detections(detections, cfg, w, h)?;
    let instances = assign_instances(semantic, &boxes, cfg.chi2_threshold)?;
    let plane_map = build_plane_map(layout, w, h)?;
    let refined = refine_masks(&instances, &plane_map, &cfg.classes.refine_rules(cfg.fill_holes))?;
    let (objects, failures) = place_instances(&refined, &boxes, &kept, layout, &plane_map, cfg)?;
    Ok(PipelineOutput {
        instances,
        refined,
        plane_map,
        objects,
        failures,
    })
}
