//! One function per subcommand. Each reads its inputs, writes its outputs
//! under an output directory with a manifest, and returns what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use panoroom_core::anchors::PanoBox;
use panoroom_core::equiconv;
use panoroom_core::instances::{assign_instances, instance_to_semantic, InstanceInfo, InstanceMap};
use panoroom_core::layout3d::{build_plane_map, refine_masks, LayoutModel};
use panoroom_core::maskgen::{compose_semantic, rasterize_spherical_polygon, ObjectMask};
use panoroom_core::metrics::{evaluate_detections, mean_iou};
use panoroom_core::pipeline::{place_instances, run_pipeline, select_detections, PlacedObject, PlacementFailure};
use panoroom_core::{EquirectGrid, SemanticMap};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::fixture::{self, FixtureParams};
use crate::formats::{self, AnnotationRecord, DetectionRecord, LayoutRecord, MaskEntry, ObjectRecord};
use crate::manifest::{self, Artifact, FailureRecord, Manifest, OutDir};
use crate::raster;

/// Inputs read so far, hashed for the manifest.
#[derive(Default)]
struct Inputs(Vec<Artifact>);

impl Inputs {
    fn bytes(&mut self, path: &Path) -> Result<Vec<u8>> {
        let b = formats::read_bytes(path)?;
        self.0.push(manifest::input_artifact(path, &b));
        Ok(b)
    }

    fn json<T: serde::de::DeserializeOwned>(&mut self, path: &Path) -> Result<T> {
        let b = self.bytes(path)?;
        formats::parse_json(&b, path)
    }

    fn labels(&mut self, path: &Path) -> Result<SemanticMap> {
        self.bytes(path)?;
        raster::read_labels(path)
    }

    fn ids(&mut self, path: &Path) -> Result<EquirectGrid<u16>> {
        self.bytes(path)?;
        raster::read_ids(path)
    }

    fn detections(&mut self, path: &Path, cfg: &Config, width: usize, height: usize) -> Result<Vec<PanoBox>> {
        let records: Vec<DetectionRecord> = self.json(path)?;
        formats::detections_from_records(&records, &cfg.class_table(), width, height, path)
    }

    fn layout(&mut self, path: &Path, width: usize, height: usize) -> Result<LayoutModel> {
        let record: LayoutRecord = self.json(path)?;
        formats::layout_from_record(&record, width, height, path)
    }
}

fn same_shape<A: Copy, B: Copy>(a: &EquirectGrid<A>, b: &EquirectGrid<B>, file: &Path) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::schema(file, "", "raster size differs from the semantic map"))
    }
}

/// Instance map from stored ids, with instance `i + 1` taking the class of
/// kept box `i`.
fn instance_map(ids: EquirectGrid<u16>, semantic: SemanticMap, boxes: &[PanoBox], file: &Path) -> Result<InstanceMap> {
    if ids.data().iter().any(|&v| v as usize > boxes.len()) {
        return Err(Error::schema(file, "", "instance id without a matching detection"));
    }
    let mut map = InstanceMap {
        ids,
        semantic,
        instances: boxes
            .iter()
            .enumerate()
            .map(|(i, b)| InstanceInfo {
                id: i as u16 + 1,
                class_id: b.class_id,
                pixel_count: 0,
            })
            .collect(),
    };
    map.recount();
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u16,
    pub class: String,
    pub pixel_count: usize,
    /// Index into the input detection list.
    pub detection: usize,
}

fn instance_records(map: &InstanceMap, kept: &[usize], cfg: &Config) -> Vec<InstanceRecord> {
    let classes = cfg.class_table();
    map.instances
        .iter()
        .map(|i| InstanceRecord {
            id: i.id,
            class: formats::class_name(&classes, i.class_id),
            pixel_count: i.pixel_count,
            detection: kept[i.id as usize - 1],
        })
        .collect()
}

fn failure_records(failures: &[PlacementFailure], cfg: &Config, boxes: &[PanoBox]) -> Vec<FailureRecord> {
    let classes = cfg.class_table();
    failures
        .iter()
        .map(|f| FailureRecord {
            instance_id: f.instance_id,
            detection: f.detection,
            class: formats::class_name(&classes, boxes[f.instance_id as usize - 1].class_id),
            error: f.error.to_string(),
            fell_back: f.fell_back,
        })
        .collect()
}

fn scene_records(objects: &[PlacedObject], cfg: &Config) -> Vec<ObjectRecord> {
    let classes = cfg.class_table();
    objects.iter().map(|p| formats::object_record(&p.object, &classes)).collect()
}

/// Rasterizes polygon annotations into one 1-bit mask per object plus a
/// `masks.json` index.
pub fn masks_from_points(annotations: &Path, width: usize, out: &Path, cfg: &Config) -> Result<Manifest> {
    let mut inputs = Inputs::default();
    let records: Vec<AnnotationRecord> = inputs.json(annotations)?;
    let classes = cfg.class_table();
    let anns = formats::annotations_from_records(&records, &classes, annotations)?;
    let mut dir = OutDir::create(out)?;
    let mut index = Vec::new();
    for (i, a) in anns.iter().enumerate() {
        let mask = rasterize_spherical_polygon(a, width, width / 2)
            .map_err(|e| Error::schema(annotations, format!("/{i}/points"), e.to_string()))?;
        let file = format!("masks/object_{:02}.png", i + 1);
        dir.write(&file, &raster::encode_mask(&mask))?;
        index.push(MaskEntry {
            file,
            class: records[i].class.clone(),
            instance: a.instance_id,
        });
    }
    dir.write_json(fixture::files::MASKS, &index)?;
    dir.finish("masks-from-points", 0, inputs.0, vec![])
}

/// Composes the masks listed in a `masks.json` index under the occlusion
/// rule: writes `semantic.png` and `instances.png` (owning instance ids).
pub fn compose(index: &Path, out: &Path, cfg: &Config) -> Result<Manifest> {
    let mut inputs = Inputs::default();
    let entries: Vec<MaskEntry> = inputs.json(index)?;
    let base = index.parent().unwrap_or(Path::new("."));
    let classes = cfg.class_table();
    let mut objects = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let class_id = classes
            .by_name(&e.class)
            .filter(|c| c.id != 0)
            .ok_or_else(|| Error::schema(index, format!("/{i}/class"), format!("unknown class '{}'", e.class)))?
            .id;
        let path = base.join(&e.file);
        inputs.bytes(&path)?;
        let mask = raster::read_mask(&path)?;
        if let Some(first) = objects.first().map(|o: &ObjectMask| &o.mask) {
            same_shape(first, &mask, &path)?;
        }
        objects.push(ObjectMask {
            mask,
            class_id,
            instance_id: e.instance,
        });
    }
    if objects.is_empty() {
        return Err(Error::schema(index, "", "no masks listed"));
    }
    let comp = compose_semantic(&objects, cfg.occlusion.tau)?;
    let owners = comp.owner.map(|&o| if o == 0 { 0 } else { objects[o as usize - 1].instance_id });
    let mut dir = OutDir::create(out)?;
    dir.write(fixture::files::SEMANTIC, &raster::encode_labels(&comp.semantic))?;
    dir.write(fixture::files::INSTANCES, &raster::encode_ids(&owners))?;
    dir.finish("compose-semantic", 0, inputs.0, vec![])
}

/// Assigns semantic pixels to detections: `instances.png` and
/// `instances.json`.
pub fn instances(semantic: &Path, detections: &Path, out: &Path, cfg: &Config) -> Result<Manifest> {
    let mut inputs = Inputs::default();
    let sem = inputs.labels(semantic)?;
    let dets = inputs.detections(detections, cfg, sem.width(), sem.height())?;
    let pc = cfg.pipeline(0);
    let (kept, boxes) = select_detections(&dets, &pc, sem.width(), sem.height())?;
    let map = assign_instances(&sem, &boxes, pc.chi2_threshold)?;
    let mut dir = OutDir::create(out)?;
    dir.write(fixture::files::INSTANCES, &raster::encode_ids(&map.ids))?;
    dir.write_json("instances.json", &instance_records(&map, &kept, cfg))?;
    dir.finish("instances", 0, inputs.0, vec![])
}

/// Layout refinement of a stored instance map: refined `instances.png`,
/// `semantic.png` and `instances.json`.
pub fn refine(semantic: &Path, ids: &Path, detections: &Path, layout: &Path, out: &Path, cfg: &Config) -> Result<Manifest> {
    let mut inputs = Inputs::default();
    let sem = inputs.labels(semantic)?;
    let (w, h) = (sem.width(), sem.height());
    let id_map = inputs.ids(ids)?;
    same_shape(&sem, &id_map, ids)?;
    let dets = inputs.detections(detections, cfg, w, h)?;
    let room = inputs.layout(layout, w, h)?;
    let pc = cfg.pipeline(0);
    let (kept, boxes) = select_detections(&dets, &pc, w, h)?;
    let map = instance_map(id_map, sem, &boxes, ids)?;
    let pm = build_plane_map(&room, w, h)?;
    let refined = refine_masks(&map, &pm, &pc.classes.refine_rules(pc.fill_holes))?;
    let mut dir = OutDir::create(out)?;
    dir.write(fixture::files::INSTANCES, &raster::encode_ids(&refined.ids))?;
    dir.write(fixture::files::SEMANTIC, &raster::encode_labels(&instance_to_semantic(&refined)))?;
    dir.write_json("instances.json", &instance_records(&refined, &kept, cfg))?;
    dir.finish("refine", 0, inputs.0, vec![])
}

/// Places the instances of a (refined) instance map in the room:
/// `scene.json`, with placement failures in the manifest.
pub fn to3d(
    semantic: &Path,
    ids: &Path,
    detections: &Path,
    layout: &Path,
    out: &Path,
    cfg: &Config,
    seed: u64,
) -> Result<Manifest> {
    let mut inputs = Inputs::default();
    let sem = inputs.labels(semantic)?;
    let (w, h) = (sem.width(), sem.height());
    let id_map = inputs.ids(ids)?;
    same_shape(&sem, &id_map, ids)?;
    let dets = inputs.detections(detections, cfg, w, h)?;
    let room = inputs.layout(layout, w, h)?;
    let pc = cfg.pipeline(seed);
    let (kept, boxes) = select_detections(&dets, &pc, w, h)?;
    let map = instance_map(id_map, sem, &boxes, ids)?;
    let pm = build_plane_map(&room, w, h)?;
    let (objects, failures) = place_instances(&map, &boxes, &kept, &room, &pm, &pc)?;
    let mut dir = OutDir::create(out)?;
    dir.write_json("scene.json", &scene_records(&objects, cfg))?;
    dir.finish("to3d", seed, inputs.0, failure_records(&failures, cfg, &boxes))
}

/// File names a `run` input directory must contain.
pub const RUN_INPUTS: [&str; 3] = [fixture::files::SEMANTIC, fixture::files::DETECTIONS, fixture::files::LAYOUT];

/// The whole pipeline on one panorama directory.
pub fn run(input: &Path, out: &Path, cfg: &Config, seed: u64) -> Result<Manifest> {
    let mut inputs = Inputs::default();
    let sem = inputs.labels(&input.join(fixture::files::SEMANTIC))?;
    let (w, h) = (sem.width(), sem.height());
    let dets = inputs.detections(&input.join(fixture::files::DETECTIONS), cfg, w, h)?;
    let room = inputs.layout(&input.join(fixture::files::LAYOUT), w, h)?;
    let pc = cfg.pipeline(seed);
    let result = run_pipeline(&sem, &dets, &room, &pc)?;
    let (_, boxes) = select_detections(&dets, &pc, w, h)?;
    let mut dir = OutDir::create(out)?;
    dir.write(fixture::files::INSTANCES, &raster::encode_ids(&result.instances.ids))?;
    dir.write("refined_instances.png", &raster::encode_ids(&result.refined.ids))?;
    dir.write("refined_semantic.png", &raster::encode_labels(&instance_to_semantic(&result.refined)))?;
    dir.write_json("scene.json", &scene_records(&result.objects, cfg))?;
    dir.finish("run", seed, inputs.0, failure_records(&result.failures, cfg, &boxes))
}

/// Runs every subdirectory of `root` holding the run inputs, in parallel,
/// writing to the same-named subdirectory of `out`. Results are sorted by
/// name.
pub fn run_batch(root: &Path, out: &Path, cfg: &Config, seed: u64) -> Result<Vec<(String, Result<Manifest>)>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join(fixture::files::SEMANTIC).is_file())
        .collect();
    dirs.sort();
    Ok(dirs
        .par_iter()
        .map(|d| {
            let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let r = run(d, &out.join(&name), cfg, seed);
            (name, r)
        })
        .collect())
}

/// Writes a random synthetic room as a `run` input directory plus ground
/// truth.
pub fn gen_fixture(out: &Path, width: usize, jitter: f64, cfg: &Config, seed: u64) -> Result<Manifest> {
    if width < 16 || width % 2 != 0 {
        return Err(Error::Core(panoroom_core::Error::InvalidParameter("width must be even and at least 16")));
    }
    let classes = cfg.class_table();
    let params = FixtureParams::for_classes(&classes, width, jitter);
    let f = fixture::generate_fixture(&params, seed)?;
    let mut dir = OutDir::create(out)?;
    fixture::write_fixture(&f, &classes, &mut dir)?;
    dir.finish("gen-fixture", seed, vec![], vec![])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: String,
    /// `None` for classes without ground truth.
    pub ap: Option<f64>,
    pub ap_weighted: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub iou_threshold: f64,
    pub classes: Vec<ClassAp>,
    pub map: f64,
    pub map_weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub class: String,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub classes: Vec<ClassIou>,
    pub miou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<SegmentationReport>,
}

#[derive(Debug, Clone, Default)]
pub struct EvalInputs {
    pub pred_detections: Option<PathBuf>,
    pub gt_detections: Option<PathBuf>,
    pub pred_semantic: Option<PathBuf>,
    pub gt_semantic: Option<PathBuf>,
    /// Panorama width for the detections; taken from the maps if absent.
    pub width: Option<usize>,
}

pub fn eval(inputs: &EvalInputs, cfg: &Config) -> Result<EvalReport> {
    let classes = cfg.class_table();
    let mut report = EvalReport::default();
    let mut width = inputs.width;
    if let (Some(p), Some(g)) = (&inputs.pred_semantic, &inputs.gt_semantic) {
        let pred = raster::read_labels(p)?;
        let gt = raster::read_labels(g)?;
        same_shape(&gt, &pred, p)?;
        width.get_or_insert(gt.width());
        let r = mean_iou(&pred, &gt, classes.len())?;
        report.segmentation = Some(SegmentationReport {
            classes: r
                .per_class
                .iter()
                .enumerate()
                .map(|(c, iou)| ClassIou {
                    class: formats::class_name(&classes, c as u8),
                    iou: *iou,
                })
                .collect(),
            miou: r.miou,
        });
    }
    if let (Some(p), Some(g)) = (&inputs.pred_detections, &inputs.gt_detections) {
        let w = width.ok_or(Error::Core(panoroom_core::Error::InvalidParameter(
            "detection evaluation needs --width or semantic maps",
        )))?;
        let load = |path: &Path| -> Result<Vec<PanoBox>> {
            let records: Vec<DetectionRecord> = formats::read_json(path)?;
            formats::detections_from_records(&records, &classes, w, w / 2, path)
        };
        let r = evaluate_detections(&load(p)?, &load(g)?, classes.len(), cfg.eval.iou_threshold, w)?;
        report.detection = Some(DetectionReport {
            iou_threshold: cfg.eval.iou_threshold,
            classes: r
                .per_class
                .iter()
                .map(|c| ClassAp {
                    class: formats::class_name(&classes, c.class_id),
                    ap: c.scores.as_ref().map(|s| s.ap),
                    ap_weighted: c.scores.as_ref().map(|s| s.ap_weighted),
                    count: c.count,
                })
                .collect(),
            map: r.map,
            map_weighted: r.map_weighted,
        });
    }
    if report.detection.is_none() && report.segmentation.is_none() {
        return Err(Error::Core(panoroom_core::Error::InvalidParameter(
            "give prediction and ground truth for detections, semantic maps or both",
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquatorCheck {
    pub width: usize,
    pub height: usize,
    pub band_rows: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceCheck {
    pub width: usize,
    pub shifts: Vec<i64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub width: usize,
    pub height: usize,
    pub step: f64,
    pub max_rel_input: f64,
    pub max_rel_weights: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub equator: EquatorCheck,
    pub equivariance: EquivarianceCheck,
    pub gradients: GradientCheckReport,
    pub pass: bool,
}

pub const EQUATOR_TOLERANCE: f64 = 1e-3;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// EquiConv self-checks on random inputs: agreement with a plain 3×3
/// convolution on `band_rows` equator rows of a 256×128 input, bitwise
/// column-shift equivariance, and a central-difference gradient check on
/// 32×16.
pub fn equiconv_check(band_rows: usize, seed: u64) -> Result<CheckReport> {
    let (w, h) = (256, 128);
    let eq = equiconv::equator_agreement(w, h, band_rows, seed)?;
    let shifts = vec![1, 37, w as i64 / 2];
    let shift_ok = equiconv::shift_equivariance(w, h, &shifts, seed)?;
    let (gw, gh, step) = (32, 16, 1e-5);
    let g = equiconv::gradient_check(gw, gh, step, seed)?;
    let equator = EquatorCheck {
        width: w,
        height: h,
        band_rows,
        max_rel_error: eq.max_rel_error,
        tolerance: EQUATOR_TOLERANCE,
        pass: eq.max_rel_error < EQUATOR_TOLERANCE,
    };
    let gradients = GradientCheckReport {
        width: gw,
        height: gh,
        step,
        max_rel_input: g.max_rel_input,
        max_rel_weights: g.max_rel_weights,
        tolerance: GRADIENT_TOLERANCE,
        pass: g.max_rel_error() < GRADIENT_TOLERANCE,
    };
    Ok(CheckReport {
        pass: equator.pass && shift_ok && gradients.pass,
        equator,
        equivariance: EquivarianceCheck {
            width: w,
            shifts,
            pass: shift_ok,
        },
        gradients,
    })
}
