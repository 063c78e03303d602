//! Synthetic fixtures: a random box room rendered by ray casting, with
//! tight detections (optionally jittered) and ground truth.

use panoroom_core::anchors::PanoBox;
use panoroom_core::layout3d::Object3D;
use panoroom_core::pipeline::{ClassTable, Refinement, Route};
use panoroom_core::synth::{random_box_scene, tight_box, RandomSceneParams, Render, SyntheticScene};
use panoroom_core::ClassId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::formats::{self, DetectionRecord, LayoutRecord, MaskEntry, ObjectRecord};
use crate::manifest::OutDir;
use crate::raster;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureParams {
    pub width: usize,
    /// Standard deviation of the box corner noise, in pixels.
    pub jitter: f64,
    pub scene: RandomSceneParams,
}

impl FixtureParams {
    /// Cuboids from the floor-standing classes and wall objects from the
    /// classes clipped to a single wall.
    pub fn for_classes(classes: &ClassTable, width: usize, jitter: f64) -> Self {
        let pick = |route: Route, refinement: Refinement| -> Vec<ClassId> {
            classes
                .classes
                .iter()
                .filter(|c| c.route == route && c.refinement == refinement)
                .map(|c| c.id)
                .collect()
        };
        Self {
            width,
            jitter,
            scene: RandomSceneParams {
                cuboid_classes: pick(Route::Cuboid, Refinement::DropCeiling),
                wall_classes: pick(Route::Wall, Refinement::ClipToWall),
                ..RandomSceneParams::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub width: usize,
    pub height: usize,
    pub scene: SyntheticScene,
    pub render: Render,
    /// Tight boxes of the visible objects, score 1.
    pub gt_boxes: Vec<PanoBox>,
    /// Boxes after jitter, with random scores.
    pub detections: Vec<PanoBox>,
    pub ground_truth: Vec<Object3D>,
}

/// Moves each box edge by `N(0, sigma²)` pixels, keeping the box valid.
pub fn jitter_box<R: Rng + ?Sized>(b: &PanoBox, sigma: f64, width: usize, height: usize, rng: &mut R) -> PanoBox {
    if sigma == 0.0 {
        return *b;
    }
    let n = Normal::new(0.0, sigma).expect("finite jitter");
    let (mut x0, mut x1) = (b.cx - b.w / 2.0 + n.sample(rng), b.cx + b.w / 2.0 + n.sample(rng));
    let (y0, y1) = (b.top() + n.sample(rng), b.bottom() + n.sample(rng));
    if x1 - x0 < 1.0 {
        let m = (x0 + x1) / 2.0;
        (x0, x1) = (m - 0.5, m + 0.5);
    }
    let (w, h) = (width as f64, height as f64);
    let top = y0.min(y1 - 1.0).clamp(-0.5, h - 1.5);
    let bottom = y1.max(top + 1.0).min(h - 0.5);
    PanoBox::new(b.class_id, b.score, (x0 + x1) / 2.0, (top + bottom) / 2.0, (x1 - x0).min(w), bottom - top).normalized(width)
}

/// Renders `scene` and derives its boxes. Scores are drawn from
/// `[0.6, 1)`.
pub fn fixture_from_scene<R: Rng + ?Sized>(
    scene: SyntheticScene,
    width: usize,
    jitter: f64,
    rng: &mut R,
) -> Result<Fixture> {
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::Core(panoroom_core::Error::InvalidParameter("jitter must be non-negative")));
    }
    let height = width / 2;
    let render = scene.render(width, height)?;
    let mut gt_boxes = Vec::new();
    let mut detections = Vec::new();
    for (i, m) in render.masks.iter().enumerate() {
        let Some(b) = tight_box(m, scene.objects[i].class_id, 1.0) else { continue };
        gt_boxes.push(b);
        let mut d = jitter_box(&b, jitter, width, height, rng);
        d.score = rng.random_range(0.6..1.0);
        detections.push(d);
    }
    Ok(Fixture {
        width,
        height,
        ground_truth: scene.ground_truth(),
        scene,
        render,
        gt_boxes,
        detections,
    })
}

/// A random room from one seed.
pub fn generate_fixture(params: &FixtureParams, seed: u64) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = random_box_scene(&mut rng, &params.scene)?;
    fixture_from_scene(scene, params.width, params.jitter, &mut rng)
}

/// File names written by [`write_fixture`].
pub mod files {
    pub const SEMANTIC: &str = "semantic.png";
    pub const INSTANCES: &str = "instances.png";
    pub const DETECTIONS: &str = "detections.json";
    pub const GT_BOXES: &str = "gt_boxes.json";
    pub const LAYOUT: &str = "layout.json";
    pub const SCENE_GT: &str = "scene_gt.json";
    pub const MASKS: &str = "masks.json";
}

pub fn write_fixture(f: &Fixture, classes: &ClassTable, out: &mut OutDir) -> Result<()> {
    out.write(files::SEMANTIC, &raster::encode_labels(&f.render.semantic))?;
    out.write(files::INSTANCES, &raster::encode_ids(&f.render.instances))?;
    let mut index = Vec::new();
    for (i, m) in f.render.masks.iter().enumerate() {
        let file = format!("masks/object_{:02}.png", i + 1);
        out.write(&file, &raster::encode_mask(m))?;
        index.push(MaskEntry {
            file,
            class: formats::class_name(classes, f.scene.objects[i].class_id),
            instance: i as u16 + 1,
        });
    }
    out.write_json(files::MASKS, &index)?;
    let records = |boxes: &[PanoBox]| -> Vec<DetectionRecord> {
        boxes.iter().map(|b| formats::detection_record(b, classes)).collect()
    };
    out.write_json(files::DETECTIONS, &records(&f.detections))?;
    out.write_json(files::GT_BOXES, &records(&f.gt_boxes))?;
    let layout: LayoutRecord = formats::layout_record(&f.scene.layout, f.width, f.height);
    out.write_json(files::LAYOUT, &layout)?;
    let scene: Vec<ObjectRecord> = f.ground_truth.iter().map(|o| formats::object_record(o, classes)).collect();
    out.write_json(files::SCENE_GT, &scene)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_jitter_boxes_enclose_their_masks() {
        let p = FixtureParams::for_classes(&ClassTable::indoor(), 256, 0.0);
        let f = generate_fixture(&p, 3).unwrap();
        assert_eq!(f.detections.len(), f.gt_boxes.len());
        for (d, m) in f.detections.iter().zip(f.render.masks.iter().filter(|m| m.area() > 0)) {
            for row in 0..f.height {
                for col in 0..f.width {
                    if m.get(col, row) {
                        assert!(d.contains_pixel(col, row, f.width));
                    }
                }
            }
        }
    }

    #[test]
    fn jittered_boxes_stay_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = PanoBox::new(1, 1.0, 1.0, 2.0, 3.0, 3.0);
        for _ in 0..500 {
            let j = jitter_box(&b, 4.0, 64, 32, &mut rng);
            assert!(j.validated(64, 32).is_ok(), "{j:?}");
        }
    }

    #[test]
    fn seed_stable() {
        let p = FixtureParams::for_classes(&ClassTable::indoor(), 128, 1.5);
        let a = generate_fixture(&p, 9).unwrap();
        let b = generate_fixture(&p, 9).unwrap();
        assert_eq!(a.detections, b.detections);
        assert_eq!(a.render, b.render);
    }
}
