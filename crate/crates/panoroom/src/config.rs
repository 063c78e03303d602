//! TOML configuration. Every key is optional; missing keys take the
//! defaults below.
//!
//! ```toml
//! [instances]
//! chi2_threshold = 9.21
//! confidence = 0.5
//!
//! [occlusion]
//! tau = 0.5
//!
//! [lines]
//! theta_th_deg = 0.5
//! inlier_tol_deg = 0.3
//! iterations = 500
//! min_inlier_frac = 0.05
//! min_inliers = 5
//! max_lines = 4
//!
//! [contact]
//! radius = 2
//! min_fraction = 0.3
//!
//! [refine]
//! fill_holes = true
//!
//! [eval]
//! iou_threshold = 0.3
//!
//! [anchors]
//! ratios = [1.0, 2.0, 0.5, 3.0, 0.3333333333333333]
//! s_min = 0.05
//! s_max = 0.9
//!
//! [[classes]]
//! id = 1
//! name = "bed"
//! route = "cuboid"
//! refinement = "drop_ceiling"
//! ```
//!
//! A `[[classes]]` list replaces the built-in table and must name the
//! background (id 0) and fourteen object classes.

use std::fs;
use std::path::Path;

use panoroom_core::anchors::AnchorConfig;
use panoroom_core::instances::CHI2_99_2DOF;
use panoroom_core::layout3d::{ContactParams, LineFitParams};
use panoroom_core::metrics::DEFAULT_IOU_THRESHOLD;
use panoroom_core::pipeline::{ClassInfo, ClassTable, PipelineConfig, Refinement, Route};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::pointer_of;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSection {
    pub chi2_threshold: f64,
    pub confidence: f64,
}

impl Default for InstanceSection {
    fn default() -> Self {
        Self {
            chi2_threshold: CHI2_99_2DOF,
            confidence: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcclusionSection {
    pub tau: f64,
}

impl Default for OcclusionSection {
    fn default() -> Self {
        Self { tau: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSection {
    pub theta_th_deg: f64,
    pub inlier_tol_deg: f64,
    pub iterations: usize,
    pub min_inlier_frac: f64,
    pub min_inliers: usize,
    pub max_lines: usize,
}

impl Default for LineSection {
    fn default() -> Self {
        let d = LineFitParams::default();
        Self {
            theta_th_deg: d.theta_th.to_degrees(),
            inlier_tol_deg: d.inlier_tol.to_degrees(),
            iterations: d.iterations,
            min_inlier_frac: d.min_inlier_frac,
            min_inliers: d.min_inliers,
            max_lines: d.max_lines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactSection {
    pub radius: usize,
    pub min_fraction: f64,
}

impl Default for ContactSection {
    fn default() -> Self {
        let d = ContactParams::default();
        Self {
            radius: d.radius,
            min_fraction: d.min_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineSection {
    pub fill_holes: bool,
}

impl Default for RefineSection {
    fn default() -> Self {
        Self { fill_holes: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub iou_threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorSection {
    /// `[rows, cols]` per feature layer.
    pub grids: Vec<[usize; 2]>,
    pub ratios: Vec<f64>,
    pub s_min: f64,
    pub s_max: f64,
}

impl Default for AnchorSection {
    fn default() -> Self {
        let d = AnchorConfig::default();
        Self {
            grids: d.grids.iter().map(|&(r, c)| [r, c]).collect(),
            ratios: d.ratios,
            s_min: d.s_min,
            s_max: d.s_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteName {
    Wall,
    Cuboid,
    Ceiling,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementName {
    None,
    ClipToWall,
    ExtendToFloor,
    DropCeiling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub id: u8,
    pub name: String,
    pub route: RouteName,
    #[serde(default = "no_refinement")]
    pub refinement: RefinementName,
}

fn no_refinement() -> RefinementName {
    RefinementName::None
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub instances: InstanceSection,
    pub occlusion: OcclusionSection,
    pub lines: LineSection,
    pub contact: ContactSection,
    pub refine: RefineSection,
    pub eval: EvalSection,
    pub anchors: AnchorSection,
    /// Empty means the built-in indoor table.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<ClassEntry>,
}

const OBJECT_CLASSES: usize = 14;

impl Config {
    /// Parses and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, file: &Path) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).map_err(|e| Error::schema(file, "", e.message().to_string()))?;
        let cfg: Config = serde_path_to_error::deserialize(toml::Value::Table(value))
            .map_err(|e| Error::schema(file, pointer_of(e.path()), e.inner().to_string()))?;
        cfg.validate(file)?;
        Ok(cfg)
    }

    fn validate(&self, file: &Path) -> Result<()> {
        let bad = |p: &str, m: &str| Err(Error::schema(file, p, m));
        let positive = [
            ("/instances/chi2_threshold", self.instances.chi2_threshold),
            ("/occlusion/tau", self.occlusion.tau),
            ("/lines/inlier_tol_deg", self.lines.inlier_tol_deg),
            ("/lines/min_inlier_frac", self.lines.min_inlier_frac),
            ("/contact/min_fraction", self.contact.min_fraction),
            ("/eval/iou_threshold", self.eval.iou_threshold),
        ];
        for (p, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(p, "must be positive");
            }
        }
        if !(self.lines.theta_th_deg >= 0.0) {
            return bad("/lines/theta_th_deg", "must not be negative");
        }
        if self.lines.iterations == 0 {
            return bad("/lines/iterations", "must be positive");
        }
        if self.lines.max_lines == 0 {
            return bad("/lines/max_lines", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.instances.confidence) {
            return bad("/instances/confidence", "must be in [0, 1]");
        }
        if !(self.occlusion.tau < 1.0) {
            return bad("/occlusion/tau", "must be below 1");
        }
        if let Err(e) = self.anchor_config().validate() {
            return bad("/anchors", &e.to_string());
        }
        if !self.classes.is_empty() {
            let mut ids: Vec<u8> = self.classes.iter().map(|c| c.id).collect();
            ids.sort_unstable();
            ids.dedup();
            if ids.len() != self.classes.len() {
                return bad("/classes", "class ids must be unique");
            }
            if ids != (0..=OBJECT_CLASSES as u8).collect::<Vec<_>>() {
                return bad("/classes", "classes must cover ids 0 to 14");
            }
            for (i, c) in self.classes.iter().enumerate() {
                if self.classes[..i].iter().any(|o| o.name == c.name) {
                    return bad(&format!("/classes/{i}/name"), "class names must be unique");
                }
            }
        }
        Ok(())
    }

    pub fn class_table(&self) -> ClassTable {
        if self.classes.is_empty() {
            return ClassTable::indoor();
        }
        let classes = self
            .classes
            .iter()
            .map(|c| ClassInfo {
                id: c.id,
                name: c.name.clone(),
                route: match c.route {
                    RouteName::Wall => Route::Wall,
                    RouteName::Cuboid => Route::Cuboid,
                    RouteName::Ceiling => Route::Ceiling,
                    RouteName::Ignore => Route::Ignore,
                },
                refinement: match c.refinement {
                    RefinementName::None => Refinement::None,
                    RefinementName::ClipToWall => Refinement::ClipToWall,
                    RefinementName::ExtendToFloor => Refinement::ExtendToFloor,
                    RefinementName::DropCeiling => Refinement::DropCeiling,
                },
            })
            .collect();
        ClassTable { classes }
    }

    pub fn anchor_config(&self) -> AnchorConfig {
        AnchorConfig {
            grids: self.anchors.grids.iter().map(|g| (g[0], g[1])).collect(),
            ratios: self.anchors.ratios.clone(),
            s_min: self.anchors.s_min,
            s_max: self.anchors.s_max,
        }
    }

    /// Core pipeline settings, with RANSAC seeded from `seed`.
    pub fn pipeline(&self, seed: u64) -> PipelineConfig {
        PipelineConfig {
            chi2_threshold: self.instances.chi2_threshold,
            confidence: self.instances.confidence,
            lines: LineFitParams {
                theta_th: self.lines.theta_th_deg.to_radians(),
                inlier_tol: self.lines.inlier_tol_deg.to_radians(),
                iterations: self.lines.iterations,
                min_inlier_frac: self.lines.min_inlier_frac,
                min_inliers: self.lines.min_inliers,
                max_lines: self.lines.max_lines,
                seed,
            },
            contact: ContactParams {
                radius: self.contact.radius,
                min_fraction: self.contact.min_fraction,
            },
            fill_holes: self.refine.fill_holes,
            classes: self.class_table(),
        }
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::parse("", Path::new("c.toml")).unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.pipeline(0), PipelineConfig::default());
        assert_eq!(cfg.anchor_config(), AnchorConfig::default());
    }

    #[test]
    fn serialized_defaults_parse_back() {
        let text = toml::to_string(&Config::default()).unwrap();
        assert_eq!(Config::parse(&text, Path::new("c.toml")).unwrap(), Config::default());
    }

    #[test]
    fn errors_carry_pointers() {
        let p = Path::new("c.toml");
        let ptr = |text: &str| match Config::parse(text, p) {
            Err(Error::Schema { pointer, .. }) => pointer,
            other => panic!("{other:?}"),
        };
        assert_eq!(ptr("[instances]\nchi2_threshold = -1.0"), "/instances/chi2_threshold");
        assert_eq!(ptr("[lines]\niterations = \"many\""), "/lines/iterations");
        assert_eq!(ptr("[lines]\nbogus = 1"), "/lines/bogus");
        assert_eq!(ptr("[[classes]]\nid = 1\nname = \"bed\"\nroute = \"cuboid\""), "/classes");
        assert_eq!(ptr("[[classes]]\nid = 1\nname = \"bed\"\nroute = \"floating\""), "/classes/0/route");
    }

    #[test]
    fn class_table_round_trips() {
        let table = ClassTable::indoor();
        let classes = table
            .classes
            .iter()
            .map(|c| ClassEntry {
                id: c.id,
                name: c.name.clone(),
                route: match c.route {
                    Route::Wall => RouteName::Wall,
                    Route::Cuboid => RouteName::Cuboid,
                    Route::Ceiling => RouteName::Ceiling,
                    Route::Ignore => RouteName::Ignore,
                },
                refinement: match c.refinement {
                    Refinement::None => RefinementName::None,
                    Refinement::ClipToWall => RefinementName::ClipToWall,
                    Refinement::ExtendToFloor => RefinementName::ExtendToFloor,
                    Refinement::DropCeiling => RefinementName::DropCeiling,
                },
            })
            .collect();
        let cfg = Config {
            classes,
            ..Config::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(Config::parse(&text, Path::new("c.toml")).unwrap().class_table(), table);
    }
}
