use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use panoroom::commands::{self, EvalInputs};
use panoroom::{formats, Config, Error, Result};

/// Object detection, segmentation and 3D placement in indoor panoramas.
///
/// Exit status: 0 on success, 2 on schema errors, 3 on failed checks, 1
/// on any other error.
#[derive(Parser)]
#[command(name = "panoroom", version)]
struct Cli {
    /// TOML configuration file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice (RANSAC, fixture generation, jitter).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MapInputs {
    /// 8-bit class map.
    #[arg(long)]
    semantic: PathBuf,
    /// 16-bit instance map; instance i belongs to the i-th kept detection.
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize polygon annotations into per-object 1-bit masks.
    MasksFromPoints {
        #[arg(long)]
        annotations: PathBuf,
        /// Panorama width; the height is half of it.
        #[arg(long)]
        width: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compose object masks into a class map and an owner map.
    ComposeSemantic {
        /// Mask index (masks.json) with paths relative to it.
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a class map into instances using the detections.
    Instances {
        #[arg(long)]
        semantic: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine instance masks against the room layout.
    Refine(MapInputs),
    /// Place instances in the room and write the scene.
    To3d(MapInputs),
    /// Score detections (AP) and/or class maps (IoU); prints JSON.
    Eval {
        #[arg(long, requires = "gt_detections")]
        pred_detections: Option<PathBuf>,
        #[arg(long)]
        gt_detections: Option<PathBuf>,
        #[arg(long, requires = "gt_semantic")]
        pred_semantic: Option<PathBuf>,
        #[arg(long)]
        gt_semantic: Option<PathBuf>,
        /// Panorama width for detection-only evaluation.
        #[arg(long)]
        width: Option<usize>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the EquiConv self-checks on random inputs; prints JSON.
    EquiconvCheck {
        /// Equator rows compared against a plain convolution.
        #[arg(long, default_value_t = 2)]
        band_rows: usize,
    },
    /// Write a random synthetic room with ground truth.
    GenFixture {
        #[arg(long, default_value_t = 1024)]
        width: usize,
        /// Standard deviation of the box edge noise, in pixels.
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// The whole pipeline on one input directory (semantic.png,
    /// detections.json, layout.json) or on every such subdirectory.
    Run {
        #[arg(long, conflicts_with = "batch", required_unless_present = "batch")]
        input: Option<PathBuf>,
        #[arg(long)]
        batch: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(value: &T) {
    print!("{}", String::from_utf8_lossy(&formats::to_json_bytes(value)));
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = Config::load_or_default(cli.config.as_deref())?;
    let seed = cli.seed;
    match cli.command {
        Command::MasksFromPoints { annotations, width, out } => {
            commands::masks_from_points(&annotations, width, &out, &cfg)?;
        }
        Command::ComposeSemantic { masks, out } => {
            commands::compose(&masks, &out, &cfg)?;
        }
        Command::Instances { semantic, detections, out } => {
            commands::instances(&semantic, &detections, &out, &cfg)?;
        }
        Command::Refine(m) => {
            commands::refine(&m.semantic, &m.instances, &m.detections, &m.layout, &m.out, &cfg)?;
        }
        Command::To3d(m) => {
            let manifest = commands::to3d(&m.semantic, &m.instances, &m.detections, &m.layout, &m.out, &cfg, seed)?;
            for f in &manifest.failures {
                eprintln!("instance {} ({}): {}", f.instance_id, f.class, f.error);
            }
        }
        Command::Eval {
            pred_detections,
            gt_detections,
            pred_semantic,
            gt_semantic,
            width,
            out,
        } => {
            let report = commands::eval(
                &EvalInputs {
                    pred_detections,
                    gt_detections,
                    pred_semantic,
                    gt_semantic,
                    width,
                },
                &cfg,
            )?;
            if let Some(out) = out {
                formats::write_json(&out, &report)?;
            }
            print_json(&report);
        }
        Command::EquiconvCheck { band_rows } => {
            let report = commands::equiconv_check(band_rows, seed)?;
            print_json(&report);
            if !report.pass {
                return Err(Error::Check("equiconv self-check".into()));
            }
        }
        Command::GenFixture { width, jitter, out } => {
            commands::gen_fixture(&out, width, jitter, &cfg, seed)?;
        }
        Command::Run { input, batch, out } => {
            if let Some(input) = input {
                let manifest = commands::run(&input, &out, &cfg, seed)?;
                for f in &manifest.failures {
                    eprintln!("instance {} ({}): {}", f.instance_id, f.class, f.error);
                }
            } else if let Some(root) = batch {
                let results = commands::run_batch(&root, &out, &cfg, seed)?;
                let mut worst: Option<Error> = None;
                for (name, r) in results {
                    match r {
                        Ok(m) => eprintln!("{name}: ok, {} placement failures", m.failures.len()),
                        Err(e) => {
                            eprintln!("{name}: {e}");
                            if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                                worst = Some(e);
                            }
                        }
                    }
                }
                if let Some(e) = worst {
                    return Err(e);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
