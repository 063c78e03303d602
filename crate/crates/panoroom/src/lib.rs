//! File formats, configuration, synthetic fixtures and the `panoroom`
//! command line on top of [`panoroom_core`].
//!
//! * [`formats`] – JSON records (detections, layout, scene, annotations).
//! * [`raster`] – label maps and masks as grayscale PNG.
//! * [`config`] – TOML pipeline configuration.
//! * [`manifest`] – hashed output directories.
//! * [`fixture`] – rendered synthetic rooms with jittered detections.
//! * [`commands`] – the subcommands as library functions.

pub mod commands;
pub mod config;
pub mod error;
pub mod fixture;
pub mod formats;
pub mod manifest;
pub mod raster;

pub use config::Config;
pub use error::{Error, Result};
