//! File formats: collection manifest, run config, layout document and SVG.

pub mod config;
pub mod document;
pub mod manifest;
pub mod svg;

pub use config::{parse_run_config, read_run_config, RunConfig};
pub use document::{LayoutDocument, ObjectiveSummary, PlacedItem};
pub use manifest::{parse_manifest, read_manifest, Manifest, ShapeSpec};
pub use svg::render_svg;
