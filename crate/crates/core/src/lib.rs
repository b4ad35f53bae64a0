//! Image collection layout engine.
//!
//! An image collection is organized into a property tree ([`tree`]), projected
//! into an initial hyperbolic layout ([`hyperbolic`]), and then optimized
//! ([`optimizer`]) so that every image center lies inside a target shape
//! ([`geometry::ShapeRegion`]), images do not overlap beyond a threshold, and
//! tree-correlated images stay close to each other ([`costs`]).
//!
//! [`pipeline::run_pipeline`] chains all stages; the [`io`] module covers the
//! manifest, layout document, run-config and SVG formats.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod costs;
pub mod error;
pub mod geometry;
pub mod hyperbolic;
pub mod io;
pub mod model;
pub mod optimizer;
pub mod pipeline;
pub mod synth;
pub mod tree;

pub use costs::{CostParams, LayoutState, SizeBounds};
pub use error::{Error, Result};
pub use geometry::{Point, Rect, ShapeOptions, ShapeRegion};
pub use hyperbolic::{InitialLayout, ProjectionParams};
pub use model::{
    Histogram, ImageItem, PropertyDescriptor, PropertyKind, PropertySchema, PropertyValue,
};
pub use optimizer::{OptimizationTrace, TuningParams};
pub use pipeline::{refocus, run_pipeline, run_pipeline_from_tree, PipelineConfig, PipelineOutput};
pub use tree::{BalanceParams, ImageTree};
