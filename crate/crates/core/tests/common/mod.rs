#![allow(dead_code)]

use std::path::PathBuf;

use treecollage_core::geometry::overlap_area;
use treecollage_core::io::{read_manifest, Manifest};
use treecollage_core::{run_pipeline, ImageTree, PipelineOutput, Rect, ShapeRegion};

/// Layout fixtures (the star and chain fixtures are used separately).
pub const LAYOUT_FIXTURES: [&str; 11] = [
    "walmart_rectangle_40",
    "rectangle_30",
    "circle_60",
    "heart_50",
    "star_70",
    "lshape_45",
    "cross_80",
    "hexagon_100",
    "blob_mask_64",
    "notch_mask_100",
    "three_property_circle_50",
];

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn manifest(name: &str) -> Manifest {
    read_manifest(&fixture_dir().join(format!("{name}.json"))).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub struct Run {
    pub name: &'static str,
    pub manifest: Manifest,
    pub shape: ShapeRegion,
    pub output: PipelineOutput,
}

pub fn run(name: &'static str) -> Run {
    let manifest = manifest(name);
    let shape = manifest.load_shape().unwrap();
    let output = run_pipeline(&manifest.items, &manifest.schema, &shape, &manifest.config, None)
        .unwrap_or_else(|e| panic!("{name}: {e}"));
    Run { name, manifest, shape, output }
}

pub fn total_overlap(rects: &[Rect]) -> f64 {
    let mut total = 0.0;
    for i in 0..rects.len() {
        for q in i + 1..rects.len() {
            total += overlap_area(&rects[i], &rects[q]);
        }
    }
    total
}

/// Mean center distance between images of different level-1 subtrees and
/// within the same subtree. The root is excluded.
pub fn branch_distances(tree: &ImageTree, rects: &[Rect]) -> (f64, f64) {
    let (mut inter, mut n_inter, mut intra, mut n_intra) = (0.0, 0usize, 0.0, 0usize);
    for a in 0..rects.len() {
        for b in a + 1..rects.len() {
            let (Some(ba), Some(bb)) = (tree.branch_of(a), tree.branch_of(b)) else {
                continue;
            };
            let d = rects[a].center().distance(rects[b].center());
            if ba == bb {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    (inter / n_inter.max(1) as f64, intra / n_intra.max(1) as f64)
}
