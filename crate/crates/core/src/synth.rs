//! Seeded synthetic collections and target shapes, for fixtures, tests and
//! benchmarks.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Point;
use crate::model::{
    Histogram, ImageItem, PropertyDescriptor, PropertyKind, PropertySchema, PropertyValue, COLOR_BINS,
};

const CATEGORIES: [&str; 8] = [
    "electronics", "furniture", "grocery", "toys", "apparel", "garden", "sports", "books",
];
const MATERIALS: [&str; 3] = ["metal", "plastic", "wood"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub count: usize,
    pub categories: usize,
    /// Add a second semantic property between category and color.
    pub with_material: bool,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(count: usize, categories: usize, seed: u64) -> Self {
        Self {
            count,
            categories: categories.clamp(1, CATEGORIES.len()),
            with_material: false,
            seed,
        }
    }

    pub fn schema(&self) -> PropertySchema {
        let mut d = vec![PropertyDescriptor::new("category", PropertyKind::Semantic)];
        if self.with_material {
            d.push(PropertyDescriptor::new("material", PropertyKind::Semantic));
        }
        d.push(PropertyDescriptor::new("color", PropertyKind::Visual));
        PropertySchema::new(d).expect("static schema is valid")
    }
}

/// A color histogram concentrated on `dominant` with some random spread.
fn color_histogram(rng: &mut ChaCha8Rng, dominant: usize) -> Histogram {
    let mut counts: Vec<f64> = (0..COLOR_BINS).map(|_| rng.gen::<f64>() * 0.02).collect();
    counts[dominant] += 0.75 + 0.1 * rng.gen::<f64>();
    counts[(dominant + 1) % COLOR_BINS] += 0.1 * rng.gen::<f64>();
    Histogram::from_counts(&counts).expect("counts are positive")
}

/// Items with a category tag, an optional material tag and a color histogram.
/// Each category uses two palette colors, so color sub-branches form within
/// category branches.
pub fn collection(spec: &SynthSpec) -> (PropertySchema, Vec<ImageItem>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut items = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let cat = rng.gen_range(0..spec.categories);
        let palette = cat * 7 % COLOR_BINS;
        let dominant = if rng.gen_bool(0.5) { palette } else { (palette + 21) % COLOR_BINS };
        let mut props = vec![PropertyValue::tag(CATEGORIES[cat])];
        if spec.with_material {
            props.push(PropertyValue::tag(MATERIALS[rng.gen_range(0..MATERIALS.len())]));
        }
        props.push(PropertyValue::Histogram(color_histogram(&mut rng, dominant)));
        let w = rng.gen_range(150..=400) as f64;
        let h = rng.gen_range(150..=400) as f64;
        items.push(ImageItem::new(format!("img{i:03}"), w, h, props).expect("positive size"));
    }
    (spec.schema(), items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Rectangle,
    Circle,
    Heart,
    Star,
    LShape,
    Cross,
    Hexagon,
}

/// Closed polygon of the given kind fitting in a `size x size` box with the
/// top-left corner at the origin.
pub fn polygon(kind: ShapeKind, size: f64) -> Vec<Point> {
    let c = 0.5 * size;
    let ring = |count: usize, radius: &dyn Fn(f64) -> f64| -> Vec<Point> {
        (0..count)
            .map(|k| {
                let t = k as f64 * TAU / count as f64 - PI / 2.0;
                let r = radius(t);
                Point::new(c + r * t.cos(), c + r * t.sin())
            })
            .collect()
    };
    let scale = |pts: &[(f64, f64)]| pts.iter().map(|&(x, y)| Point::new(x * size, y * size)).collect();
    match kind {
        ShapeKind::Rectangle => scale(&[(0.0, 0.15), (1.0, 0.15), (1.0, 0.85), (0.0, 0.85)]),
        ShapeKind::Circle => ring(256, &|_| c),
        ShapeKind::Star => ring(10, &|t| {
            let k = ((t + PI / 2.0) / (TAU / 10.0)).round() as i64;
            if k % 2 == 0 {
                c
            } else {
                0.5 * c
            }
        }),
        ShapeKind::Hexagon => ring(6, &|_| c),
        ShapeKind::Heart => (0..256)
            .map(|k| {
                let t = k as f64 * TAU / 256.0;
                let x = 16.0 * t.sin().powi(3);
                let y = 13.0 * t.cos() - 5.0 * (2.0 * t).cos() - 2.0 * (3.0 * t).cos() - (4.0 * t).cos();
                Point::new(c + x / 34.0 * size, c - (y + 2.5) / 34.0 * size)
            })
            .collect(),
        ShapeKind::LShape => scale(&[(0.0, 0.0), (0.45, 0.0), (0.45, 0.55), (1.0, 0.55), (1.0, 1.0), (0.0, 1.0)]),
        ShapeKind::Cross => scale(&[
            (0.33, 0.0),
            (0.67, 0.0),
            (0.67, 0.33),
            (1.0, 0.33),
            (1.0, 0.67),
            (0.67, 0.67),
            (0.67, 1.0),
            (0.33, 1.0),
            (0.33, 0.67),
            (0.0, 0.67),
            (0.0, 0.33),
            (0.33, 0.33),
        ]),
    }
}
