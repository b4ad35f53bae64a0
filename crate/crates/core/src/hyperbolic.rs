//! Initial layout: projects the image tree onto a Poincaré-disk wedge layout.
//!
//! Each node owns an angular interval, split among its children in
//! proportion to subtree size. A level-`j` node sits at the middle of its
//! interval at disk radius `tanh(c * j)`, and its apparent area shrinks with
//! the hyperbolic metric factor `(1 - r^2)^2`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect};
use crate::model::ImageItem;
use crate::tree::ImageTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionParams {
    /// Disk radius growth per level: `r_j = tanh(radial_step * j)`.
    pub radial_step: f64,
    /// Share of the disk area covered by the initial images.
    pub fill_factor: f64,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        Self {
            radial_step: 0.45,
            fill_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialLayout {
    /// Per image, indexed like the tree.
    pub rects: Vec<Rect>,
    /// `R_G0..R_Gmax` level radii.
    pub radii: Vec<f64>,
    /// Per image, `(start, end)` of its angular interval.
    pub intervals: Vec<(f64, f64)>,
    /// Per image, position in the unit disk before canvas scaling.
    pub disk: Vec<Point>,
}

/// `R_G0 = 0`, `R_Gj = R_G(j-1) + mean diagonal of level-(j-1) images`.
pub fn level_radii(tree: &ImageTree, sizes: &[(f64, f64)]) -> Vec<f64> {
    let depth = tree.depth();
    let mut sum = vec![0.0; depth + 1];
    let mut count = vec![0usize; depth + 1];
    for (i, &(w, h)) in sizes.iter().enumerate() {
        let l = tree.level(i);
        sum[l] += w.hypot(h);
        count[l] += 1;
    }
    let mut radii = vec![0.0; depth + 1];
    for j in 1..=depth {
        radii[j] = radii[j - 1] + if count[j - 1] > 0 { sum[j - 1] / count[j - 1] as f64 } else { 0.0 };
    }
    radii
}

pub fn disk_radius(level: usize, params: &ProjectionParams) -> f64 {
    (params.radial_step * level as f64).tanh()
}

/// Projects `tree` into the circle inscribed in `canvas`.
pub fn project(tree: &ImageTree, items: &[ImageItem], canvas: &Rect, params: &ProjectionParams) -> InitialLayout {
    let n = tree.len();
    let sizes = tree.subtree_sizes();

    let mut intervals = vec![(0.0, TAU); n];
    let mut stack = vec![tree.root()];
    while let Some(node) = stack.pop() {
        let (start, end) = intervals[node];
        let span = end - start;
        let total: usize = tree.children(node).iter().map(|&c| sizes[c]).sum();
        let mut cursor = start;
        for &c in tree.children(node) {
            let share = span * sizes[c] as f64 / total as f64;
            intervals[c] = (cursor, cursor + share);
            cursor += share;
            stack.push(c);
        }
    }

    let disk: Vec<Point> = (0..n)
        .map(|i| {
            if i == tree.root() {
                return Point::default();
            }
            let r = disk_radius(tree.level(i), params);
            let theta = 0.5 * (intervals[i].0 + intervals[i].1);
            Point::new(r * theta.cos(), r * theta.sin())
        })
        .collect();

    let scale = 0.5 * canvas.w.min(canvas.h);
    let metric: Vec<f64> = (0..n)
        .map(|i| {
            let r = disk_radius(tree.level(i), params);
            (1.0 - r * r).powi(2)
        })
        .collect();
    let s0_sq = params.fill_factor * PI * scale * scale / metric.iter().sum::<f64>();

    let rects: Vec<Rect> = (0..n)
        .map(|i| {
            let area = s0_sq * metric[i];
            let aspect = items[i].aspect();
            Rect::new(
                canvas.x + scale * disk[i].x,
                canvas.y + scale * disk[i].y,
                (area * aspect).sqrt(),
                (area / aspect).sqrt(),
            )
        })
        .collect();

    let initial_sizes: Vec<(f64, f64)> = rects.iter().map(|r| (r.w, r.h)).collect();
    let radii = level_radii(tree, &initial_sizes);
    InitialLayout {
        rects,
        radii,
        intervals,
        disk,
    }
}
