//! Rectangles, the target shape raster and pixel-coverage counting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle given by its center and size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn center(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn left(&self) -> f64 {
        self.x - 0.5 * self.w
    }

    pub fn right(&self) -> f64 {
        self.x + 0.5 * self.w
    }

    pub fn top(&self) -> f64 {
        self.y - 0.5 * self.h
    }

    pub fn bottom(&self) -> f64 {
        self.y + 0.5 * self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    pub fn with_center(self, c: Point) -> Self {
        Self { x: c.x, y: c.y, ..self }
    }

    /// Scales width and height about the center.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            w: self.w * factor,
            h: self.h * factor,
            ..self
        }
    }
}

/// Intersection area of two axis-aligned rectangles.
pub fn overlap_area(a: &Rect, b: &Rect) -> f64 {
    let dx = a.right().min(b.right()) - a.left().max(b.left());
    let dy = a.bottom().min(b.bottom()) - a.top().max(b.top());
    if dx > 0.0 && dy > 0.0 {
        dx * dy
    } else {
        0.0
    }
}

/// Total overlap of `rects[i]` with `candidates`, divided by its area.
pub fn overlap_ratio(i: usize, rects: &[Rect], candidates: impl IntoIterator<Item = usize>) -> f64 {
    let r = &rects[i];
    let total: f64 = candidates
        .into_iter()
        .filter(|&q| q != i)
        .map(|q| overlap_area(r, &rects[q]))
        .sum();
    total / r.area()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeOptions {
    /// Smallest accepted raster size along the longest side.
    pub min_resolution: usize,
    /// Raster size along the longest side when rasterizing polygons.
    pub polygon_resolution: usize,
}

impl Default for ShapeOptions {
    fn default() -> Self {
        Self {
            min_resolution: 256,
            polygon_resolution: 512,
        }
    }
}

/// The target layout shape as a raster of inside/outside cells.
///
/// Cell `(cx, cy)` covers `[origin.x + cx * cell, origin.x + (cx + 1) * cell)`
/// horizontally and likewise vertically. Each cell also stores the index of
/// its nearest inside cell (exact Euclidean feature transform).
#[derive(Debug, Clone)]
pub struct ShapeRegion {
    width: usize,
    height: usize,
    cell: f64,
    origin: Point,
    inside: Vec<bool>,
    nearest: Vec<u32>,
    /// Inside cells touching an outside cell or the grid edge.
    boundary: Vec<u32>,
    outline: Option<Vec<Point>>,
}

impl ShapeRegion {
    /// `inside` is row-major, `width * height` cells of side `cell`.
    pub fn from_mask(
        width: usize,
        height: usize,
        inside: Vec<bool>,
        cell: f64,
        origin: Point,
        options: &ShapeOptions,
    ) -> Result<Self> {
        if width == 0 || height == 0 || inside.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask of {width}x{height} cells does not match {} values",
                inside.len()
            )));
        }
        if width.max(height) < options.min_resolution {
            return Err(Error::InvalidInput(format!(
                "mask resolution {}x{} is below the minimum of {} on the longest side",
                width, height, options.min_resolution
            )));
        }
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(Error::InvalidInput(format!("cell size {cell} must be positive")));
        }
        if !inside.iter().any(|&b| b) {
            return Err(Error::InvalidInput("shape has no inside cells".into()));
        }
        let nearest = feature_transform(width, height, &inside);
        let at = |x: isize, y: isize| {
            x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height && inside[y as usize * width + x as usize]
        };
        let boundary = (0..width * height)
            .filter(|&k| {
                let (x, y) = ((k % width) as isize, (k / width) as isize);
                inside[k] && !(at(x - 1, y) && at(x + 1, y) && at(x, y - 1) && at(x, y + 1))
            })
            .map(|k| k as u32)
            .collect();
        Ok(Self {
            width,
            height,
            cell,
            origin,
            inside,
            nearest,
            boundary,
            outline: None,
        })
    }

    /// Rasterizes a closed polygon (even-odd rule on cell centers) at
    /// `options.polygon_resolution` cells along the longer bounding-box side.
    pub fn from_polygon(vertices: &[Point], options: &ShapeOptions) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidInput("polygon needs at least three vertices".into()));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidInput("polygon has non-finite coordinates".into()));
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in vertices {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let extent = (x1 - x0).max(y1 - y0);
        if !(extent > 0.0) {
            return Err(Error::InvalidInput("polygon is degenerate".into()));
        }
        let res = options.polygon_resolution.max(options.min_resolution).max(1);
        let cell = extent / res as f64;
        let width = (((x1 - x0) / cell).ceil() as usize).max(1);
        let height = (((y1 - y0) / cell).ceil() as usize).max(1);
        let mut inside = vec![false; width * height];
        for cy in 0..height {
            let py = y0 + (cy as f64 + 0.5) * cell;
            let mut crossings: Vec<f64> = Vec::new();
            for (k, a) in vertices.iter().enumerate() {
                let b = vertices[(k + 1) % vertices.len()];
                if (a.y > py) != (b.y > py) {
                    crossings.push(a.x + (py - a.y) / (b.y - a.y) * (b.x - a.x));
                }
            }
            crossings.sort_by(f64::total_cmp);
            for pair in crossings.chunks_exact(2) {
                let start = ((pair[0] - x0) / cell - 0.5).ceil().max(0.0) as usize;
                let end = ((pair[1] - x0) / cell - 0.5).ceil().max(0.0) as usize;
                for cx in start..end.min(width) {
                    inside[cy * width + cx] = true;
                }
            }
        }
        let mut shape = Self::from_mask(width, height, inside, cell, Point::new(x0, y0), options)?;
        shape.outline = Some(vertices.to_vec());
        Ok(shape)
    }

    /// Axis-aligned rectangle `[0, width] x [0, height]`.
    pub fn rectangle(width: f64, height: f64, options: &ShapeOptions) -> Result<Self> {
        Self::from_polygon(
            &[
                Point::new(0.0, 0.0),
                Point::new(width, 0.0),
                Point::new(width, height),
                Point::new(0.0, height),
            ],
            options,
        )
    }

    pub fn width_cells(&self) -> usize {
        self.width
    }

    pub fn height_cells(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn outline(&self) -> Option<&[Point]> {
        self.outline.as_deref()
    }

    pub fn is_inside_cell(&self, cx: usize, cy: usize) -> bool {
        self.inside[cy * self.width + cx]
    }

    /// Extent of the raster grid.
    pub fn extent(&self) -> Rect {
        let w = self.width as f64 * self.cell;
        let h = self.height as f64 * self.cell;
        Rect::new(self.origin.x + 0.5 * w, self.origin.y + 0.5 * h, w, h)
    }

    /// Bounding box of the inside cells.
    pub fn bounding_box(&self) -> Rect {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for cy in 0..self.height {
            for cx in 0..self.width {
                if self.inside[cy * self.width + cx] {
                    x0 = x0.min(cx);
                    y0 = y0.min(cy);
                    x1 = x1.max(cx + 1);
                    y1 = y1.max(cy + 1);
                }
            }
        }
        let w = (x1 - x0) as f64 * self.cell;
        let h = (y1 - y0) as f64 * self.cell;
        Rect::new(
            self.origin.x + x0 as f64 * self.cell + 0.5 * w,
            self.origin.y + y0 as f64 * self.cell + 0.5 * h,
            w,
            h,
        )
    }

    /// Area of the inside set.
    pub fn area(&self) -> f64 {
        self.inside.iter().filter(|&&b| b).count() as f64 * self.cell * self.cell
    }

    fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.cell).floor();
        let fy = ((p.y - self.origin.y) / self.cell).floor();
        if fx >= 0.0 && fy >= 0.0 && fx < self.width as f64 && fy < self.height as f64 {
            Some((fx as usize, fy as usize))
        } else {
            None
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.cell_of(p).is_some_and(|(cx, cy)| self.inside[cy * self.width + cx])
    }

    /// Closest point of the inside set to `p`, and its distance. Points
    /// already inside are returned unchanged with distance 0.
    pub fn nearest_inside(&self, p: Point) -> (Point, f64) {
        if self.contains(p) {
            return (p, 0.0);
        }
        let fx = ((p.x - self.origin.x) / self.cell).floor();
        let fy = ((p.y - self.origin.y) / self.cell).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            // Off the grid the feature transform does not apply.
            return self
                .boundary
                .iter()
                .map(|&k| {
                    let q = self.clamp_to_cell(p, k as usize % self.width, k as usize / self.width);
                    (q, p.distance(q))
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("inside set is non-empty");
        }
        let cx = fx.clamp(0.0, (self.width - 1) as f64) as isize;
        let cy = fy.clamp(0.0, (self.height - 1) as f64) as isize;
        let mut best: Option<(Point, f64)> = None;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (cx + dx, cy + dy);
                if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
                    continue;
                }
                let target = self.nearest[ny as usize * self.width + nx as usize] as usize;
                let q = self.clamp_to_cell(p, target % self.width, target / self.width);
                let d = p.distance(q);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((q, d));
                }
            }
        }
        best.expect("inside set is non-empty")
    }

    /// Closest point to `p` that lies strictly within cell `(cx, cy)`.
    fn clamp_to_cell(&self, p: Point, cx: usize, cy: usize) -> Point {
        let eps = 1e-6 * self.cell;
        let x0 = self.origin.x + cx as f64 * self.cell;
        let y0 = self.origin.y + cy as f64 * self.cell;
        Point::new(
            p.x.clamp(x0 + eps, x0 + self.cell - eps),
            p.y.clamp(y0 + eps, y0 + self.cell - eps),
        )
    }

    /// Range of lattice cell indices (possibly outside the grid) whose
    /// centers fall in `[lo, hi)` along one axis.
    fn lattice_range(&self, lo: f64, hi: f64, origin: f64) -> (i64, i64) {
        let a = ((lo - origin) / self.cell - 0.5).ceil() as i64;
        let b = ((hi - origin) / self.cell - 0.5).ceil() as i64;
        (a, b.max(a))
    }

    /// Lattice cells whose centers fall inside `r`, as half-open index
    /// ranges `(x0, x1, y0, y1)`.
    pub fn footprint(&self, r: &Rect) -> (i64, i64, i64, i64) {
        let (x0, x1) = self.lattice_range(r.left(), r.right(), self.origin.x);
        let (y0, y1) = self.lattice_range(r.top(), r.bottom(), self.origin.y);
        (x0, x1, y0, y1)
    }
}

/// Counts the raster cells of `rects[i]`'s footprint that are outside the
/// shape or covered by any other rectangle. A cell belongs to a footprint
/// when its center does.
pub fn bad_pixel_count(i: usize, rects: &[Rect], shape: &ShapeRegion) -> u64 {
    let (x0, x1, y0, y1) = shape.footprint(&rects[i]);
    let others: Vec<(i64, i64, i64, i64)> = rects
        .iter()
        .enumerate()
        .filter(|&(q, _)| q != i)
        .map(|(_, r)| shape.footprint(r))
        .filter(|&(a0, a1, b0, b1)| a0 < x1 && a1 > x0 && b0 < y1 && b1 > y0)
        .collect();
    let mut count = 0;
    for cy in y0..y1 {
        for cx in x0..x1 {
            let in_grid = cx >= 0 && cy >= 0 && (cx as usize) < shape.width && (cy as usize) < shape.height;
            let inside = in_grid && shape.inside[cy as usize * shape.width + cx as usize];
            let covered = others
                .iter()
                .any(|&(a0, a1, b0, b1)| cx >= a0 && cx < a1 && cy >= b0 && cy < b1);
            if !inside || covered {
                count += 1;
            }
        }
    }
    count
}

/// Per-cell coverage counts of a set of rectangles, used to answer many
/// bad-pixel queries for one image against a fixed background in O(1).
#[derive(Debug, Clone)]
pub struct CoverageGrid {
    width: usize,
    height: usize,
    counts: Vec<u32>,
}

impl CoverageGrid {
    pub fn new(shape: &ShapeRegion, rects: &[Rect]) -> Self {
        let mut grid = Self {
            width: shape.width,
            height: shape.height,
            counts: vec![0; shape.width * shape.height],
        };
        for r in rects {
            grid.add(shape, r, 1);
        }
        grid
    }

    fn clipped(&self, shape: &ShapeRegion, r: &Rect) -> (usize, usize, usize, usize) {
        let (x0, x1, y0, y1) = shape.footprint(r);
        let c = |v: i64, max: usize| v.clamp(0, max as i64) as usize;
        (c(x0, self.width), c(x1, self.width), c(y0, self.height), c(y1, self.height))
    }

    pub fn add(&mut self, shape: &ShapeRegion, r: &Rect, sign: i32) {
        let (x0, x1, y0, y1) = self.clipped(shape, r);
        for cy in y0..y1 {
            for v in &mut self.counts[cy * self.width + x0..cy * self.width + x1] {
                *v = v.wrapping_add_signed(sign);
            }
        }
    }

    /// Summed-area table of cells that are inside the shape and not covered,
    /// after removing `own` from the coverage.
    pub fn free_table(&self, shape: &ShapeRegion, own: &Rect) -> FreeTable {
        let mut counts = self.clone();
        counts.add(shape, own, -1);
        let w = self.width + 1;
        let mut sums = vec![0u32; w * (self.height + 1)];
        for cy in 0..self.height {
            let mut row = 0u32;
            for cx in 0..self.width {
                let k = cy * self.width + cx;
                row += (shape.inside[k] && counts.counts[k] == 0) as u32;
                sums[(cy + 1) * w + cx + 1] = sums[cy * w + cx + 1] + row;
            }
        }
        FreeTable {
            width: self.width,
            height: self.height,
            sums,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FreeTable {
    width: usize,
    height: usize,
    sums: Vec<u32>,
}

impl FreeTable {
    /// Bad cells of a footprint: lattice cells minus free in-grid cells.
    pub fn bad_count(&self, shape: &ShapeRegion, r: &Rect) -> u64 {
        let (x0, x1, y0, y1) = shape.footprint(r);
        let total = ((x1 - x0) * (y1 - y0)) as u64;
        let c = |v: i64, max: usize| v.clamp(0, max as i64) as usize;
        let (a0, a1, b0, b1) = (c(x0, self.width), c(x1, self.width), c(y0, self.height), c(y1, self.height));
        let w = self.width + 1;
        let free = self.sums[b1 * w + a1] + self.sums[b0 * w + a0] - self.sums[b0 * w + a1] - self.sums[b1 * w + a0];
        total - free as u64
    }
}

/// Exact Euclidean feature transform: for every cell, the row-major index of
/// the nearest inside cell (ties resolved by scan order).
fn feature_transform(width: usize, height: usize, inside: &[bool]) -> Vec<u32> {
    const NONE: usize = usize::MAX;
    // Column pass: nearest inside row within the same column.
    let mut col_row = vec![NONE; width * height];
    for cx in 0..width {
        let mut last = NONE;
        for cy in 0..height {
            if inside[cy * width + cx] {
                last = cy;
            }
            col_row[cy * width + cx] = last;
        }
        let mut next = NONE;
        for cy in (0..height).rev() {
            if inside[cy * width + cx] {
                next = cy;
            }
            let k = cy * width + cx;
            if next != NONE && (col_row[k] == NONE || next - cy < cy - col_row[k]) {
                col_row[k] = next;
            }
        }
    }

    // Row pass: lower envelope of parabolas (x - i)^2 + g(i)^2.
    let mut out = vec![0u32; width * height];
    let mut v = vec![0usize; width];
    let mut z = vec![0f64; width + 1];
    for cy in 0..height {
        let g2 = |x: usize| {
            let r = col_row[cy * width + x];
            let d = r.abs_diff(cy) as f64;
            d * d
        };
        let sites: Vec<usize> = (0..width).filter(|&x| col_row[cy * width + x] != NONE).collect();
        let mut k = 0usize;
        v[0] = sites[0];
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for &q in &sites[1..] {
            loop {
                let p = v[k];
                let s = ((g2(q) + (q * q) as f64) - (g2(p) + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
                if s <= z[k] && k > 0 {
                    k -= 1;
                    continue;
                }
                if s <= z[k] {
                    // k == 0: q dominates everywhere.
                    v[0] = q;
                    z[1] = f64::INFINITY;
                } else {
                    k += 1;
                    v[k] = q;
                    z[k] = s;
                    z[k + 1] = f64::INFINITY;
                }
                break;
            }
        }
        let mut k = 0;
        for x in 0..width {
            while z[k + 1] < x as f64 {
                k += 1;
            }
            let sx = v[k];
            out[cy * width + x] = (col_row[cy * width + sx] * width + sx) as u32;
        }
    }
    out
}
