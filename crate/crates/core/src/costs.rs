//! Layout costs and constraints.
//!
//! Every per-image term except the overlap term lies in `[0, 1)`. The
//! exponential terms use a per-image scale chosen so that a displacement of
//! one diagonal costs exactly `curvature`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{overlap_area, Rect, ShapeRegion};
use crate::tree::ImageTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeBounds {
    pub w_lo: f64,
    pub w_hi: f64,
    pub h_lo: f64,
    pub h_hi: f64,
}

impl SizeBounds {
    /// Bounds `[lower * w, upper * w] x [lower * h, upper * h]`.
    pub fn around(w: f64, h: f64, lower: f64, upper: f64) -> Self {
        Self {
            w_lo: lower * w,
            w_hi: upper * w,
            h_lo: lower * h,
            h_hi: upper * h,
        }
    }

    pub fn contains(&self, w: f64, h: f64) -> bool {
        self.w_lo <= w && w <= self.w_hi && self.h_lo <= h && h <= self.h_hi
    }

    pub fn clamp(&self, w: f64, h: f64) -> (f64, f64) {
        (w.clamp(self.w_lo, self.w_hi), h.clamp(self.h_lo, self.h_hi))
    }

    fn validate(&self, index: usize) -> Result<()> {
        let ok = [self.w_lo, self.w_hi, self.h_lo, self.h_hi]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
            && self.w_lo <= self.w_hi
            && self.h_lo <= self.h_hi;
        if !ok {
            return Err(Error::Config(format!("invalid size bounds for image {index}: {self:?}")));
        }
        if self.w_hi * self.h_hi <= self.w_lo * self.h_lo {
            return Err(Error::Config(format!(
                "degenerate size bounds for image {index}: upper area equals lower area"
            )));
        }
        Ok(())
    }
}

/// Image rectangles and their size bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutState {
    pub rects: Vec<Rect>,
    pub bounds: Vec<SizeBounds>,
}

impl LayoutState {
    pub fn new(rects: Vec<Rect>, bounds: Vec<SizeBounds>) -> Result<Self> {
        if rects.len() != bounds.len() {
            return Err(Error::InvalidInput("rects and bounds differ in length".into()));
        }
        for (i, b) in bounds.iter().enumerate() {
            b.validate(i)?;
        }
        Ok(Self { rects, bounds })
    }

    /// Bounds derived from the initial sizes.
    pub fn from_initial(rects: Vec<Rect>, params: &CostParams) -> Result<Self> {
        let bounds = rects
            .iter()
            .map(|r| SizeBounds::around(r.w, r.h, params.size_lower, params.size_upper))
            .collect();
        Self::new(rects, bounds)
    }

    pub fn len(&self) -> usize {
        self.rects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub w_tree: f64,
    pub w_level: f64,
    pub w_size: f64,
    pub w_overlap: f64,
    pub w_shape: f64,
    /// Cost of a one-diagonal displacement in the exponential terms.
    pub curvature: f64,
    /// Maximum allowed per-image overlap ratio.
    pub overlap_threshold: f64,
    /// Size bounds as multiples of the initial size.
    pub size_lower: f64,
    pub size_upper: f64,
    /// Per-level iteration cap of the global optimizer.
    pub max_iterations: usize,
    /// Relative improvement below which the global optimizer stops.
    pub rel_tolerance: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            w_tree: 1.0,
            w_level: 1.0,
            w_size: 1.0 / 3.0,
            w_overlap: 100.0,
            w_shape: 100.0,
            curvature: 0.5,
            overlap_threshold: 0.0,
            size_lower: 0.8,
            size_upper: 1.2,
            max_iterations: 200,
            rel_tolerance: 1e-4,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.w_tree, self.w_level, self.w_size, self.w_overlap, self.w_shape];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("cost weights must be non-negative".into()));
        }
        if !(self.curvature > 0.0 && self.curvature < 1.0) {
            return Err(Error::Config(format!("curvature must lie in (0, 1), got {}", self.curvature)));
        }
        if !(self.overlap_threshold >= 0.0) {
            return Err(Error::Config("overlap threshold must be non-negative".into()));
        }
        if !(self.size_lower > 0.0 && self.size_lower <= self.size_upper) {
            return Err(Error::Config("size bound factors must satisfy 0 < lower <= upper".into()));
        }
        if !(self.rel_tolerance >= 0.0) {
            return Err(Error::Config("relative tolerance must be non-negative".into()));
        }
        Ok(())
    }

    /// Exponential scale for a rectangle of diagonal `diagonal`.
    pub fn rolling_factor(&self, diagonal: f64) -> f64 {
        -diagonal / (1.0 - self.curvature).ln()
    }
}

fn mean(iter: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = iter.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn saturate(distance: f64, scale: f64) -> f64 {
    1.0 - (-distance / scale).exp()
}

/// Correlation term of image `i`: distance to its parent on the parent's
/// diagonal scale.
pub fn corr_term(rects: &[Rect], tree: &ImageTree, i: usize, params: &CostParams) -> f64 {
    let p = &rects[tree.parent(i)];
    saturate(rects[i].center().distance(p.center()), params.rolling_factor(p.diagonal()))
}

/// Level term of image `i`: deviation of its distance to the root from its
/// level radius, on its own diagonal scale.
pub fn level_term(rects: &[Rect], tree: &ImageTree, radii: &[f64], i: usize, params: &CostParams) -> f64 {
    let r = &rects[i];
    let d = r.center().distance(rects[tree.root()].center());
    let target = radii.get(tree.level(i)).copied().unwrap_or_else(|| *radii.last().unwrap_or(&0.0));
    saturate((d - target).abs(), params.rolling_factor(r.diagonal()))
}

pub fn size_term(r: &Rect, b: &SizeBounds) -> f64 {
    let hi = b.w_hi * b.h_hi;
    (hi - r.area()) / (hi - b.w_lo * b.h_lo)
}

/// Overlap term of image `i` against `others`.
pub fn overlap_term(rects: &[Rect], i: usize, others: &[usize], threshold: f64) -> f64 {
    let r = &rects[i];
    let total: f64 = others.iter().filter(|&&q| q != i).map(|&q| overlap_area(r, &rects[q])).sum();
    (total / r.area() - threshold).max(0.0)
}

/// Shape term: zero for inside centers, otherwise the saturated distance to
/// the nearest inside point on the image's own diagonal scale.
pub fn shape_term(r: &Rect, shape: &ShapeRegion, params: &CostParams) -> f64 {
    let c = r.center();
    if shape.contains(c) {
        return 0.0;
    }
    let (_, d) = shape.nearest_inside(c);
    saturate(d, params.rolling_factor(r.diagonal()))
}

fn non_root(tree: &ImageTree) -> impl Iterator<Item = usize> + '_ {
    (0..tree.len()).filter(move |&i| i != tree.root())
}

pub fn e_corr(layout: &LayoutState, tree: &ImageTree, params: &CostParams) -> f64 {
    mean(non_root(tree).map(|i| corr_term(&layout.rects, tree, i, params)))
}

pub fn e_level(layout: &LayoutState, tree: &ImageTree, radii: &[f64], params: &CostParams) -> f64 {
    mean(non_root(tree).map(|i| level_term(&layout.rects, tree, radii, i, params)))
}

pub fn e_size(layout: &LayoutState) -> Result<f64> {
    for (i, b) in layout.bounds.iter().enumerate() {
        b.validate(i)?;
    }
    Ok(mean(layout.rects.iter().zip(&layout.bounds).map(|(r, b)| size_term(r, b))))
}

/// Images at levels `<= level`, the overlap partners of a level-`level` image.
pub fn placed_through(tree: &ImageTree, level: usize) -> Vec<usize> {
    (0..tree.len()).filter(|&i| tree.level(i) <= level).collect()
}

pub fn e_overlap(layout: &LayoutState, tree: &ImageTree, level: usize, threshold: f64) -> f64 {
    let placed = placed_through(tree, level);
    mean(tree.nodes_at_level(level).into_iter().map(|i| overlap_term(&layout.rects, i, &placed, threshold)))
}

pub fn e_shape(layout: &LayoutState, tree: &ImageTree, level: usize, shape: &ShapeRegion, params: &CostParams) -> f64 {
    mean(tree.nodes_at_level(level).into_iter().map(|i| shape_term(&layout.rects[i], shape, params)))
}

/// Unweighted cost components of one level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LevelCosts {
    pub tree: f64,
    pub level: f64,
    pub size: f64,
    pub overlap: f64,
    pub shape: f64,
}

impl LevelCosts {
    pub fn weighted(&self, p: &CostParams) -> f64 {
        p.w_tree * self.tree + p.w_level * self.level + p.w_size * self.size + p.w_overlap * self.overlap + p.w_shape * self.shape
    }
}

pub fn level_costs(
    layout: &LayoutState,
    tree: &ImageTree,
    radii: &[f64],
    shape: &ShapeRegion,
    params: &CostParams,
    level: usize,
) -> LevelCosts {
    let members = tree.nodes_at_level(level);
    let non_root: Vec<usize> = members.iter().copied().filter(|&i| i != tree.root()).collect();
    let rects = &layout.rects;
    LevelCosts {
        tree: mean(non_root.iter().map(|&i| corr_term(rects, tree, i, params))),
        level: mean(non_root.iter().map(|&i| level_term(rects, tree, radii, i, params))),
        size: mean(members.iter().map(|&i| size_term(&rects[i], &layout.bounds[i]))),
        overlap: e_overlap(layout, tree, level, params.overlap_threshold),
        shape: e_shape(layout, tree, level, shape, params),
    }
}

/// Weighted five-term objective restricted to the images of one level.
pub fn objective_level(
    layout: &LayoutState,
    tree: &ImageTree,
    radii: &[f64],
    shape: &ShapeRegion,
    params: &CostParams,
    level: usize,
) -> f64 {
    level_costs(layout, tree, radii, shape, params, level).weighted(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, ShapeOptions};
    use proptest::prelude::*;

    fn params() -> CostParams {
        CostParams::default()
    }

    fn shape() -> ShapeRegion {
        ShapeRegion::rectangle(
            1000.0,
            1000.0,
            &ShapeOptions {
                min_resolution: 1,
                polygon_resolution: 256,
            },
        )
        .unwrap()
    }

    fn star(n: usize) -> ImageTree {
        ImageTree::from_parents(vec![0; n], 1).unwrap()
    }

    fn layout(rects: Vec<Rect>) -> LayoutState {
        LayoutState::from_initial(rects, &params()).unwrap()
    }

    #[test]
    fn default_weight_ratios() {
        let p = params();
        assert_eq!(p.w_tree, p.w_level);
        assert!((p.w_tree - 3.0 * p.w_size).abs() < 1e-15);
        assert!((p.w_tree - 0.01 * p.w_overlap).abs() < 1e-15);
        assert!((p.w_tree - 0.01 * p.w_shape).abs() < 1e-15);
        p.validate().unwrap();
    }

    #[test]
    fn corr_anchors() {
        let tree = star(2);
        let parent = Rect::new(500.0, 500.0, 30.0, 40.0);
        let at = |d: f64| layout(vec![parent, Rect::new(500.0 + d, 500.0, 10.0, 10.0)]);
        assert_eq!(e_corr(&at(0.0), &tree, &params()), 0.0);
        assert!((e_corr(&at(50.0), &tree, &params()) - 0.5).abs() < 1e-12);
        assert!((e_corr(&at(100.0), &tree, &params()) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn level_anchors() {
        let tree = star(2);
        let root = Rect::new(500.0, 500.0, 30.0, 40.0);
        let radii = [0.0, 100.0];
        let at = |d: f64| layout(vec![root, Rect::new(500.0, 500.0 + d, 6.0, 8.0)]);
        assert!(e_level(&at(100.0), &tree, &radii, &params()).abs() < 1e-15);
        assert!((e_level(&at(110.0), &tree, &radii, &params()) - 0.5).abs() < 1e-12);
        assert!((e_level(&at(90.0), &tree, &radii, &params()) - 0.5).abs() < 1e-12);
        let root_only = ImageTree::from_parents(vec![0], 1).unwrap();
        assert_eq!(e_level(&layout(vec![root]), &root_only, &[0.0], &params()), 0.0);
    }

    #[test]
    fn size_anchors() {
        let b = SizeBounds::around(10.0, 10.0, 0.8, 1.2);
        let at = |w: f64, h: f64| LayoutState::new(vec![Rect::new(0.0, 0.0, w, h)], vec![b]).unwrap();
        assert_eq!(e_size(&at(12.0, 12.0)).unwrap(), 0.0);
        assert_eq!(e_size(&at(8.0, 8.0)).unwrap(), 1.0);
        let mid = (0.5 * (144.0 + 64.0f64)).sqrt();
        assert!((e_size(&at(mid, mid)).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_bounds_rejected() {
        let b = SizeBounds::around(10.0, 10.0, 1.0, 1.0);
        assert!(matches!(LayoutState::new(vec![Rect::new(0.0, 0.0, 10.0, 10.0)], vec![b]), Err(Error::Config(_))));
        let state = LayoutState {
            rects: vec![Rect::new(0.0, 0.0, 10.0, 10.0)],
            bounds: vec![b],
        };
        assert!(matches!(e_size(&state), Err(Error::Config(_))));
    }

    #[test]
    fn overlap_anchors() {
        let tree = star(3);
        let disjoint = layout(vec![
            Rect::new(100.0, 100.0, 10.0, 10.0),
            Rect::new(200.0, 100.0, 10.0, 10.0),
            Rect::new(300.0, 100.0, 10.0, 10.0),
        ]);
        assert_eq!(e_overlap(&disjoint, &tree, 1, 0.0), 0.0);

        let covered = layout(vec![
            Rect::new(100.0, 100.0, 10.0, 10.0),
            Rect::new(200.0, 100.0, 10.0, 10.0),
            Rect::new(200.0, 100.0, 40.0, 40.0),
        ]);
        let rects = &covered.rects;
        assert!(overlap_term(rects, 1, &[0, 1, 2], 0.0) >= 1.0);

        // 10x10 image, 3x10 strip covered: ratio 0.3.
        let partial = [Rect::new(0.0, 0.0, 10.0, 10.0), Rect::new(3.5, 0.0, 3.0, 10.0)];
        assert!((overlap_term(&partial, 0, &[0, 1], 0.2) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn shape_anchors() {
        let s = shape();
        let p = params();
        assert_eq!(shape_term(&Rect::new(500.0, 500.0, 30.0, 40.0), &s, &p), 0.0);
        let outside = Rect::new(-50.0, 500.0, 30.0, 40.0);
        assert!((shape_term(&outside, &s, &p) - 0.5).abs() < 0.01 + s.cell_size() / 50.0);
        let near = Rect::new(-1e-3, 500.0, 30.0, 40.0);
        assert!(shape_term(&near, &s, &p) < 1e-3);
    }

    #[test]
    fn objective_examples() {
        let tree = star(2);
        let s = shape();
        let radii = [0.0, 0.0];
        let r = Rect::new(500.0, 500.0, 10.0, 10.0);
        let mut perfect = layout(vec![r, r]);
        perfect.bounds[1] = SizeBounds::around(10.0 / 1.2, 10.0 / 1.2, 0.8, 1.2);
        perfect.rects[1] = Rect::new(500.0, 500.0, 10.0, 10.0);
        // Child sits on its parent and on its ring; only overlap is non-zero.
        let costs = level_costs(&perfect, &tree, &radii, &s, &params(), 1);
        assert_eq!(costs.tree, 0.0);
        assert_eq!(costs.size, 0.0);
        assert!(costs.overlap >= 1.0);

        let c = LevelCosts {
            overlap: 0.02,
            ..LevelCosts::default()
        };
        assert!((c.weighted(&params()) - 2.0).abs() < 1e-12);
        assert_eq!(LevelCosts::default().weighted(&params()), 0.0);

        let mut doubled = params();
        for w in [&mut doubled.w_tree, &mut doubled.w_level, &mut doubled.w_size, &mut doubled.w_overlap, &mut doubled.w_shape] {
            *w *= 2.0;
        }
        let base = objective_level(&perfect, &tree, &radii, &s, &params(), 1);
        let twice = objective_level(&perfect, &tree, &radii, &s, &doubled, 1);
        assert!((twice - 2.0 * base).abs() < 1e-9 * base.max(1.0));
    }

    #[test]
    fn overlap_weight_dominates() {
        let p = params();
        let unit_overlap = LevelCosts { overlap: 1.0, ..LevelCosts::default() }.weighted(&p);
        let unit_tree = LevelCosts { tree: 1.0, ..LevelCosts::default() }.weighted(&p);
        assert!((unit_overlap / unit_tree - 100.0).abs() < 1e-12);
    }

    fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    proptest! {
        // Analytic d/dx of the correlation term against finite differences.
        #[test]
        fn corr_gradient_matches_finite_difference(dx in 5.0f64..200.0, dy in -100.0f64..100.0, pw in 10.0f64..60.0) {
            let tree = star(2);
            let p = params();
            let parent = Rect::new(0.0, 0.0, pw, pw * 0.75);
            let term = |x: f64| corr_term(&[parent, Rect::new(x, dy, 10.0, 10.0)], &tree, 1, &p);
            let sigma = p.rolling_factor(parent.diagonal());
            let d = dx.hypot(dy);
            let analytic = (-d / sigma).exp() / sigma * dx / d;
            let fd = central_difference(term, dx, 1e-5);
            prop_assert!((analytic - fd).abs() <= 1e-4 * analytic.abs() + 1e-8);
        }

        #[test]
        fn level_gradient_matches_finite_difference(dist in 1.0f64..300.0, ring in 0.0f64..300.0, w in 5.0f64..50.0) {
            prop_assume!((dist - ring).abs() > 1e-2);
            let tree = star(2);
            let p = params();
            let radii = [0.0, ring];
            let root = Rect::new(0.0, 0.0, 20.0, 20.0);
            let term = |x: f64| level_term(&[root, Rect::new(x, 0.0, w, w)], &tree, &radii, 1, &p);
            let rho = p.rolling_factor(Rect::new(0.0, 0.0, w, w).diagonal());
            let gap = dist - ring;
            let analytic = (-gap.abs() / rho).exp() / rho * gap.signum();
            let fd = central_difference(term, dist, 1e-6);
            prop_assert!((analytic - fd).abs() <= 1e-4 * analytic.abs() + 1e-8);
        }

        #[test]
        fn size_gradient_matches_finite_difference(w in 8.5f64..11.5, h in 8.5f64..11.5) {
            let b = SizeBounds::around(10.0, 10.0, 0.8, 1.2);
            let analytic = -h / (b.w_hi * b.h_hi - b.w_lo * b.h_lo);
            let fd = central_difference(|x| size_term(&Rect::new(0.0, 0.0, x, h), &b), w, 1e-5);
            prop_assert!((analytic - fd).abs() <= 1e-4 * analytic.abs());
        }

        #[test]
        fn position_costs_are_continuous(x in 0.0f64..1000.0, y in 0.0f64..1000.0, step in -1e-3f64..1e-3) {
            let tree = star(2);
            let p = params();
            let s = shape();
            let radii = [0.0, 120.0];
            let root = Rect::new(500.0, 500.0, 40.0, 30.0);
            let a = [root, Rect::new(x, y, 20.0, 20.0)];
            let b = [root, Rect::new(x + step, y, 20.0, 20.0)];
            // Lipschitz bound of 1 - exp(-d / s) is 1 / s.
            let bound = step.abs() / p.rolling_factor(20.0f64.hypot(20.0)) + 1e-12;
            prop_assert!((corr_term(&a, &tree, 1, &p) - corr_term(&b, &tree, 1, &p)).abs() <= bound * 3.0);
            prop_assert!((level_term(&a, &tree, &radii, 1, &p) - level_term(&b, &tree, &radii, 1, &p)).abs() <= bound);
            prop_assert!((shape_term(&a[1], &s, &p) - shape_term(&b[1], &s, &p)).abs() <= bound + 1e-2);
        }

        #[test]
        fn per_image_terms_bounded(x in -500.0f64..1500.0, y in -500.0f64..1500.0) {
            let tree = star(2);
            let p = params();
            let rects = [Rect::new(500.0, 500.0, 40.0, 30.0), Rect::new(x, y, 20.0, 25.0)];
            for v in [
                corr_term(&rects, &tree, 1, &p),
                level_term(&rects, &tree, &[0.0, 100.0], 1, &p),
                shape_term(&rects[1], &shape(), &p),
            ] {
                prop_assert!((0.0..1.0).contains(&v));
            }
            let _ = Point::default();
        }
    }
}
