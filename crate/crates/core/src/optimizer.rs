//! Two-step layout optimization.
//!
//! The global step minimizes the weighted level objective one tree level at a
//! time, with shallower levels frozen. The local step then moves outside
//! images into the shape, shrinks or separates overlapping pairs, and finally
//! grows each image into free space around it.

use serde::{Deserialize, Serialize};

use crate::costs::{
    corr_term, level_term, placed_through, shape_term, size_term, CostParams, LayoutState,
};
use crate::geometry::{overlap_area, overlap_ratio, CoverageGrid, Point, Rect, ShapeRegion};
use crate::hyperbolic::InitialLayout;
use crate::tree::ImageTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningParams {
    /// Local tuning search radius. Defaults to half the mean image diagonal.
    pub range: Option<f64>,
    /// Candidate spacing. Defaults to a quarter of the range.
    pub grid_step: Option<f64>,
    /// Candidate positions per axis.
    pub grid_points: usize,
    /// Linear size multipliers tried by local tuning.
    pub scale_steps: Vec<f64>,
    /// Height/width ratio multipliers tried by local tuning.
    pub aspect_candidates: Vec<f64>,
    pub max_outside_iters: usize,
    /// Iteration cap of each re-solve inside outside-image moving.
    pub resolve_iterations: usize,
    pub max_scaling_iters: usize,
    pub shrink_factor: f64,
    /// Hard floor for shrinking, as a multiple of the lower size bound.
    pub floor_factor: f64,
}

impl Default for TuningParams {
    fn default() -> Self {
        Self {
            range: None,
            grid_step: None,
            grid_points: 9,
            scale_steps: (0..8).map(|k| 1.0 + 0.05 * k as f64).collect(),
            aspect_candidates: vec![0.9, 1.0, 1.1],
            max_outside_iters: 10,
            resolve_iterations: 50,
            max_scaling_iters: 500,
            shrink_factor: 0.95,
            floor_factor: 0.5,
        }
    }
}

/// Narrowest and widest relative aspect change allowed by local tuning.
pub const ASPECT_WINDOW: (f64, f64) = (2.0 / 3.0, 1.5);

impl TuningParams {
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::Config(m.into()));
        if self.range.is_some_and(|r| !(r > 0.0)) {
            return bad("tuning range must be positive");
        }
        if self.grid_step.is_some_and(|s| !(s > 0.0)) {
            return bad("grid step must be positive");
        }
        if self.grid_points == 0 {
            return bad("grid needs at least one point per axis");
        }
        if self.scale_steps.is_empty() || self.scale_steps.iter().any(|s| !(*s > 0.0)) {
            return bad("scale steps must be positive");
        }
        if self.aspect_candidates.is_empty() || self.aspect_candidates.iter().any(|s| !(*s > 0.0)) {
            return bad("aspect candidates must be positive");
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return bad("shrink factor must lie in (0, 1)");
        }
        if !(self.floor_factor > 0.0 && self.floor_factor <= 1.0) {
            return bad("floor factor must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Global,
    /// Re-solve during outside-image moving, with its pass number.
    Resolve(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub stage: Stage,
    pub level: usize,
    /// Objective after each accepted iterate, starting with the initial value.
    pub objective: Vec<f64>,
}

impl LevelTrace {
    pub fn is_non_increasing(&self) -> bool {
        self.objective.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Constraint violations of a layout.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Violations {
    pub max_overlap_ratio: f64,
    pub outside_centers: usize,
    /// Images below their lower size bound.
    pub below_lower_bound: usize,
}

impl Violations {
    pub fn of(layout: &LayoutState, shape: &ShapeRegion) -> Self {
        let n = layout.len();
        let rects = &layout.rects;
        Self {
            max_overlap_ratio: (0..n).map(|i| overlap_ratio(i, rects, 0..n)).fold(0.0, f64::max),
            outside_centers: rects.iter().filter(|r| !shape.contains(r.center())).count(),
            below_lower_bound: rects
                .iter()
                .zip(&layout.bounds)
                .filter(|(r, b)| r.w < b.w_lo || r.h < b.h_lo)
                .count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: String,
    pub entry: Violations,
    pub exit: Violations,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub levels: Vec<LevelTrace>,
    pub steps: Vec<StepSummary>,
    /// Whether a focus request fell back to a full rebuild.
    pub rebuilt: bool,
}

impl OptimizationTrace {
    pub fn global_levels(&self) -> impl Iterator<Item = &LevelTrace> {
        self.levels.iter().filter(|t| t.stage == Stage::Global)
    }
}

/// One level of the global problem: the images of `level` vary, everything
/// else is fixed.
pub struct LevelProblem<'a> {
    pub tree: &'a ImageTree,
    pub radii: &'a [f64],
    pub shape: &'a ShapeRegion,
    pub params: &'a CostParams,
    pub bounds: &'a [crate::costs::SizeBounds],
    pub members: Vec<usize>,
    placed: Vec<usize>,
}

impl<'a> LevelProblem<'a> {
    pub fn new(
        tree: &'a ImageTree,
        radii: &'a [f64],
        shape: &'a ShapeRegion,
        params: &'a CostParams,
        bounds: &'a [crate::costs::SizeBounds],
        level: usize,
    ) -> Self {
        Self {
            tree,
            radii,
            shape,
            params,
            bounds,
            members: tree.nodes_at_level(level),
            placed: placed_through(tree, level),
        }
    }

    fn overlap_sum(&self, rects: &[Rect], i: usize, r: &Rect) -> f64 {
        self.placed
            .iter()
            .filter(|&&q| q != i)
            .map(|&q| overlap_area(r, &rects[q]))
            .sum()
    }


    /// Objective value, identical to `costs::objective_level`.
    pub fn value(&self, rects: &[Rect]) -> f64 {
        let p = self.params;
        let n = self.members.len();
        if n == 0 {
            return 0.0;
        }
        let non_root = self.members.iter().filter(|&&i| i != self.tree.root()).count();
        let (mut tree_sum, mut level_sum, mut size_sum, mut overlap_sum, mut shape_sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &i in &self.members {
            let r = &rects[i];
            if i != self.tree.root() {
                tree_sum += corr_term(rects, self.tree, i, p);
                level_sum += level_term(rects, self.tree, self.radii, i, p);
            }
            size_sum += size_term(r, &self.bounds[i]);
            overlap_sum += (self.overlap_sum(rects, i, r) / r.area() - p.overlap_threshold).max(0.0);
            shape_sum += shape_term(r, self.shape, p);
        }
        let per_non_root = if non_root > 0 { 1.0 / non_root as f64 } else { 0.0 };
        let per_member = 1.0 / n as f64;
        p.w_tree * tree_sum * per_non_root
            + p.w_level * level_sum * per_non_root
            + (p.w_size * size_sum + p.w_overlap * overlap_sum + p.w_shape * shape_sum) * per_member
    }

    /// Central-difference gradient, `4` entries `(x, y, w, h)` per member.
    pub fn gradient(&self, rects: &[Rect]) -> Vec<f64> {
        let p = self.params;
        let n = self.members.len();
        let non_root = self.members.iter().filter(|&&i| i != self.tree.root()).count().max(1);
        let sums: Vec<f64> = self.members.iter().map(|&q| self.overlap_sum(rects, q, &rects[q])).collect();

        // Every term of the objective that changes when image `k` moves to `r`.
        let local = |slot: usize, k: usize, r: &Rect| -> f64 {
            let mut v = p.w_size * size_term(r, &self.bounds[k]) / n as f64
                + p.w_shape * shape_term(r, self.shape, p) / n as f64;
            if k != self.tree.root() {
                let patched = Patched { rects, index: k, rect: *r };
                v += (p.w_tree * patched.corr(self.tree, p) + p.w_level * patched.level(self.tree, self.radii, p))
                    / non_root as f64;
            }
            let own = self.overlap_sum(rects, k, r) / r.area();
            v += p.w_overlap * (own - p.overlap_threshold).max(0.0) / n as f64;
            for (other, &q) in self.members.iter().enumerate() {
                if other == slot {
                    continue;
                }
                let rq = &rects[q];
                let before = overlap_area(rq, &rects[k]);
                let after = overlap_area(rq, r);
                if before == 0.0 && after == 0.0 {
                    continue;
                }
                let ratio = (sums[other] - before + after) / rq.area();
                v += p.w_overlap * (ratio - p.overlap_threshold).max(0.0) / n as f64;
            }
            v
        };

        let mut g = vec![0.0; 4 * n];
        for (slot, &k) in self.members.iter().enumerate() {
            let r = rects[k];
            let h = 1e-4 * r.diagonal();
            for var in 0..4 {
                let mut plus = r;
                let mut minus = r;
                match var {
                    0 => {
                        plus.x += h;
                        minus.x -= h;
                    }
                    1 => {
                        plus.y += h;
                        minus.y -= h;
                    }
                    2 => {
                        plus.w += h;
                        minus.w -= h;
                    }
                    _ => {
                        plus.h += h;
                        minus.h -= h;
                    }
                }
                g[4 * slot + var] = (local(slot, k, &plus) - local(slot, k, &minus)) / (2.0 * h);
            }
        }
        g
    }

    /// Moves the members along `direction` by `step` and clamps sizes to
    /// their bounds.
    pub fn apply_step(&self, rects: &[Rect], direction: &[f64], step: f64) -> Vec<Rect> {
        let mut out = rects.to_vec();
        for (slot, &k) in self.members.iter().enumerate() {
            let r = &mut out[k];
            r.x += step * direction[4 * slot];
            r.y += step * direction[4 * slot + 1];
            let (w, h) = self.bounds[k].clamp(r.w + step * direction[4 * slot + 2], r.h + step * direction[4 * slot + 3]);
            r.w = w;
            r.h = h;
        }
        out
    }
}

struct Patched<'r> {
    rects: &'r [Rect],
    index: usize,
    rect: Rect,
}

impl Patched<'_> {
    fn get(&self, i: usize) -> Rect {
        if i == self.index {
            self.rect
        } else {
            self.rects[i]
        }
    }

    fn corr(&self, tree: &ImageTree, p: &CostParams) -> f64 {
        let parent = self.get(tree.parent(self.index));
        let d = self.rect.center().distance(parent.center());
        1.0 - (-d / p.rolling_factor(parent.diagonal())).exp()
    }

    fn level(&self, tree: &ImageTree, radii: &[f64], p: &CostParams) -> f64 {
        let d = self.rect.center().distance(self.get(tree.root()).center());
        let target = radii.get(tree.level(self.index)).copied().unwrap_or_else(|| *radii.last().unwrap_or(&0.0));
        1.0 - (-(d - target).abs() / p.rolling_factor(self.rect.diagonal())).exp()
    }
}

/// Minimizer for one level problem.
pub trait LevelSolver {
    /// Improves `rects` in place and returns the objective after each
    /// accepted iterate, starting with the initial value.
    fn minimize(&self, problem: &LevelProblem<'_>, rects: &mut Vec<Rect>, max_iterations: usize) -> Vec<f64>;
}

/// Projected gradient descent with backtracking. Steps are normalized by the
/// largest gradient entry, so the step length is in layout units. Steps that
/// do not lower the objective are rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGradient {
    /// Initial step as a fraction of the mean member diagonal.
    pub initial_step: f64,
    /// Smallest step as a fraction of the mean member diagonal.
    pub min_step: f64,
    pub rel_tolerance: f64,
    /// Consecutive iterations below `rel_tolerance` before stopping.
    pub patience: usize,
}

impl ProjectedGradient {
    pub fn new(params: &CostParams) -> Self {
        Self {
            initial_step: 0.25,
            min_step: 1e-4,
            rel_tolerance: params.rel_tolerance,
            patience: 5,
        }
    }
}

impl LevelSolver for ProjectedGradient {
    fn minimize(&self, problem: &LevelProblem<'_>, rects: &mut Vec<Rect>, max_iterations: usize) -> Vec<f64> {
        let mut f = problem.value(rects);
        let mut history = vec![f];
        if problem.members.is_empty() {
            return history;
        }
        let scale = problem.members.iter().map(|&i| rects[i].diagonal()).sum::<f64>() / problem.members.len() as f64;
        let max_step = 4.0 * self.initial_step * scale;
        let mut step = self.initial_step * scale;
        let mut stalled = 0;

        for _ in 0..max_iterations {
            let g = problem.gradient(rects);
            let mut g = g;
            // Size components pushing against an active bound cannot move.
            for (slot, &k) in problem.members.iter().enumerate() {
                let (r, b) = (&rects[k], &problem.bounds[k]);
                for (var, lo, hi, v) in [(2, b.w_lo, b.w_hi, r.w), (3, b.h_lo, b.h_hi, r.h)] {
                    let gv = g[4 * slot + var];
                    if (gv > 0.0 && v <= lo) || (gv < 0.0 && v >= hi) {
                        g[4 * slot + var] = 0.0;
                    }
                }
            }
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(gmax > 0.0) || !gmax.is_finite() {
                break;
            }
            // Each image block is scaled to unit infinity norm, so every image
            // with a non-zero gradient moves by up to `step`.
            let mut direction = vec![0.0; g.len()];
            for (block, d) in g.chunks(4).zip(direction.chunks_mut(4)) {
                let bmax = block.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if bmax > 1e-12 * gmax {
                    for (dv, gv) in d.iter_mut().zip(block) {
                        *dv = -gv / bmax;
                    }
                }
            }
            let mut accepted = None;
            while step >= self.min_step * scale {
                let candidate = problem.apply_step(rects, &direction, step);
                let value = problem.value(&candidate);
                if value < f {
                    accepted = Some((candidate, value));
                    break;
                }
                step *= 0.5;
            }
            let Some((candidate, value)) = accepted else {
                break;
            };
            let improvement = (f - value) / f.abs().max(f64::MIN_POSITIVE);
            *rects = candidate;
            f = value;
            history.push(f);
            step = (step * 2.0).min(max_step);
            stalled = if improvement < self.rel_tolerance { stalled + 1 } else { 0 };
            if stalled >= self.patience {
                break;
            }
        }
        history
    }
}

/// Level-by-level global optimization starting from the initial layout.
/// Sizes are bounded to `[size_lower, size_upper]` times the initial size.
pub fn global_optimize(
    tree: &ImageTree,
    initial: &InitialLayout,
    shape: &ShapeRegion,
    params: &CostParams,
    solver: &dyn LevelSolver,
) -> crate::Result<(LayoutState, Vec<LevelTrace>)> {
    let mut layout = LayoutState::from_initial(initial.rects.clone(), params)?;
    let mut traces = Vec::new();
    for level in 1..=tree.depth() {
        let problem = LevelProblem::new(tree, &initial.radii, shape, params, &layout.bounds, level);
        let mut rects = layout.rects.clone();
        let objective = solver.minimize(&problem, &mut rects, params.max_iterations);
        layout.rects = rects;
        traces.push(LevelTrace {
            stage: Stage::Global,
            level,
            objective,
        });
    }
    Ok((layout, traces))
}

/// Snaps outside centers to the nearest inside point and re-solves their
/// levels, until every center is inside or the pass cap is hit. A final snap
/// without re-solve guarantees containment.
pub fn move_outside_images(
    layout: &mut LayoutState,
    shape: &ShapeRegion,
    tree: &ImageTree,
    radii: &[f64],
    params: &CostParams,
    tuning: &TuningParams,
    solver: &dyn LevelSolver,
) -> (Vec<LevelTrace>, usize) {
    let mut traces = Vec::new();
    let mut passes = 0;
    for pass in 0..tuning.max_outside_iters {
        let outside: Vec<usize> = (0..layout.len()).filter(|&i| !shape.contains(layout.rects[i].center())).collect();
        if outside.is_empty() {
            return (traces, passes);
        }
        passes += 1;
        let mut levels: Vec<usize> = outside.iter().map(|&i| tree.level(i)).collect();
        levels.sort_unstable();
        levels.dedup();
        for &i in &outside {
            let (p, _) = shape.nearest_inside(layout.rects[i].center());
            layout.rects[i] = layout.rects[i].with_center(p);
        }
        for level in levels {
            let problem = LevelProblem::new(tree, radii, shape, params, &layout.bounds, level);
            let mut rects = layout.rects.clone();
            let objective = solver.minimize(&problem, &mut rects, tuning.resolve_iterations);
            layout.rects = rects;
            traces.push(LevelTrace {
                stage: Stage::Resolve(pass),
                level,
                objective,
            });
        }
    }
    for r in layout.rects.iter_mut() {
        if !shape.contains(r.center()) {
            let (p, _) = shape.nearest_inside(r.center());
            *r = r.with_center(p);
        }
    }
    (traces, passes)
}

/// An overlap that shrinking and separation could not remove.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFailure {
    pub first: usize,
    pub second: usize,
    pub ratio: f64,
}

fn worst_pair(rects: &[Rect], threshold: f64) -> Option<(usize, usize, f64)> {
    let n = rects.len();
    let mut sums = vec![0.0; n];
    let mut pairs = Vec::new();
    for i in 0..n {
        for q in i + 1..n {
            let a = overlap_area(&rects[i], &rects[q]);
            if a > 0.0 {
                sums[i] += a;
                sums[q] += a;
                pairs.push((i, q, a));
            }
        }
    }
    let violating = |i: usize| sums[i] / rects[i].area() > threshold;
    pairs
        .into_iter()
        .filter(|&(i, q, _)| violating(i) || violating(q))
        .fold(None, |best: Option<(usize, usize, f64)>, cand| match best {
            Some(b) if b.2 >= cand.2 => Some(b),
            _ => Some(cand),
        })
}

/// Offset along `dir` (unit) that moves `moving` just clear of `fixed`.
fn separating_offset(moving: &Rect, fixed: &Rect, dir: Point) -> f64 {
    let gap = |delta: f64, d: f64, half: f64| -> f64 {
        if d.abs() < 1e-12 {
            return f64::INFINITY;
        }
        // Solve |delta + t * d| >= half for the smallest t >= 0.
        let target = if d > 0.0 { half } else { -half };
        ((target - delta) / d).max(0.0)
    };
    let dx = moving.x - fixed.x;
    let dy = moving.y - fixed.y;
    let tx = gap(dx, dir.x, 0.5 * (moving.w + fixed.w));
    let ty = gap(dy, dir.y, 0.5 * (moving.h + fixed.h));
    tx.min(ty)
}

/// Shrinks the most-overlapping pair until every image's overlap ratio is at
/// most the threshold. Pairs already at the size floor are pulled apart and
/// the moved center is re-snapped into the shape.
pub fn resolve_overlaps_by_scaling(
    layout: &mut LayoutState,
    shape: &ShapeRegion,
    threshold: f64,
    tuning: &TuningParams,
) -> Result<usize, ScalingFailure> {
    let floors: Vec<(f64, f64)> = layout
        .bounds
        .iter()
        .map(|b| (tuning.floor_factor * b.w_lo, tuning.floor_factor * b.h_lo))
        .collect();
    let mut iterations = 0;
    loop {
        let Some((i, q, _)) = worst_pair(&layout.rects, threshold) else {
            return Ok(iterations);
        };
        if iterations >= tuning.max_scaling_iters {
            let rects = &layout.rects;
            let n = rects.len();
            let ratio = overlap_ratio(i, rects, 0..n).max(overlap_ratio(q, rects, 0..n));
            return Err(ScalingFailure { first: i, second: q, ratio });
        }
        iterations += 1;

        let mut shrunk = false;
        for k in [i, q] {
            let r = layout.rects[k];
            let (fw, fh) = floors[k];
            let factor = tuning.shrink_factor.max(fw / r.w).max(fh / r.h);
            if factor < 1.0 {
                layout.rects[k] = r.scaled(factor);
                shrunk = true;
            }
        }
        if shrunk {
            continue;
        }

        let (small, big) = if layout.rects[i].area() < layout.rects[q].area() { (i, q) } else { (q, i) };
        let (a, b) = (layout.rects[small], layout.rects[big]);
        let (dx, dy) = (a.x - b.x, a.y - b.y);
        let len = dx.hypot(dy);
        let dir = if len > 1e-12 { Point::new(dx / len, dy / len) } else { Point::new(1.0, 0.0) };
        let t = separating_offset(&a, &b, dir) * (1.0 + 1e-9) + 1e-9 * a.diagonal();
        let moved = Point::new(a.x + t * dir.x, a.y + t * dir.y);
        let (snapped, _) = shape.nearest_inside(moved);
        let placed = a.with_center(snapped);
        layout.rects[small] = if overlap_area(&placed, &b) > 0.0 {
            // The re-snap undid the separation (the pair sits against the
            // shape boundary); fall back to the closest free spot.
            nearest_free_position(small, &layout.rects, shape, threshold).unwrap_or(placed)
        } else {
            placed
        };
    }
}

/// The inside position closest to image `k` at which its overlap ratio
/// against all other images is at most `threshold`, searched on a lattice
/// of a quarter of the image's shorter side.
fn nearest_free_position(k: usize, rects: &[Rect], shape: &ShapeRegion, threshold: f64) -> Option<Rect> {
    let r = rects[k];
    let extent = shape.extent();
    let step = (0.25 * r.w.min(r.h)).max(extent.w.max(extent.h) / 1024.0);
    let x_range = (((extent.left() - r.x) / step).floor() as i64, ((extent.right() - r.x) / step).ceil() as i64);
    let y_range = (((extent.top() - r.y) / step).floor() as i64, ((extent.bottom() - r.y) / step).ceil() as i64);
    let mut offsets: Vec<(i64, i64)> = (x_range.0..=x_range.1)
        .flat_map(|i| (y_range.0..=y_range.1).map(move |j| (i, j)))
        .collect();
    offsets.sort_by_key(|&(i, j)| (i * i + j * j, j, i));
    let mut trial = rects.to_vec();
    let others: Vec<usize> = (0..rects.len()).filter(|&q| q != k).collect();
    for (i, j) in offsets {
        let c = Point::new(r.x + i as f64 * step, r.y + j as f64 * step);
        if !shape.contains(c) {
            continue;
        }
        trial[k] = r.with_center(c);
        if overlap_ratio(k, &trial, others.iter().copied()) <= threshold {
            return Some(trial[k]);
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub grown: usize,
    pub moved: usize,
}

/// Grows each image into free space around it, shallow levels first. A
/// candidate must keep its center inside the shape, keep its bad-pixel count
/// at or below the current one, respect the overlap threshold, stay within
/// the upper size bound and the aspect window, and not shrink the image.
/// The largest candidate wins; ties prefer smaller displacement, then
/// smaller scale.
pub fn local_tune(
    layout: &mut LayoutState,
    shape: &ShapeRegion,
    tree: &ImageTree,
    threshold: f64,
    tuning: &TuningParams,
) -> TuneOutcome {
    let n = layout.len();
    if n == 0 {
        return TuneOutcome::default();
    }
    let mean_diag = layout.rects.iter().map(Rect::diagonal).sum::<f64>() / n as f64;
    let range = tuning.range.unwrap_or(0.5 * mean_diag);
    let step = tuning.grid_step.unwrap_or(range / 4.0);
    let half = (tuning.grid_points / 2) as i64;
    let mut offsets: Vec<(f64, f64)> = Vec::new();
    for oy in -half..=half {
        for ox in -half..=half {
            let (dx, dy) = (ox as f64 * step, oy as f64 * step);
            if dx.abs() <= range + 1e-9 && dy.abs() <= range + 1e-9 {
                offsets.push((dx, dy));
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (tree.level(i), i));

    let mut coverage = CoverageGrid::new(shape, &layout.rects);
    let mut outcome = TuneOutcome::default();
    for i in order {
        let current = layout.rects[i];
        let bounds = layout.bounds[i];
        let table = coverage.free_table(shape, &current);
        let current_bad = table.bad_count(shape, &current);
        let aspect = current.h / current.w;
        let min_w = current.w.min(bounds.w_lo);
        let min_h = current.h.min(bounds.h_lo);

        let mut best: Option<(Rect, f64, f64, f64)> = None;
        for &(dx, dy) in &offsets {
            let center = Point::new(current.x + dx, current.y + dy);
            if !shape.contains(center) {
                continue;
            }
            let displacement = dx.hypot(dy);
            for &s in &tuning.scale_steps {
                for &m in &tuning.aspect_candidates {
                    let m = m.clamp(ASPECT_WINDOW.0, ASPECT_WINDOW.1);
                    let w = (current.w * s / m.sqrt()).min(bounds.w_hi.max(current.w));
                    let h = (current.h * s * m.sqrt()).min(bounds.h_hi.max(current.h));
                    if w < min_w || h < min_h {
                        continue;
                    }
                    let rel = (h / w) / aspect;
                    if rel < ASPECT_WINDOW.0 || rel > ASPECT_WINDOW.1 {
                        continue;
                    }
                    let cand = Rect::new(center.x, center.y, w, h);
                    let area = cand.area();
                    if area < current.area() {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((_, ba, bd, bs)) => {
                            area > ba || (area == ba && (displacement < bd || (displacement == bd && s < bs)))
                        }
                    };
                    if !better {
                        continue;
                    }
                    if table.bad_count(shape, &cand) > current_bad {
                        continue;
                    }
                    let others: f64 = (0..n)
                        .filter(|&q| q != i)
                        .map(|q| overlap_area(&cand, &layout.rects[q]))
                        .sum();
                    if others / area > threshold {
                        continue;
                    }
                    best = Some((cand, area, displacement, s));
                }
            }
        }
        if let Some((cand, area, displacement, _)) = best {
            if cand != current {
                coverage.add(shape, &current, -1);
                coverage.add(shape, &cand, 1);
                layout.rects[i] = cand;
                if area > current.area() {
                    outcome.grown += 1;
                }
                if displacement > 0.0 {
                    outcome.moved += 1;
                }
            }
        }
    }
    outcome
}
