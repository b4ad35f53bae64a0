//! End-to-end layout: tree construction, optional focus transfer, projection
//! and the two-step optimization.

use serde::{Deserialize, Serialize};

use crate::costs::{CostParams, LayoutState};
use crate::error::{Error, Result};
use crate::geometry::ShapeRegion;
use crate::hyperbolic::{project, InitialLayout, ProjectionParams};
use crate::model::{ImageItem, PropertySchema};
use crate::optimizer::{
    global_optimize, local_tune, move_outside_images, resolve_overlaps_by_scaling, OptimizationTrace,
    ProjectedGradient, StepSummary, TuningParams, Violations,
};
use crate::tree::{build_tree, order_collection, select_root, transfer_or_rebuild, BalanceParams, ImageTree};

/// Everything the pipeline is configured with besides the collection and
/// the shape.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub costs: CostParams,
    pub tuning: TuningParams,
    pub projection: ProjectionParams,
    pub balance: BalanceParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.costs.validate()?;
        self.tuning.validate()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub tree: ImageTree,
    /// Insertion array used to build the tree.
    pub order: Vec<usize>,
    pub initial: InitialLayout,
    pub layout: LayoutState,
    /// Layout entering local tuning.
    pub pre_tune: LayoutState,
    pub trace: OptimizationTrace,
}

fn find_id(items: &[ImageItem], id: &str) -> Result<usize> {
    items
        .iter()
        .position(|it| it.id == id)
        .ok_or_else(|| Error::UnknownImage(id.to_string()))
}

fn check_inputs(items: &[ImageItem], schema: &PropertySchema) -> Result<()> {
    if items.is_empty() {
        return Err(Error::InvalidInput("collection is empty".into()));
    }
    for it in items {
        schema
            .check_values(&it.properties)
            .map_err(|e| Error::Schema(format!("image `{}`: {e}", it.id)))?;
    }
    Ok(())
}

/// Builds the property tree and, when `focus` is set, transfers it to the
/// focus image (rebuilding when the transfer leaves it unbalanced), then lays
/// the collection out inside `shape`.
pub fn run_pipeline(
    items: &[ImageItem],
    schema: &PropertySchema,
    shape: &ShapeRegion,
    config: &PipelineConfig,
    focus: Option<&str>,
) -> Result<PipelineOutput> {
    config.validate()?;
    check_inputs(items, schema)?;
    let order = order_collection(items, schema);
    let root = select_root(items, &order, schema);
    let mut tree = build_tree(items, &order, root, schema);
    let mut rebuilt = false;
    if let Some(id) = focus {
        let f = find_id(items, id)?;
        (tree, rebuilt) = transfer_or_rebuild(&tree, f, items, &order, schema, &config.balance)?;
    }
    let mut out = run_pipeline_from_tree(items, tree, shape, config)?;
    out.order = order;
    out.trace.rebuilt = rebuilt;
    Ok(out)
}

/// Focus transfer on an existing tree (for example the tree of a previous
/// layout), followed by a full re-layout.
pub fn refocus(
    items: &[ImageItem],
    schema: &PropertySchema,
    tree: &ImageTree,
    shape: &ShapeRegion,
    config: &PipelineConfig,
    focus: &str,
) -> Result<PipelineOutput> {
    config.validate()?;
    check_inputs(items, schema)?;
    if tree.len() != items.len() {
        return Err(Error::InvalidInput(format!(
            "tree has {} nodes but the collection has {} images",
            tree.len(),
            items.len()
        )));
    }
    let order = order_collection(items, schema);
    let f = find_id(items, focus)?;
    let (tree, rebuilt) = transfer_or_rebuild(tree, f, items, &order, schema, &config.balance)?;
    let mut out = run_pipeline_from_tree(items, tree, shape, config)?;
    out.order = order;
    out.trace.rebuilt = rebuilt;
    Ok(out)
}

/// Projection and optimization of a given tree.
pub fn run_pipeline_from_tree(
    items: &[ImageItem],
    tree: ImageTree,
    shape: &ShapeRegion,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    config.validate()?;
    if tree.len() != items.len() {
        return Err(Error::InvalidInput("tree and collection sizes differ".into()));
    }
    let params = &config.costs;
    let solver = ProjectedGradient::new(params);
    let initial = project(&tree, items, &shape.bounding_box(), &config.projection);
    let mut trace = OptimizationTrace::default();

    let entry = Violations::of(&LayoutState::from_initial(initial.rects.clone(), params)?, shape);
    let (mut layout, levels) = global_optimize(&tree, &initial, shape, params, &solver)?;
    let iterations = levels.iter().map(|t| t.objective.len() - 1).sum();
    trace.levels = levels;
    trace.steps.push(StepSummary {
        step: "global".into(),
        entry,
        exit: Violations::of(&layout, shape),
        iterations,
    });

    let entry = Violations::of(&layout, shape);
    let (resolves, passes) = move_outside_images(&mut layout, shape, &tree, &initial.radii, params, &config.tuning, &solver);
    trace.levels.extend(resolves);
    trace.steps.push(StepSummary {
        step: "move_outside".into(),
        entry,
        exit: Violations::of(&layout, shape),
        iterations: passes,
    });

    let entry = Violations::of(&layout, shape);
    let iterations = resolve_overlaps_by_scaling(&mut layout, shape, params.overlap_threshold, &config.tuning).map_err(
        |f| Error::LayoutInfeasible {
            first: items[f.first].id.clone(),
            second: items[f.second].id.clone(),
            ratio: f.ratio,
        },
    )?;
    trace.steps.push(StepSummary {
        step: "scale".into(),
        entry,
        exit: Violations::of(&layout, shape),
        iterations,
    });

    let pre_tune = layout.clone();
    let entry = Violations::of(&layout, shape);
    let outcome = local_tune(&mut layout, shape, &tree, params.overlap_threshold, &config.tuning);
    trace.steps.push(StepSummary {
        step: "local_tune".into(),
        entry,
        exit: Violations::of(&layout, shape),
        iterations: outcome.grown,
    });

    Ok(PipelineOutput {
        tree,
        order: Vec::new(),
        initial,
        layout,
        pre_tune,
        trace,
    })
}
