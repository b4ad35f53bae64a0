//! The `layout`, `focus`, `validate` and `trace` verbs.

use std::fs;
use std::path::{Path, PathBuf};

use treecollage_core::io::manifest::ShapeSpec;
use treecollage_core::io::{read_manifest, read_run_config, render_svg, LayoutDocument, Manifest};
use treecollage_core::optimizer::Violations;
use treecollage_core::{refocus, run_pipeline, Error, PipelineConfig, PipelineOutput, Result, ShapeOptions, ShapeRegion};

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::LayoutInfeasible { .. } => 3,
        e if e.is_validation() => 2,
        _ => 1,
    }
}

/// Options shared by the verbs that run the pipeline.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub manifest: PathBuf,
    /// Overrides the manifest shape: a PNG mask, or a JSON shape object.
    pub shape: Option<PathBuf>,
    /// TOML run config; replaces the manifest's config section.
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub focus_id: Option<String>,
}

/// A manifest with its resolved shape and configuration.
pub struct Prepared {
    pub manifest: Manifest,
    pub shape_spec: ShapeSpec,
    pub shape: ShapeRegion,
    pub config: PipelineConfig,
    pub seed: Option<u64>,
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn shape_override(path: &Path) -> Result<ShapeSpec> {
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        return Ok(ShapeSpec::Mask(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        location: format!("{}: line {} column {}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })
}

pub fn prepare(opts: &RunOptions) -> Result<Prepared> {
    let mut manifest = read_manifest(&opts.manifest)?;
    let mut seed = None;
    let mut shape_options: ShapeOptions = manifest.shape_options;
    if let Some(path) = &opts.config {
        let run = read_run_config(path)?;
        manifest.config = run.pipeline();
        seed = run.seed;
        if let Some(o) = run.shape {
            shape_options = o;
        }
    }
    let (shape_spec, base) = match &opts.shape {
        Some(path) => (shape_override(path)?, None),
        None => (manifest.shape.clone(), manifest.base_dir.clone()),
    };
    if let ShapeSpec::Mask(p) = &shape_spec {
        let full = match &base {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.clone(),
        };
        if !full.exists() {
            return Err(Error::InvalidInput(format!("shape mask `{}` does not exist", full.display())));
        }
    }
    let shape = shape_spec.load(base.as_deref(), &shape_options)?;
    Ok(Prepared {
        config: manifest.config.clone(),
        manifest,
        shape_spec,
        shape,
        seed: opts.seed.or(seed),
    })
}

pub fn document(prepared: &Prepared, output: &PipelineOutput) -> LayoutDocument {
    let v = Violations::of(&output.layout, &prepared.shape);
    let mut doc = LayoutDocument::new(&prepared.manifest.items, output, v, prepared.shape_spec.clone(), &prepared.config);
    doc.seed = prepared.seed;
    doc
}

/// `layout.json` -> `layout.trace.json`.
pub fn trace_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "layout".into());
    out.with_file_name(format!("{stem}.trace.json"))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Writes the layout (or prints it when `out` is `None`), its trace next to
/// it, and optionally an SVG.
fn emit(prepared: &Prepared, output: &PipelineOutput, out: Option<&Path>, svg: Option<&Path>) -> Result<LayoutDocument> {
    let doc = document(prepared, output);
    match out {
        Some(path) => {
            doc.write(path)?;
            let trace = serde_json::to_string_pretty(&output.trace).expect("trace serializes");
            write(&trace_path(path), &(trace + "\n"))?;
        }
        None => print!("{}", doc.to_json()),
    }
    if let Some(path) = svg {
        write(path, &render_svg(&doc, &prepared.shape))?;
    }
    Ok(doc)
}

pub fn layout(opts: &RunOptions, out: Option<&Path>, svg: Option<&Path>) -> Result<LayoutDocument> {
    let p = prepare(opts)?;
    let output = run_pipeline(&p.manifest.items, &p.manifest.schema, &p.shape, &p.config, opts.focus_id.as_deref())?;
    emit(&p, &output, out, svg)
}

/// Re-roots the tree stored in `layout` at the focus image and lays the
/// collection out again.
pub fn focus(opts: &RunOptions, layout: &Path, out: Option<&Path>, svg: Option<&Path>) -> Result<LayoutDocument> {
    let p = prepare(opts)?;
    let focus_id = opts
        .focus_id
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("focus needs --focus-id".into()))?;
    let previous = LayoutDocument::read(layout)?;
    let items = &p.manifest.items;
    if previous.items.len() != items.len() || previous.items.iter().zip(items).any(|(a, b)| a.id != b.id) {
        return Err(Error::InvalidInput(format!(
            "layout `{}` does not belong to manifest `{}`",
            layout.display(),
            opts.manifest.display()
        )));
    }
    let tree = previous.tree()?;
    let output = refocus(items, &p.manifest.schema, &tree, &p.shape, &p.config, focus_id)?;
    emit(&p, &output, out, svg)
}

/// Checks the manifest, shape and config without running the pipeline.
pub fn validate(opts: &RunOptions) -> Result<String> {
    let p = prepare(opts)?;
    p.config.validate()?;
    if let Some(id) = &opts.focus_id {
        p.manifest.index_of(id).ok_or_else(|| Error::UnknownImage(id.clone()))?;
    }
    Ok(format!(
        "ok: {} images, {} properties, shape {}x{} cells (area {:.0})",
        p.manifest.items.len(),
        p.manifest.schema.len(),
        p.shape.width_cells(),
        p.shape.height_cells(),
        p.shape.area()
    ))
}

/// Runs the pipeline and returns the optimization trace as JSON.
pub fn trace(opts: &RunOptions) -> Result<String> {
    let p = prepare(opts)?;
    let output = run_pipeline(&p.manifest.items, &p.manifest.schema, &p.shape, &p.config, opts.focus_id.as_deref())?;
    Ok(serde_json::to_string_pretty(&output.trace).expect("trace serializes") + "\n")
}
