//! Collection manifest (JSON).
//!
//! ```json
//! {
//!   "version": 1,
//!   "schema": [{"name": "category", "kind": "semantic"},
//!              {"name": "color", "kind": "visual", "threshold": 0.4}],
//!   "shape": {"polygon": [[0, 0], [800, 0], [800, 600], [0, 600]]},
//!   "items": [{"id": "a", "path": "a.jpg", "width": 300, "height": 200,
//!              "properties": {"category": "fruit", "color": "@color"}}],
//!   "config": {"costs": {"overlap_threshold": 0.0}}
//! }
//! ```
//!
//! Visual values are histograms (arrays) or `"@color"`, which extracts a
//! color histogram from the item's image file. Shapes are a `polygon`, a
//! grayscale PNG `mask` (nonzero = inside), or a `rectangle` `[w, h]`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{Point, ShapeOptions, ShapeRegion};
use crate::model::{color_histogram_from_file, Histogram, ImageItem, PropertyKind, PropertySchema, PropertyValue};
use crate::pipeline::PipelineConfig;

pub const MANIFEST_VERSION: u32 = 1;

/// Tolerance on histogram sums in manifests; accepted values are rescaled.
pub const MANIFEST_HISTOGRAM_TOLERANCE: f64 = 1e-6;

/// Value requesting color-histogram extraction from the item's image.
pub const EXTRACT_COLOR: &str = "@color";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeSpec {
    Polygon(Vec<[f64; 2]>),
    Mask(PathBuf),
    Rectangle([f64; 2]),
}

impl ShapeSpec {
    pub fn load(&self, base_dir: Option<&Path>, options: &ShapeOptions) -> Result<ShapeRegion> {
        match self {
            ShapeSpec::Polygon(v) => {
                let pts: Vec<Point> = v.iter().map(|&[x, y]| Point::new(x, y)).collect();
                ShapeRegion::from_polygon(&pts, options)
            }
            ShapeSpec::Rectangle([w, h]) => ShapeRegion::rectangle(*w, *h, options),
            ShapeSpec::Mask(path) => load_mask(&resolve(base_dir, path), options),
        }
    }
}

/// Loads a grayscale PNG mask; nonzero pixels are inside, one cell per pixel.
pub fn load_mask(path: &Path, options: &ShapeOptions) -> Result<ShapeRegion> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    let inside = gray.pixels().map(|p| p.0[0] != 0).collect();
    ShapeRegion::from_mask(w as usize, h as usize, inside, 1.0, Point::default(), options)
}

fn resolve(base_dir: Option<&Path>, path: &Path) -> PathBuf {
    match base_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub version: u32,
    pub schema: PropertySchema,
    pub items: Vec<ImageItem>,
    pub shape: ShapeSpec,
    pub shape_options: ShapeOptions,
    pub config: PipelineConfig,
    /// Directory relative paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl Manifest {
    pub fn load_shape(&self) -> Result<ShapeRegion> {
        self.shape.load(self.base_dir.as_deref(), &self.shape_options)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|it| it.id == id)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    version: u32,
    schema: Value,
    shape: Value,
    items: Vec<RawItem>,
    #[serde(default)]
    shape_options: Option<ShapeOptions>,
    #[serde(default)]
    config: Option<PipelineConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    id: String,
    #[serde(default)]
    path: Option<PathBuf>,
    width: f64,
    height: f64,
    properties: serde_json::Map<String, Value>,
}

fn parse_error(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        location: location.into(),
        message: message.into(),
    }
}

fn parse_shape(value: &Value) -> Result<ShapeSpec> {
    let obj = value
        .as_object()
        .filter(|o| o.len() == 1)
        .ok_or_else(|| parse_error("shape", "expected an object with one of `polygon`, `mask`, `rectangle`"))?;
    let (key, body) = obj.iter().next().expect("one entry");
    match key.as_str() {
        "polygon" => {
            let verts = body.as_array().ok_or_else(|| parse_error("shape.polygon", "expected an array of [x, y] pairs"))?;
            if verts.len() < 3 {
                return Err(parse_error("shape.polygon", "a polygon needs at least three vertices"));
            }
            verts
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let pair = v.as_array().filter(|a| a.len() == 2);
                    match pair.and_then(|a| Some([a[0].as_f64()?, a[1].as_f64()?])) {
                        Some(p) if p.iter().all(|c| c.is_finite()) => Ok(p),
                        _ => Err(parse_error(format!("shape.polygon[{k}]"), "expected a pair of finite numbers")),
                    }
                })
                .collect::<Result<Vec<_>>>()
                .map(ShapeSpec::Polygon)
        }
        "rectangle" => {
            let pair = body.as_array().filter(|a| a.len() == 2);
            match pair.and_then(|a| Some([a[0].as_f64()?, a[1].as_f64()?])) {
                Some([w, h]) if w > 0.0 && h > 0.0 => Ok(ShapeSpec::Rectangle([w, h])),
                _ => Err(parse_error("shape.rectangle", "expected [width, height] with positive values")),
            }
        }
        "mask" => body
            .as_str()
            .map(|s| ShapeSpec::Mask(PathBuf::from(s)))
            .ok_or_else(|| parse_error("shape.mask", "expected a file path")),
        other => Err(parse_error("shape", format!("unknown shape kind `{other}`"))),
    }
}

fn parse_value(
    item: &RawItem,
    name: &str,
    kind: PropertyKind,
    value: &Value,
    base_dir: Option<&Path>,
) -> Result<PropertyValue> {
    let location = format!("items[{}].properties.{name}", item.id);
    match (kind, value) {
        (PropertyKind::Semantic, Value::String(s)) => Ok(PropertyValue::Tag(s.clone())),
        (PropertyKind::Semantic, Value::Number(n)) => Ok(PropertyValue::Tag(n.to_string())),
        (PropertyKind::Visual, Value::Array(bins)) => {
            let bins = bins
                .iter()
                .map(|b| b.as_f64().ok_or_else(|| parse_error(&location, "histogram bins must be numbers")))
                .collect::<Result<Vec<_>>>()?;
            Histogram::with_tolerance(bins, MANIFEST_HISTOGRAM_TOLERANCE)
                .map(PropertyValue::Histogram)
                .map_err(|e| Error::Schema(format!("image `{}`, property `{name}`: {e}", item.id)))
        }
        (PropertyKind::Visual, Value::String(s)) if s == EXTRACT_COLOR => {
            let path = item.path.as_ref().ok_or_else(|| {
                Error::Schema(format!("image `{}`, property `{name}`: `{EXTRACT_COLOR}` needs an image path", item.id))
            })?;
            color_histogram_from_file(&resolve(base_dir, path)).map(PropertyValue::Histogram)
        }
        (PropertyKind::Visual, _) => Err(Error::KindMismatch {
            property: name.to_string(),
            expected: "histogram",
        }),
        (PropertyKind::Semantic, _) => Err(Error::KindMismatch {
            property: name.to_string(),
            expected: "tag",
        }),
    }
}

/// Parses and validates a manifest. Relative paths are resolved against
/// `base_dir` (the working directory when `None`) and must exist.
pub fn parse_manifest(bytes: &[u8], base_dir: Option<&Path>) -> Result<Manifest> {
    let raw: RawManifest = serde_json::from_slice(bytes).map_err(|e| {
        parse_error(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    if raw.version != MANIFEST_VERSION {
        return Err(parse_error("version", format!("unsupported manifest version {}", raw.version)));
    }
    let schema: PropertySchema = serde_json::from_value(raw.schema)
        .map_err(|e| Error::Schema(format!("invalid schema: {e}")))?;
    let shape = parse_shape(&raw.shape)?;
    if let ShapeSpec::Mask(p) = &shape {
        let full = resolve(base_dir, p);
        if !full.exists() {
            return Err(Error::InvalidInput(format!("shape mask `{}` does not exist", full.display())));
        }
    }
    if raw.items.is_empty() {
        return Err(Error::Schema("manifest has no items".into()));
    }

    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(raw.items.len());
    for raw_item in &raw.items {
        if !seen.insert(raw_item.id.as_str()) {
            return Err(Error::Schema(format!("duplicate image id `{}`", raw_item.id)));
        }
        if let Some(p) = &raw_item.path {
            let full = resolve(base_dir, p);
            if !full.exists() {
                return Err(Error::InvalidInput(format!(
                    "image `{}`: file `{}` does not exist",
                    raw_item.id,
                    full.display()
                )));
            }
        }
        for key in raw_item.properties.keys() {
            if schema.position(key).is_none() {
                return Err(Error::Schema(format!("image `{}` has unknown property `{key}`", raw_item.id)));
            }
        }
        let properties = schema
            .descriptors()
            .iter()
            .map(|d| {
                let value = raw_item.properties.get(&d.name).ok_or_else(|| {
                    Error::Schema(format!("image `{}` is missing property `{}`", raw_item.id, d.name))
                })?;
                parse_value(raw_item, &d.name, d.kind, value, base_dir)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut item = ImageItem::new(raw_item.id.clone(), raw_item.width, raw_item.height, properties)?;
        item.pixel_source = raw_item.path.clone();
        items.push(item);
    }
    for (i, a) in items.iter().enumerate() {
        // All histograms of one property must share a bin count.
        for (f, v) in a.properties.iter().enumerate() {
            if let (Some(h), Some(first)) = (v.as_histogram(), items[0].properties[f].as_histogram()) {
                if h.len() != first.len() {
                    return Err(Error::Schema(format!(
                        "image `{}`, property `{}`: {} bins, expected {}",
                        items[i].id,
                        schema.descriptors()[f].name,
                        h.len(),
                        first.len()
                    )));
                }
            }
        }
    }

    let config = raw.config.unwrap_or_default();
    config.validate()?;
    Ok(Manifest {
        version: raw.version,
        schema,
        items,
        shape,
        shape_options: raw.shape_options.unwrap_or_default(),
        config,
        base_dir: base_dir.map(Path::to_path_buf),
    })
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let dir = path.parent().map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p });
    parse_manifest(&bytes, dir)
}

/// Serializes a manifest back to JSON. `@color` values are written out as the
/// extracted histograms.
pub fn manifest_to_json(m: &Manifest) -> Value {
    let items: Vec<Value> = m
        .items
        .iter()
        .map(|it| {
            let props: serde_json::Map<String, Value> = m
                .schema
                .descriptors()
                .iter()
                .zip(&it.properties)
                .map(|(d, v)| (d.name.clone(), serde_json::to_value(v).expect("property values serialize")))
                .collect();
            let mut obj = serde_json::json!({
                "id": it.id,
                "width": it.native_width,
                "height": it.native_height,
                "properties": props,
            });
            if let Some(p) = &it.pixel_source {
                obj["path"] = Value::String(p.display().to_string());
            }
            obj
        })
        .collect();
    serde_json::json!({
        "version": m.version,
        "schema": m.schema,
        "shape": m.shape,
        "shape_options": m.shape_options,
        "items": items,
        "config": m.config,
    })
}
