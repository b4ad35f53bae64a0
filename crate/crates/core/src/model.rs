//! Images, property schemas and the dissimilarity measures driving tree
//! construction.

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the bin sum of a normalized histogram.
pub const HISTOGRAM_TOLERANCE: f64 = 1e-9;

/// Number of quantization levels per RGB channel for color histograms.
pub const COLOR_LEVELS: usize = 4;
pub const COLOR_BINS: usize = COLOR_LEVELS * COLOR_LEVELS * COLOR_LEVELS;

/// Default dissimilarity threshold for a property.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    /// Compared by histogram intersection.
    Visual,
    /// Compared by tag equality.
    Semantic,
}

impl PropertyKind {
    fn value_name(self) -> &'static str {
        match self {
            PropertyKind::Visual => "histogram",
            PropertyKind::Semantic => "tag",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyDescriptor {
    pub name: String,
    pub kind: PropertyKind,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl PropertyDescriptor {
    pub fn new(name: impl Into<String>, kind: PropertyKind) -> Self {
        Self {
            name: name.into(),
            kind,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

/// Ordered property descriptors. Tree level `j` (1-based) is governed by the
/// descriptor at position `j - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PropertyDescriptor>", into = "Vec<PropertyDescriptor>")]
pub struct PropertySchema {
    descriptors: Vec<PropertyDescriptor>,
}

impl PropertySchema {
    pub fn new(descriptors: Vec<PropertyDescriptor>) -> Result<Self> {
        if descriptors.is_empty() {
            return Err(Error::Schema("schema needs at least one property".into()));
        }
        let mut seen = HashSet::new();
        for d in &descriptors {
            if !seen.insert(d.name.as_str()) {
                return Err(Error::Schema(format!("duplicate property name `{}`", d.name)));
            }
            if !(0.0..=1.0).contains(&d.threshold) {
                return Err(Error::Schema(format!(
                    "threshold of `{}` must lie in [0, 1], got {}",
                    d.name, d.threshold
                )));
            }
        }
        Ok(Self { descriptors })
    }

    /// Number of properties `F`.
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn descriptors(&self) -> &[PropertyDescriptor] {
        &self.descriptors
    }

    pub fn get(&self, index: usize) -> Option<&PropertyDescriptor> {
        self.descriptors.get(index)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.descriptors.iter().position(|d| d.name == name)
    }

    /// Checks that `values` has one entry per descriptor with a matching kind.
    pub fn check_values(&self, values: &[PropertyValue]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Schema(format!(
                "expected {} property values, got {}",
                self.len(),
                values.len()
            )));
        }
        for (d, v) in self.descriptors.iter().zip(values) {
            if v.kind() != d.kind {
                return Err(Error::KindMismatch {
                    property: d.name.clone(),
                    expected: d.kind.value_name(),
                });
            }
        }
        Ok(())
    }
}

impl TryFrom<Vec<PropertyDescriptor>> for PropertySchema {
    type Error = Error;

    fn try_from(descriptors: Vec<PropertyDescriptor>) -> Result<Self> {
        Self::new(descriptors)
    }
}

impl From<PropertySchema> for Vec<PropertyDescriptor> {
    fn from(schema: PropertySchema) -> Self {
        schema.descriptors
    }
}

/// A normalized, non-negative histogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Histogram(Vec<f64>);

impl Histogram {
    /// Accepts bins summing to 1 within [`HISTOGRAM_TOLERANCE`].
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(bins, HISTOGRAM_TOLERANCE)
    }

    /// Accepts bins summing to 1 within `tolerance` and rescales them to sum
    /// to 1.
    pub fn with_tolerance(bins: Vec<f64>, tolerance: f64) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::InvalidInput("histogram has no bins".into()));
        }
        if let Some(b) = bins.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(Error::InvalidInput(format!("histogram bin {b} is negative or not finite")));
        }
        let sum: f64 = bins.iter().sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(Error::InvalidInput(format!("histogram bins sum to {sum}, expected 1")));
        }
        Ok(Self(bins.into_iter().map(|b| b / sum).collect()))
    }

    /// Normalizes arbitrary non-negative counts.
    pub fn from_counts(counts: &[f64]) -> Result<Self> {
        let sum: f64 = counts.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidInput("histogram counts are all zero".into()));
        }
        Self::new(counts.iter().map(|c| c / sum).collect())
    }

    pub fn bins(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<'de> Deserialize<'de> for Histogram {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let bins = Vec::<f64>::deserialize(deserializer)?;
        Histogram::new(bins).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropertyValue {
    Histogram(Histogram),
    Tag(String),
}

impl PropertyValue {
    pub fn tag(tag: impl Into<String>) -> Self {
        PropertyValue::Tag(tag.into())
    }

    pub fn kind(&self) -> PropertyKind {
        match self {
            PropertyValue::Histogram(_) => PropertyKind::Visual,
            PropertyValue::Tag(_) => PropertyKind::Semantic,
        }
    }

    pub fn as_tag(&self) -> Option<&str> {
        match self {
            PropertyValue::Tag(t) => Some(t),
            PropertyValue::Histogram(_) => None,
        }
    }

    pub fn as_histogram(&self) -> Option<&Histogram> {
        match self {
            PropertyValue::Histogram(h) => Some(h),
            PropertyValue::Tag(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageItem {
    pub id: String,
    pub native_width: f64,
    pub native_height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_source: Option<PathBuf>,
    pub properties: Vec<PropertyValue>,
}

impl ImageItem {
    pub fn new(
        id: impl Into<String>,
        native_width: f64,
        native_height: f64,
        properties: Vec<PropertyValue>,
    ) -> Result<Self> {
        let id = id.into();
        if !(native_width > 0.0 && native_height > 0.0)
            || !native_width.is_finite()
            || !native_height.is_finite()
        {
            return Err(Error::InvalidInput(format!(
                "image `{id}` has non-positive size {native_width}x{native_height}"
            )));
        }
        Ok(Self {
            id,
            native_width,
            native_height,
            pixel_source: None,
            properties,
        })
    }

    pub fn with_source(mut self, path: impl Into<PathBuf>) -> Self {
        self.pixel_source = Some(path.into());
        self
    }

    /// Width over height.
    pub fn aspect(&self) -> f64 {
        self.native_width / self.native_height
    }
}

/// Sum of per-bin minima.
pub fn histogram_intersection(a: &Histogram, b: &Histogram) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(a.len(), b.len()));
    }
    let s: f64 = a.bins().iter().zip(b.bins()).map(|(x, y)| x.min(*y)).sum();
    Ok(s.clamp(0.0, 1.0))
}

/// Dissimilarity of two values of property `index`: `1 - HI` for visual
/// properties, tag inequality (0 or 1) for semantic ones.
pub fn dissimilarity(
    schema: &PropertySchema,
    index: usize,
    a: &PropertyValue,
    b: &PropertyValue,
) -> Result<f64> {
    let descriptor = schema
        .get(index)
        .ok_or_else(|| Error::Schema(format!("property index {index} out of range")))?;
    let mismatch = || Error::KindMismatch {
        property: descriptor.name.clone(),
        expected: descriptor.kind.value_name(),
    };
    match (descriptor.kind, a, b) {
        (PropertyKind::Visual, PropertyValue::Histogram(x), PropertyValue::Histogram(y)) => {
            Ok(1.0 - histogram_intersection(x, y)?)
        }
        (PropertyKind::Semantic, PropertyValue::Tag(x), PropertyValue::Tag(y)) => {
            Ok(if x == y { 0.0 } else { 1.0 })
        }
        _ => Err(mismatch()),
    }
}

/// 64-bin color histogram with uniform 4x4x4 RGB quantization. Bin index is
/// `r * 16 + g * 4 + b` on the quantized channels.
pub fn extract_color_histogram(pixels: &[[u8; 3]]) -> Result<Histogram> {
    if pixels.is_empty() {
        return Err(Error::InvalidInput("cannot build a histogram of an empty raster".into()));
    }
    let mut counts = [0u64; COLOR_BINS];
    for px in pixels {
        counts[color_bin(*px)] += 1;
    }
    let total = pixels.len() as f64;
    Histogram::new(counts.iter().map(|&c| c as f64 / total).collect())
}

pub fn color_bin([r, g, b]: [u8; 3]) -> usize {
    let q = |c: u8| (c as usize * COLOR_LEVELS) >> 8;
    q(r) * COLOR_LEVELS * COLOR_LEVELS + q(g) * COLOR_LEVELS + q(b)
}

/// Decodes an image file and extracts its color histogram.
pub fn color_histogram_from_file(path: &std::path::Path) -> Result<Histogram> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let pixels: Vec<[u8; 3]> = rgb.pixels().map(|p| p.0).collect();
    extract_color_histogram(&pixels)
}
