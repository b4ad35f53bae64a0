//! Layout document (JSON): the placed rectangles, the tree and enough of the
//! inputs to render or re-run the layout.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::io::manifest::ShapeSpec;
use crate::model::ImageItem;
use crate::optimizer::{OptimizationTrace, Violations};
use crate::pipeline::{PipelineConfig, PipelineOutput};
use crate::tree::ImageTree;

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedItem {
    pub id: String,
    /// Center of the rectangle.
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub level: usize,
    /// Parent id; the root names itself.
    pub parent: String,
    /// Position among the parent's children.
    pub sibling_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl PlacedItem {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelObjective {
    pub level: usize,
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveSummary {
    pub levels: Vec<LevelObjective>,
    pub violations: Violations,
    pub rebuilt: bool,
}

impl ObjectiveSummary {
    pub fn from_trace(trace: &OptimizationTrace, violations: Violations) -> Self {
        let levels = trace
            .global_levels()
            .map(|t| LevelObjective {
                level: t.level,
                initial: t.objective.first().copied().unwrap_or(0.0),
                last: t.objective.last().copied().unwrap_or(0.0),
                iterations: t.objective.len().saturating_sub(1),
            })
            .collect();
        Self {
            levels,
            violations,
            rebuilt: trace.rebuilt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutDocument {
    pub version: u32,
    pub tool_version: String,
    pub root: String,
    pub num_properties: usize,
    pub items: Vec<PlacedItem>,
    pub shape: ShapeSpec,
    pub objective: ObjectiveSummary,
    pub config: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl LayoutDocument {
    /// Items follow the collection order.
    pub fn new(
        items: &[ImageItem],
        output: &PipelineOutput,
        violations: Violations,
        shape: ShapeSpec,
        config: &PipelineConfig,
    ) -> Self {
        let tree = &output.tree;
        let mut sibling = vec![0; items.len()];
        for node in 0..tree.len() {
            for (k, &c) in tree.children(node).iter().enumerate() {
                sibling[c] = k;
            }
        }
        let placed = items
            .iter()
            .enumerate()
            .map(|(i, it)| {
                let r = output.layout.rects[i];
                PlacedItem {
                    id: it.id.clone(),
                    x: r.x,
                    y: r.y,
                    w: r.w,
                    h: r.h,
                    level: tree.level(i),
                    parent: items[tree.parent(i)].id.clone(),
                    sibling_index: sibling[i],
                    path: it.pixel_source.clone(),
                }
            })
            .collect();
        Self {
            version: DOCUMENT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            root: items[tree.root()].id.clone(),
            num_properties: tree.num_properties(),
            items: placed,
            shape,
            objective: ObjectiveSummary::from_trace(&output.trace, violations),
            config: config.clone(),
            seed: None,
        }
    }

    pub fn rects(&self) -> Vec<Rect> {
        self.items.iter().map(PlacedItem::rect).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|it| it.id == id)
    }

    /// Rebuilds the tree, with node indices in document item order.
    pub fn tree(&self) -> Result<ImageTree> {
        let n = self.items.len();
        let lookup = |id: &str| {
            self.index_of(id)
                .ok_or_else(|| Error::Schema(format!("layout references unknown image `{id}`")))
        };
        let root = lookup(&self.root)?;
        let mut slots: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (i, it) in self.items.iter().enumerate() {
            let p = lookup(&it.parent)?;
            if (p == i) != (i == root) {
                return Err(Error::Schema(format!("image `{}` has an inconsistent parent", it.id)));
            }
            if p != i {
                slots[p].push((it.sibling_index, i));
            }
        }
        let mut children = Vec::with_capacity(n);
        for (p, mut s) in slots.into_iter().enumerate() {
            s.sort_unstable();
            if s.iter().enumerate().any(|(k, &(idx, _))| idx != k) {
                return Err(Error::Schema(format!(
                    "children of `{}` have non-contiguous sibling indices",
                    self.items[p].id
                )));
            }
            children.push(s.into_iter().map(|(_, c)| c).collect());
        }
        let tree = ImageTree::from_children(root, children, self.num_properties)?;
        if let Some(i) = (0..n).find(|&i| tree.level(i) != self.items[i].level) {
            return Err(Error::Schema(format!("image `{}` has an inconsistent level", self.items[i].id)));
        }
        Ok(tree)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("layout document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let doc: Self = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if doc.version != DOCUMENT_VERSION {
            return Err(Error::Parse {
                location: "version".into(),
                message: format!("unsupported layout version {}", doc.version),
            });
        }
        doc.tree()?;
        Ok(doc)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ShapeOptions;
    use crate::pipeline::run_pipeline;
    use crate::synth::{collection, SynthSpec};

    fn document() -> (LayoutDocument, PipelineOutput) {
        let (schema, items) = collection(&SynthSpec::new(12, 3, 5));
        let spec = ShapeSpec::Rectangle([600.0, 400.0]);
        let shape = spec.load(None, &ShapeOptions::default()).unwrap();
        let config = PipelineConfig::default();
        let out = run_pipeline(&items, &schema, &shape, &config, None).unwrap();
        let v = Violations::of(&out.layout, &shape);
        (LayoutDocument::new(&items, &out, v, spec, &config), out)
    }

    #[test]
    fn round_trip_preserves_document_and_tree() {
        let (doc, out) = document();
        let back = LayoutDocument::from_json(doc.to_json().as_bytes()).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.tree().unwrap(), out.tree);
        assert_eq!(back.rects(), out.layout.rects);
    }

    #[test]
    fn broken_sibling_indices_are_rejected() {
        let (mut doc, _) = document();
        let i = doc.items.iter().position(|it| it.level > 0).unwrap();
        doc.items[i].sibling_index += 50;
        assert!(LayoutDocument::from_json(doc.to_json().as_bytes()).is_err());
    }
}
