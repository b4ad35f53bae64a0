//! Regenerates the bundled fixtures.
//!
//! ```text
//! cargo run -p treecollage-core --example make_fixtures -- fixtures
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use treecollage_core::io::manifest::{manifest_to_json, Manifest, ShapeSpec};
use treecollage_core::io::LayoutDocument;
use treecollage_core::optimizer::Violations;
use treecollage_core::synth::{collection, polygon, ShapeKind, SynthSpec};
use treecollage_core::{
    run_pipeline_from_tree, ImageItem, ImageTree, PipelineConfig, PropertyDescriptor, PropertyKind, PropertySchema,
    PropertyValue, ShapeOptions,
};

struct Layout {
    name: &'static str,
    count: usize,
    categories: usize,
    with_material: bool,
    shape: ShapeSpec,
}

fn poly(kind: ShapeKind, size: f64) -> ShapeSpec {
    ShapeSpec::Polygon(polygon(kind, size).iter().map(|p| [p.x, p.y]).collect())
}

fn write_manifest(dir: &Path, name: &str, schema: PropertySchema, items: Vec<ImageItem>, shape: ShapeSpec) -> Manifest {
    let manifest = Manifest {
        version: 1,
        schema,
        items,
        shape,
        shape_options: ShapeOptions::default(),
        config: PipelineConfig::default(),
        base_dir: Some(dir.to_path_buf()),
    };
    let text = serde_json::to_string_pretty(&manifest_to_json(&manifest)).unwrap();
    fs::write(dir.join(format!("{name}.json")), text + "\n").unwrap();
    manifest
}

/// A 512x512 mask: a union of three discs.
fn blob_mask(path: &Path) {
    let discs = [(200.0, 230.0, 170.0), (350.0, 180.0, 130.0), (330.0, 360.0, 120.0)];
    let img = image::GrayImage::from_fn(512, 512, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let inside = discs.iter().any(|&(cx, cy, r)| (px - cx).hypot(py - cy) <= r);
        image::Luma([if inside { 255 } else { 0 }])
    });
    img.save(path).unwrap();
}

/// A 512x384 mask: a rounded rectangle with a notch cut from the top.
fn notch_mask(path: &Path) {
    let img = image::GrayImage::from_fn(512, 384, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let (dx, dy) = ((px - 256.0).abs() - 206.0, (py - 192.0).abs() - 142.0);
        let rounded = dx.max(0.0).hypot(dy.max(0.0)) <= 40.0;
        let notch = (px - 256.0).abs() < 60.0 && py < 140.0;
        image::Luma([if rounded && !notch { 255 } else { 0 }])
    });
    img.save(path).unwrap();
}

fn tag_items(tags: &[(&str, &[&str])]) -> Vec<ImageItem> {
    tags.iter()
        .map(|(id, t)| {
            let props = t.iter().map(|s| PropertyValue::tag(*s)).collect();
            ImageItem::new(*id, 200.0, 150.0, props).unwrap()
        })
        .collect()
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    fs::create_dir_all(dir.join("masks")).unwrap();
    blob_mask(&dir.join("masks/blob.png"));
    notch_mask(&dir.join("masks/notch.png"));

    let layouts = [
        Layout { name: "walmart_rectangle_40", count: 40, categories: 6, with_material: false, shape: ShapeSpec::Rectangle([1000.0, 700.0]) },
        Layout { name: "rectangle_30", count: 30, categories: 4, with_material: false, shape: ShapeSpec::Rectangle([800.0, 800.0]) },
        Layout { name: "circle_60", count: 60, categories: 5, with_material: false, shape: poly(ShapeKind::Circle, 1000.0) },
        Layout { name: "heart_50", count: 50, categories: 4, with_material: false, shape: poly(ShapeKind::Heart, 1000.0) },
        Layout { name: "star_70", count: 70, categories: 5, with_material: false, shape: poly(ShapeKind::Star, 1000.0) },
        Layout { name: "lshape_45", count: 45, categories: 3, with_material: false, shape: poly(ShapeKind::LShape, 1000.0) },
        Layout { name: "cross_80", count: 80, categories: 6, with_material: false, shape: poly(ShapeKind::Cross, 1000.0) },
        Layout { name: "hexagon_100", count: 100, categories: 8, with_material: false, shape: poly(ShapeKind::Hexagon, 1000.0) },
        Layout { name: "blob_mask_64", count: 64, categories: 5, with_material: false, shape: ShapeSpec::Mask("masks/blob.png".into()) },
        Layout { name: "notch_mask_100", count: 100, categories: 7, with_material: false, shape: ShapeSpec::Mask("masks/notch.png".into()) },
        Layout { name: "three_property_circle_50", count: 50, categories: 4, with_material: true, shape: poly(ShapeKind::Circle, 900.0) },
    ];
    for (k, l) in layouts.iter().enumerate() {
        let mut spec = SynthSpec::new(l.count, l.categories, 1000 + k as u64);
        spec.with_material = l.with_material;
        let (schema, items) = collection(&spec);
        write_manifest(&dir, l.name, schema, items, l.shape.clone());
    }

    // Star: a hub with three single-tag leaves.
    let schema = PropertySchema::new(vec![PropertyDescriptor::new("kind", PropertyKind::Semantic)]).unwrap();
    let items = tag_items(&[("a", &["hub"]), ("b", &["bolt"]), ("c", &["cog"]), ("d", &["drum"])]);
    write_manifest(&dir, "star", schema, items, ShapeSpec::Rectangle([600.0, 600.0]));

    // Chain: ten images on two properties, with a stored layout whose tree is
    // a single path (deeper than any built tree can be).
    let schema = PropertySchema::new(vec![
        PropertyDescriptor::new("category", PropertyKind::Semantic),
        PropertyDescriptor::new("finish", PropertyKind::Semantic),
    ])
    .unwrap();
    let ids: Vec<String> = (0..10).map(|i| format!("n{i}")).collect();
    let tags: Vec<(&str, &[&str])> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), if i % 2 == 0 { &["tool", "matte"][..] } else { &["toy", "gloss"][..] }))
        .collect();
    let items = tag_items(&tags);
    let shape_spec = ShapeSpec::Rectangle([800.0, 800.0]);
    let manifest = write_manifest(&dir, "chain", schema, items, shape_spec.clone());
    let tree = ImageTree::from_parents((0..10).map(|i: usize| i.saturating_sub(1)).collect(), 2).unwrap();
    let shape = manifest.load_shape().unwrap();
    let config = PipelineConfig::default();
    let out = run_pipeline_from_tree(&manifest.items, tree, &shape, &config).unwrap();
    let doc = LayoutDocument::new(&manifest.items, &out, Violations::of(&out.layout, &shape), shape_spec, &config);
    doc.write(&dir.join("chain.layout.json")).unwrap();

    println!("wrote fixtures to {}", dir.display());
}
