//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the test
//! harness so the lines are always printed.

mod common;

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{branch_distances, manifest, run, total_overlap, Run, LAYOUT_FIXTURES};
use treecollage_core::costs::{corr_term, shape_term, size_term};
use treecollage_core::geometry::bad_pixel_count;
use treecollage_core::io::{read_manifest, LayoutDocument};
use treecollage_core::optimizer::Violations;
use treecollage_core::tree::{build_tree, is_unbalanced, order_collection, select_root, transfer_or_rebuild, transfer_tree};
use treecollage_core::{
    run_pipeline, CostParams, Histogram, ImageItem, ImageTree, PropertyDescriptor, PropertyKind, PropertySchema,
    PropertyValue, Rect, ShapeOptions, ShapeRegion, SizeBounds,
};

type Outcome = Result<String, String>;

fn check(ok: bool, pass: String, fail: String) -> Outcome {
    if ok {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn zero_overlap(runs: &[Run]) -> Outcome {
    let bad: Vec<String> = runs
        .iter()
        .filter_map(|r| {
            let a = total_overlap(&r.output.layout.rects);
            (a != 0.0).then(|| format!("{} ({a})", r.name))
        })
        .collect();
    check(bad.is_empty(), format!("{} fixtures, total intersection 0", runs.len()), bad.join(", "))
}

fn containment(runs: &[Run]) -> Outcome {
    let bad: Vec<String> = runs
        .iter()
        .filter_map(|r| {
            let out = r.output.layout.rects.iter().filter(|x| !r.shape.contains(x.center())).count();
            (out > 0).then(|| format!("{}: {out} outside", r.name))
        })
        .collect();
    let total: usize = runs.iter().map(|r| r.output.layout.len()).sum();
    check(bad.is_empty(), format!("{total} centers inside"), bad.join(", "))
}

/// Straight-line transcription of the insertion rule: parent table and
/// ordered child lists.
fn reference_tree(items: &[ImageItem], order: &[usize], root: usize, schema: &PropertySchema) -> (Vec<usize>, Vec<Vec<usize>>) {
    let n = items.len();
    let f = schema.len();
    let mut parent = vec![usize::MAX; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    parent[root] = root;
    let d = |j: usize, a: usize, b: usize| -> f64 {
        match (&items[a].properties[j], &items[b].properties[j]) {
            (PropertyValue::Tag(x), PropertyValue::Tag(y)) => {
                if x == y {
                    0.0
                } else {
                    1.0
                }
            }
            (PropertyValue::Histogram(x), PropertyValue::Histogram(y)) => {
                1.0 - x.bins().iter().zip(y.bins()).map(|(p, q)| p.min(*q)).sum::<f64>()
            }
            _ => panic!("kind mismatch"),
        }
    };
    for &x in order {
        if x == root {
            continue;
        }
        let mut cur = root;
        let mut j = 0;
        loop {
            if j == f {
                break;
            }
            let threshold = schema.descriptors()[j].threshold;
            let mut best: Option<(usize, f64)> = None;
            for &c in &children[cur] {
                let dc = d(j, x, c);
                if dc < threshold && best.is_none_or(|(_, bd)| dc < bd) {
                    best = Some((c, dc));
                }
            }
            match best {
                Some((c, _)) => {
                    cur = c;
                    j += 1;
                }
                None => break,
            }
        }
        parent[x] = cur;
        children[cur].push(x);
    }
    (parent, children)
}

fn random_instance(rng: &mut ChaCha8Rng) -> (PropertySchema, Vec<ImageItem>) {
    let f = rng.gen_range(1..=3);
    let n = rng.gen_range(2..=8);
    let descriptors: Vec<PropertyDescriptor> = (0..f)
        .map(|j| {
            let kind = if rng.gen_bool(0.5) { PropertyKind::Semantic } else { PropertyKind::Visual };
            PropertyDescriptor::new(format!("p{j}"), kind).with_threshold([0.3, 0.5, 0.7][rng.gen_range(0..3)])
        })
        .collect();
    let items = (0..n)
        .map(|i| {
            let props = descriptors
                .iter()
                .map(|d| match d.kind {
                    PropertyKind::Semantic => PropertyValue::tag(["x", "y", "z"][rng.gen_range(0..3)]),
                    PropertyKind::Visual => {
                        let counts: Vec<f64> = (0..4).map(|_| rng.gen_range(0..4) as f64 + 0.01).collect();
                        PropertyValue::Histogram(Histogram::from_counts(&counts).unwrap())
                    }
                })
                .collect();
            ImageItem::new(format!("i{i}"), 100.0, 80.0, props).unwrap()
        })
        .collect();
    (PropertySchema::new(descriptors).unwrap(), items)
}

fn tree_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for instance in 0..25 {
        let (schema, items) = random_instance(&mut rng);
        // Alternate between the library's ordering and a random one.
        let (order, root) = if instance % 2 == 0 {
            let order = order_collection(&items, &schema);
            let root = select_root(&items, &order, &schema);
            (order, root)
        } else {
            let mut order: Vec<usize> = (0..items.len()).collect();
            order.shuffle(&mut rng);
            let root = order[rng.gen_range(0..order.len())];
            (order, root)
        };
        let tree = build_tree(&items, &order, root, &schema);
        let (parent, children) = reference_tree(&items, &order, root, &schema);
        if tree.parents() != parent.as_slice() {
            return Err(format!("instance {instance}: parents {:?} vs {:?}", tree.parents(), parent));
        }
        if (0..items.len()).any(|i| tree.children(i) != children[i].as_slice()) {
            return Err(format!("instance {instance}: child order differs"));
        }
    }
    Ok("25 instances match node-for-node".into())
}

fn cost_anchors() -> Outcome {
    let p = CostParams::default();
    let tree = ImageTree::from_parents(vec![0, 0], 1).unwrap();
    let parent = Rect::new(0.0, 0.0, 30.0, 40.0);
    let child = Rect::new(50.0, 0.0, 10.0, 10.0);
    let corr = corr_term(&[parent, child], &tree, 1, &p);
    let b = SizeBounds::around(100.0, 50.0, 0.8, 1.2);
    let upper = size_term(&Rect::new(0.0, 0.0, b.w_hi, b.h_hi), &b);
    let lower = size_term(&Rect::new(0.0, 0.0, b.w_lo, b.h_lo), &b);
    let shape = ShapeRegion::rectangle(512.0, 512.0, &ShapeOptions::default()).unwrap();
    let inside = shape_term(&Rect::new(200.0, 300.0, 40.0, 20.0), &shape, &p);
    let ok = (corr - 0.5).abs() <= 1e-9 && upper.abs() <= 1e-9 && (lower - 1.0).abs() <= 1e-9 && inside == 0.0;
    check(
        ok,
        format!("corr {corr:.12}, size {upper:.12}/{lower:.12}, shape {inside}"),
        format!("corr {corr}, size upper {upper}, size lower {lower}, shape {inside}"),
    )
}

fn objective_monotone(runs: &[Run]) -> Outcome {
    let mut traces = 0;
    for r in runs {
        for t in r.output.trace.global_levels() {
            traces += 1;
            if !t.is_non_increasing() {
                return Err(format!("{} level {}: {:?}", r.name, t.level, t.objective));
            }
        }
    }
    Ok(format!("{traces} level traces non-increasing"))
}

fn tuning_monotone(runs: &[Run]) -> Outcome {
    let mut grown = 0;
    for r in runs {
        let (before, after) = (&r.output.pre_tune.rects, &r.output.layout.rects);
        for i in 0..before.len() {
            if after[i].area() < before[i].area() {
                return Err(format!("{}: image {i} shrank", r.name));
            }
            let (b0, b1) = (bad_pixel_count(i, before, &r.shape), bad_pixel_count(i, after, &r.shape));
            if b1 > b0 {
                return Err(format!("{}: image {i} bad pixels {b0} -> {b1}", r.name));
            }
            grown += usize::from(after[i].area() > before[i].area());
        }
    }
    Ok(format!("no area decrease or bad-pixel increase; {grown} images grew"))
}

fn clustering(runs: &[Run]) -> Outcome {
    let mut worst = f64::INFINITY;
    for r in runs {
        let (inter, intra) = branch_distances(&r.output.tree, &r.output.layout.rects);
        if inter <= intra {
            return Err(format!("{}: inter {inter:.1} <= intra {intra:.1}", r.name));
        }
        worst = worst.min(inter / intra);
    }
    Ok(format!("inter/intra >= {worst:.2} on every fixture"))
}

fn tree_transfer() -> Outcome {
    // Star fixture: hub `a` with leaves b, c, d.
    let m = manifest("star");
    let order = order_collection(&m.items, &m.schema);
    let root = select_root(&m.items, &order, &m.schema);
    let star = build_tree(&m.items, &order, root, &m.schema);
    let id = |i: usize| m.items[i].id.as_str();
    let idx = |s: &str| m.index_of(s).unwrap();
    if id(star.root()) != "a" || star.children(idx("a")).len() != 3 {
        return Err(format!("star fixture did not build a star: {:?}", star.parents()));
    }
    let moved = transfer_tree(&star, idx("c")).map_err(|e| e.to_string())?;
    let mut kids: Vec<&str> = moved.children(idx("c")).iter().map(|&k| id(k)).collect();
    kids.sort_unstable();
    if moved.root() != idx("c") || kids != ["a", "b", "d"] || !moved.children(idx("a")).is_empty() {
        return Err(format!("star transfer gave {:?}", moved.parents()));
    }
    let back = transfer_tree(&moved, idx("a")).map_err(|e| e.to_string())?;
    if back.edges() != star.edges() {
        return Err("star round trip changed the edge set".into());
    }

    // Three-node chain root -> A -> B, focus A.
    let chain3 = ImageTree::from_parents(vec![0, 0, 1], 2).unwrap();
    let t = transfer_tree(&chain3, 1).map_err(|e| e.to_string())?;
    let mut kids = t.children(1).to_vec();
    kids.sort_unstable();
    if t.root() != 1 || kids != [0, 2] {
        return Err(format!("3-chain transfer gave {:?}", t.parents()));
    }

    // Chain fixture: a ten-node path stored in a layout document.
    let m = read_manifest(&common::fixture_dir().join("chain.json")).map_err(|e| e.to_string())?;
    let doc = LayoutDocument::read(&common::fixture_dir().join("chain.layout.json")).map_err(|e| e.to_string())?;
    let chain = doc.tree().map_err(|e| e.to_string())?;
    let leaf = m.index_of("n9").unwrap();
    let reversed = transfer_tree(&chain, leaf).map_err(|e| e.to_string())?;
    let expected: Vec<usize> = (0..10).map(|i| if i == 9 { 9 } else { i + 1 }).collect();
    if reversed.parents() != expected.as_slice() {
        return Err(format!("chain transfer gave {:?}", reversed.parents()));
    }
    let balance = m.config.balance;
    if !is_unbalanced(&reversed, &balance) {
        return Err("chain transfer not flagged unbalanced".into());
    }
    let order = order_collection(&m.items, &m.schema);
    let (rebuilt, did_rebuild) =
        transfer_or_rebuild(&chain, leaf, &m.items, &order, &m.schema, &balance).map_err(|e| e.to_string())?;
    check(
        did_rebuild && rebuilt.root() == leaf && !is_unbalanced(&rebuilt, &balance),
        format!("star/chain rewiring as derived; chain rebuilt with depth {}", rebuilt.depth()),
        format!("rebuild path: rebuilt={did_rebuild}, root {}", rebuilt.root()),
    )
}

fn timing() -> Outcome {
    let limit = Duration::from_secs(60);
    let mut report = Vec::new();
    for name in ["notch_mask_100", "hexagon_100"] {
        let m = manifest(name);
        let shape = m.load_shape().map_err(|e| e.to_string())?;
        if shape.width_cells().max(shape.height_cells()) != 512 {
            return Err(format!("{name}: mask is not 512 on its longest side"));
        }
        let start = Instant::now();
        run_pipeline(&m.items, &m.schema, &shape, &m.config, None).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        if elapsed > limit {
            return Err(format!("{name}: {elapsed:.2?} > 60 s"));
        }
        report.push(format!("{name} N={} {elapsed:.2?}", m.items.len()));
    }
    Ok(report.join(", "))
}

fn document(name: &'static str) -> Result<String, String> {
    let m = manifest(name);
    let shape = m.load_shape().map_err(|e| e.to_string())?;
    let out = run_pipeline(&m.items, &m.schema, &shape, &m.config, None).map_err(|e| e.to_string())?;
    let v = Violations::of(&out.layout, &shape);
    Ok(LayoutDocument::new(&m.items, &out, v, m.shape.clone(), &m.config).to_json())
}

fn determinism() -> Outcome {
    for name in ["walmart_rectangle_40", "blob_mask_64"] {
        if document(name)? != document(name)? {
            return Err(format!("{name}: documents differ"));
        }
    }
    Ok("byte-identical documents on repeated runs".into())
}

fn main() {
    let runs: Vec<Run> = LAYOUT_FIXTURES.iter().map(|&n| run(n)).collect();
    let results: Vec<(&str, Outcome)> = vec![
        ("zero overlap", zero_overlap(&runs)),
        ("shape containment", containment(&runs)),
        ("tree construction oracle", tree_oracle()),
        ("cost unit anchors", cost_anchors()),
        ("objective monotonicity", objective_monotone(&runs)),
        ("local tuning monotonicity", tuning_monotone(&runs)),
        ("clustering preservation", clustering(&runs)),
        ("tree transfer", tree_transfer()),
        ("timing N=100, 512 mask", timing()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
