//! SVG rendering of a layout document.

use std::fmt::Write;

use crate::geometry::{Point, Rect, ShapeRegion};
use crate::io::document::LayoutDocument;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Fill color of a level-1 branch; the root gets gray.
fn branch_color(branch: Option<usize>) -> String {
    match branch {
        None => "#888888".into(),
        Some(k) => format!("hsl({:.0},60%,60%)", (k as f64 * 137.508) % 360.0),
    }
}

/// Outline of the shape: the polygon when there is one, otherwise the
/// boundary edges of the inside cells.
fn outline_path(shape: &ShapeRegion) -> String {
    let mut d = String::new();
    if let Some(poly) = shape.outline() {
        for (k, p) in poly.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if k == 0 { "M" } else { "L" }, p.x, p.y);
        }
        d.push('Z');
        return d;
    }
    let (w, h, c, o) = (shape.width_cells(), shape.height_cells(), shape.cell_size(), shape.origin());
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && shape.is_inside_cell(x as usize, y as usize);
    let at = |x: i64, y: i64| Point::new(o.x + x as f64 * c, o.y + y as f64 * c);
    // Horizontal boundary runs.
    for y in 0..=h as i64 {
        let mut run: Option<i64> = None;
        for x in 0..=w as i64 {
            let edge = x < w as i64 && inside(x, y) != inside(x, y - 1);
            match (edge, run) {
                (true, None) => run = Some(x),
                (false, Some(x0)) => {
                    let (a, b) = (at(x0, y), at(x, y));
                    let _ = write!(d, "M{:.2} {:.2}H{:.2}", a.x, a.y, b.x);
                    run = None;
                }
                _ => {}
            }
        }
    }
    // Vertical boundary runs.
    for x in 0..=w as i64 {
        let mut run: Option<i64> = None;
        for y in 0..=h as i64 {
            let edge = y < h as i64 && inside(x, y) != inside(x - 1, y);
            match (edge, run) {
                (true, None) => run = Some(y),
                (false, Some(y0)) => {
                    let (a, b) = (at(x, y0), at(x, y));
                    let _ = write!(d, "M{:.2} {:.2}V{:.2}", a.x, a.y, b.y);
                    run = None;
                }
                _ => {}
            }
        }
    }
    d
}

fn union(a: Rect, b: &Rect) -> Rect {
    let (l, t) = (a.left().min(b.left()), a.top().min(b.top()));
    let (r, btm) = (a.right().max(b.right()), a.bottom().max(b.bottom()));
    Rect::new(0.5 * (l + r), 0.5 * (t + btm), r - l, btm - t)
}

/// Renders the layout: one `<rect>` per image (an `<image>` on top when the
/// image has a file), drawn root first, and the shape outline.
pub fn render_svg(doc: &LayoutDocument, shape: &ShapeRegion) -> String {
    let rects = doc.rects();
    let view = rects.iter().fold(shape.bounding_box(), union);
    let margin = 0.02 * view.w.max(view.h);
    let branches: Vec<Option<usize>> = match doc.tree() {
        Ok(tree) => (0..tree.len())
            .map(|i| {
                tree.branch_of(i)
                    .map(|b| tree.children(tree.root()).iter().position(|&c| c == b).unwrap_or(0))
            })
            .collect(),
        Err(_) => vec![None; rects.len()],
    };

    let mut order: Vec<usize> = (0..doc.items.len()).collect();
    order.sort_by_key(|&i| (doc.items[i].level, i));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" viewBox="{:.2} {:.2} {:.2} {:.2}">"#,
        view.left() - margin,
        view.top() - margin,
        view.w + 2.0 * margin,
        view.h + 2.0 * margin
    );
    let _ = writeln!(
        s,
        r##"<path d="{}" fill="#f4f4f4" stroke="#333333" stroke-width="{:.2}" fill-rule="evenodd"/>"##,
        outline_path(shape),
        0.002 * view.w.max(view.h)
    );
    for i in order {
        let it = &doc.items[i];
        let r = rects[i];
        let id = escape(&it.id);
        let _ = writeln!(
            s,
            r##"<rect id="{id}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="#ffffff" stroke-width="1"/>"##,
            r.left(),
            r.top(),
            r.w,
            r.h,
            branch_color(branches[i])
        );
        if let Some(path) = &it.path {
            let _ = writeln!(
                s,
                r#"<image href="{}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" preserveAspectRatio="none"/>"#,
                escape(&path.display().to_string()),
                r.left(),
                r.top(),
                r.w,
                r.h
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ShapeOptions;
    use crate::io::document::PlacedItem;
    use crate::io::manifest::ShapeSpec;
    use crate::io::document::ObjectiveSummary;
    use crate::pipeline::PipelineConfig;

    fn doc() -> LayoutDocument {
        let item = |id: &str, x: f64, parent: &str, level, sibling_index| PlacedItem {
            id: id.into(),
            x,
            y: 50.0,
            w: 20.0,
            h: 10.0,
            level,
            parent: parent.into(),
            sibling_index,
            path: None,
        };
        LayoutDocument {
            version: 1,
            tool_version: "test".into(),
            root: "r".into(),
            num_properties: 1,
            items: vec![item("a<b", 20.0, "r", 1, 0), item("r", 50.0, "r", 0, 0), item("c", 80.0, "r", 1, 1)],
            shape: ShapeSpec::Rectangle([100.0, 100.0]),
            objective: ObjectiveSummary::default(),
            config: PipelineConfig::default(),
            seed: None,
        }
    }

    #[test]
    fn one_rect_per_item_root_first() {
        let shape = ShapeRegion::rectangle(100.0, 100.0, &ShapeOptions::default()).unwrap();
        let svg = render_svg(&doc(), &shape);
        assert_eq!(svg.matches("<rect ").count(), 3);
        assert!(svg.find(r#"id="r""#).unwrap() < svg.find(r#"id="c""#).unwrap());
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg, render_svg(&doc(), &shape));
    }

    #[test]
    fn mask_outline_traces_cell_edges() {
        let inside: Vec<bool> = (0..256 * 256).map(|k| (k % 256) < 128).collect();
        let shape = ShapeRegion::from_mask(256, 256, inside, 1.0, Point::default(), &ShapeOptions::default()).unwrap();
        let d = outline_path(&shape);
        assert!(d.contains("M0.00 0.00H128.00"));
        assert!(d.contains("M128.00 0.00V256.00"));
    }
}
