//! Property-based tree construction, focus transfer and the balance detector.
//!
//! Nodes are addressed by their index in the item slice the tree was built
//! from. Child lists are ordered; for a freshly built tree the order is the
//! insertion order.

use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dissimilarity, histogram_intersection, Histogram, ImageItem, PropertyKind, PropertySchema};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageTree {
    parent: Vec<usize>,
    level: Vec<usize>,
    children: Vec<Vec<usize>>,
    root: usize,
    num_properties: usize,
}

impl ImageTree {
    /// Builds a tree from a parent table (`parent[root] == root`). Child
    /// order follows node index. Levels are recomputed as depth.
    pub fn from_parents(parent: Vec<usize>, num_properties: usize) -> Result<Self> {
        let n = parent.len();
        if n == 0 {
            return Err(Error::InvalidInput("tree has no nodes".into()));
        }
        let mut children = vec![Vec::new(); n];
        let mut root = None;
        for (node, &p) in parent.iter().enumerate() {
            if p >= n {
                return Err(Error::InvalidInput(format!("node {node} has out-of-range parent {p}")));
            }
            if p == node {
                if root.replace(node).is_some() {
                    return Err(Error::InvalidInput("tree has more than one root".into()));
                }
            } else {
                children[p].push(node);
            }
        }
        let root = root.ok_or_else(|| Error::InvalidInput("tree has no root".into()))?;
        Self::from_children(root, children, num_properties)
    }

    /// Builds a tree from ordered child lists.
    pub fn from_children(root: usize, children: Vec<Vec<usize>>, num_properties: usize) -> Result<Self> {
        let n = children.len();
        if root >= n {
            return Err(Error::InvalidInput("root out of range".into()));
        }
        let mut parent = vec![usize::MAX; n];
        let mut level = vec![usize::MAX; n];
        parent[root] = root;
        level[root] = 0;
        let mut queue = VecDeque::from([root]);
        let mut visited = 1;
        while let Some(node) = queue.pop_front() {
            for &c in &children[node] {
                if c >= n || level[c] != usize::MAX {
                    return Err(Error::InvalidInput(format!("node {c} is reachable twice or out of range")));
                }
                parent[c] = node;
                level[c] = level[node] + 1;
                visited += 1;
                queue.push_back(c);
            }
        }
        if visited != n {
            return Err(Error::InvalidInput("tree is not connected".into()));
        }
        Ok(Self {
            parent,
            level,
            children,
            root,
            num_properties,
        })
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, node: usize) -> usize {
        self.parent[node]
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    pub fn level(&self, node: usize) -> usize {
        self.level[node]
    }

    pub fn levels(&self) -> &[usize] {
        &self.level
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Number of properties the tree was built with (`F`).
    pub fn num_properties(&self) -> usize {
        self.num_properties
    }

    /// Maximum placement level of a freshly built tree, `F + 1`.
    pub fn max_level(&self) -> usize {
        self.num_properties + 1
    }

    /// Deepest level present.
    pub fn depth(&self) -> usize {
        self.level.iter().copied().max().unwrap_or(0)
    }

    /// Node indices at `level`, ascending.
    pub fn nodes_at_level(&self, level: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.level[i] == level).collect()
    }

    /// Number of nodes in the subtree rooted at `node`, itself included.
    pub fn subtree_size(&self, node: usize) -> usize {
        let mut count = 0;
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            count += 1;
            stack.extend(&self.children[n]);
        }
        count
    }

    pub fn subtree_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![1; self.len()];
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(self.level[i]));
        for node in order {
            if node != self.root {
                sizes[self.parent[node]] += sizes[node];
            }
        }
        sizes
    }

    /// The level-1 ancestor of `node`, or `None` for the root.
    pub fn branch_of(&self, mut node: usize) -> Option<usize> {
        if node == self.root {
            return None;
        }
        while self.parent[node] != self.root {
            node = self.parent[node];
        }
        Some(node)
    }

    /// Undirected edge set as sorted `(min, max)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = (0..self.len())
            .filter(|&i| i != self.root)
            .map(|i| (i.min(self.parent[i]), i.max(self.parent[i])))
            .collect();
        e.sort_unstable();
        e
    }

    /// Structural invariants: single root at level 0, levels equal
    /// parent level + 1, acyclic and connected.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::from_parents(self.parent.clone(), self.num_properties)?;
        if rebuilt.level != self.level || rebuilt.root != self.root {
            return Err(Error::InvalidInput("tree levels are inconsistent with parents".into()));
        }
        Ok(())
    }
}

fn semantic_cmp(a: &ImageItem, b: &ImageItem, schema: &PropertySchema) -> Ordering {
    for (f, d) in schema.descriptors().iter().enumerate() {
        if d.kind == PropertyKind::Semantic {
            let ord = a.properties[f].as_tag().cmp(&b.properties[f].as_tag());
            if ord != Ordering::Equal {
                return ord;
            }
        }
    }
    Ordering::Equal
}

fn mean_histogram<'a>(hists: impl Iterator<Item = &'a Histogram>) -> Option<Histogram> {
    let mut acc: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for h in hists {
        if acc.is_empty() {
            acc = vec![0.0; h.len()];
        }
        if h.len() != acc.len() {
            return None;
        }
        for (a, b) in acc.iter_mut().zip(h.bins()) {
            *a += b;
        }
        count += 1;
    }
    if count == 0 {
        return None;
    }
    Histogram::from_counts(&acc).ok()
}

/// Ranks the collection into the 1-D insertion array. Returns item indices.
///
/// Stable lexicographic order on semantic tags (schema order), then
/// descending histogram intersection with the collection-mean histogram for
/// each visual property (schema order), then id.
pub fn order_collection(items: &[ImageItem], schema: &PropertySchema) -> Vec<usize> {
    // Per item, per visual property: similarity to the mean histogram.
    let visual: Vec<usize> = schema
        .descriptors()
        .iter()
        .enumerate()
        .filter(|(_, d)| d.kind == PropertyKind::Visual)
        .map(|(f, _)| f)
        .collect();
    let similarity: Vec<Vec<f64>> = visual
        .iter()
        .map(|&f| {
            let mean = mean_histogram(items.iter().filter_map(|it| it.properties[f].as_histogram()));
            items
                .iter()
                .map(|it| match (&mean, it.properties[f].as_histogram()) {
                    (Some(m), Some(h)) => histogram_intersection(h, m).unwrap_or(0.0),
                    _ => 0.0,
                })
                .collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        semantic_cmp(&items[a], &items[b], schema)
            .then_with(|| {
                similarity
                    .iter()
                    .map(|s| s[b].total_cmp(&s[a]))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| items[a].id.cmp(&items[b].id))
    });
    order
}

/// Picks the image sharing the fewest properties with the rest, judged on the
/// first property. Returns an item index.
pub fn select_root(items: &[ImageItem], order: &[usize], schema: &PropertySchema) -> usize {
    assert!(!order.is_empty(), "select_root needs at least one item");
    let lowest_id = |a: usize, b: usize| items[a].id.cmp(&items[b].id);
    match schema.descriptors()[0].kind {
        PropertyKind::Semantic => {
            let mut freq: HashMap<&str, usize> = HashMap::new();
            for &i in order {
                *freq.entry(items[i].properties[0].as_tag().unwrap_or("")).or_default() += 1;
            }
            let count = |i: usize| freq[items[i].properties[0].as_tag().unwrap_or("")];
            *order
                .iter()
                .min_by(|&&a, &&b| count(a).cmp(&count(b)).then_with(|| lowest_id(a, b)))
                .unwrap()
        }
        PropertyKind::Visual => {
            if order.len() == 1 {
                return order[0];
            }
            let mean_d = |i: usize| {
                let total: f64 = order
                    .iter()
                    .filter(|&&k| k != i)
                    .map(|&k| dissimilarity(schema, 0, &items[i].properties[0], &items[k].properties[0]).unwrap_or(1.0))
                    .sum();
                total / (order.len() - 1) as f64
            };
            let scores: HashMap<usize, f64> = order.iter().map(|&i| (i, mean_d(i))).collect();
            *order
                .iter()
                .min_by(|&&a, &&b| scores[&b].total_cmp(&scores[&a]).then_with(|| lowest_id(a, b)))
                .unwrap()
        }
    }
}

/// Inserts images one by one in `order`. At level `j` an image is compared,
/// on property `j`, with the children of its current parent; it descends
/// under the most similar child whose dissimilarity is below the threshold,
/// and otherwise settles at level `j`. Matching on all `F` properties puts it
/// at level `F + 1`.
pub fn build_tree(items: &[ImageItem], order: &[usize], root: usize, schema: &PropertySchema) -> ImageTree {
    let n = items.len();
    let f_count = schema.len();
    let mut parent = vec![usize::MAX; n];
    let mut level = vec![usize::MAX; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    parent[root] = root;
    level[root] = 0;

    for &i in order.iter().filter(|&&i| i != root) {
        let mut current = root;
        let mut j = 1;
        while j <= f_count {
            let f = j - 1;
            let threshold = schema.descriptors()[f].threshold;
            let mut best: Option<(usize, f64)> = None;
            for &k in &children[current] {
                let d = dissimilarity(schema, f, &items[i].properties[f], &items[k].properties[f]).unwrap_or(f64::INFINITY);
                if d < threshold && best.is_none_or(|(_, dmin)| d < dmin) {
                    best = Some((k, d));
                }
            }
            match best {
                Some((k, _)) => {
                    current = k;
                    j += 1;
                }
                None => break,
            }
        }
        parent[i] = current;
        level[i] = j;
        children[current].push(i);
    }

    ImageTree {
        parent,
        level,
        children,
        root,
        num_properties: f_count,
    }
}

/// Re-roots the tree at `focus`. The former parent and the siblings directly
/// before and after `focus` in its parent's child list become children of
/// `focus`; the path from `focus` to the old root is reversed and every other
/// edge is kept. `focus`'s new child list is `[prev, parent, next]` followed by
/// its original children.
pub fn transfer_tree(tree: &ImageTree, focus: usize) -> Result<ImageTree> {
    if focus >= tree.len() {
        return Err(Error::UnknownImage(format!("#{focus}")));
    }
    if focus == tree.root {
        return Ok(tree.clone());
    }
    let mut children = tree.children.clone();
    let parent = tree.parent[focus];

    let siblings = &tree.children[parent];
    let pos = siblings.iter().position(|&c| c == focus).expect("focus is a child of its parent");
    let prev = pos.checked_sub(1).map(|p| siblings[p]);
    let next = siblings.get(pos + 1).copied();
    children[parent].retain(|&c| c != focus && Some(c) != prev && Some(c) != next);

    // Reverse the path parent -> ... -> old root.
    let mut node = parent;
    while node != tree.root {
        let up = tree.parent[node];
        children[up].retain(|&c| c != node);
        children[node].push(up);
        node = up;
    }

    let mut focus_children: Vec<usize> = prev.into_iter().chain([parent]).chain(next).collect();
    focus_children.extend(&tree.children[focus]);
    children[focus] = focus_children;

    ImageTree::from_children(focus, children, tree.num_properties)
}

/// Thresholds for [`is_unbalanced`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceParams {
    /// Largest root-child subtree share of the non-root nodes that still
    /// counts as balanced.
    pub max_branch_fraction: f64,
    /// Allowed depth beyond `F`.
    pub extra_depth: usize,
}

impl Default for BalanceParams {
    fn default() -> Self {
        Self {
            max_branch_fraction: 0.8,
            extra_depth: 2,
        }
    }
}

pub fn is_unbalanced(tree: &ImageTree, params: &BalanceParams) -> bool {
    if tree.len() < 3 {
        return false;
    }
    if tree.depth() > tree.num_properties + params.extra_depth {
        return true;
    }
    let root_children = tree.children(tree.root);
    if root_children.len() < 2 {
        return false;
    }
    let largest = root_children.iter().map(|&c| tree.subtree_size(c)).max().unwrap_or(0);
    largest as f64 > params.max_branch_fraction * (tree.len() - 1) as f64
}

/// Transfers the tree to `focus` and, when the result is unbalanced, rebuilds
/// it from scratch with `focus` as root over `order` (the original insertion
/// array). Returns the tree and whether the rebuild path was taken.
pub fn transfer_or_rebuild(
    tree: &ImageTree,
    focus: usize,
    items: &[ImageItem],
    order: &[usize],
    schema: &PropertySchema,
    balance: &BalanceParams,
) -> Result<(ImageTree, bool)> {
    let transferred = transfer_tree(tree, focus)?;
    if is_unbalanced(&transferred, balance) {
        let rest: Vec<usize> = order.iter().copied().filter(|&i| i != focus).collect();
        Ok((build_tree(items, &rest, focus, schema), true))
    } else {
        Ok((transferred, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Histogram, PropertyDescriptor, PropertyValue};

    fn tag_item(id: &str, tags: &[&str]) -> ImageItem {
        ImageItem::new(id, 100.0, 100.0, tags.iter().map(|t| PropertyValue::tag(*t)).collect()).unwrap()
    }

    fn tag_schema(n: usize) -> PropertySchema {
        PropertySchema::new(
            (0..n)
                .map(|i| PropertyDescriptor::new(format!("p{i}"), PropertyKind::Semantic))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn order_single_item() {
        let items = vec![tag_item("a", &["x"])];
        assert_eq!(order_collection(&items, &tag_schema(1)), vec![0]);
    }

    #[test]
    fn order_sorts_tags_then_ids() {
        let items = vec![tag_item("c", &["logo"]), tag_item("b", &["fruit"]), tag_item("a", &["fruit"])];
        let order = order_collection(&items, &tag_schema(1));
        let ids: Vec<&str> = order.iter().map(|&i| items[i].id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);

        let mut permuted = items.clone();
        permuted.rotate_left(1);
        let order2 = order_collection(&permuted, &tag_schema(1));
        let ids2: Vec<&str> = order2.iter().map(|&i| permuted[i].id.as_str()).collect();
        assert_eq!(ids, ids2);
    }

    #[test]
    fn order_breaks_ties_by_mean_histogram_similarity() {
        let schema = PropertySchema::new(vec![
            PropertyDescriptor::new("cat", PropertyKind::Semantic),
            PropertyDescriptor::new("color", PropertyKind::Visual),
        ])
        .unwrap();
        let item = |id: &str, bins: [f64; 2]| {
            ImageItem::new(
                id,
                1.0,
                1.0,
                vec![PropertyValue::tag("x"), PropertyValue::Histogram(Histogram::new(bins.to_vec()).unwrap())],
            )
            .unwrap()
        };
        // Mean histogram is [0.5, 0.5]; "z" is closest to it.
        let items = vec![item("a", [1.0, 0.0]), item("z", [0.5, 0.5]), item("m", [0.0, 1.0])];
        let order = order_collection(&items, &schema);
        let ids: Vec<&str> = order.iter().map(|&i| items[i].id.as_str()).collect();
        assert_eq!(ids, ["z", "a", "m"]);
    }

    #[test]
    fn root_is_rarest_tag() {
        let items = vec![
            tag_item("a", &["fruit"]),
            tag_item("b", &["fruit"]),
            tag_item("c", &["logo"]),
            tag_item("d", &["fruit"]),
        ];
        let schema = tag_schema(1);
        let order = order_collection(&items, &schema);
        assert_eq!(select_root(&items, &order, &schema), 2);

        let same = vec![tag_item("q", &["x"]), tag_item("b", &["x"]), tag_item("k", &["x"])];
        let order = order_collection(&same, &schema);
        assert_eq!(same[select_root(&same, &order, &schema)].id, "b");

        let one = vec![tag_item("only", &["x"])];
        assert_eq!(select_root(&one, &[0], &schema), 0);
    }

    #[test]
    fn root_for_visual_first_property() {
        let schema = PropertySchema::new(vec![PropertyDescriptor::new("c", PropertyKind::Visual)]).unwrap();
        let item = |id: &str, bins: [f64; 2]| {
            ImageItem::new(id, 1.0, 1.0, vec![PropertyValue::Histogram(Histogram::new(bins.to_vec()).unwrap())]).unwrap()
        };
        let items = vec![item("a", [0.9, 0.1]), item("b", [0.8, 0.2]), item("c", [0.0, 1.0])];
        assert_eq!(select_root(&items, &[0, 1, 2], &schema), 2);
    }

    #[test]
    fn build_root_plus_one() {
        let items = vec![tag_item("r", &["a"]), tag_item("x", &["a"])];
        let tree = build_tree(&items, &[0, 1], 0, &tag_schema(1));
        assert_eq!(tree.parent(1), 0);
        assert_eq!(tree.level(1), 1);
        tree.validate().unwrap();
    }

    #[test]
    fn build_follows_branching_example() {
        // root logo, apple (fruit), cellphone (electronic), second fruit.
        let red = Histogram::new(vec![0.9, 0.1]).unwrap();
        let schema = PropertySchema::new(vec![
            PropertyDescriptor::new("object", PropertyKind::Semantic),
            PropertyDescriptor::new("color", PropertyKind::Visual),
        ])
        .unwrap();
        let item = |id: &str, tag: &str, h: &Histogram| {
            ImageItem::new(id, 1.0, 1.0, vec![PropertyValue::tag(tag), PropertyValue::Histogram(h.clone())]).unwrap()
        };
        let items = vec![
            item("logo", "logo", &red),
            item("apple", "fruit", &red),
            item("phone", "electronic", &red),
            item("apple2", "fruit", &red),
        ];
        let tree = build_tree(&items, &[0, 1, 2, 3], 0, &schema);
        assert_eq!((tree.parent(1), tree.level(1)), (0, 1));
        assert_eq!((tree.parent(2), tree.level(2)), (0, 1));
        assert_eq!((tree.parent(3), tree.level(3)), (1, 2));
    }

    #[test]
    fn build_caps_at_max_level() {
        let items: Vec<_> = (0..4).map(|i| tag_item(&format!("i{i}"), &["a", "b"])).collect();
        let tree = build_tree(&items, &[0, 1, 2, 3], 0, &tag_schema(2));
        assert_eq!(tree.levels(), &[0, 1, 2, 3]);
        assert_eq!(tree.max_level(), 3);
        assert_eq!(tree.parent(3), 2);
    }

    #[test]
    fn transfer_identity_on_root() {
        let tree = ImageTree::from_parents(vec![0, 0, 1], 1).unwrap();
        assert_eq!(transfer_tree(&tree, 0).unwrap(), tree);
    }

    #[test]
    fn transfer_chain() {
        // root(0) -> A(1) -> B(2)
        let tree = ImageTree::from_parents(vec![0, 0, 1], 1).unwrap();
        let t = transfer_tree(&tree, 1).unwrap();
        assert_eq!(t.root(), 1);
        assert_eq!(t.children(1), &[0, 2]);
        assert_eq!(t.levels(), &[1, 0, 1]);
        t.validate().unwrap();
    }

    #[test]
    fn transfer_star() {
        // root(0) with A(1), B(2), C(3)
        let tree = ImageTree::from_parents(vec![0, 0, 0, 0], 1).unwrap();
        let t = transfer_tree(&tree, 2).unwrap();
        assert_eq!(t.root(), 2);
        assert_eq!(t.children(2), &[1, 0, 3]);
        assert!(t.children(0).is_empty());
        let back = transfer_tree(&t, 0).unwrap();
        assert_eq!(back.edges(), tree.edges());
        assert_eq!(back.root(), 0);
    }

    #[test]
    fn transfer_reverses_path_to_root() {
        // 0 -> 1 -> 2 -> 3, plus 1 -> 4
        let tree = ImageTree::from_parents(vec![0, 0, 1, 2, 1], 3).unwrap();
        let t = transfer_tree(&tree, 3).unwrap();
        assert_eq!(t.root(), 3);
        assert_eq!(t.parent(2), 3);
        assert_eq!(t.parent(1), 2);
        assert_eq!(t.parent(0), 1);
        assert_eq!(t.parent(4), 1);
        t.validate().unwrap();
    }

    #[test]
    fn transfer_unknown_focus() {
        let tree = ImageTree::from_parents(vec![0, 0], 1).unwrap();
        assert!(matches!(transfer_tree(&tree, 7), Err(Error::UnknownImage(_))));
    }

    #[test]
    fn balance_detector() {
        let params = BalanceParams::default();
        // Balanced binary tree over 7 nodes.
        let binary = ImageTree::from_parents(vec![0, 0, 0, 1, 1, 2, 2], 2).unwrap();
        assert!(!is_unbalanced(&binary, &params));
        // Chain of 10 nodes, F = 2.
        let chain = ImageTree::from_parents((0..10).map(|i: usize| i.saturating_sub(1)).collect(), 2).unwrap();
        assert_eq!(chain.depth(), 9);
        assert!(is_unbalanced(&chain, &params));
        // Root with subtrees of size 9 and 1.
        let mut parents = vec![0, 0, 0];
        parents.extend(std::iter::repeat(1).take(8));
        let skewed = ImageTree::from_parents(parents, 2).unwrap();
        assert_eq!(skewed.subtree_size(1), 9);
        assert!(is_unbalanced(&skewed, &params));
    }

    #[test]
    fn from_parents_rejects_cycles() {
        assert!(ImageTree::from_parents(vec![0, 2, 1], 1).is_err());
        assert!(ImageTree::from_parents(vec![1, 0], 1).is_err());
        assert!(ImageTree::from_parents(vec![0, 1], 1).is_err());
    }

    #[test]
    fn subtree_sizes_agree() {
        let tree = ImageTree::from_parents(vec![0, 0, 1, 2, 1], 3).unwrap();
        let sizes = tree.subtree_sizes();
        for i in 0..tree.len() {
            assert_eq!(sizes[i], tree.subtree_size(i));
        }
        assert_eq!(tree.branch_of(3), Some(1));
        assert_eq!(tree.branch_of(0), None);
    }
}
