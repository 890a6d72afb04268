//! Label arithmetic for the rendezvous tree over a linear order `0..n`.
//!
//! Leaves use doubled labels (vertex `i` is label `2i`). A node at height
//! `h` has a label with exactly `h` trailing one bits and children
//! `label ± 2^(h-1)`. The node with index `j` at height `h` covers leaves
//! `j 2^h .. (j + 1) 2^h` and has label `2^(h+1) j + 2^h - 1`. All queries
//! are O(1) shift/mask work; no tree is stored.

/// Label in the doubled-label space.
pub type NodeLabel = u64;

/// Number of levels above the leaves, `ceil(lg n)` (0 for `n <= 1`).
#[inline]
pub fn max_height(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

#[inline]
pub fn height(label: NodeLabel) -> u32 {
    label.trailing_ones()
}

/// Doubled label of leaf `i`.
#[inline]
pub fn leaf_label(i: usize) -> NodeLabel {
    2 * i as NodeLabel
}

/// Label of the ancestor of leaf `i` at height `h`.
#[inline]
pub fn ancestor(i: usize, h: u32) -> NodeLabel {
    let i = i as NodeLabel;
    ((i >> h) << (h + 1)) + (1 << h) - 1
}

/// Label of the lowest node whose small child covers `i` and large child
/// covers `j` (`i < j`), or the leaf itself when `i == j`.
#[inline]
pub fn rendezvous(i: usize, j: usize) -> NodeLabel {
    debug_assert!(i <= j);
    if i == j {
        return leaf_label(i);
    }
    let h = usize::BITS - (i ^ j).leading_zeros();
    ancestor(i, h)
}

/// Index of a node within its height (its position left to right).
#[inline]
pub fn index_in_level(label: NodeLabel) -> usize {
    (label >> (height(label) + 1)) as usize
}

/// Number of nodes at height `h` for `n` leaves, `ceil(n / 2^h)`.
#[inline]
pub fn level_len(n: usize, h: u32) -> usize {
    n.div_ceil(1 << h)
}

/// Whether `label` is a node of the tree over `n` leaves.
pub fn exists(label: NodeLabel, n: usize) -> bool {
    let h = height(label);
    h <= max_height(n) && index_in_level(label) < level_len(n, h)
}

/// Parent label, or `None` at the root.
pub fn parent(label: NodeLabel, n: usize) -> Option<NodeLabel> {
    let h = height(label);
    if h >= max_height(n) {
        return None;
    }
    Some(((label >> (h + 2)) << (h + 2)) + (1 << (h + 1)) - 1)
}

/// Small and large child of an internal node. The large child is absent
/// when it would cover no leaf, which happens exactly when the parent label
/// exceeds `2n - 2`.
pub fn children(label: NodeLabel, n: usize) -> (NodeLabel, Option<NodeLabel>) {
    let h = height(label);
    assert!(h >= 1, "leaf {label} has no children");
    let half = 1 << (h - 1);
    let large = (label + 1 < 2 * n as NodeLabel).then_some(label + half);
    (label - half, large)
}

/// Leaves covered by a node, as a half-open index range clipped to `n`.
pub fn cover(label: NodeLabel, n: usize) -> std::ops::Range<usize> {
    let h = height(label);
    let start = index_in_level(label) << h;
    start.min(n)..((start + (1 << h)).min(n))
}
