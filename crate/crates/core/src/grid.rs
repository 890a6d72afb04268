//! Isotonic regression on d-dimensional grids.
//!
//! The rendezvous structure is the product of the one-dimensional trees: a
//! node is a tuple of labels, one per dimension, and its height is the
//! largest coordinate height. Going down a level, every coordinate of
//! positive height steps to one of its 1D children while leaf coordinates
//! stay put, so a node has up to `2^p` children (`p` positive coordinates).
//! The small child takes every small 1D child, the large child every large
//! one. A comparable pair `u ⪯ v` meets at the node whose coordinates are
//! the per-dimension rendezvous labels.
//!
//! Nodes are grouped into *blocks* sharing the same tuple of coordinate
//! heights. Inside a block the node index is the row-major index of the
//! per-dimension level positions, so child indices are plain arithmetic.

use std::collections::HashMap;

use crate::engine::{trim_pool, EnvArena, Recorder};
use crate::envelope::{crossing, inverse_key, merge_lines, prune_lines, Crossing, Line};
use crate::error::{IsoError, Result};
use crate::model::{h_value, settle_values, upper_cap, validate, Bracket, IsotonicFit, WeightedObservation};
use crate::rendezvous::{level_len, max_height, NodeLabel};
use crate::trace::{LevelRecord, Trace};

const ABSENT: u32 = u32::MAX;

/// Median tests per level for a `d`-dimensional grid, `ceil(lg(6 (2^d - 1)))`.
pub fn grid_rounds(d: usize) -> usize {
    let k = 6 * ((1usize << d) - 1);
    (usize::BITS - (k - 1).leading_zeros()) as usize
}

/// Side lengths of a grid; vertices are indexed row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridShape {
    dims: Vec<usize>,
}

impl GridShape {
    /// Every side must be at least 2.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(IsoError::InvalidShape("no dimensions".into()));
        }
        if let Some(&bad) = dims.iter().find(|&&n| n < 2) {
            return Err(IsoError::InvalidShape(format!("side {bad} is below 2")));
        }
        let total = dims
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .filter(|&t| t < ABSENT as usize / (1 << dims.len()))
            .ok_or_else(|| IsoError::InvalidShape(format!("{dims:?} is too large")))?;
        debug_assert!(total > 0);
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn d(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn strides(&self) -> Vec<usize> {
        row_major_strides(&self.dims)
    }

    pub fn coords_of(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.d()];
        for (c, &n) in out.iter_mut().zip(&self.dims).rev() {
            *c = index % n;
            index /= n;
        }
        out
    }

    pub fn index_of(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.dims).fold(0, |acc, (&c, &n)| acc * n + c)
    }
}

fn row_major_strides(extents: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; extents.len()];
    for i in (0..extents.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * extents[i + 1];
    }
    strides
}

#[derive(Debug, Clone)]
struct Block {
    heights: Vec<u32>,
    extents: Vec<usize>,
    strides: Vec<usize>,
    offset: usize,
    len: usize,
}

/// All nodes of one height with their children in the level below.
#[derive(Debug, Clone, Default)]
pub struct ProductLevel {
    height: u32,
    blocks: Vec<Block>,
    len: usize,
    child_start: Vec<u32>,
    child_list: Vec<u32>,
    small: Vec<u32>,
    large: Vec<u32>,
}

impl ProductLevel {
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    fn children(&self, node: usize) -> &[u32] {
        &self.child_list[self.child_start[node] as usize..self.child_start[node + 1] as usize]
    }

    #[inline]
    fn large(&self, node: usize) -> Option<usize> {
        let l = self.large[node];
        (l != ABSENT).then_some(l as usize)
    }
}

/// One product node, materialized for inspection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductNode {
    pub coords: Vec<NodeLabel>,
    pub height: u32,
    /// Indices into the level below.
    pub children: Vec<usize>,
    pub small_child: Option<usize>,
    pub large_child: Option<usize>,
}

/// The product rendezvous graph of a grid shape. Data independent.
#[derive(Debug, Clone)]
pub struct ProductGraph {
    shape: GridShape,
    levels: Vec<ProductLevel>,
    block_of: HashMap<Vec<u32>, (usize, usize)>,
}

impl ProductGraph {
    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn levels(&self) -> &[ProductLevel] {
        &self.levels
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(|l| l.len).sum()
    }

    /// Locates the node with these coordinate labels as `(height, index)`.
    pub fn find(&self, coords: &[NodeLabel]) -> Option<(usize, usize)> {
        let heights: Vec<u32> = coords.iter().map(|&l| l.trailing_ones()).collect();
        let &(h, b) = self.block_of.get(&heights)?;
        let block = &self.levels[h].blocks[b];
        let mut local = 0;
        for (i, &label) in coords.iter().enumerate() {
            let j = (label >> (heights[i] + 1)) as usize;
            if j >= block.extents[i] {
                return None;
            }
            local += j * block.strides[i];
        }
        Some((h, block.offset + local))
    }

    /// Materializes node `index` of level `h`.
    pub fn node(&self, h: usize, index: usize) -> ProductNode {
        let level = &self.levels[h];
        let block = level
            .blocks
            .iter()
            .rfind(|b| b.offset <= index)
            .expect("index within level");
        let mut local = index - block.offset;
        let mut coords = vec![0; block.heights.len()];
        for i in 0..coords.len() {
            let j = local / block.strides[i];
            local %= block.strides[i];
            let k = block.heights[i];
            coords[i] = ((j as NodeLabel) << (k + 1)) + (1 << k) - 1;
        }
        let (children, small_child, large_child) = if h == 0 {
            (Vec::new(), None, None)
        } else {
            (
                level.children(index).iter().map(|&c| c as usize).collect(),
                Some(level.small[index] as usize),
                level.large(index),
            )
        };
        ProductNode {
            coords,
            height: level.height,
            children,
            small_child,
            large_child,
        }
    }

    /// Vertex index ranges covered by a node, one per dimension.
    pub fn cover(&self, h: usize, index: usize) -> Vec<std::ops::Range<usize>> {
        let node = self.node(h, index);
        node.coords
            .iter()
            .zip(self.shape.dims())
            .map(|(&l, &n)| crate::rendezvous::cover(l, n))
            .collect()
    }
}

/// Builds every level of the product graph.
pub fn build_product_graph(shape: &GridShape) -> ProductGraph {
    let dims = shape.dims();
    let d = dims.len();
    let tops: Vec<u32> = dims.iter().map(|&n| max_height(n)).collect();
    let top = tops.iter().copied().max().unwrap_or(0);

    let mut levels: Vec<ProductLevel> = (0..=top)
        .map(|h| ProductLevel {
            height: h,
            ..ProductLevel::default()
        })
        .collect();
    let mut block_of = HashMap::new();
    let mut heights = vec![0u32; d];
    loop {
        let h = heights.iter().copied().max().unwrap_or(0);
        let extents: Vec<usize> = heights.iter().zip(dims).map(|(&k, &n)| level_len(n, k)).collect();
        let len = extents.iter().product();
        let level = &mut levels[h as usize];
        block_of.insert(heights.clone(), (h as usize, level.blocks.len()));
        level.blocks.push(Block {
            heights: heights.clone(),
            strides: row_major_strides(&extents),
            extents,
            offset: level.len,
            len,
        });
        level.len += len;
        // odometer over height tuples
        let mut i = d;
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            if heights[i] < tops[i] {
                heights[i] += 1;
                break;
            }
            heights[i] = 0;
        }
        if heights.iter().all(|&k| k == 0) {
            break;
        }
    }

    for h in 1..levels.len() {
        let (below, rest) = levels.split_at_mut(h);
        let below = &below[h - 1];
        let level = &mut rest[0];
        level.child_start.reserve(level.len + 1);
        level.child_start.push(0);
        let mut j = vec![0usize; d];
        let mut deltas = Vec::with_capacity(d);
        for block in &level.blocks {
            let child_heights: Vec<u32> = block.heights.iter().map(|&k| k.saturating_sub(1)).collect();
            let (_, cb) = block_of[&child_heights];
            let child = &below.blocks[cb];
            j.iter_mut().for_each(|x| *x = 0);
            for _ in 0..block.len {
                let mut base = child.offset;
                let mut large_step = 0;
                let mut has_large = true;
                deltas.clear();
                for i in 0..d {
                    if block.heights[i] > 0 {
                        base += 2 * j[i] * child.strides[i];
                        if 2 * j[i] + 1 < child.extents[i] {
                            deltas.push(child.strides[i]);
                            large_step += child.strides[i];
                        } else {
                            has_large = false;
                        }
                    } else {
                        base += j[i] * child.strides[i];
                    }
                }
                for mask in 0..1usize << deltas.len() {
                    let off: usize = (0..deltas.len()).filter(|b| mask >> b & 1 == 1).map(|b| deltas[b]).sum();
                    level.child_list.push((base + off) as u32);
                }
                level.child_start.push(level.child_list.len() as u32);
                level.small.push(base as u32);
                level.large.push(if has_large { (base + large_step) as u32 } else { ABSENT });
                for i in (0..d).rev() {
                    j[i] += 1;
                    if j[i] < block.extents[i] {
                        break;
                    }
                    j[i] = 0;
                }
            }
        }
    }

    ProductGraph {
        shape: shape.clone(),
        levels,
        block_of,
    }
}

struct GridRun<'g> {
    graph: &'g ProductGraph,
    height: usize,
    down: EnvArena,
    up: EnvArena,
    next_down: EnvArena,
    next_up: EnvArena,
    bracket: Bracket,
    pool: Vec<f64>,
    acc: Vec<Line>,
    tmp: Vec<Line>,
    scalars: [Vec<f64>; 4],
}

impl<'g> GridRun<'g> {
    fn new(graph: &'g ProductGraph, data: &[WeightedObservation]) -> Self {
        let mut down = EnvArena::default();
        let mut up = EnvArena::default();
        for o in data {
            let pos = o.w > 0.0;
            down.push_with(|out| {
                if pos {
                    out.push(Line {
                        key: o.y,
                        w: o.w,
                        start: f64::NEG_INFINITY,
                    })
                }
            });
            up.push_with(|out| {
                if pos {
                    out.push(Line {
                        key: -o.y,
                        w: o.w,
                        start: f64::NEG_INFINITY,
                    })
                }
            });
        }
        Self {
            graph,
            height: 0,
            down,
            up,
            next_down: EnvArena::default(),
            next_up: EnvArena::default(),
            bracket: Bracket::unbounded(),
            pool: Vec::new(),
            acc: Vec::new(),
            tmp: Vec::new(),
            scalars: Default::default(),
        }
    }

    fn ascend(&mut self, rec: &mut Recorder) {
        let h = self.height + 1;
        let graph = self.graph;
        let level = &graph.levels[h];
        self.next_down.clear();
        self.next_up.clear();
        for node in 0..level.len {
            if let Some(l) = level.large(node) {
                let s = level.small[node] as usize;
                if let Crossing::At { error, .. } = crossing(self.down.get(s), self.up.get(l), self.bracket.low()) {
                    if self.bracket.raise_low(error) {
                        rec.bracket(&self.bracket);
                    }
                }
            }
            let kids = level.children(node);
            for (src, dst) in [(&self.down, &mut self.next_down), (&self.up, &mut self.next_up)] {
                self.acc.clear();
                for &c in kids {
                    self.tmp.clear();
                    merge_lines(&self.acc, src.get(c as usize), &mut self.tmp);
                    prune_lines(&mut self.tmp, 0, &self.bracket);
                    std::mem::swap(&mut self.acc, &mut self.tmp);
                }
                let acc = &self.acc;
                dst.push_with(|out| out.extend_from_slice(acc));
            }
        }
        std::mem::swap(&mut self.down, &mut self.next_down);
        std::mem::swap(&mut self.up, &mut self.next_up);
        self.height = h;
        self.pool.clear();
        self.down.collect_endpoints(&self.bracket, &mut self.pool);
        self.up.collect_endpoints(&self.bracket, &mut self.pool);
    }

    fn trim(&mut self, rounds: usize, rec: &mut Recorder) {
        let nodes = self.down.len();
        let pool_before = self.pool.len();
        let segments_merged = self.down.segments() + self.up.segments();
        let Self {
            graph,
            height,
            down,
            up,
            bracket,
            pool,
            scalars,
            ..
        } = self;
        let (graph, height, down, up) = (*graph, *height, &*down, &*up);
        let done = trim_pool(
            pool,
            bracket,
            rounds,
            nodes,
            |delta| grid_test(graph, height, down, up, delta, scalars),
            height,
            rec,
        );
        self.down.prune_all(&self.bracket);
        self.up.prune_all(&self.bracket);
        if rec.enabled() {
            rec.level(LevelRecord {
                scope: 0,
                height: self.height,
                nodes,
                segments_merged,
                segments_pruned: self.down.segments() + self.up.segments(),
                pool_before,
                pool_after: self.pool.len(),
                pool_budget: nodes,
                rounds: done,
            });
        }
    }
}

fn grid_test(graph: &ProductGraph, height: usize, down: &EnvArena, up: &EnvArena, delta: f64, s: &mut [Vec<f64>; 4]) -> bool {
    let [d, u, nd, nu] = s;
    d.clear();
    u.clear();
    d.extend((0..down.len()).map(|i| inverse_key(down.get(i), delta)));
    u.extend((0..up.len()).map(|i| -inverse_key(up.get(i), delta)));
    for level in &graph.levels[height + 1..] {
        nd.clear();
        nu.clear();
        for node in 0..level.len {
            if let Some(l) = level.large(node) {
                if d[level.small[node] as usize] > u[l] {
                    return false;
                }
            }
            let (mut dm, mut um) = (f64::NEG_INFINITY, f64::INFINITY);
            for &c in level.children(node) {
                dm = dm.max(d[c as usize]);
                um = um.min(u[c as usize]);
            }
            nd.push(dm);
            nu.push(um);
        }
        std::mem::swap(d, nd);
        std::mem::swap(u, nu);
    }
    true
}

/// Largest violation over the grid's domination order.
pub fn grid_max_violation(graph: &ProductGraph, data: &[WeightedObservation], trace: Option<&mut Trace>) -> f64 {
    let mut rec = Recorder::new(trace);
    let rounds = grid_rounds(graph.shape.d());
    let mut run = GridRun::new(graph, data);
    rec.bracket(&run.bracket);
    while run.height + 1 < graph.levels.len() {
        run.ascend(&mut rec);
        run.trim(rounds, &mut rec);
    }
    run.bracket.low()
}

/// Smallest isotonic grid function within `eps`, by a row-major sweep over
/// each vertex's immediate predecessors.
pub fn construct_grid_fit(data: &[WeightedObservation], shape: &GridShape, eps: f64) -> Result<IsotonicFit> {
    let n = shape.len();
    if data.len() != n {
        return Err(IsoError::LengthMismatch {
            expected: n,
            actual: data.len(),
        });
    }
    let dims = shape.dims();
    let strides = shape.strides();
    let mut lower = Vec::with_capacity(n);
    let mut top_y = Vec::with_capacity(n);
    let mut coords = vec![0usize; dims.len()];
    for (v, o) in data.iter().enumerate() {
        let (mut g, mut gy) = (h_value(*o, eps), o.y);
        for i in 0..dims.len() {
            if coords[i] > 0 {
                g = g.max(lower[v - strides[i]]);
                gy = gy.max(top_y[v - strides[i]]);
            }
        }
        lower.push(g);
        top_y.push(gy);
        for i in (0..dims.len()).rev() {
            coords[i] += 1;
            if coords[i] < dims[i] {
                break;
            }
            coords[i] = 0;
        }
    }
    let caps: Vec<f64> = data.iter().map(|o| upper_cap(*o, eps)).collect();
    let values = settle_values(lower, &top_y, &caps, eps)?;
    Ok(IsotonicFit { values, epsilon: eps })
}

/// Optimal L-infinity isotonic regression on a grid, row-major data.
pub fn solve_grid(data: &[WeightedObservation], shape: &GridShape) -> Result<IsotonicFit> {
    solve_grid_traced(data, shape, None)
}

pub fn solve_grid_traced(data: &[WeightedObservation], shape: &GridShape, trace: Option<&mut Trace>) -> Result<IsotonicFit> {
    validate(data)?;
    if data.len() != shape.len() {
        return Err(IsoError::LengthMismatch {
            expected: shape.len(),
            actual: data.len(),
        });
    }
    let graph = build_product_graph(shape);
    let eps = grid_max_violation(&graph, data, trace);
    construct_grid_fit(data, shape, eps)
}
