//! Isotonic regression on rooted trees, ordered toward the root.
//!
//! The tree is first made binary by replacing every vertex with `k > 2`
//! children by a comb of `k - 1` copies. A data-independent plan then
//! contracts the binary tree level by level. Each level runs two stages:
//!
//! 1. every node with exactly one child merges with its parent if its depth
//!    is odd and with its child if its depth is even (decided from the depths
//!    before the stage, all at once);
//! 2. every leaf merges into its parent.
//!
//! Either way a merge *group* is a star: a center node plus up to two of its
//! children (the members). A node of the contracted tree is a connected
//! vertex set `S`. It keeps the downward envelope of `S` and, for each
//! *boundary vertex* (a vertex of `S` with a child outside `S`), the upward
//! envelope of the path from the top of `S` to that vertex. The pairs that
//! meet when a member joins its center are exactly (vertex of the member,
//! vertex on the center's path to the member's attachment point), so one
//! envelope intersection per member extracts them all.

use crate::engine::{trim_pool, EnvArena, Recorder};
use crate::envelope::{crossing, inverse_key, merge_lines, prune_lines, Crossing, Line};
use crate::error::{IsoError, Result};
use crate::model::{h_value, settle_values, upper_cap, validate, Bracket, IsotonicFit, WeightedObservation};
use crate::trace::{LevelRecord, Trace};

/// Median tests per level.
pub const TREE_ROUNDS: usize = 3;

/// A rooted tree given by parent links. The order runs toward the root:
/// every vertex precedes its ancestors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedTree {
    parent: Vec<Option<usize>>,
    root: usize,
    child_start: Vec<usize>,
    child_list: Vec<usize>,
    order: Vec<usize>,
}

impl RootedTree {
    /// Validates the parent array: one root, links in range, no cycles.
    pub fn new(parent: Vec<Option<usize>>) -> Result<Self> {
        let n = parent.len();
        if n == 0 {
            return Err(IsoError::Empty);
        }
        let mut root = None;
        let mut counts = vec![0usize; n + 1];
        for (v, p) in parent.iter().enumerate() {
            match *p {
                None if root.is_some() => return Err(IsoError::InvalidTree("more than one root".into())),
                None => root = Some(v),
                Some(p) if p >= n => return Err(IsoError::InvalidTree(format!("parent {p} of vertex {v} is out of range"))),
                Some(p) if p == v => return Err(IsoError::InvalidTree(format!("vertex {v} is its own parent"))),
                Some(p) => counts[p + 1] += 1,
            }
        }
        let root = root.ok_or_else(|| IsoError::InvalidTree("no root (parent links form a cycle)".into()))?;
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let child_start = counts.clone();
        let mut child_list = vec![0; n - 1];
        let mut fill = counts;
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                child_list[fill[p]] = v;
                fill[p] += 1;
            }
        }
        let mut order = Vec::with_capacity(n);
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            order.extend_from_slice(&child_list[child_start[v]..child_start[v + 1]]);
        }
        if order.len() != n {
            return Err(IsoError::InvalidTree("parent links contain a cycle".into()));
        }
        Ok(Self {
            parent,
            root,
            child_start,
            child_list,
            order,
        })
    }

    /// Parent array with `-1` (or any negative value) marking the root.
    pub fn from_signed(parent: &[i64]) -> Result<Self> {
        Self::new(parent.iter().map(|&p| usize::try_from(p).ok()).collect())
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

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.child_list[self.child_start[v]..self.child_start[v + 1]]
    }

    /// Breadth-first order from the root; parents precede children.
    pub fn bfs_order(&self) -> &[usize] {
        &self.order
    }
}

/// A binary tree whose vertices `0..n` are the original vertices and whose
/// extra vertices are copies standing in for a high-degree original.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binarized {
    pub tree: RootedTree,
    /// Original vertex behind each binary vertex.
    pub origin: Vec<usize>,
}

impl Binarized {
    /// Binary vertex at the top of the comb representing original vertex `v`.
    pub fn representative(&self, v: usize) -> usize {
        v
    }
}

/// Replaces each vertex with `k > 2` children by a comb of `k - 1` copies.
pub fn binarize(tree: &RootedTree) -> Binarized {
    let n = tree.len();
    let mut parent = tree.parents().to_vec();
    let mut origin: Vec<usize> = (0..n).collect();
    for v in 0..n {
        let kids = tree.children(v);
        let k = kids.len();
        if k <= 2 {
            continue;
        }
        let mut spine = v;
        for (i, &c) in kids.iter().enumerate() {
            parent[c] = Some(spine);
            if i + 2 < k {
                let copy = parent.len();
                parent.push(Some(spine));
                origin.push(v);
                spine = copy;
            }
        }
    }
    Binarized {
        tree: RootedTree::new(parent).expect("comb replacement keeps a tree"),
        origin,
    }
}

/// Where a merged node's boundary entry comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntrySource {
    /// The center's entry, unchanged.
    Center(u8),
    /// `(member, entry)`: a member entry extended upward by the center's path to that member.
    Member(u8, u8),
}

/// One contraction stage: a merge group per resulting node.
#[derive(Debug, Clone, Default)]
pub struct Stage {
    before: usize,
    center: Vec<u32>,
    member_start: Vec<u32>,
    /// `(member node, center entry it attaches to)`
    members: Vec<(u32, u8)>,
    entry_start: Vec<u32>,
    entries: Vec<EntrySource>,
    entry_vertex: Vec<usize>,
    top: Vec<usize>,
}

impl Stage {
    /// Node count before the stage.
    pub fn before(&self) -> usize {
        self.before
    }

    /// Node count after the stage.
    pub fn after(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self, group: usize) -> usize {
        self.center[group] as usize
    }

    pub fn members(&self, group: usize) -> &[(u32, u8)] {
        &self.members[self.member_start[group] as usize..self.member_start[group + 1] as usize]
    }

    pub fn entries(&self, group: usize) -> &[EntrySource] {
        &self.entries[self.entry_start[group] as usize..self.entry_start[group + 1] as usize]
    }

    /// Boundary vertices of node `group` after the stage.
    pub fn boundary(&self, group: usize) -> &[usize] {
        &self.entry_vertex[self.entry_start[group] as usize..self.entry_start[group + 1] as usize]
    }

    /// Top vertex of node `group` after the stage.
    pub fn top(&self, group: usize) -> usize {
        self.top[group]
    }
}

/// One member joining its center.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeEvent {
    pub level: usize,
    pub stage: usize,
    /// Node ids before the stage.
    pub child_node: usize,
    pub parent_node: usize,
    /// Boundary vertex of the parent node the child hangs from.
    pub attach_vertex: usize,
}

/// Data-independent contraction schedule of a binary tree.
#[derive(Debug, Clone)]
pub struct MergePlan {
    initial_entry_start: Vec<u32>,
    initial_entry_vertex: Vec<usize>,
    stages: Vec<Stage>,
    /// Stage index range of each level.
    levels: Vec<std::ops::Range<usize>>,
}

#[derive(Debug, Clone, Copy, Default)]
struct BuildNode {
    parent: Option<u32>,
    attach: u8,
    children: [u32; 2],
    n_children: u8,
    entries: [(usize, u32); 2],
    n_entries: u8,
    top: usize,
}

impl BuildNode {
    fn children(&self) -> &[u32] {
        &self.children[..self.n_children as usize]
    }

    fn entries(&self) -> &[(usize, u32)] {
        &self.entries[..self.n_entries as usize]
    }

    fn add_child(&mut self, c: u32) {
        assert!(self.n_children < 2, "contracted tree lost binarity");
        self.children[self.n_children as usize] = c;
        self.n_children += 1;
    }

    fn add_entry(&mut self, vertex: usize, outside: u32) -> u8 {
        assert!(self.n_entries < 2, "more than two boundary vertices");
        self.entries[self.n_entries as usize] = (vertex, outside);
        self.n_entries += 1;
        self.n_entries - 1
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Step {
    SingleChild,
    Leaves,
}

fn contract(nodes: &[BuildNode], step: Step) -> Option<(Stage, Vec<BuildNode>)> {
    let m = nodes.len();
    let mut depth = vec![0u32; m];
    for x in 0..m {
        if let Some(p) = nodes[x].parent {
            depth[x] = depth[p as usize] + 1;
        }
    }
    let single = |x: usize| nodes[x].n_children == 1;
    let center: Vec<u32> = (0..m)
        .map(|x| match nodes[x].parent {
            Some(p) => {
                let joins = match step {
                    Step::SingleChild => depth[x] % 2 == 1 && (single(x) || single(p as usize)),
                    Step::Leaves => nodes[x].n_children == 0,
                };
                if joins {
                    p
                } else {
                    x as u32
                }
            }
            None => x as u32,
        })
        .collect();
    if center.iter().enumerate().all(|(x, &c)| c as usize == x) {
        return None;
    }

    let mut stage = Stage {
        before: m,
        member_start: vec![0],
        entry_start: vec![0],
        ..Stage::default()
    };
    let mut new_id = vec![u32::MAX; m];
    // new entry index for each old (node, entry)
    let mut entry_map = vec![[u8::MAX; 2]; m];
    let mut out: Vec<BuildNode> = Vec::new();
    for x in 0..m {
        if center[x] as usize != x {
            continue;
        }
        let id = out.len() as u32;
        new_id[x] = id;
        let node = &nodes[x];
        let members: Vec<u32> = node.children().iter().copied().filter(|&c| center[c as usize] as usize == x).collect();
        let mut merged = BuildNode {
            top: node.top,
            ..BuildNode::default()
        };
        for (e, &(vertex, outside)) in node.entries().iter().enumerate() {
            let absorbed = members.iter().filter(|&&c| nodes[c as usize].attach as usize == e).count() as u32;
            if outside > absorbed {
                entry_map[x][e] = merged.add_entry(vertex, outside - absorbed);
                stage.entries.push(EntrySource::Center(e as u8));
                stage.entry_vertex.push(vertex);
            }
        }
        for (k, &c) in members.iter().enumerate() {
            new_id[c as usize] = id;
            let member = &nodes[c as usize];
            stage.members.push((c, member.attach));
            for (e, &(vertex, outside)) in member.entries().iter().enumerate() {
                entry_map[c as usize][e] = merged.add_entry(vertex, outside);
                stage.entries.push(EntrySource::Member(k as u8, e as u8));
                stage.entry_vertex.push(vertex);
            }
        }
        stage.center.push(x as u32);
        stage.member_start.push(stage.members.len() as u32);
        stage.entry_start.push(stage.entries.len() as u32);
        stage.top.push(merged.top);
        out.push(merged);
    }
    for y in 0..m {
        if center[y] as usize != y {
            continue;
        }
        if let Some(p) = nodes[y].parent {
            let (np, attach) = (new_id[p as usize], entry_map[p as usize][nodes[y].attach as usize]);
            debug_assert_ne!(attach, u8::MAX);
            let id = new_id[y];
            out[id as usize].parent = Some(np);
            out[id as usize].attach = attach;
            out[np as usize].add_child(id);
        }
    }
    Some((stage, out))
}

/// Builds the contraction schedule for a binary tree.
pub fn build_merge_plan(tree: &RootedTree) -> MergePlan {
    let n = tree.len();
    // relabel so that parents precede children
    let order = tree.bfs_order();
    let mut rank = vec![0u32; n];
    for (i, &v) in order.iter().enumerate() {
        rank[v] = i as u32;
    }
    let mut nodes = vec![BuildNode::default(); n];
    let mut initial_entry_start = vec![0u32];
    let mut initial_entry_vertex = Vec::new();
    for (i, &v) in order.iter().enumerate() {
        let node = &mut nodes[i];
        node.top = v;
        if let Some(p) = tree.parent(v) {
            node.parent = Some(rank[p]);
        }
        let kids = tree.children(v);
        assert!(kids.len() <= 2, "merge plans need a binary tree");
        for &c in kids {
            node.add_child(rank[c]);
        }
        if !kids.is_empty() {
            node.add_entry(v, kids.len() as u32);
            initial_entry_vertex.push(v);
        }
        initial_entry_start.push(initial_entry_vertex.len() as u32);
    }
    let mut stages = Vec::new();
    let mut levels = Vec::new();
    while nodes.len() > 1 {
        let first = stages.len();
        for step in [Step::SingleChild, Step::Leaves] {
            if let Some((stage, next)) = contract(&nodes, step) {
                stages.push(stage);
                nodes = next;
            }
        }
        levels.push(first..stages.len());
    }
    MergePlan {
        initial_entry_start,
        initial_entry_vertex,
        stages,
        levels,
    }
}

impl MergePlan {
    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Stage ranges, one per level.
    pub fn levels(&self) -> &[std::ops::Range<usize>] {
        &self.levels
    }

    /// Node count before the first level and after every level.
    pub fn level_sizes(&self) -> Vec<usize> {
        let initial = self.initial_entry_start.len() - 1;
        std::iter::once(initial)
            .chain(self.levels.iter().map(|r| self.stages[r.end - 1].after()))
            .collect()
    }

    /// Initial node `i` is the `i`-th vertex in breadth-first order.
    pub fn initial_boundary(&self, node: usize) -> &[usize] {
        &self.initial_entry_vertex[self.initial_entry_start[node] as usize..self.initial_entry_start[node + 1] as usize]
    }

    fn entry_start(&self, stage: usize) -> &[u32] {
        if stage == 0 {
            &self.initial_entry_start
        } else {
            &self.stages[stage - 1].entry_start
        }
    }

    /// Boundary vertices of node `node` before stage `stage`.
    pub fn boundary_before(&self, stage: usize, node: usize) -> &[usize] {
        if stage == 0 {
            self.initial_boundary(node)
        } else {
            self.stages[stage - 1].boundary(node)
        }
    }

    /// Every member-to-center merge in schedule order.
    pub fn events(&self) -> Vec<MergeEvent> {
        let mut out = Vec::new();
        for (level, range) in self.levels.iter().enumerate() {
            for s in range.clone() {
                let stage = &self.stages[s];
                for g in 0..stage.after() {
                    let c = stage.center(g);
                    for &(m, a) in stage.members(g) {
                        out.push(MergeEvent {
                            level,
                            stage: s,
                            child_node: m as usize,
                            parent_node: c,
                            attach_vertex: self.boundary_before(s, c)[a as usize],
                        });
                    }
                }
            }
        }
        out
    }
}

struct TreeRun<'p> {
    plan: &'p MergePlan,
    stage: usize,
    denv: EnvArena,
    uenv: EnvArena,
    next_denv: EnvArena,
    next_uenv: EnvArena,
    bracket: Bracket,
    pool: Vec<f64>,
    acc: Vec<Line>,
    tmp: Vec<Line>,
    scalars: [Vec<f64>; 4],
}

impl<'p> TreeRun<'p> {
    fn new(plan: &'p MergePlan, order: &[usize], data: &[WeightedObservation]) -> Self {
        let mut denv = EnvArena::default();
        let mut uenv = EnvArena::default();
        for (i, &v) in order.iter().enumerate() {
            let o = data[v];
            let line = |key| Line {
                key,
                w: o.w,
                start: f64::NEG_INFINITY,
            };
            denv.push_with(|out| {
                if o.w > 0.0 {
                    out.push(line(o.y))
                }
            });
            for _ in plan.initial_boundary(i) {
                uenv.push_with(|out| {
                    if o.w > 0.0 {
                        out.push(line(-o.y))
                    }
                });
            }
        }
        Self {
            plan,
            stage: 0,
            denv,
            uenv,
            next_denv: EnvArena::default(),
            next_uenv: EnvArena::default(),
            bracket: Bracket::unbounded(),
            pool: Vec::new(),
            acc: Vec::new(),
            tmp: Vec::new(),
            scalars: Default::default(),
        }
    }

    fn merge_into(&mut self, sources: &[(bool, usize)], to_next_denv: bool) {
        self.acc.clear();
        for &(from_denv, idx) in sources {
            let src = if from_denv { &self.denv } else { &self.uenv };
            self.tmp.clear();
            merge_lines(&self.acc, src.get(idx), &mut self.tmp);
            prune_lines(&mut self.tmp, 0, &self.bracket);
            std::mem::swap(&mut self.acc, &mut self.tmp);
        }
        let acc = &self.acc;
        let dst = if to_next_denv { &mut self.next_denv } else { &mut self.next_uenv };
        dst.push_with(|out| out.extend_from_slice(acc));
    }

    fn apply_stage(&mut self, rec: &mut Recorder) {
        let plan = self.plan;
        let s = self.stage;
        let stage = &plan.stages[s];
        let starts = plan.entry_start(s);
        self.next_denv.clear();
        self.next_uenv.clear();
        let mut sources: Vec<(bool, usize)> = Vec::with_capacity(3);
        for g in 0..stage.after() {
            let c = stage.center(g);
            let members = stage.members(g);
            for &(m, a) in members {
                let path = starts[c] as usize + a as usize;
                if let Crossing::At { error, .. } = crossing(self.denv.get(m as usize), self.uenv.get(path), self.bracket.low()) {
                    if self.bracket.raise_low(error) {
                        rec.bracket(&self.bracket);
                    }
                }
            }
            sources.clear();
            sources.push((true, c));
            sources.extend(members.iter().map(|&(m, _)| (true, m as usize)));
            self.merge_into(&sources, true);
            for &src in stage.entries(g) {
                sources.clear();
                match src {
                    EntrySource::Center(e) => sources.push((false, starts[c] as usize + e as usize)),
                    EntrySource::Member(k, e) => {
                        let (m, a) = members[k as usize];
                        sources.push((false, starts[c] as usize + a as usize));
                        sources.push((false, starts[m as usize] as usize + e as usize));
                    }
                }
                self.merge_into(&sources, false);
            }
        }
        std::mem::swap(&mut self.denv, &mut self.next_denv);
        std::mem::swap(&mut self.uenv, &mut self.next_uenv);
        self.stage += 1;
    }

    fn trim(&mut self, level: usize, rec: &mut Recorder) {
        let nodes = self.denv.len();
        self.pool.clear();
        self.denv.collect_endpoints(&self.bracket, &mut self.pool);
        self.uenv.collect_endpoints(&self.bracket, &mut self.pool);
        let pool_before = self.pool.len();
        let segments_merged = self.denv.segments() + self.uenv.segments();
        let Self {
            plan,
            stage,
            denv,
            uenv,
            bracket,
            pool,
            scalars,
            ..
        } = self;
        let (plan, stage, denv, uenv) = (*plan, *stage, &*denv, &*uenv);
        let done = trim_pool(
            pool,
            bracket,
            TREE_ROUNDS,
            nodes,
            |delta| tree_test(plan, stage, denv, uenv, delta, scalars),
            level,
            rec,
        );
        self.denv.prune_all(&self.bracket);
        self.uenv.prune_all(&self.bracket);
        if rec.enabled() {
            rec.level(LevelRecord {
                scope: 0,
                height: level,
                nodes,
                segments_merged,
                segments_pruned: self.denv.segments() + self.uenv.segments(),
                pool_before,
                pool_after: self.pool.len(),
                pool_budget: nodes,
                rounds: done,
            });
        }
    }
}

/// Simulates the remaining stages with scalar inverses at `delta`.
fn tree_test(plan: &MergePlan, from: usize, denv: &EnvArena, uenv: &EnvArena, delta: f64, s: &mut [Vec<f64>; 4]) -> bool {
    let [d, u, nd, nu] = s;
    d.clear();
    u.clear();
    d.extend((0..denv.len()).map(|i| inverse_key(denv.get(i), delta)));
    u.extend((0..uenv.len()).map(|i| -inverse_key(uenv.get(i), delta)));
    for si in from..plan.stages.len() {
        let stage = &plan.stages[si];
        let starts = plan.entry_start(si);
        nd.clear();
        nu.clear();
        for g in 0..stage.after() {
            let c = stage.center(g);
            let members = stage.members(g);
            let mut dm = d[c];
            for &(m, a) in members {
                if d[m as usize] > u[starts[c] as usize + a as usize] {
                    return false;
                }
                dm = dm.max(d[m as usize]);
            }
            nd.push(dm);
            for &src in stage.entries(g) {
                nu.push(match src {
                    EntrySource::Center(e) => u[starts[c] as usize + e as usize],
                    EntrySource::Member(k, e) => {
                        let (m, a) = members[k as usize];
                        u[starts[c] as usize + a as usize].min(u[starts[m as usize] as usize + e as usize])
                    }
                });
            }
        }
        std::mem::swap(d, nd);
        std::mem::swap(u, nu);
    }
    true
}

/// Largest violation over the ancestor order of a binary tree.
pub fn tree_max_violation(binary: &RootedTree, plan: &MergePlan, data: &[WeightedObservation], trace: Option<&mut Trace>) -> f64 {
    let mut rec = Recorder::new(trace);
    let mut run = TreeRun::new(plan, binary.bfs_order(), data);
    rec.bracket(&run.bracket);
    for (level, range) in plan.levels.iter().enumerate() {
        for _ in range.clone() {
            run.apply_stage(&mut rec);
        }
        run.trim(level + 1, &mut rec);
    }
    run.bracket.low()
}

/// Smallest isotonic function within `eps`: each vertex takes the maximum
/// lower limit over its subtree.
pub fn construct_tree_fit(data: &[WeightedObservation], tree: &RootedTree, eps: f64) -> Result<IsotonicFit> {
    let n = tree.len();
    if data.len() != n {
        return Err(IsoError::LengthMismatch {
            expected: n,
            actual: data.len(),
        });
    }
    let mut lower: Vec<f64> = data.iter().map(|o| h_value(*o, eps)).collect();
    let mut top_y: Vec<f64> = data.iter().map(|o| o.y).collect();
    for &v in tree.bfs_order().iter().rev() {
        if let Some(p) = tree.parent(v) {
            lower[p] = lower[p].max(lower[v]);
            top_y[p] = top_y[p].max(top_y[v]);
        }
    }
    let caps: Vec<f64> = data.iter().map(|o| upper_cap(*o, eps)).collect();
    let values = settle_values(lower, &top_y, &caps, eps)?;
    Ok(IsotonicFit { values, epsilon: eps })
}

/// Optimal L-infinity isotonic regression on a rooted tree.
pub fn solve_tree(tree: &RootedTree, data: &[WeightedObservation]) -> Result<IsotonicFit> {
    solve_tree_traced(tree, data, None)
}

pub fn solve_tree_traced(tree: &RootedTree, data: &[WeightedObservation], trace: Option<&mut Trace>) -> Result<IsotonicFit> {
    validate(data)?;
    if data.len() != tree.len() {
        return Err(IsoError::LengthMismatch {
            expected: tree.len(),
            actual: data.len(),
        });
    }
    let binary = binarize(tree);
    let expanded: Vec<WeightedObservation> = binary.origin.iter().map(|&v| data[v]).collect();
    let plan = build_merge_plan(&binary.tree);
    let eps = tree_max_violation(&binary.tree, &plan, &expanded, trace);
    construct_tree_fit(data, tree, eps)
}
