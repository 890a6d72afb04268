//! Level-by-level rendezvous engine for a linear order.
//!
//! Leaves sit at height 0 of the rendezvous tree. Going up one height, each
//! node first intersects the downward envelope of its small child with the
//! upward envelope of its large child (every pair of leaves meets at exactly
//! one node), then takes the union of both children's envelopes. The
//! segment-boundary errors of the new level are pooled and repeatedly
//! bisected with pairwise feasibility tests until the pool fits the level's
//! budget; finally every envelope is pruned to the narrowed bracket.
//!
//! The same engine runs over whole sequences (every leaf is both a
//! predecessor and a successor) and over rendezvous lines of the point
//! solver, where each leaf is only a predecessor, only a successor, or both.

use crate::envelope::{build_lines, crossing, inverse_key, merge_lines, prune_range, push_endpoints, Crossing, Direction, Line};
use crate::error::Result;
use crate::model::{h_value, settle_values, upper_cap, validate, Bracket, IsotonicFit, WeightedObservation};
use crate::rendezvous::{level_len, max_height};
use crate::trace::{LevelRecord, TestRecord, Trace};

/// Median tests per level for linear runs.
pub const LINEAR_ROUNDS: usize = 3;

/// Which envelopes a leaf contributes on its line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Predecessor only: downward envelope.
    Small,
    /// Successor only: upward envelope.
    Large,
    Both,
}

impl Role {
    #[inline]
    pub fn is_small(self) -> bool {
        matches!(self, Role::Small | Role::Both)
    }

    #[inline]
    pub fn is_large(self) -> bool {
        matches!(self, Role::Large | Role::Both)
    }
}

/// One leaf of a run: the observations at that position and its role.
///
/// A position normally holds one observation; the point solver fuses
/// identical coordinates into one leaf holding several.
#[derive(Debug, Clone, Copy)]
pub struct LeafSeed<'a> {
    pub members: &'a [WeightedObservation],
    pub role: Role,
}

impl<'a> LeafSeed<'a> {
    pub fn new(obs: &'a WeightedObservation, role: Role) -> Self {
        Self {
            members: std::slice::from_ref(obs),
            role,
        }
    }

    pub fn group(members: &'a [WeightedObservation], role: Role) -> Self {
        Self { members, role }
    }
}

/// Hands scalar test outcomes and level summaries to an optional [`Trace`].
pub(crate) struct Recorder<'t> {
    trace: Option<&'t mut Trace>,
    pub scope: usize,
}

impl<'t> Recorder<'t> {
    pub fn new(trace: Option<&'t mut Trace>) -> Self {
        Self { trace, scope: 0 }
    }

    #[inline]
    pub fn enabled(&self) -> bool {
        self.trace.is_some()
    }

    pub fn test(&mut self, height: usize, delta: f64, passed: bool) {
        let scope = self.scope;
        if let Some(t) = self.trace.as_deref_mut() {
            t.tests.push(TestRecord {
                scope,
                height,
                delta,
                passed,
            });
        }
    }

    pub fn bracket(&mut self, b: &Bracket) {
        let scope = self.scope;
        if let Some(t) = self.trace.as_deref_mut() {
            t.bracket.push((scope, b.low(), b.high()));
        }
    }

    pub fn level(&mut self, mut rec: LevelRecord) {
        rec.scope = self.scope;
        if let Some(t) = self.trace.as_deref_mut() {
            t.levels.push(rec);
        }
    }

    pub fn trace(&mut self) -> Option<&mut Trace> {
        self.trace.as_deref_mut()
    }
}

/// Envelopes of one level stored back to back.
#[derive(Debug, Clone, Default)]
pub(crate) struct EnvArena {
    lines: Vec<Line>,
    spans: Vec<(u32, u32)>,
}

impl EnvArena {
    pub fn clear(&mut self) {
        self.lines.clear();
        self.spans.clear();
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[Line] {
        let (s, e) = self.spans[i];
        &self.lines[s as usize..e as usize]
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn segments(&self) -> usize {
        self.lines.len()
    }

    #[inline]
    pub fn push_with(&mut self, fill: impl FnOnce(&mut Vec<Line>)) {
        let start = self.lines.len();
        fill(&mut self.lines);
        self.spans.push((start as u32, self.lines.len() as u32));
    }

    /// Merge of two envelopes from `src` (or a copy of one), pruned to `window`.
    #[inline]
    pub fn push_merged(&mut self, src: &EnvArena, a: usize, b: Option<usize>, window: &Bracket) {
        self.push_with(|out| {
            let base = out.len();
            match b {
                Some(b) => merge_lines(src.get(a), src.get(b), out),
                None => out.extend_from_slice(src.get(a)),
            }
            let keep = prune_range(&out[base..], window);
            out.truncate(base + keep.end);
            out.drain(base..base + keep.start);
        });
    }

    pub fn collect_endpoints(&self, window: &Bracket, pool: &mut Vec<f64>) {
        for i in 0..self.len() {
            push_endpoints(self.get(i), window, pool);
        }
    }

    /// Prunes every envelope in place.
    pub fn prune_all(&mut self, window: &Bracket) {
        let mut write = 0usize;
        for k in 0..self.spans.len() {
            let (s, e) = self.spans[k];
            let (s, e) = (s as usize, e as usize);
            let keep = prune_range(&self.lines[s..e], window);
            let len = keep.len();
            self.lines.copy_within(s + keep.start..s + keep.end, write);
            self.spans[k] = (write as u32, (write + len) as u32);
            write += len;
        }
        self.lines.truncate(write);
    }
}

/// Halves the endpoint pool with median tests until `rounds` are spent and
/// the pool fits `budget`. Returns the number of tests run.
pub(crate) fn trim_pool(
    pool: &mut Vec<f64>,
    bracket: &mut Bracket,
    rounds: usize,
    budget: usize,
    mut test: impl FnMut(f64) -> bool,
    height: usize,
    rec: &mut Recorder,
) -> usize {
    pool.retain(|&t| bracket.contains_open(t));
    let mut done = 0;
    while !pool.is_empty() && (done < rounds || pool.len() > budget) {
        let mid = pool.len() / 2;
        let (_, &mut delta, _) = pool.select_nth_unstable_by(mid, f64::total_cmp);
        let passed = test(delta);
        rec.test(height, delta, passed);
        if passed {
            bracket.lower_high(delta);
        } else {
            bracket.raise_low(delta);
        }
        rec.bracket(bracket);
        pool.retain(|&t| bracket.contains_open(t));
        done += 1;
    }
    done
}

/// State of one run at its current height: per-node envelopes, the bracket
/// and the pool of endpoint errors collected at this height.
#[derive(Debug, Clone, Default)]
pub struct LevelState {
    height: u32,
    leaves: usize,
    down: EnvArena,
    up: EnvArena,
    next_down: EnvArena,
    next_up: EnvArena,
    bracket: Bracket,
    pool: Vec<f64>,
    scratch_d: Vec<f64>,
    scratch_u: Vec<f64>,
}

impl LevelState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads height-0 envelopes for a new run, reusing buffers.
    pub fn seed(&mut self, leaves: &[LeafSeed], bracket: Bracket) {
        self.height = 0;
        self.leaves = leaves.len();
        self.bracket = bracket;
        self.pool.clear();
        self.down.clear();
        self.up.clear();
        for leaf in leaves {
            let members = leaf.members;
            self.down.push_with(|out| {
                if leaf.role.is_small() {
                    seed_lines(members, Direction::Down, out);
                }
            });
            self.up.push_with(|out| {
                if leaf.role.is_large() {
                    seed_lines(members, Direction::Up, out);
                }
            });
        }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn top(&self) -> u32 {
        max_height(self.leaves)
    }

    pub fn node_count(&self) -> usize {
        self.down.len()
    }

    pub fn segment_count(&self) -> usize {
        self.down.segments() + self.up.segments()
    }

    pub fn bracket(&self) -> Bracket {
        self.bracket
    }

    pub fn pool(&self) -> &[f64] {
        &self.pool
    }

    /// Builds the next height: extracts each node's rendezvous error,
    /// merges children and collects the endpoint pool.
    pub(crate) fn ascend(&mut self, rec: &mut Recorder) {
        let below = self.down.len();
        let h = self.height + 1;
        let count = level_len(self.leaves, h);
        self.next_down.clear();
        self.next_up.clear();
        for j in 0..count {
            let s = 2 * j;
            let l = (s + 1 < below).then_some(s + 1);
            if let Some(l) = l {
                if let Crossing::At { error, .. } = crossing(self.down.get(s), self.up.get(l), self.bracket.low()) {
                    if self.bracket.raise_low(error) {
                        rec.bracket(&self.bracket);
                    }
                }
            }
            self.next_down.push_merged(&self.down, s, l, &self.bracket);
            self.next_up.push_merged(&self.up, s, l, &self.bracket);
        }
        std::mem::swap(&mut self.down, &mut self.next_down);
        std::mem::swap(&mut self.up, &mut self.next_up);
        self.height = h;
        self.pool.clear();
        self.down.collect_endpoints(&self.bracket, &mut self.pool);
        self.up.collect_endpoints(&self.bracket, &mut self.pool);
    }

    /// Whether every rendezvous error above the current height is at most
    /// `delta`. Errors at or below the current height are already folded
    /// into the bracket, so `delta` below its floor fails outright.
    pub fn pairwise_feasibility_test(&mut self, delta: f64) -> bool {
        if delta < self.bracket.low() {
            return false;
        }
        pairwise_test(&self.down, &self.up, self.leaves, self.height, delta, &mut self.scratch_d, &mut self.scratch_u)
    }

    /// Runs `rounds` median tests (more if the pool still exceeds one
    /// endpoint per node), then prunes every envelope to the bracket.
    pub fn trim_to_budget(&mut self, rounds: usize) -> usize {
        self.trim_recorded(rounds, &mut Recorder::new(None))
    }

    pub(crate) fn trim_recorded(&mut self, rounds: usize, rec: &mut Recorder) -> usize {
        let budget = self.node_count();
        let pool_before = self.pool.len();
        let segments_merged = self.segment_count();
        let Self {
            down,
            up,
            leaves,
            height,
            bracket,
            pool,
            scratch_d,
            scratch_u,
            ..
        } = self;
        let (down, up, leaves, height) = (&*down, &*up, *leaves, *height);
        let done = trim_pool(
            pool,
            bracket,
            rounds,
            budget,
            |delta| pairwise_test(down, up, leaves, height, delta, scratch_d, scratch_u),
            height as usize,
            rec,
        );
        self.prune();
        if rec.enabled() {
            rec.level(LevelRecord {
                scope: 0,
                height: self.height as usize,
                nodes: budget,
                segments_merged,
                segments_pruned: self.segment_count(),
                pool_before,
                pool_after: self.pool.len(),
                pool_budget: budget,
                rounds: done,
            });
        }
        done
    }

    pub fn prune(&mut self) {
        self.down.prune_all(&self.bracket);
        self.up.prune_all(&self.bracket);
    }

    /// Full run: ascend to the root, trimming at every height.
    pub(crate) fn run(&mut self, rounds: usize, rec: &mut Recorder) -> f64 {
        let top = self.top();
        while self.height < top {
            self.ascend(rec);
            self.trim_recorded(rounds, rec);
        }
        self.bracket.low()
    }
}

#[inline]
fn seed_lines(members: &[WeightedObservation], dir: Direction, out: &mut Vec<Line>) {
    match members {
        [one] => {
            if one.w > 0.0 {
                let key = match dir {
                    Direction::Down => one.y,
                    Direction::Up => -one.y,
                };
                out.push(Line {
                    key,
                    w: one.w,
                    start: f64::NEG_INFINITY,
                });
            }
        }
        many => build_lines(many.iter().copied(), dir, out),
    }
}

fn pairwise_test(
    down: &EnvArena,
    up: &EnvArena,
    leaves: usize,
    height: u32,
    delta: f64,
    d: &mut Vec<f64>,
    u: &mut Vec<f64>,
) -> bool {
    let count = down.len();
    d.clear();
    u.clear();
    d.extend((0..count).map(|i| inverse_key(down.get(i), delta)));
    u.extend((0..count).map(|i| -inverse_key(up.get(i), delta)));
    let mut below = count;
    for h in height + 1..=max_height(leaves) {
        let here = level_len(leaves, h);
        for j in 0..here {
            let s = 2 * j;
            if s + 1 < below {
                let l = s + 1;
                if d[s] > u[l] {
                    return false;
                }
                d[j] = d[s].max(d[l]);
                u[j] = u[s].min(u[l]);
            } else {
                d[j] = d[s];
                u[j] = u[s];
            }
        }
        below = here;
    }
    true
}

/// Largest violation among `(u, v)` with `u` before `v`, `u` small and `v`
/// large, or the incoming floor if nothing exceeds it.
pub fn max_violation(leaves: &[LeafSeed], bracket: Bracket) -> f64 {
    let mut state = LevelState::new();
    state.seed(leaves, bracket);
    state.run(LINEAR_ROUNDS, &mut Recorder::new(None))
}

/// [`max_violation`] with reusable buffers and instrumentation.
pub(crate) fn max_violation_in(state: &mut LevelState, leaves: &[LeafSeed], bracket: Bracket, rec: &mut Recorder) -> f64 {
    state.seed(leaves, bracket);
    rec.bracket(&bracket);
    state.run(LINEAR_ROUNDS, rec)
}

/// Smallest isotonic sequence within error `eps`: the running maximum of
/// the lower limits.
pub fn construct_prefix_fit(data: &[WeightedObservation], eps: f64) -> Result<IsotonicFit> {
    let mut lower = Vec::with_capacity(data.len());
    let mut top_y = Vec::with_capacity(data.len());
    let (mut g, mut gy) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for o in data {
        g = g.max(h_value(*o, eps));
        gy = gy.max(o.y);
        lower.push(g);
        top_y.push(gy);
    }
    let caps: Vec<f64> = data.iter().map(|o| upper_cap(*o, eps)).collect();
    let values = settle_values(lower, &top_y, &caps, eps)?;
    Ok(IsotonicFit { values, epsilon: eps })
}

/// Optimal L-infinity isotonic regression of a sequence, in linear time.
pub fn solve_linear(data: &[WeightedObservation]) -> Result<IsotonicFit> {
    solve_linear_traced(data, None)
}

pub fn solve_linear_traced(data: &[WeightedObservation], trace: Option<&mut Trace>) -> Result<IsotonicFit> {
    validate(data)?;
    let leaves: Vec<LeafSeed> = data.iter().map(|o| LeafSeed::new(o, Role::Both)).collect();
    let mut rec = Recorder::new(trace);
    let mut state = LevelState::new();
    let eps = max_violation_in(&mut state, &leaves, Bracket::unbounded(), &mut rec);
    drop(leaves);
    construct_prefix_fit(data, eps)
}
