//! Optional instrumentation of a solve.
//!
//! Solvers take `Option<&mut Trace>`; with `None` nothing is recorded.
//! A *scope* identifies one independent run of the level loop: the whole
//! problem for the linear, grid and tree solvers, or one rendezvous line
//! for the point solver.

/// One level of the level loop after merging, trimming and pruning.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub scope: usize,
    pub height: usize,
    pub nodes: usize,
    /// Essential segments right after merging (pruned to the bracket at that time).
    pub segments_merged: usize,
    /// Essential segments after the final prune of the level.
    pub segments_pruned: usize,
    pub pool_before: usize,
    pub pool_after: usize,
    pub pool_budget: usize,
    pub rounds: usize,
}

/// One pairwise feasibility test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestRecord {
    pub scope: usize,
    pub height: usize,
    pub delta: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub levels: Vec<LevelRecord>,
    pub tests: Vec<TestRecord>,
    /// `(low, high)` after every change, per scope.
    pub bracket: Vec<(usize, f64, f64)>,
    /// Number of sorting passes (point solver only).
    pub sort_passes: usize,
    /// Number of rendezvous lines handed to the engine (point solver only).
    pub lines: usize,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn test_count(&self) -> usize {
        self.tests.len()
    }
}
