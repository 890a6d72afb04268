//! The `--stats` document.

use linf_isotonic::{binarize, build_merge_plan, Trace};
use serde::Serialize;

use crate::problem::{Problem, Structure};

#[derive(Debug, Serialize)]
pub struct LevelStats {
    pub scope: usize,
    pub height: usize,
    pub nodes: usize,
    pub segments_merged: usize,
    pub segments_pruned: usize,
    pub pool_before: usize,
    pub pool_after: usize,
    pub pool_budget: usize,
    pub rounds: usize,
}

#[derive(Debug, Serialize)]
pub struct TestStats {
    pub count: usize,
    pub passed: usize,
    pub failed: usize,
}

/// One bracket change. `high` is `null` while unbounded.
#[derive(Debug, Serialize)]
pub struct BracketStep {
    pub scope: usize,
    pub low: f64,
    pub high: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Stats {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub levels: Vec<LevelStats>,
    pub tests: TestStats,
    pub bracket: Vec<BracketStep>,
    /// Whether every scope's lower bound only ever went up.
    pub low_nondecreasing: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sort_passes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lines: Option<usize>,
    /// Node counts of the tree merge plan, one per level.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merge_level_sizes: Option<Vec<usize>>,
}

pub fn stats_report(problem: &Problem, trace: &Trace, seed: Option<u64>) -> Stats {
    let levels = trace
        .levels
        .iter()
        .map(|r| LevelStats {
            scope: r.scope,
            height: r.height,
            nodes: r.nodes,
            segments_merged: r.segments_merged,
            segments_pruned: r.segments_pruned,
            pool_before: r.pool_before,
            pool_after: r.pool_after,
            pool_budget: r.pool_budget,
            rounds: r.rounds,
        })
        .collect();
    let passed = trace.tests.iter().filter(|t| t.passed).count();
    let mut last_low = std::collections::HashMap::new();
    let mut low_nondecreasing = true;
    for &(scope, low, _) in &trace.bracket {
        let prev = last_low.insert(scope, low).unwrap_or(f64::NEG_INFINITY);
        low_nondecreasing &= low >= prev;
    }
    let is_points = matches!(problem.structure, Structure::Points(_));
    Stats {
        n: problem.len(),
        seed,
        levels,
        tests: TestStats {
            count: trace.tests.len(),
            passed,
            failed: trace.tests.len() - passed,
        },
        bracket: trace
            .bracket
            .iter()
            .map(|&(scope, low, high)| BracketStep {
                scope,
                low,
                high: high.is_finite().then_some(high),
            })
            .collect(),
        low_nondecreasing,
        sort_passes: is_points.then_some(trace.sort_passes),
        lines: is_points.then_some(trace.lines),
        merge_level_sizes: match &problem.structure {
            Structure::Tree(tree) => Some(build_merge_plan(&binarize(tree).tree).level_sizes()),
            _ => None,
        },
    }
}
