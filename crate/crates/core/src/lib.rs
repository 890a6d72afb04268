//! Weighted L-infinity isotonic regression.
//!
//! Given values `y` and nonnegative weights `w` on the vertices of a partial
//! order, find an order-preserving `f` minimizing `max w(v) |y(v) - f(v)|`.
//! Solvers are provided for linear orders, d-dimensional grids, rooted trees
//! (ordered toward the root) and point sets under domination. All of them
//! return the optimal error together with the pointwise smallest optimal fit.
//!
//! ```
//! use linf_isotonic::{solve_linear, WeightedObservation};
//!
//! let data: Vec<_> = [4.0, 1.0, 3.0].into_iter().map(WeightedObservation::unit).collect();
//! let fit = solve_linear(&data).unwrap();
//! assert_eq!(fit.epsilon, 1.5);
//! assert_eq!(fit.values, vec![2.5, 2.5, 2.5]);
//! ```
//!
//! The [`reference`] module holds quadratic solvers used as test oracles.

pub mod engine;
pub mod envelope;
pub mod error;
pub mod grid;
pub mod model;
pub mod points;
pub mod reference;
pub mod rendezvous;
pub mod trace;
pub mod tree;

pub use engine::{construct_prefix_fit, max_violation, solve_linear, solve_linear_traced, LeafSeed, LevelState, Role};
pub use envelope::{BoundedEnvelope, Crossing, Direction, Ray, Segment};
pub use error::{IsoError, Result};
pub use grid::{build_product_graph, solve_grid, solve_grid_traced, GridShape};
pub use model::{
    check_isotonic, max_weighted_error, mean_and_err, mean_err, observations, Bracket, IsotonicFit,
    WeightedObservation, CAP_TOLERANCE,
};
pub use points::{normalize_coordinates, solve_points, solve_points_traced, solve_raw_points, PointSet};
pub use reference::OrderSpec;
pub use trace::Trace;
pub use tree::{binarize, build_merge_plan, solve_tree, solve_tree_traced, RootedTree};
