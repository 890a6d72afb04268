//! Quadratic reference solvers.
//!
//! Everything here works straight from the comparability predicate: no
//! envelopes, no rendezvous structures. The fast solvers are tested against
//! these and the command line uses them for `--verify`.

use crate::error::{IsoError, Result};
use crate::model::{h_value, mean_err, settle_values, upper_cap, validate, IsotonicFit, WeightedObservation};

/// Largest instance the reference solvers accept.
pub const REFERENCE_CAP: usize = 4096;

/// The partial order over vertices `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub enum OrderSpec {
    Linear,
    /// Row-major grid with these side lengths.
    Grid(Vec<usize>),
    /// Parent of each vertex, `None` for the root; descendants precede ancestors.
    Tree(Vec<Option<usize>>),
    /// One coordinate vector per vertex; domination order.
    Points(Vec<Vec<f64>>),
}

/// Comparability predicate prepared for repeated queries.
#[derive(Debug, Clone)]
pub struct Comparability<'a> {
    order: &'a OrderSpec,
    n: usize,
    // Euler-tour entry/exit times for trees
    tin: Vec<usize>,
    tout: Vec<usize>,
}

impl<'a> Comparability<'a> {
    pub fn new(order: &'a OrderSpec, n: usize) -> Result<Self> {
        let mut tin = Vec::new();
        let mut tout = Vec::new();
        match order {
            OrderSpec::Linear => {}
            OrderSpec::Grid(dims) => {
                let total: usize = dims.iter().product();
                if dims.is_empty() || total != n {
                    return Err(IsoError::InvalidShape(format!("{dims:?} does not hold {n} values")));
                }
            }
            OrderSpec::Tree(parent) => {
                if parent.len() != n {
                    return Err(IsoError::LengthMismatch {
                        expected: n,
                        actual: parent.len(),
                    });
                }
                (tin, tout) = euler_tour(parent)?;
            }
            OrderSpec::Points(coords) => {
                if coords.len() != n {
                    return Err(IsoError::LengthMismatch {
                        expected: n,
                        actual: coords.len(),
                    });
                }
                let d = coords.first().map_or(0, Vec::len);
                if coords.iter().any(|c| c.len() != d) {
                    return Err(IsoError::InvalidPoints("points differ in dimension".into()));
                }
            }
        }
        Ok(Self { order, n, tin, tout })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `u ⪯ v`.
    pub fn precedes(&self, u: usize, v: usize) -> bool {
        match self.order {
            OrderSpec::Linear => u <= v,
            OrderSpec::Grid(dims) => {
                let (mut a, mut b) = (u, v);
                for &side in dims.iter().rev() {
                    if a % side > b % side {
                        return false;
                    }
                    a /= side;
                    b /= side;
                }
                true
            }
            // v is an ancestor of u (or u itself)
            OrderSpec::Tree(_) => self.tin[v] <= self.tin[u] && self.tout[u] <= self.tout[v],
            OrderSpec::Points(coords) => coords[u].iter().zip(&coords[v]).all(|(a, b)| a <= b),
        }
    }

    /// All pairs `(u, v)` with `u ≠ v` and `u ⪯ v`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |u| (0..n).filter(move |&v| v != u && self.precedes(u, v)).map(move |v| (u, v)))
    }
}

fn euler_tour(parent: &[Option<usize>]) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = parent.len();
    let mut children = vec![Vec::new(); n];
    let mut root = None;
    for (v, p) in parent.iter().enumerate() {
        match *p {
            None if root.is_some() => return Err(IsoError::InvalidTree("more than one root".into())),
            None => root = Some(v),
            Some(p) if p >= n => return Err(IsoError::InvalidTree(format!("parent {p} of vertex {v} out of range"))),
            Some(p) => children[p].push(v),
        }
    }
    let root = root.ok_or_else(|| IsoError::InvalidTree("no root".into()))?;
    let (mut tin, mut tout) = (vec![usize::MAX; n], vec![0; n]);
    let mut clock = 0;
    let mut stack = vec![(root, 0usize)];
    tin[root] = clock;
    while let Some((v, k)) = stack.pop() {
        if let Some(&c) = children[v].get(k) {
            stack.push((v, k + 1));
            clock += 1;
            tin[c] = clock;
            stack.push((c, 0));
        } else {
            tout[v] = clock;
        }
    }
    if tin.contains(&usize::MAX) {
        return Err(IsoError::InvalidTree("parent links contain a cycle".into()));
    }
    Ok((tin, tout))
}

fn check_size(data: &[WeightedObservation]) -> Result<()> {
    validate(data)?;
    if data.len() > REFERENCE_CAP {
        return Err(IsoError::TooLarge {
            n: data.len(),
            cap: REFERENCE_CAP,
        });
    }
    Ok(())
}

/// Maximum pair error over all comparable violating pairs, 0 if none.
pub fn brute_epsilon(data: &[WeightedObservation], order: &OrderSpec) -> Result<f64> {
    check_size(data)?;
    let cmp = Comparability::new(order, data.len())?;
    Ok(cmp
        .pairs()
        .filter(|&(u, v)| data[u].y >= data[v].y)
        .map(|(u, v)| mean_err(data[u], data[v]))
        .fold(0.0, f64::max))
}

/// Smallest isotonic function within `eps`, or [`IsoError::Infeasible`].
pub fn constructive_feasibility(data: &[WeightedObservation], order: &OrderSpec, eps: f64) -> Result<IsotonicFit> {
    check_size(data)?;
    let cmp = Comparability::new(order, data.len())?;
    let n = data.len();
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut top_y = vec![f64::NEG_INFINITY; n];
    for v in 0..n {
        for u in 0..n {
            if cmp.precedes(u, v) {
                lower[v] = lower[v].max(h_value(data[u], eps));
                top_y[v] = top_y[v].max(data[u].y);
            }
        }
    }
    let caps: Vec<f64> = data.iter().map(|o| upper_cap(*o, eps)).collect();
    let values = settle_values(lower, &top_y, &caps, eps)?;
    Ok(IsotonicFit { values, epsilon: eps })
}

/// Searches the sorted pair errors for the smallest feasible one.
pub fn reference_solve(data: &[WeightedObservation], order: &OrderSpec) -> Result<IsotonicFit> {
    check_size(data)?;
    let cmp = Comparability::new(order, data.len())?;
    let mut candidates: Vec<f64> = cmp
        .pairs()
        .filter(|&(u, v)| data[u].y >= data[v].y)
        .map(|(u, v)| mean_err(data[u], data[v]))
        .collect();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let (mut lo, mut hi) = (0, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if constructive_feasibility(data, order, candidates[mid]).is_ok() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    constructive_feasibility(data, order, candidates[lo])
}
