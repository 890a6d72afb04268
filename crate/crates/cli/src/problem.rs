//! Input document and its translation into a solver call.

use std::path::Path;

use linf_isotonic::points::{collapse_duplicates, for_each_line, normalize_coordinates, solve_points_traced};
use linf_isotonic::{
    max_weighted_error, observations, solve_grid_traced, solve_linear_traced, solve_tree_traced, GridShape,
    IsotonicFit, OrderSpec, RootedTree, Trace, WeightedObservation,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderKind {
    Linear,
    Grid,
    Tree,
    Points,
}

/// The document as read from disk. Every key but `y` is optional here;
/// [`Problem::from_file`] checks what the order needs.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub order: Option<OrderKind>,
    pub dims: Option<Vec<usize>>,
    pub parent: Option<Vec<i64>>,
    pub coords: Option<Vec<Vec<f64>>>,
    pub y: Vec<f64>,
    pub w: Option<Vec<f64>>,
}

/// Solver-ready structure of a problem.
#[derive(Debug)]
pub enum Structure {
    Linear,
    Grid(GridShape),
    Tree(RootedTree),
    Points(Vec<Vec<f64>>),
}

#[derive(Debug)]
pub struct Problem {
    pub data: Vec<WeightedObservation>,
    pub structure: Structure,
}

/// Grid sides from the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims(pub Vec<usize>);

/// Parses `2x3x4`.
pub fn parse_dims(text: &str) -> Result<Dims, String> {
    text.split(['x', 'X'])
        .map(|s| s.trim().parse::<usize>().map_err(|_| format!("bad grid side {s:?} in {text:?}")))
        .collect::<Result<_, _>>()
        .map(Dims)
}

impl Problem {
    pub fn load(path: &Path, order: Option<OrderKind>, dims: Option<Vec<usize>>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let file: ProblemFile =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::from_file(file, order, dims)
    }

    pub fn from_file(file: ProblemFile, order: Option<OrderKind>, dims: Option<Vec<usize>>) -> Result<Self, CliError> {
        let kind = match (order, file.order) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::Input(format!("--order {a:?} conflicts with order {b:?} in the file")))
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => return Err(CliError::Input("no order given (use --order or the \"order\" key)".into())),
        };
        let w = file.w.unwrap_or_else(|| vec![1.0; file.y.len()]);
        let data = observations(&file.y, &w)?;
        let structure = match kind {
            OrderKind::Linear => Structure::Linear,
            OrderKind::Grid => {
                let dims = match (dims, file.dims) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(CliError::Input(format!("--dims {a:?} conflicts with dims {b:?} in the file")))
                    }
                    (Some(d), _) | (None, Some(d)) => d,
                    (None, None) => return Err(CliError::Input("grid order needs dims".into())),
                };
                let shape = GridShape::new(dims)?;
                if shape.len() != data.len() {
                    return Err(CliError::Input(format!(
                        "grid {:?} holds {} values but y has {}",
                        shape.dims(),
                        shape.len(),
                        data.len()
                    )));
                }
                Structure::Grid(shape)
            }
            OrderKind::Tree => {
                let parent = file.parent.ok_or_else(|| CliError::Input("tree order needs a parent array".into()))?;
                if parent.len() != data.len() {
                    return Err(CliError::Input(format!(
                        "parent has {} entries but y has {}",
                        parent.len(),
                        data.len()
                    )));
                }
                Structure::Tree(RootedTree::from_signed(&parent)?)
            }
            OrderKind::Points => {
                let coords = file.coords.ok_or_else(|| CliError::Input("points order needs coords".into()))?;
                if coords.len() != data.len() {
                    return Err(CliError::Input(format!(
                        "coords has {} points but y has {}",
                        coords.len(),
                        data.len()
                    )));
                }
                // validates dimensions and finiteness
                normalize_coordinates(&coords)?;
                Structure::Points(coords)
            }
        };
        Ok(Self { data, structure })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn order_spec(&self) -> OrderSpec {
        match &self.structure {
            Structure::Linear => OrderSpec::Linear,
            Structure::Grid(shape) => OrderSpec::Grid(shape.dims().to_vec()),
            Structure::Tree(tree) => OrderSpec::Tree(tree.parents().to_vec()),
            Structure::Points(coords) => OrderSpec::Points(coords.clone()),
        }
    }

    pub fn solve(&self, trace: Option<&mut Trace>) -> linf_isotonic::Result<IsotonicFit> {
        match &self.structure {
            Structure::Linear => solve_linear_traced(&self.data, trace),
            Structure::Grid(shape) => solve_grid_traced(&self.data, shape, trace),
            Structure::Tree(tree) => solve_tree_traced(tree, &self.data, trace),
            Structure::Points(coords) => {
                let ps = normalize_coordinates(coords)?;
                solve_points_traced(&ps, &self.data, trace)
            }
        }
    }

    /// Checks a fit before it is written: isotonic over the order and
    /// within `epsilon` of the data. Runs in time close to the solve.
    pub fn check_fit(&self, fit: &IsotonicFit) -> Result<(), String> {
        let v = &fit.values;
        if v.len() != self.len() || v.iter().any(|x| !x.is_finite()) {
            return Err("fit has the wrong length or non-finite values".into());
        }
        let err = max_weighted_error(&self.data, v);
        if err > fit.epsilon + 1e-9 * (1.0 + fit.epsilon) {
            return Err(format!("fit error {err} exceeds epsilon {}", fit.epsilon));
        }
        let isotonic = match &self.structure {
            Structure::Linear => v.windows(2).all(|p| p[0] <= p[1]),
            Structure::Grid(shape) => {
                let strides = shape.strides();
                (0..v.len()).all(|i| {
                    let c = shape.coords_of(i);
                    (0..shape.d()).all(|k| c[k] + 1 >= shape.dims()[k] || v[i] <= v[i + strides[k]])
                })
            }
            Structure::Tree(tree) => (0..v.len()).all(|u| tree.parent(u).is_none_or(|p| v[u] <= v[p])),
            Structure::Points(coords) => points_isotonic(coords, v),
        };
        if isotonic {
            Ok(())
        } else {
            Err("fit is not isotonic".into())
        }
    }
}

/// Isotonicity under domination, using the rendezvous lines: every
/// comparable pair of distinct points shows up on some line with the
/// smaller point first.
fn points_isotonic(coords: &[Vec<f64>], v: &[f64]) -> bool {
    let Ok(ps) = normalize_coordinates(coords) else {
        return false;
    };
    let unit: Vec<WeightedObservation> = v.iter().map(|_| WeightedObservation::unit(0.0)).collect();
    let groups = collapse_duplicates(&ps, &unit);
    let mut value = vec![f64::NAN; groups.len()];
    for (i, &g) in groups.membership.iter().enumerate() {
        if value[g].is_nan() {
            value[g] = v[i];
        } else if value[g] != v[i] {
            return false;
        }
    }
    let Some(squeezed) = groups.points.squeeze() else {
        return true;
    };
    let mut ok = true;
    for_each_line(&squeezed, |line| {
        let mut running = f64::NEG_INFINITY;
        for (&p, role) in line.points.iter().zip(line.roles) {
            let f = value[p as usize];
            if role.is_large() && running > f {
                ok = false;
            }
            if role.is_small() {
                running = running.max(f);
            }
        }
    });
    ok
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_parse() {
        assert_eq!(parse_dims("2x3X4"), Ok(Dims(vec![2, 3, 4])));
        assert_eq!(parse_dims("7"), Ok(Dims(vec![7])));
        assert!(parse_dims("2x").is_err());
        assert!(parse_dims("axb").is_err());
    }

    #[test]
    fn point_check_catches_violations() {
        let coords = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 1.0], vec![1.0, 2.0]];
        assert!(points_isotonic(&coords, &[0.0, 1.0, 1.0, 1.0]));
        // duplicates must agree
        assert!(!points_isotonic(&coords, &[0.0, 1.0, 1.0, 2.0]));
        // (0,0) below (2,1)
        assert!(!points_isotonic(&coords, &[3.0, 4.0, 2.0, 4.0]));
        // incomparable points may go either way
        assert!(points_isotonic(&coords, &[0.0, 5.0, 1.0, 5.0]));
    }

    #[test]
    fn grid_check_uses_neighbours() {
        let file = ProblemFile {
            order: Some(OrderKind::Grid),
            dims: Some(vec![2, 2]),
            parent: None,
            coords: None,
            y: vec![0.0; 4],
            w: None,
        };
        let p = Problem::from_file(file, None, None).unwrap();
        let fit = |values: Vec<f64>| IsotonicFit { values, epsilon: 10.0 };
        assert!(p.check_fit(&fit(vec![0.0, 1.0, 2.0, 3.0])).is_ok());
        assert!(p.check_fit(&fit(vec![0.0, 3.0, 2.0, 1.0])).is_err());
        assert!(p.check_fit(&IsotonicFit { values: vec![0.0, 1.0, 2.0, 3.0], epsilon: 1.0 }).is_err());
    }
}
