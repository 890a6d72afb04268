#![allow(dead_code)]

use linf_isotonic::reference::{constructive_feasibility, Comparability, OrderSpec};
use linf_isotonic::{IsotonicFit, WeightedObservation};
use linf_isotonic::model::{check_isotonic, max_weighted_error};
use rand::rngs::StdRng;
use rand::Rng;

pub fn random_data(rng: &mut StdRng, n: usize) -> Vec<WeightedObservation> {
    (0..n)
        .map(|_| {
            let y = rng.gen_range(-10.0..=10.0);
            let w = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.1..=10.0) };
            WeightedObservation { y, w }
        })
        .collect()
}

/// Random parent array: vertex 0 is the root, others pick an earlier parent.
/// Labels are then shuffled so the root is not always vertex 0.
pub fn random_tree(rng: &mut StdRng, n: usize) -> Vec<Option<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let mut parent = vec![None; n];
    for i in 1..n {
        // mix of deep paths and bushy nodes
        let p = if rng.gen_bool(0.3) { i - 1 } else { rng.gen_range(0..i) };
        parent[perm[i]] = Some(perm[p]);
    }
    parent
}

pub fn random_points(rng: &mut StdRng, n: usize, d: usize) -> Vec<Vec<f64>> {
    // small coordinate ranges produce ties and duplicates
    let range = rng.gen_range(2..=n.max(2) as i32);
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(0..range) as f64 * 0.5).collect())
        .collect()
}

/// Checks a fast fit against the oracle; returns a description of the first problem.
pub fn check_fit(data: &[WeightedObservation], order: &OrderSpec, fit: &IsotonicFit, brute: f64) -> Result<(), String> {
    if (fit.epsilon - brute).abs() > 1e-9 * (1.0 + brute) {
        return Err(format!("epsilon {} vs brute {}", fit.epsilon, brute));
    }
    let cmp = Comparability::new(order, data.len()).map_err(|e| e.to_string())?;
    if !check_isotonic(&fit.values, cmp.pairs()) {
        return Err("fit not isotonic".into());
    }
    let err = max_weighted_error(data, &fit.values);
    if err > fit.epsilon + 1e-9 {
        return Err(format!("fit error {err} exceeds epsilon {}", fit.epsilon));
    }
    let want = constructive_feasibility(data, order, brute).map_err(|e| e.to_string())?;
    for (i, (a, b)) in fit.values.iter().zip(&want.values).enumerate() {
        if (a - b).abs() > 1e-9 * (1.0 + b.abs()) {
            return Err(format!("value {i}: {a} vs minimal {b}"));
        }
    }
    Ok(())
}
