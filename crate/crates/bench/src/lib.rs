//! Seeded instance generators shared by the benchmarks.
//!
//! Values follow a rising trend plus noise so the optimum is neither zero
//! nor dominated by a single pair.

use linf_isotonic::{GridShape, PointSet, RootedTree, WeightedObservation};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn observation(rng: &mut StdRng, trend: f64) -> WeightedObservation {
    WeightedObservation {
        y: 20.0 * trend + rng.gen_range(-10.0..10.0),
        w: rng.gen_range(0.1..10.0),
    }
}

pub fn linear_instance(n: usize, seed: u64) -> Vec<WeightedObservation> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n).map(|i| observation(&mut rng, i as f64 / n as f64)).collect()
}

pub fn grid_instance(dims: &[usize], seed: u64) -> (GridShape, Vec<WeightedObservation>) {
    let shape = GridShape::new(dims.to_vec()).expect("valid grid sides");
    let mut rng = StdRng::seed_from_u64(seed);
    let data = (0..shape.len())
        .map(|i| {
            let c = shape.coords_of(i);
            let trend = c.iter().zip(dims).map(|(&x, &n)| x as f64 / n as f64).sum::<f64>() / dims.len() as f64;
            observation(&mut rng, trend)
        })
        .collect();
    (shape, data)
}

/// Random recursive tree with a share of long paths; values grow toward
/// the root.
pub fn tree_instance(n: usize, seed: u64) -> (RootedTree, Vec<WeightedObservation>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut parent = vec![None; n];
    let mut depth = vec![0usize; n];
    for v in 1..n {
        let p = if rng.gen_bool(0.5) { v - 1 } else { rng.gen_range(0..v) };
        parent[v] = Some(p);
        depth[v] = depth[p] + 1;
    }
    let deepest = depth.iter().copied().max().unwrap_or(0).max(1) as f64;
    let data = depth.iter().map(|&d| observation(&mut rng, 1.0 - d as f64 / deepest)).collect();
    (RootedTree::new(parent).expect("valid tree"), data)
}

/// Uniform points in the unit cube, values rising along the diagonal.
pub fn points_instance(n: usize, d: usize, seed: u64) -> (PointSet, Vec<WeightedObservation>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let raw: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
    let data = raw
        .iter()
        .map(|p| observation(&mut rng, p.iter().sum::<f64>() / d as f64))
        .collect();
    (linf_isotonic::normalize_coordinates(&raw).expect("finite coordinates"), data)
}
