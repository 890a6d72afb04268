//! Invariance properties of the optimum, checked on every order type.

use linf_isotonic::reference::{brute_epsilon, OrderSpec};
use linf_isotonic::{solve_grid, solve_linear, solve_raw_points, solve_tree, GridShape, RootedTree, WeightedObservation};
use proptest::prelude::*;

fn solve(order: &OrderSpec, data: &[WeightedObservation]) -> f64 {
    match order {
        OrderSpec::Linear => solve_linear(data),
        OrderSpec::Grid(dims) => solve_grid(data, &GridShape::new(dims.clone()).unwrap()),
        OrderSpec::Tree(parent) => solve_tree(&RootedTree::new(parent.clone()).unwrap(), data),
        OrderSpec::Points(coords) => solve_raw_points(coords, data),
    }
    .unwrap()
    .epsilon
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn observation() -> impl Strategy<Value = WeightedObservation> {
    (-50i32..50, prop_oneof![Just(0.0), 0.1f64..5.0]).prop_map(|(y, w)| WeightedObservation { y: y as f64 * 0.25, w })
}

fn instance() -> impl Strategy<Value = (OrderSpec, Vec<WeightedObservation>)> {
    let linear = (1usize..40).prop_map(|n| (OrderSpec::Linear, n));
    let grid = prop::collection::vec(2usize..5, 1..4).prop_map(|dims| {
        let n = dims.iter().product();
        (OrderSpec::Grid(dims), n)
    });
    let tree = prop::collection::vec(any::<prop::sample::Index>(), 0..40).prop_map(|picks| {
        let mut parent = vec![None];
        for (v, p) in picks.iter().enumerate() {
            parent.push(Some(p.index(v + 1)));
        }
        let n = parent.len();
        (OrderSpec::Tree(parent), n)
    });
    let points = (1usize..4)
        .prop_flat_map(|d| prop::collection::vec(prop::collection::vec(0u8..5, d), 1..30))
        .prop_map(|pts| {
            let n = pts.len();
            let coords = pts.into_iter().map(|p| p.into_iter().map(f64::from).collect()).collect();
            (OrderSpec::Points(coords), n)
        });
    prop_oneof![linear, grid, tree, points].prop_flat_map(|(order, n)| {
        (Just(order), prop::collection::vec(observation(), n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_brute_force((order, data) in instance()) {
        let fast = solve(&order, &data);
        let brute = brute_epsilon(&data, &order).unwrap();
        prop_assert!(close(fast, brute), "{fast} vs {brute}");
    }

    #[test]
    fn shift_and_scale((order, data) in instance(), shift in -100.0f64..100.0, scale in 0.25f64..4.0) {
        let eps = solve(&order, &data);
        let shifted: Vec<_> = data.iter().map(|o| WeightedObservation { y: o.y + shift, ..*o }).collect();
        prop_assert!(close(solve(&order, &shifted), eps));
        let scaled: Vec<_> = data.iter().map(|o| WeightedObservation { y: o.y * scale, ..*o }).collect();
        prop_assert!(close(solve(&order, &scaled), eps * scale));
        let heavier: Vec<_> = data.iter().map(|o| WeightedObservation { w: o.w * scale, ..*o }).collect();
        prop_assert!(close(solve(&order, &heavier), eps * scale));
    }

    #[test]
    fn sorted_data_is_free(mut data in prop::collection::vec(observation(), 1..60)) {
        data.sort_by(|a, b| a.y.total_cmp(&b.y));
        prop_assert_eq!(solve(&OrderSpec::Linear, &data), 0.0);
    }
}
