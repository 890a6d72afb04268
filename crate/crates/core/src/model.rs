//! Shared types and the scalar formulas every solver is built on.
//!
//! A violating pair `u ⪯ v` with `y(u) >= y(v)` forces error at least
//! `w(u) w(v) (y(u) - y(v)) / (w(u) + w(v))`, attained by giving both
//! vertices the weighted mean. The optimal error is the maximum of that
//! quantity over all comparable violating pairs, and the smallest isotonic
//! function within a given error is the running maximum of the per-vertex
//! lower limits `y - eps / w` over predecessors.

use crate::error::{IsoError, Result};

/// Relative slack allowed when checking a constructed value against its cap.
///
/// The lower limit of one vertex and the cap of its partner in the optimal
/// pair are the same real number computed along two rounding paths.
pub const CAP_TOLERANCE: f64 = 1e-12;

/// One data point: value `y` and nonnegative weight `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedObservation {
    pub y: f64,
    pub w: f64,
}

impl WeightedObservation {
    /// Builds an observation, rejecting non-finite values and negative weights.
    pub fn new(y: f64, w: f64) -> Result<Self> {
        let obs = Self { y, w };
        if obs.is_valid() {
            Ok(obs)
        } else {
            Err(IsoError::InvalidObservation { index: 0 })
        }
    }

    /// Unit-weight observation.
    pub fn unit(y: f64) -> Self {
        Self { y, w: 1.0 }
    }

    pub fn is_valid(&self) -> bool {
        self.y.is_finite() && self.w.is_finite() && self.w >= 0.0
    }
}

/// Pairs up values and weights, validating each observation.
pub fn observations(y: &[f64], w: &[f64]) -> Result<Vec<WeightedObservation>> {
    if y.len() != w.len() {
        return Err(IsoError::LengthMismatch {
            expected: y.len(),
            actual: w.len(),
        });
    }
    y.iter()
        .zip(w)
        .enumerate()
        .map(|(index, (&y, &w))| {
            let obs = WeightedObservation { y, w };
            if obs.is_valid() {
                Ok(obs)
            } else {
                Err(IsoError::InvalidObservation { index })
            }
        })
        .collect()
}

pub(crate) fn validate(data: &[WeightedObservation]) -> Result<()> {
    if data.is_empty() {
        return Err(IsoError::Empty);
    }
    match data.iter().position(|o| !o.is_valid()) {
        Some(index) => Err(IsoError::InvalidObservation { index }),
        None => Ok(()),
    }
}

/// Per-vertex regression values and the error they achieve.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicFit {
    pub values: Vec<f64>,
    pub epsilon: f64,
}

/// The live interval `[low, high]` known to contain the optimal error.
///
/// `low` only moves up and `high` only moves down. If rounding ever pushes
/// `low` past `high`, `high` is dragged along so the interval stays valid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    low: f64,
    high: f64,
}

impl Default for Bracket {
    fn default() -> Self {
        Self::unbounded()
    }
}

impl Bracket {
    /// `[0, +inf]`.
    pub fn unbounded() -> Self {
        Self {
            low: 0.0,
            high: f64::INFINITY,
        }
    }

    pub fn new(low: f64, high: f64) -> Self {
        assert!(low >= 0.0 && low <= high, "invalid bracket [{low}, {high}]");
        Self { low, high }
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    /// Raises `low` to `value` if larger. Returns whether it moved.
    pub fn raise_low(&mut self, value: f64) -> bool {
        if value > self.low {
            self.low = value;
            if self.high < value {
                self.high = value;
            }
            true
        } else {
            false
        }
    }

    /// Lowers `high` to `value` if smaller (never below `low`).
    pub fn lower_high(&mut self, value: f64) -> bool {
        let value = value.max(self.low);
        if value < self.high {
            self.high = value;
            true
        } else {
            false
        }
    }

    /// Strictly inside `(low, high)`.
    pub fn contains_open(&self, value: f64) -> bool {
        value > self.low && value < self.high
    }

    pub fn is_collapsed(&self) -> bool {
        self.low >= self.high
    }
}

/// Balanced level value and error of a violating pair.
///
/// `u` is the predecessor with `y(u) >= y(v)`. Returns `(c, e)` where
/// `w(u)(y(u) - c) = w(v)(c - y(v)) = e`. When both weights are zero the
/// pair is unconstrained and `(y(v), 0)` is returned. For a non-violating
/// pair `e` comes out negative.
pub fn mean_and_err(u: WeightedObservation, v: WeightedObservation) -> (f64, f64) {
    let wsum = u.w + v.w;
    if wsum == 0.0 {
        return (v.y, 0.0);
    }
    if u.y == v.y {
        return (u.y, 0.0);
    }
    let mean = (u.y * u.w + v.y * v.w) / wsum;
    let err = u.w * v.w * (u.y - v.y) / wsum;
    (mean, err)
}

/// Error-only form of [`mean_and_err`].
#[inline]
pub fn mean_err(u: WeightedObservation, v: WeightedObservation) -> f64 {
    mean_and_err(u, v).1
}

/// Smallest value at `obs` with weighted error at most `eps`; `-inf` for zero weight.
#[inline]
pub fn h_value(obs: WeightedObservation, eps: f64) -> f64 {
    if obs.w == 0.0 {
        f64::NEG_INFINITY
    } else {
        obs.y - eps / obs.w
    }
}

/// Largest value at `obs` with weighted error at most `eps`; `+inf` for zero weight.
#[inline]
pub fn upper_cap(obs: WeightedObservation, eps: f64) -> f64 {
    if obs.w == 0.0 {
        f64::INFINITY
    } else {
        obs.y + eps / obs.w
    }
}

/// True iff `values[u] <= values[v]` for every streamed pair.
pub fn check_isotonic<I>(values: &[f64], comparable_pairs: I) -> bool
where
    I: IntoIterator<Item = (usize, usize)>,
{
    comparable_pairs
        .into_iter()
        .all(|(u, v)| values[u] <= values[v])
}

/// The L-infinity objective `max w |y - f|`.
pub fn max_weighted_error(data: &[WeightedObservation], values: &[f64]) -> f64 {
    assert_eq!(data.len(), values.len(), "data and values differ in length");
    data.iter()
        .zip(values)
        .filter(|(o, _)| o.w > 0.0)
        .map(|(o, &f)| o.w * (o.y - f).abs())
        .fold(0.0, f64::max)
}

/// Whether `needed` fits under `cap` up to [`CAP_TOLERANCE`].
#[inline]
pub(crate) fn within_cap(needed: f64, cap: f64) -> bool {
    needed <= cap || needed - cap <= CAP_TOLERANCE * (1.0 + needed.abs().max(cap.abs()))
}

/// Turns accumulated lower limits into final regression values.
///
/// `lower[v]` is the maximum of `h` over the predecessors of `v` and
/// `top_y[v]` the maximum of `y` over the same set. Vertices whose
/// predecessors all carry zero weight have `lower = -inf`; they form a
/// down-set and receive `min(top_y, c)` with `c` the smallest finite lower
/// limit, which keeps the result isotonic and finite.
pub fn settle_values(
    mut lower: Vec<f64>,
    top_y: &[f64],
    caps: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    debug_assert_eq!(lower.len(), caps.len());
    for (index, (&needed, &cap)) in lower.iter().zip(caps).enumerate() {
        if !within_cap(needed, cap) {
            return Err(IsoError::Infeasible {
                index,
                eps,
                needed,
                cap,
            });
        }
    }
    let floor = lower
        .iter()
        .copied()
        .filter(|g| g.is_finite())
        .fold(f64::INFINITY, f64::min);
    for (g, &ty) in lower.iter_mut().zip(top_y) {
        if *g == f64::NEG_INFINITY {
            *g = ty.min(floor);
        }
    }
    Ok(lower)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(y: f64, w: f64) -> WeightedObservation {
        WeightedObservation { y, w }
    }

    #[test]
    fn mean_and_err_examples() {
        assert_eq!(mean_and_err(obs(4.0, 1.0), obs(1.0, 1.0)), (2.5, 1.5));
        assert_eq!(mean_and_err(obs(7.0, 1.0), obs(5.0, 1.0)), (6.0, 1.0));
        assert_eq!(mean_and_err(obs(5.0, 2.0), obs(5.0, 3.0)), (5.0, 0.0));
        // 1*(10 - c) = 3*(c - 0) gives c = 2.5 and both residuals 7.5
        assert_eq!(mean_and_err(obs(10.0, 1.0), obs(0.0, 3.0)), (2.5, 7.5));
    }

    #[test]
    fn mean_and_err_zero_weights() {
        assert_eq!(mean_and_err(obs(9.0, 0.0), obs(1.0, 0.0)), (1.0, 0.0));
        let (c, e) = mean_and_err(obs(9.0, 0.0), obs(1.0, 2.0));
        assert_eq!((c, e), (1.0, 0.0));
    }

    #[test]
    fn h_and_cap_examples() {
        assert_eq!(h_value(obs(4.0, 1.0), 1.5), 2.5);
        assert_eq!(h_value(obs(3.0, 0.0), 1.0), f64::NEG_INFINITY);
        assert_eq!(h_value(obs(8.0, 2.0), 1.0), 7.5);
        assert_eq!(upper_cap(obs(1.0, 1.0), 1.5), 2.5);
        assert_eq!(upper_cap(obs(0.0, 0.0), 7.0), f64::INFINITY);
        assert_eq!(upper_cap(obs(2.0, 4.0), 2.0), 2.5);
    }

    #[test]
    fn check_isotonic_examples() {
        assert!(check_isotonic(&[2.5, 2.5, 2.5], [(0, 1), (1, 2)]));
        assert!(!check_isotonic(&[1.0, 0.0], [(0, 1)]));
        assert!(check_isotonic(&[3.0, -1.0, 7.0], std::iter::empty()));
    }

    #[test]
    fn max_weighted_error_examples() {
        let data = [obs(4.0, 1.0), obs(1.0, 1.0), obs(3.0, 1.0)];
        assert_eq!(max_weighted_error(&data, &[2.5, 2.5, 2.5]), 1.5);
        assert_eq!(max_weighted_error(&data, &[4.0, 1.0, 3.0]), 0.0);
        assert_eq!(max_weighted_error(&[obs(0.0, 0.0)], &[99.0]), 0.0);
    }

    #[test]
    fn observations_rejects_bad_input() {
        assert_eq!(
            observations(&[1.0, 2.0], &[1.0]),
            Err(IsoError::LengthMismatch {
                expected: 2,
                actual: 1
            })
        );
        assert_eq!(
            observations(&[1.0, f64::NAN], &[1.0, 1.0]),
            Err(IsoError::InvalidObservation { index: 1 })
        );
        assert_eq!(
            observations(&[1.0, 2.0], &[1.0, -0.5]),
            Err(IsoError::InvalidObservation { index: 1 })
        );
    }

    #[test]
    fn bracket_moves_monotonically() {
        let mut b = Bracket::unbounded();
        assert!(b.raise_low(1.0));
        assert!(!b.raise_low(0.5));
        assert!(b.lower_high(3.0));
        assert!(!b.lower_high(4.0));
        assert!(b.contains_open(2.0));
        assert!(!b.contains_open(3.0));
        assert_eq!((b.low(), b.high()), (1.0, 3.0));
        // a rounding overshoot drags the ceiling up rather than inverting
        b.raise_low(3.5);
        assert_eq!((b.low(), b.high()), (3.5, 3.5));
        assert!(b.is_collapsed());
    }

    #[test]
    fn settle_replaces_unconstrained_prefix() {
        // vertex 0 has zero weight; running max of h is (-inf, 1)
        let values = settle_values(
            vec![f64::NEG_INFINITY, 1.0],
            &[5.0, 5.0],
            &[f64::INFINITY, 1.0],
            0.0,
        )
        .unwrap();
        assert_eq!(values, vec![1.0, 1.0]);
    }

    #[test]
    fn settle_reports_infeasible_vertex() {
        let err = settle_values(vec![2.5, 3.0], &[4.0, 4.0], &[5.0, 2.0], 1.0).unwrap_err();
        assert!(matches!(err, IsoError::Infeasible { index: 1, .. }));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn weight() -> impl Strategy<Value = f64> {
            prop_oneof![Just(0.0), 0.1f64..10.0]
        }

        proptest! {
            #[test]
            fn residuals_balance(yu in -10.0f64..10.0, yv in -10.0f64..10.0, wu in weight(), wv in weight()) {
                prop_assume!(wu + wv > 0.0);
                let (hi, lo) = if yu >= yv { (yu, yv) } else { (yv, yu) };
                let (c, e) = mean_and_err(obs(hi, wu), obs(lo, wv));
                prop_assert!(e >= 0.0);
                prop_assert!((wu * (hi - c) - e).abs() <= 1e-12 * (1.0 + e));
                prop_assert!((wv * (c - lo) - e).abs() <= 1e-12 * (1.0 + e));
            }

            #[test]
            fn weight_scaling(yu in -10.0f64..10.0, yv in -10.0f64..10.0, wu in 0.1f64..10.0, wv in 0.1f64..10.0, lambda in 0.1f64..10.0) {
                let (hi, lo) = if yu >= yv { (yu, yv) } else { (yv, yu) };
                let (c1, e1) = mean_and_err(obs(hi, wu), obs(lo, wv));
                let (c2, e2) = mean_and_err(obs(hi, wu * lambda), obs(lo, wv * lambda));
                prop_assert!((c1 - c2).abs() <= 1e-12 * (1.0 + c1.abs()));
                prop_assert!((e1 * lambda - e2).abs() <= 1e-12 * (1.0 + e2));
            }

            #[test]
            fn any_isotonic_pair_pays_mean_err(yu in -10.0f64..10.0, yv in -10.0f64..10.0, wu in 0.1f64..10.0, wv in 0.1f64..10.0, fu in -12.0f64..12.0, gap in 0.0f64..5.0) {
                let (hi, lo) = if yu >= yv { (yu, yv) } else { (yv, yu) };
                let fv = fu + gap;
                let e = mean_err(obs(hi, wu), obs(lo, wv));
                let paid = (wu * (hi - fu).abs()).max(wv * (lo - fv).abs());
                prop_assert!(paid >= e * (1.0 - 1e-12));
            }
        }
    }
}
