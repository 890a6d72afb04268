//! Isotonic regression on points in arbitrary position (domination order).
//!
//! Coordinates are first replaced by dense ranks. For every tuple of heights
//! `(h_1, .., h_{d-1})` the points are sorted by their ancestor labels at
//! those heights in the first `d - 1` dimensions, then by the last
//! coordinate. Each run of equal labels is a *rendezvous line*: a point is
//! small on it if it sits in the small half of the node in every dimension
//! and large if it sits in the large half (dimensions at height 0 count as
//! both). Every dominated pair appears on exactly one line with the
//! predecessor small and earlier in the sweep, so running the linear engine
//! with roles on every line finds the optimal error. The fit is built by a
//! second sweep over the same lines.
//!
//! Identical coordinate tuples are fused into one group beforehand: members
//! of a group precede each other both ways, so they must share a value and
//! their mutual violation is computed directly.

use crate::engine::{max_violation_in, LeafSeed, LevelState, Recorder, Role};
use crate::envelope::{BoundedEnvelope, Direction};
use crate::error::{IsoError, Result};
use crate::model::{h_value, settle_values, upper_cap, validate, Bracket, IsotonicFit, WeightedObservation};
use crate::rendezvous::max_height;
use crate::trace::Trace;

/// Points in rank space: coordinate `i` takes every value in `0..extent_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointSet {
    d: usize,
    coords: Vec<u32>,
    extents: Vec<usize>,
}

impl PointSet {
    /// Builds a point set from row-major rank coordinates.
    pub fn new(coords: Vec<u32>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(IsoError::InvalidPoints("dimension must be at least 1".into()));
        }
        if !coords.len().is_multiple_of(d) {
            return Err(IsoError::InvalidPoints(format!("{} coordinates do not split into rows of {d}", coords.len())));
        }
        let n = coords.len() / d;
        let mut extents = vec![0usize; d];
        for row in coords.chunks(d) {
            for (e, &c) in extents.iter_mut().zip(row) {
                *e = (*e).max(c as usize + 1);
            }
        }
        for (i, &e) in extents.iter().enumerate() {
            let mut seen = vec![false; e];
            for row in coords.chunks(d) {
                seen[row[i] as usize] = true;
            }
            if seen.contains(&false) {
                return Err(IsoError::InvalidPoints(format!("dimension {i} skips a rank")));
            }
        }
        debug_assert!(n == 0 || extents.iter().all(|&e| e > 0));
        Ok(Self { d, coords, extents })
    }

    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.d).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of distinct ranks per dimension.
    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn point(&self, i: usize) -> &[u32] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    /// `u ⪯ v` in every coordinate.
    pub fn dominates(&self, u: usize, v: usize) -> bool {
        self.point(u).iter().zip(self.point(v)).all(|(a, b)| a <= b)
    }

    /// Drops dimensions in which every point has the same rank; `None` if
    /// all of them do.
    pub fn squeeze(&self) -> Option<PointSet> {
        let keep: Vec<usize> = (0..self.d).filter(|&i| self.extents[i] > 1).collect();
        if keep.is_empty() {
            return None;
        }
        let coords = (0..self.len())
            .flat_map(|p| keep.iter().map(move |&i| self.coords[p * self.d + i]))
            .collect();
        let extents = keep.iter().map(|&i| self.extents[i]).collect();
        Some(PointSet {
            d: keep.len(),
            coords,
            extents,
        })
    }
}

/// Replaces each dimension by dense ranks (equal values share a rank).
pub fn normalize_coordinates(raw: &[Vec<f64>]) -> Result<PointSet> {
    let d = raw.first().map_or(0, Vec::len);
    if raw.is_empty() {
        return Err(IsoError::Empty);
    }
    if d == 0 {
        return Err(IsoError::InvalidPoints("points have no coordinates".into()));
    }
    if let Some(i) = raw.iter().position(|p| p.len() != d) {
        return Err(IsoError::InvalidPoints(format!("point {i} has {} coordinates, expected {d}", raw[i].len())));
    }
    if let Some(i) = raw.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(IsoError::InvalidPoints(format!("point {i} has a non-finite coordinate")));
    }
    let n = raw.len();
    let mut coords = vec![0u32; n * d];
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..d {
        idx.sort_unstable_by(|&a, &b| raw[a][i].total_cmp(&raw[b][i]));
        let mut rank = 0u32;
        for k in 0..n {
            if k > 0 && raw[idx[k]][i] != raw[idx[k - 1]][i] {
                rank += 1;
            }
            coords[idx[k] * d + i] = rank;
        }
    }
    PointSet::new(coords, d)
}

/// Points fused by identical coordinates.
#[derive(Debug, Clone)]
pub struct Groups {
    /// One point per group, in lexicographic coordinate order.
    pub points: PointSet,
    /// Group of every input point.
    pub membership: Vec<usize>,
    /// Largest violation among members of the same group.
    pub intra_epsilon: f64,
    member_start: Vec<usize>,
    members: Vec<WeightedObservation>,
}

impl Groups {
    pub fn len(&self) -> usize {
        self.member_start.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn members(&self, g: usize) -> &[WeightedObservation] {
        &self.members[self.member_start[g]..self.member_start[g + 1]]
    }
}

/// Fuses points with identical coordinates.
pub fn collapse_duplicates(points: &PointSet, data: &[WeightedObservation]) -> Groups {
    let n = points.len();
    let d = points.d();
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut scratch = Vec::new();
    let mut counts = Vec::new();
    for i in (0..d).rev() {
        counting_sort(&mut order, &mut scratch, &mut counts, points.extents[i], |p| points.coords[p as usize * d + i] as usize);
    }
    let mut membership = vec![0usize; n];
    let mut member_start = vec![0usize];
    let mut members = Vec::with_capacity(n);
    let mut coords = Vec::new();
    for (k, &p) in order.iter().enumerate() {
        let p = p as usize;
        if k == 0 || points.point(order[k - 1] as usize) != points.point(p) {
            if k > 0 {
                member_start.push(members.len());
            }
            coords.extend_from_slice(points.point(p));
        }
        membership[p] = member_start.len() - 1;
        members.push(data[p]);
    }
    member_start.push(members.len());
    let mut groups = Groups {
        points: PointSet {
            d,
            coords,
            extents: points.extents.clone(),
        },
        membership,
        intra_epsilon: 0.0,
        member_start,
        members,
    };
    for g in 0..groups.len() {
        let m = groups.members(g);
        if m.len() > 1 {
            let down = BoundedEnvelope::from_observations(m.iter().copied(), Direction::Down);
            let up = BoundedEnvelope::from_observations(m.iter().copied(), Direction::Up);
            if let Some(e) = BoundedEnvelope::intersect(&down, &up, groups.intra_epsilon).error() {
                groups.intra_epsilon = e;
            }
        }
    }
    groups
}

fn counting_sort(order: &mut Vec<u32>, scratch: &mut Vec<u32>, counts: &mut Vec<usize>, range: usize, key: impl Fn(u32) -> usize) {
    counts.clear();
    counts.resize(range + 1, 0);
    for &p in order.iter() {
        counts[key(p) + 1] += 1;
    }
    for k in 0..range {
        counts[k + 1] += counts[k];
    }
    scratch.clear();
    scratch.resize(order.len(), 0);
    for &p in order.iter() {
        let slot = &mut counts[key(p)];
        scratch[*slot] = p;
        *slot += 1;
    }
    std::mem::swap(order, scratch);
}

/// One rendezvous line as handed to a visitor.
#[derive(Debug, Clone, Copy)]
pub struct LineView<'a> {
    /// Heights in the first `d - 1` dimensions.
    pub heights: &'a [u32],
    /// Points on the line in sweep order, restricted to those with a role.
    pub points: &'a [u32],
    pub roles: &'a [Role],
}

/// Visits every rendezvous line holding at least one small point before a
/// large one. Returns the number of height tuples (sorting passes).
pub fn for_each_line(points: &PointSet, mut visit: impl FnMut(LineView<'_>)) -> usize {
    sweep(points.d, &points.coords, &points.extents, &mut visit)
}

fn sweep(d: usize, coords: &[u32], extents: &[usize], visit: &mut dyn FnMut(LineView<'_>)) -> usize {
    let n = coords.len() / d;
    let k = d - 1;
    let at = |p: u32, i: usize| coords[p as usize * d + i];

    // sweep order: last coordinate, ties broken lexicographically
    let mut base: Vec<u32> = (0..n as u32).collect();
    let mut scratch = Vec::new();
    let mut counts = Vec::new();
    for i in (0..d).rev().chain(std::iter::once(d - 1)) {
        counting_sort(&mut base, &mut scratch, &mut counts, extents[i], |p| at(p, i) as usize);
    }

    let tops: Vec<u32> = extents[..k].iter().map(|&e| max_height(e)).collect();
    let mut heights = vec![0u32; k];
    let mut order = Vec::with_capacity(n);
    let mut line_points = Vec::new();
    let mut roles = Vec::new();
    let mut passes = 0;
    loop {
        passes += 1;
        order.clear();
        order.extend_from_slice(&base);
        for i in (0..k).rev() {
            let h = heights[i];
            counting_sort(&mut order, &mut scratch, &mut counts, extents[i].div_ceil(1 << h), |p| (at(p, i) >> h) as usize);
        }
        let same_line = |a: u32, b: u32| (0..k).all(|i| at(a, i) >> heights[i] == at(b, i) >> heights[i]);
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && same_line(order[start], order[end]) {
                end += 1;
            }
            line_points.clear();
            roles.clear();
            let (mut seen_small, mut useful) = (false, false);
            for &p in &order[start..end] {
                let (mut small, mut large) = (true, true);
                for i in 0..k {
                    let h = heights[i];
                    if h > 0 {
                        let upper_half = at(p, i) >> (h - 1) & 1 == 1;
                        small &= !upper_half;
                        large &= upper_half;
                    }
                }
                let role = match (small, large) {
                    (true, true) => Role::Both,
                    (true, false) => Role::Small,
                    (false, true) => Role::Large,
                    (false, false) => continue,
                };
                useful |= seen_small && large;
                seen_small |= small;
                line_points.push(p);
                roles.push(role);
            }
            if useful {
                visit(LineView {
                    heights: &heights,
                    points: &line_points,
                    roles: &roles,
                });
            }
            start = end;
        }
        // next height tuple
        let mut i = k;
        loop {
            if i == 0 {
                return passes;
            }
            i -= 1;
            if heights[i] < tops[i] {
                heights[i] += 1;
                break;
            }
            heights[i] = 0;
        }
    }
}

/// Largest violation over the domination order of fused groups.
fn groups_max_violation(groups: &Groups, trace: Option<&mut Trace>) -> f64 {
    let Some(points) = groups.points.squeeze() else {
        return groups.intra_epsilon;
    };
    let mut rec = Recorder::new(trace);
    let mut eps_low = groups.intra_epsilon;
    let mut state = LevelState::new();
    let mut leaves: Vec<LeafSeed> = Vec::new();
    let mut lines = 0;
    let passes = for_each_line(&points, |line| {
        leaves.clear();
        leaves.extend(line.points.iter().zip(line.roles).map(|(&g, &role)| LeafSeed::group(groups.members(g as usize), role)));
        rec.scope = lines;
        eps_low = max_violation_in(&mut state, &leaves, Bracket::new(eps_low, f64::INFINITY), &mut rec);
        lines += 1;
    });
    if let Some(t) = rec.trace() {
        t.sort_passes = passes;
        t.lines = lines;
    }
    eps_low
}

fn groups_fit(groups: &Groups, eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = groups.len();
    let mut h = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    let mut caps = Vec::with_capacity(m);
    for g in 0..m {
        let members = groups.members(g);
        h.push(members.iter().map(|o| h_value(*o, eps)).fold(f64::NEG_INFINITY, f64::max));
        ys.push(members.iter().map(|o| o.y).fold(f64::NEG_INFINITY, f64::max));
        caps.push(members.iter().map(|o| upper_cap(*o, eps)).fold(f64::INFINITY, f64::min));
    }
    let mut lower = h.clone();
    let mut top_y = ys.clone();
    let Some(points) = groups.points.squeeze() else {
        let values = settle_values(lower, &top_y, &caps, eps)?;
        return Ok((values, caps));
    };
    for_each_line(&points, |line| {
        let (mut best, mut best_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (&g, &role) in line.points.iter().zip(line.roles) {
            let g = g as usize;
            if role.is_small() {
                best = best.max(h[g]);
                best_y = best_y.max(ys[g]);
            }
            if role.is_large() {
                lower[g] = lower[g].max(best);
                top_y[g] = top_y[g].max(best_y);
            }
        }
    });
    let values = settle_values(lower, &top_y, &caps, eps)?;
    Ok((values, caps))
}

fn spread(groups: &Groups, group_values: &[f64]) -> Vec<f64> {
    groups.membership.iter().map(|&g| group_values[g]).collect()
}

fn check_lengths(points: &PointSet, data: &[WeightedObservation]) -> Result<()> {
    validate(data)?;
    if points.len() != data.len() {
        return Err(IsoError::LengthMismatch {
            expected: points.len(),
            actual: data.len(),
        });
    }
    Ok(())
}

/// Smallest isotonic function within `eps` under domination.
pub fn construct_points_fit(points: &PointSet, data: &[WeightedObservation], eps: f64) -> Result<IsotonicFit> {
    check_lengths(points, data)?;
    let groups = collapse_duplicates(points, data);
    let (values, _) = groups_fit(&groups, eps)?;
    Ok(IsotonicFit {
        values: spread(&groups, &values),
        epsilon: eps,
    })
}

/// Optimal L-infinity isotonic regression under domination order.
pub fn solve_points(points: &PointSet, data: &[WeightedObservation]) -> Result<IsotonicFit> {
    solve_points_traced(points, data, None)
}

pub fn solve_points_traced(points: &PointSet, data: &[WeightedObservation], trace: Option<&mut Trace>) -> Result<IsotonicFit> {
    check_lengths(points, data)?;
    let groups = collapse_duplicates(points, data);
    let eps = groups_max_violation(&groups, trace);
    let (values, _) = groups_fit(&groups, eps)?;
    Ok(IsotonicFit {
        values: spread(&groups, &values),
        epsilon: eps,
    })
}

/// [`solve_points`] on raw coordinates, one vector per point.
pub fn solve_raw_points(raw: &[Vec<f64>], data: &[WeightedObservation]) -> Result<IsotonicFit> {
    solve_points(&normalize_coordinates(raw)?, data)
}
