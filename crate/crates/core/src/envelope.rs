//! Bounded error envelopes.
//!
//! A point `(a, w)` contributes a downward ray (error `w (a - z)` for
//! regression values `z < a`) and an upward ray (error `w (z - a)` for
//! `z > a`). The pointwise maximum of a set of downward rays is a convex,
//! decreasing function of `z`; what the solvers need is its inverse: the
//! regression value at which the envelope reaches error `t`,
//!
//! ```text
//! D(t) = max_i (a_i - t / w_i)        U(t) = min_i (a_i + t / w_i)
//! ```
//!
//! Both are envelopes of lines in `t`. An upward envelope is stored as a
//! downward one over negated origins (`U(t) = -max_i(-a_i - t / w_i)`), so
//! all storage is the upper hull of lines `key - t / w`, ordered by
//! increasing weight, which is also increasing error. Each line records the
//! error at which it becomes the maximum. Merging two hulls is a two-pointer
//! merge on weight followed by a monotone hull pass, linear in the segment
//! count.

use crate::model::{mean_and_err, Bracket, WeightedObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Down,
    Up,
}

impl Direction {
    #[inline]
    fn key(self, origin: f64) -> f64 {
        match self {
            Direction::Down => origin,
            Direction::Up => -origin,
        }
    }

    #[inline]
    fn origin(self, key: f64) -> f64 {
        self.key(key)
    }
}

/// Error as a function of the regression value for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: f64,
    pub slope: f64,
    pub direction: Direction,
}

impl Ray {
    pub fn error_at(&self, z: f64) -> f64 {
        let gap = match self.direction {
            Direction::Down => self.origin - z,
            Direction::Up => z - self.origin,
        };
        (self.slope * gap).max(0.0)
    }

    pub fn observation(&self) -> WeightedObservation {
        WeightedObservation {
            y: self.origin,
            w: self.slope,
        }
    }
}

/// One hull line `key - t / w`, active from error `start` up to the next
/// line's start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Line {
    pub key: f64,
    pub w: f64,
    pub start: f64,
}

/// A segment of an envelope with the error interval on which it is the maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub ray: Ray,
    pub error_lo: f64,
    pub error_hi: f64,
}

/// Outcome of intersecting a downward envelope with an upward one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crossing {
    /// The envelopes cross above the floor, at this regression value and error.
    At { value: f64, error: f64 },
    /// They cross, but at an error no larger than the floor.
    AtMostFloor,
    /// No member pair violates.
    NoViolation,
}

impl Crossing {
    pub fn error(&self) -> Option<f64> {
        match *self {
            Crossing::At { error, .. } => Some(error),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundedEnvelope {
    direction: Direction,
    lines: Vec<Line>,
}

impl BoundedEnvelope {
    pub fn empty(direction: Direction) -> Self {
        Self {
            direction,
            lines: Vec::new(),
        }
    }

    /// Envelope of one observation's ray; empty for zero weight.
    pub fn singleton(obs: WeightedObservation, direction: Direction) -> Self {
        let mut env = Self::empty(direction);
        if obs.w > 0.0 {
            env.lines.push(Line {
                key: direction.key(obs.y),
                w: obs.w,
                start: f64::NEG_INFINITY,
            });
        }
        env
    }

    /// Envelope of an arbitrary set of observations (sorts by weight).
    pub fn from_observations<I>(observations: I, direction: Direction) -> Self
    where
        I: IntoIterator<Item = WeightedObservation>,
    {
        let mut env = Self::empty(direction);
        build_lines(observations, direction, &mut env.lines);
        prune_lines(&mut env.lines, 0, &Bracket::unbounded());
        env
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub(crate) fn from_lines(direction: Direction, lines: Vec<Line>) -> Self {
        Self { direction, lines }
    }

    /// Segments in order of increasing error.
    pub fn segments(&self) -> Vec<Segment> {
        let dir = self.direction;
        self.lines
            .iter()
            .enumerate()
            .map(|(k, l)| Segment {
                ray: Ray {
                    origin: dir.origin(l.key),
                    slope: l.w,
                    direction: dir,
                },
                error_lo: l.start.max(0.0),
                error_hi: self.lines.get(k + 1).map_or(f64::INFINITY, |n| n.start),
            })
            .collect()
    }

    /// Pointwise maximum of the two envelopes.
    pub fn merge(&self, other: &Self) -> Self {
        assert_eq!(self.direction, other.direction, "merging opposite envelopes");
        let mut lines = Vec::with_capacity(self.lines.len() + other.lines.len());
        merge_lines(&self.lines, &other.lines, &mut lines);
        prune_lines(&mut lines, 0, &Bracket::unbounded());
        Self::from_lines(self.direction, lines)
    }

    /// Drops segments whose error interval misses `(low, high)`.
    ///
    /// When the window has collapsed to a point, the segment active there is kept.
    pub fn prune(&self, window: &Bracket) -> Self {
        let mut lines = self.lines.clone();
        prune_lines(&mut lines, 0, window);
        Self::from_lines(self.direction, lines)
    }

    /// Regression value at which the envelope has error `delta`.
    ///
    /// `-inf` for an empty downward envelope and `+inf` for an empty upward one.
    pub fn inverse(&self, delta: f64) -> f64 {
        let v = inverse_key(&self.lines, delta);
        match self.direction {
            Direction::Down => v,
            Direction::Up => -v,
        }
    }

    /// Forward evaluation: envelope error at regression value `z`.
    pub fn error_at(&self, z: f64) -> f64 {
        let dir = self.direction;
        self.lines
            .iter()
            .map(|l| {
                Ray {
                    origin: dir.origin(l.key),
                    slope: l.w,
                    direction: dir,
                }
                .error_at(z)
            })
            .fold(0.0, f64::max)
    }

    /// Segment-boundary errors strictly inside the window.
    pub fn endpoint_errors(&self, window: &Bracket) -> Vec<f64> {
        let mut out = Vec::new();
        push_endpoints(&self.lines, window, &mut out);
        out
    }

    /// Crossing of a downward and an upward envelope, reported exactly only
    /// when its error exceeds `floor`.
    pub fn intersect(down: &Self, up: &Self, floor: f64) -> Crossing {
        assert_eq!(down.direction, Direction::Down);
        assert_eq!(up.direction, Direction::Up);
        crossing(&down.lines, &up.lines, floor)
    }
}

/// Appends the hull of arbitrary observations to `out`.
pub(crate) fn build_lines<I>(observations: I, direction: Direction, out: &mut Vec<Line>)
where
    I: IntoIterator<Item = WeightedObservation>,
{
    let base = out.len();
    let mut raw: Vec<(f64, f64)> = observations
        .into_iter()
        .filter(|o| o.w > 0.0)
        .map(|o| (o.w, direction.key(o.y)))
        .collect();
    if raw.len() > 1 {
        raw.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    for (w, key) in raw {
        hull_push(out, base, key, w);
    }
}

/// Pushes a line of weight at least the current top's onto the hull in `out[base..]`.
#[inline]
pub(crate) fn hull_push(out: &mut Vec<Line>, base: usize, key: f64, w: f64) {
    loop {
        let len = out.len();
        if len == base {
            out.push(Line {
                key,
                w,
                start: f64::NEG_INFINITY,
            });
            return;
        }
        let top = out[len - 1];
        if top.w == w {
            if key <= top.key {
                return;
            }
            out.pop();
            continue;
        }
        debug_assert!(top.w < w);
        let t = (top.key - key) * top.w * w / (w - top.w);
        if len - 1 > base && t <= top.start {
            out.pop();
            continue;
        }
        out.push(Line { key, w, start: t });
        return;
    }
}

/// Appends the hull of `a ∪ b` to `out`.
pub(crate) fn merge_lines(a: &[Line], b: &[Line], out: &mut Vec<Line>) {
    let base = out.len();
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j == b.len() || (i < a.len() && a[i].w <= b[j].w);
        let l = if take_a {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        hull_push(out, base, l.key, l.w);
    }
}

/// Prunes `lines[base..]` in place to the segments meeting the open window.
pub(crate) fn prune_lines(lines: &mut Vec<Line>, base: usize, window: &Bracket) {
    let keep = prune_range(&lines[base..], window);
    lines.truncate(base + keep.end);
    lines.drain(base..base + keep.start);
}

/// Range of `seg` whose error intervals meet the open window.
#[inline]
pub(crate) fn prune_range(seg: &[Line], window: &Bracket) -> std::ops::Range<usize> {
    if seg.is_empty() {
        return 0..0;
    }
    let (lo, hi) = (window.low(), window.high());
    let (first, last) = if lo >= hi {
        let k = seg.partition_point(|l| l.start <= lo).saturating_sub(1);
        (k, k)
    } else {
        // first segment whose end exceeds lo; last segment whose start is below hi
        let first = seg[1..].partition_point(|l| l.start <= lo);
        let last = seg.partition_point(|l| l.start < hi).saturating_sub(1);
        (first, last.max(first))
    };
    first..last + 1
}

/// `max_i (key_i - t / w_i)`, or `-inf` when there are no lines.
#[inline]
pub(crate) fn inverse_key(lines: &[Line], t: f64) -> f64 {
    if lines.is_empty() {
        return f64::NEG_INFINITY;
    }
    let k = lines.partition_point(|l| l.start <= t).saturating_sub(1);
    let l = lines[k];
    l.key - t / l.w
}

pub(crate) fn push_endpoints(lines: &[Line], window: &Bracket, out: &mut Vec<f64>) {
    out.extend(
        lines
            .iter()
            .skip(1)
            .map(|l| l.start)
            .filter(|&t| window.contains_open(t)),
    );
}

pub(crate) fn crossing(down: &[Line], up: &[Line], floor: f64) -> Crossing {
    if down.is_empty() || up.is_empty() {
        return Crossing::NoViolation;
    }
    let d0 = inverse_key(down, floor);
    let u0 = -inverse_key(up, floor);
    if d0 <= u0 {
        return if floor <= 0.0 {
            Crossing::NoViolation
        } else {
            Crossing::AtMostFloor
        };
    }
    let mut i = down.partition_point(|l| l.start <= floor).saturating_sub(1);
    let mut j = up.partition_point(|l| l.start <= floor).saturating_sub(1);
    loop {
        let e = pair_err(down[i], up[j]);
        let next_d = down.get(i + 1).map_or(f64::INFINITY, |l| l.start);
        let next_u = up.get(j + 1).map_or(f64::INFINITY, |l| l.start);
        let next = next_d.min(next_u);
        if e <= next {
            break;
        }
        if next_d == next {
            i += 1;
        }
        if next_u == next {
            j += 1;
        }
    }
    // Neighbouring pairs are genuine member pairs too, so taking their
    // maximum only absorbs rounding in the breakpoints.
    let mut best: Option<(f64, f64)> = None;
    for di in i.saturating_sub(1)..(i + 2).min(down.len()) {
        for uj in j.saturating_sub(1)..(j + 2).min(up.len()) {
            let (u, v) = (obs_down(down[di]), obs_up(up[uj]));
            if u.y < v.y {
                continue;
            }
            let (value, error) = mean_and_err(u, v);
            if best.is_none_or(|(_, e)| error > e) {
                best = Some((value, error));
            }
        }
    }
    match best {
        Some((value, error)) if error > floor => Crossing::At { value, error },
        _ => Crossing::AtMostFloor,
    }
}

#[inline]
fn obs_down(l: Line) -> WeightedObservation {
    WeightedObservation { y: l.key, w: l.w }
}

#[inline]
fn obs_up(l: Line) -> WeightedObservation {
    WeightedObservation { y: -l.key, w: l.w }
}

#[inline]
fn pair_err(d: Line, u: Line) -> f64 {
    mean_and_err(obs_down(d), obs_up(u)).1
}
