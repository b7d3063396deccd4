//! Planar primitives: points, segments, convex decreasing chains, the three
//! distance metrics, triangle areas and the chord split.
//!
//! Distances from a point to a segment are measured to the region the segment
//! dominates, `seg + R²₊`. For points on or below the segment this is the usual
//! distance; for points beyond its ends it matches the coverage region of a
//! chain, whose leftmost vertex carries a vertical ray and whose rightmost
//! vertex carries a horizontal ray.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{is_zero_tol, le, lt, max_of, min_of, total_cmp, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point ({0}, {1}) is not strictly positive")]
    NonPositive(String, String),
    #[error("horizontal distance to a horizontal segment is undefined")]
    HorizontalSegment,
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("invalid triangle: {0}")]
    InvalidTriangle(String),
    #[error("split point violates the chord contract: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Point { x, y }
    }

    pub fn is_positive(&self) -> bool {
        self.x > T::zero() && self.y > T::zero()
    }

    pub fn check_positive(&self) -> Result<(), GeometryError> {
        if self.is_positive() {
            Ok(())
        } else {
            Err(GeometryError::NonPositive(self.x.encode(), self.y.encode()))
        }
    }

    /// Combined objective `y + λx`; for `λ = ∞` this is just `x`.
    pub fn weighted(&self, slope: &Slope<T>) -> T {
        match slope {
            Slope::Finite(l) => self.y.clone() + l.clone() * &self.x,
            Slope::Infinite => self.x.clone(),
        }
    }

    /// Weak componentwise domination: `self <= other` in both coordinates.
    pub fn dominates(&self, other: &Self) -> bool {
        self.x <= other.x && self.y <= other.y
    }

    pub fn approx_eq(&self, other: &Self) -> bool {
        crate::scalar::teq(&self.x, &other.x) && crate::scalar::teq(&self.y, &other.y)
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.x.to_f64(), self.y.to_f64())
    }

    pub fn sub(&self, o: &Self) -> (T, T) {
        (self.x.clone() - &o.x, self.y.clone() - &o.y)
    }
}

impl<T: Scalar> fmt::Display for Point<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x.encode(), self.y.encode())
    }
}

/// Curve order: increasing x, then decreasing y.
pub fn cmp_xy<T: Scalar>(a: &Point<T>, b: &Point<T>) -> Ordering {
    total_cmp(&a.x, &b.x).then_with(|| total_cmp(&b.y, &a.y))
}

/// Absolute slope `λ ∈ [0, ∞]` of a supporting line.
#[derive(Debug, Clone, PartialEq)]
pub enum Slope<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> fmt::Display for Slope<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slope::Finite(v) => f.write_str(&v.encode()),
            Slope::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T> {
    pub p: Point<T>,
    pub q: Point<T>,
}

impl<T: Scalar> Segment<T> {
    pub fn new(p: Point<T>, q: Point<T>) -> Self {
        Segment { p, q }
    }
}

/// `(a - o) × (b - o)`.
pub fn cross<T: Scalar>(o: &Point<T>, a: &Point<T>, b: &Point<T>) -> T {
    let (ax, ay) = a.sub(o);
    let (bx, by) = b.sub(o);
    ax * by - ay * bx
}

/// Absolute slope of the line through `l` and `r`, for `x(l) < x(r)`.
pub fn abs_slope<T: Scalar>(l: &Point<T>, r: &Point<T>) -> T {
    (l.y.clone() - &r.y) / (r.x.clone() - &l.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ratio,
    Horizontal,
    Hausdorff,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Ratio, Metric::Horizontal, Metric::Hausdorff];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ratio => "ratio",
            Metric::Horizontal => "horizontal",
            Metric::Hausdorff => "hausdorff",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ratio" => Ok(Metric::Ratio),
            "horizontal" => Ok(Metric::Horizontal),
            "hausdorff" => Ok(Metric::Hausdorff),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

/// A metric value kept in a form that compares exactly in rational mode.
///
/// Ratio and horizontal values are stored directly. Hausdorff values are
/// stored squared. `None` means unbounded: a point lying strictly below the
/// rightmost vertex has no horizontal coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricValue<T> {
    pub metric: Metric,
    key: Option<T>,
}

impl<T: Scalar> MetricValue<T> {
    pub fn zero(metric: Metric) -> Self {
        MetricValue {
            metric,
            key: Some(T::zero()),
        }
    }

    pub fn unbounded(metric: Metric) -> Self {
        MetricValue { metric, key: None }
    }

    fn from_key(metric: Metric, key: T) -> Self {
        MetricValue {
            metric,
            key: Some(key),
        }
    }

    pub fn is_unbounded(&self) -> bool {
        self.key.is_none()
    }

    /// Stored comparison key (squared for Hausdorff).
    pub fn key(&self) -> Option<&T> {
        self.key.as_ref()
    }

    /// The exact value, available for ratio and horizontal distances.
    pub fn exact(&self) -> Option<&T> {
        match self.metric {
            Metric::Hausdorff => None,
            _ => self.key.as_ref(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.key.as_ref().is_some_and(is_zero_tol)
    }

    /// Whether the distance is at most `eps`.
    pub fn within(&self, eps: &T) -> bool {
        let Some(k) = &self.key else { return false };
        match self.metric {
            Metric::Hausdorff => match T::MODE {
                crate::scalar::Mode::Rational => *k <= eps.clone() * eps,
                crate::scalar::Mode::Float => {
                    k.to_f64().max(0.0).sqrt() <= eps.to_f64() + crate::scalar::float_tolerance()
                }
            },
            _ => le(k, eps),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match &self.key {
            None => f64::INFINITY,
            Some(k) => match self.metric {
                Metric::Hausdorff => k.to_f64().max(0.0).sqrt(),
                _ => k.to_f64(),
            },
        }
    }

    pub fn cmp_value(&self, other: &Self) -> Ordering {
        match (&self.key, &other.key) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Greater,
            (Some(_), None) => Ordering::Less,
            (Some(a), Some(b)) => a.cmp_tol(b),
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other.cmp_value(&self) == Ordering::Less {
            other
        } else {
            self
        }
    }
}

impl<T: Scalar> fmt::Display for MetricValue<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.key, self.metric) {
            (None, _) => f.write_str("unbounded"),
            (Some(k), Metric::Hausdorff) => write!(f, "sqrt({})", k.encode()),
            (Some(k), _) => f.write_str(&k.encode()),
        }
    }
}

/// `max{x(q)/x(p) − 1, y(q)/y(p) − 1, 0}`: how much `p` must be scaled up to
/// dominate `q`.
pub fn ratio_distance<T: Scalar>(p: &Point<T>, q: &Point<T>) -> Result<T, GeometryError> {
    p.check_positive()?;
    q.check_positive()?;
    Ok(ratio_distance_unchecked(p, q))
}

fn ratio_distance_unchecked<T: Scalar>(p: &Point<T>, q: &Point<T>) -> T {
    let rx = q.x.clone() / &p.x - T::one();
    let ry = q.y.clone() / &p.y - T::one();
    max_of(max_of(rx, ry), T::zero())
}

fn sq<T: Scalar>(v: T) -> T {
    v.clone() * v
}

/// Distance from `p` to the quadrant `v + R²₊`.
pub fn metric_to_vertex<T: Scalar>(
    p: &Point<T>,
    v: &Point<T>,
    metric: Metric,
) -> Result<MetricValue<T>, GeometryError> {
    Ok(match metric {
        Metric::Ratio => MetricValue::from_key(metric, ratio_distance(p, v)?),
        Metric::Horizontal => {
            if p.y >= v.y {
                MetricValue::from_key(metric, max_of(v.x.clone() - &p.x, T::zero()))
            } else {
                MetricValue::unbounded(metric)
            }
        }
        Metric::Hausdorff => {
            let dx = max_of(v.x.clone() - &p.x, T::zero());
            let dy = max_of(v.y.clone() - &p.y, T::zero());
            MetricValue::from_key(metric, sq(dx) + sq(dy))
        }
    })
}

/// Distance from `p` to the region dominated by `seg`.
///
/// Ratio: infimum of the ratio distance over the segment, which is the
/// origin-ray intersection when it falls inside the segment and the nearer
/// endpoint otherwise. Horizontal: the gap to the y-projection of `p`.
/// Hausdorff: Euclidean distance.
pub fn metric_to_segment<T: Scalar>(
    p: &Point<T>,
    seg: &Segment<T>,
    metric: Metric,
) -> Result<MetricValue<T>, GeometryError> {
    let (l, r) = if seg.p.x <= seg.q.x {
        (&seg.p, &seg.q)
    } else {
        (&seg.q, &seg.p)
    };
    if l.x == r.x || l.y <= r.y {
        if metric == Metric::Horizontal && l.y == r.y && l.x != r.x {
            return Err(GeometryError::HorizontalSegment);
        }
        // Vertical, horizontal, degenerate or increasing: one endpoint is
        // dominated by the whole segment.
        let low = if l.dominates(r) { l } else { r };
        return metric_to_vertex(p, low, metric);
    }
    let a = l.y.clone() - &r.y;
    let b = r.x.clone() - &l.x;
    match metric {
        Metric::Ratio => {
            p.check_positive()?;
            let c = a.clone() * &l.x + b.clone() * &l.y;
            let hp = a * &p.x + b * &p.y;
            let hit_x = c.clone() * &p.x;
            let inside = l.x.clone() * &hp <= hit_x && hit_x <= r.x.clone() * &hp;
            let value = if inside {
                max_of(c / hp - T::one(), T::zero())
            } else {
                min_of(
                    ratio_distance_unchecked(p, l),
                    ratio_distance_unchecked(p, r),
                )
            };
            Ok(MetricValue::from_key(metric, value))
        }
        Metric::Horizontal => {
            if p.y >= l.y {
                Ok(MetricValue::from_key(
                    metric,
                    max_of(l.x.clone() - &p.x, T::zero()),
                ))
            } else if p.y >= r.y {
                let zx = l.x.clone() + (l.y.clone() - &p.y) * b / a;
                Ok(MetricValue::from_key(metric, max_of(zx - &p.x, T::zero())))
            } else {
                Ok(MetricValue::unbounded(metric))
            }
        }
        Metric::Hausdorff => {
            let c = a.clone() * &l.x + b.clone() * &l.y;
            let hp = a.clone() * &p.x + b.clone() * &p.y;
            if p.x >= l.x && p.y >= r.y && hp >= c {
                return Ok(MetricValue::zero(metric));
            }
            let up = if p.y >= l.y {
                sq(p.x.clone() - &l.x)
            } else {
                sq(p.x.clone() - &l.x) + sq(l.y.clone() - &p.y)
            };
            let right = if p.x >= r.x {
                sq(p.y.clone() - &r.y)
            } else {
                sq(r.x.clone() - &p.x) + sq(p.y.clone() - &r.y)
            };
            let seg_d = sq_dist_to_segment(p, l, r);
            Ok(MetricValue::from_key(
                metric,
                min_of(min_of(up, right), seg_d),
            ))
        }
    }
}

fn sq_dist_to_segment<T: Scalar>(p: &Point<T>, l: &Point<T>, r: &Point<T>) -> T {
    let (dx, dy) = r.sub(l);
    let (px, py) = p.sub(l);
    let len2 = dx.clone() * &dx + dy.clone() * &dy;
    let dot = px.clone() * &dx + py.clone() * &dy;
    if dot <= T::zero() || len2.is_zero() {
        return sq(px) + sq(py);
    }
    if dot >= len2 {
        return sq(p.x.clone() - &r.x) + sq(p.y.clone() - &r.y);
    }
    let crs = px * dy - py * dx;
    crs.clone() * crs / len2
}

/// Convex, strictly decreasing polygonal chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain<T> {
    vertices: Vec<Point<T>>,
}

impl<T: Scalar> Chain<T> {
    pub fn new(vertices: Vec<Point<T>>) -> Result<Self, GeometryError> {
        if vertices.is_empty() {
            return Err(GeometryError::InvalidChain("empty chain".into()));
        }
        for w in vertices.windows(2) {
            if !(w[0].x < w[1].x && w[0].y > w[1].y) {
                return Err(GeometryError::InvalidChain(format!(
                    "vertices {} and {} are not strictly decreasing",
                    w[0], w[1]
                )));
            }
        }
        for w in vertices.windows(3) {
            if cross(&w[0], &w[1], &w[2]) <= T::zero() {
                return Err(GeometryError::InvalidChain(format!(
                    "vertex {} is not a strict convex turn",
                    w[1]
                )));
            }
        }
        Ok(Chain { vertices })
    }

    /// Lower-left convex envelope of an arbitrary non-empty point set.
    pub fn envelope(points: &[Point<T>]) -> Result<Self, GeometryError> {
        let v = envelope(points);
        if v.is_empty() {
            return Err(GeometryError::InvalidChain("empty point set".into()));
        }
        Ok(Chain { vertices: v })
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Point<T>> {
        self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment<T>> + '_ {
        self.vertices
            .windows(2)
            .map(|w| Segment::new(w[0].clone(), w[1].clone()))
    }

    /// Distance from `p` to the coverage region of the chain.
    pub fn distance(&self, p: &Point<T>, metric: Metric) -> Result<MetricValue<T>, GeometryError> {
        if self.vertices.len() == 1 {
            return metric_to_vertex(p, &self.vertices[0], metric);
        }
        let mut best: Option<MetricValue<T>> = None;
        for w in self.vertices.windows(2) {
            let d = metric_to_segment(p, &Segment::new(w[0].clone(), w[1].clone()), metric)?;
            if d.is_zero() {
                return Ok(d);
            }
            best = Some(match best {
                None => d,
                Some(b) => b.min(d),
            });
        }
        Ok(best.expect("chain has at least one edge"))
    }
}

/// Worst coverage distance of `points` by `chain`, with a witness point.
pub fn coverage_error<T: Scalar>(
    points: &[Point<T>],
    chain: &Chain<T>,
    metric: Metric,
) -> Result<(MetricValue<T>, Option<Point<T>>), GeometryError> {
    let mut worst = MetricValue::zero(metric);
    let mut witness = None;
    for p in points {
        let d = chain.distance(p, metric)?;
        if witness.is_none() || d.cmp_value(&worst) == Ordering::Greater {
            worst = d;
            witness = Some(p.clone());
        }
    }
    Ok((worst, witness))
}

/// Undominated points, sorted by increasing x (and so decreasing y).
pub fn pareto_points<T: Scalar>(points: &[Point<T>]) -> Vec<Point<T>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| total_cmp(&a.x, &b.x).then_with(|| total_cmp(&a.y, &b.y)));
    let mut out: Vec<Point<T>> = Vec::new();
    for p in pts {
        if out.last().is_none_or(|last| p.y < last.y) {
            out.push(p);
        }
    }
    out
}

/// Vertices of the lower-left convex envelope, from the min-x point to the min-y point.
pub fn envelope<T: Scalar>(points: &[Point<T>]) -> Vec<Point<T>> {
    let pareto = pareto_points(points);
    let mut hull: Vec<Point<T>> = Vec::with_capacity(pareto.len());
    for p in pareto {
        while hull.len() >= 2
            && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) <= T::zero()
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangle<T> {
    pub l: Point<T>,
    pub r: Point<T>,
    pub s: Point<T>,
}

impl<T: Scalar> Triangle<T> {
    pub fn new(l: Point<T>, r: Point<T>, s: Point<T>) -> Self {
        Triangle { l, r, s }
    }

    pub fn area(&self) -> T {
        triangle_area(self)
    }

    /// Ordering of the vertices and `s` on or below `lr`.
    pub fn check(&self) -> Result<(), GeometryError> {
        let (l, r, s) = (&self.l, &self.r, &self.s);
        if !(le(&l.x, &s.x) && le(&s.x, &r.x) && le(&s.y, &l.y) && le(&r.y, &s.y)) {
            return Err(GeometryError::InvalidTriangle(format!(
                "vertex order l={l} s={s} r={r}"
            )));
        }
        // Orientation l -> r -> s is clockwise or degenerate when s is below lr.
        let c = cross(l, r, s);
        if lt(&T::zero(), &c) {
            return Err(GeometryError::InvalidTriangle(format!(
                "s={s} lies above lr"
            )));
        }
        Ok(())
    }

    /// Whether `p` lies in the closed triangle.
    pub fn contains(&self, p: &Point<T>) -> bool {
        let (a, b, c) = (&self.l, &self.r, &self.s);
        let d1 = cross(a, b, p);
        let d2 = cross(b, c, p);
        let d3 = cross(c, a, p);
        let z = T::zero();
        let neg = lt(&d1, &z) || lt(&d2, &z) || lt(&d3, &z);
        let pos = lt(&z, &d1) || lt(&z, &d2) || lt(&z, &d3);
        !(neg && pos)
    }
}

pub fn triangle_area<T: Scalar>(t: &Triangle<T>) -> T {
    cross(&t.l, &t.r, &t.s).abs() / T::from_int(2)
}

/// Result of splitting a sandwich triangle at an answer point.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub left: Triangle<T>,
    pub right: Triangle<T>,
    /// `|s_l s| / |l s|`; the children's areas sum to `y(1−y)` times the parent's.
    pub y: T,
    pub left_degenerate: bool,
    pub right_degenerate: bool,
}

/// Splits `t` along the line through `q` parallel to `lr`.
pub fn chord_split<T: Scalar>(t: &Triangle<T>, q: &Point<T>) -> Result<Split<T>, GeometryError> {
    let (l, r, s) = (&t.l, &t.r, &t.s);
    let (dx, dy) = r.sub(l);
    let (sx, sy) = s.sub(l);
    let (qx, qy) = q.sub(l);
    let den = sx.clone() * &dy - sy.clone() * &dx;
    let num = qx * &dy - qy * &dx;
    if is_zero_tol(&den) {
        return Err(GeometryError::Contract(format!(
            "triangle {l} {r} {s} is flat"
        )));
    }
    let t_par = num / &den;
    if !lt(&T::zero(), &t_par) {
        return Err(GeometryError::Contract(format!(
            "{q} is not strictly below the chord {l} {r}"
        )));
    }
    if lt(&T::one(), &t_par) {
        return Err(GeometryError::Contract(format!(
            "{q} lies below the triangle"
        )));
    }
    let s_l = Point::new(
        l.x.clone() + t_par.clone() * &sx,
        l.y.clone() + t_par.clone() * &sy,
    );
    let s_r = Point::new(
        r.x.clone() + t_par.clone() * (s.x.clone() - &r.x),
        r.y.clone() + t_par.clone() * (s.y.clone() - &r.y),
    );
    let along_l = (q.x.clone() - &s_l.x) * &dx + (q.y.clone() - &s_l.y) * &dy;
    let along_r = (s_r.x.clone() - &q.x) * &dx + (s_r.y.clone() - &q.y) * &dy;
    if lt(&along_l, &T::zero()) || lt(&along_r, &T::zero()) {
        return Err(GeometryError::Contract(format!(
            "{q} lies outside the triangle"
        )));
    }
    let left = Triangle::new(l.clone(), q.clone(), s_l);
    let right = Triangle::new(q.clone(), r.clone(), s_r);
    let left_degenerate = is_zero_tol(&left.area());
    let right_degenerate = is_zero_tol(&right.area());
    Ok(Split {
        left,
        right,
        y: T::one() - t_par,
        left_degenerate,
        right_degenerate,
    })
}
