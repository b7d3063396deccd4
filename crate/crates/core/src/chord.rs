//! The Chord algorithm with full recursion tracing, and the independent
//! ε-CP verifier.
//!
//! Chord asks for the two extreme points, then repeatedly probes the Comb
//! oracle with the slope of the current chord `lr`. A region is done when the
//! lower sandwich vertex `s`, or the answer `q`, is within ε of `lr`.
//! Otherwise the triangle is split along the line through `q` parallel to
//! `lr` and both halves are refined, left first.

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{
    abs_slope, chord_split, cmp_xy, coverage_error, cross, metric_to_segment, Chain, GeometryError,
    Metric, MetricValue, Point, Segment, Slope, Split, Triangle,
};
use crate::instance::Instance;
use crate::oracle::{CombOracle, OracleError};
use crate::scalar::{le, lt, Scalar};

#[derive(Debug, Error)]
pub enum ChordError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("oracle protocol violation at depth {depth} in triangle {triangle}: {reason}")]
    Protocol {
        depth: usize,
        triangle: String,
        reason: String,
    },
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChordParams<T> {
    pub eps: T,
    pub metric: Metric,
    /// Slack of an approximate oracle; zero for exact Comb.
    pub delta: T,
    /// Explicit internal threshold, overriding the rule for `δ > 0`.
    pub eps_internal: Option<T>,
    /// Explicit recursion depth cap.
    pub depth_cap: Option<usize>,
}

impl<T: Scalar> ChordParams<T> {
    pub fn new(eps: T, metric: Metric) -> Self {
        ChordParams {
            eps,
            metric,
            delta: T::zero(),
            eps_internal: None,
            depth_cap: None,
        }
    }

    pub fn with_delta(mut self, delta: T) -> Self {
        self.delta = delta;
        self
    }

    /// Threshold used inside the recursion.
    ///
    /// For `δ > 0` this is `ε' = √(1+ε) − 1`, lowered further if needed so
    /// that `(1+ε')(1+δ) <= 1+ε`.
    pub fn internal_eps(&self) -> Result<T, ChordError> {
        if let Some(e) = &self.eps_internal {
            return Ok(e.clone());
        }
        if self.delta.is_zero() {
            return Ok(self.eps.clone());
        }
        let one = T::one();
        let root = (one.clone() + &self.eps).sqrt_lower() - &one;
        let fit = (one.clone() + &self.eps) / (one.clone() + &self.delta) - &one;
        let e = if root < fit { root } else { fit };
        if !e.is_positive() {
            return Err(ChordError::Parameter(format!(
                "delta {} leaves no room below eps {}",
                self.delta.encode(),
                self.eps.encode()
            )));
        }
        Ok(e)
    }

    /// `8·(m + log₂(1/ε) + 8)`, or the explicit cap.
    pub fn cap_for(&self, m: u32, eps_int: &T) -> usize {
        self.depth_cap.unwrap_or_else(|| {
            let lg = (1.0 / eps_int.to_f64()).log2().max(0.0).ceil() as usize;
            8 * (m as usize + lg + 8)
        })
    }
}

/// One Comb call inside the recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionNode<T> {
    pub triangle: Triangle<T>,
    pub query_slope: T,
    pub answer: Point<T>,
    pub depth: usize,
    /// Present when the answer was far from the chord and the triangle was split.
    pub split: Option<Split<T>>,
    pub left: Option<Box<RecursionNode<T>>>,
    pub right: Option<Box<RecursionNode<T>>>,
}

impl<T: Scalar> RecursionNode<T> {
    pub fn children(&self) -> impl Iterator<Item = &RecursionNode<T>> {
        self.left
            .iter()
            .chain(self.right.iter())
            .map(|b| b.as_ref())
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&RecursionNode<T>> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            if let Some(r) = &n.right {
                stack.push(r);
            }
            if let Some(l) = &n.left {
                stack.push(l);
            }
        }
        out
    }

    pub fn is_split(&self) -> bool {
        self.split.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChordResult<T> {
    /// Points returned by the recursion together with every oracle answer,
    /// sorted by x and deduplicated.
    pub selected: Vec<Point<T>>,
    /// Points returned by the recursion alone.
    pub returned: Vec<Point<T>>,
    /// Includes the two extreme-point calls.
    pub comb_calls: u64,
    pub trace: Option<RecursionNode<T>>,
    /// Every `(slope, answer)` pair in call order.
    pub calls: Vec<(Slope<T>, Point<T>)>,
    pub metric: Metric,
    pub epsilon: T,
    pub epsilon_internal: T,
}

impl<T: Scalar> ChordResult<T> {
    /// Lower convex envelope of the selected points.
    pub fn chain(&self) -> Chain<T> {
        Chain::envelope(&self.selected).expect("selected set is non-empty")
    }

    pub fn to_json_value(&self) -> Value {
        let json = ResultJson {
            metric: self.metric.name(),
            epsilon: self.epsilon.to_json(),
            epsilon_internal: self.epsilon_internal.to_json(),
            comb_calls: self.comb_calls,
            selected: self.selected.iter().map(point_json).collect(),
            trace: self.trace.as_ref().map(node_json),
        };
        serde_json::to_value(json).expect("result serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("result serializes")
    }

    /// The recursion trace as JSON, `null` when no node was created.
    pub fn trace_json(&self) -> String {
        serde_json::to_string(&self.trace.as_ref().map(node_json)).expect("trace serializes")
    }
}

#[derive(Serialize)]
struct ResultJson {
    metric: &'static str,
    epsilon: Value,
    epsilon_internal: Value,
    comb_calls: u64,
    selected: Vec<[Value; 2]>,
    trace: Option<NodeJson>,
}

#[derive(Serialize)]
struct TriangleJson {
    l: [Value; 2],
    r: [Value; 2],
    s: [Value; 2],
}

#[derive(Serialize)]
struct NodeJson {
    depth: usize,
    triangle: TriangleJson,
    query_slope: Value,
    answer: [Value; 2],
    split: bool,
    left: Option<Box<NodeJson>>,
    right: Option<Box<NodeJson>>,
}

fn point_json<T: Scalar>(p: &Point<T>) -> [Value; 2] {
    [p.x.to_json(), p.y.to_json()]
}

fn node_json<T: Scalar>(n: &RecursionNode<T>) -> NodeJson {
    NodeJson {
        depth: n.depth,
        triangle: TriangleJson {
            l: point_json(&n.triangle.l),
            r: point_json(&n.triangle.r),
            s: point_json(&n.triangle.s),
        },
        query_slope: n.query_slope.to_json(),
        answer: point_json(&n.answer),
        split: n.split.is_some(),
        left: n.left.as_ref().map(|c| Box::new(node_json(c))),
        right: n.right.as_ref().map(|c| Box::new(node_json(c))),
    }
}

struct Runner<'o, T: Scalar, O: ?Sized> {
    oracle: &'o mut O,
    metric: Metric,
    eps: T,
    delta: T,
    cap: usize,
    returned: Vec<Point<T>>,
    calls: Vec<(Slope<T>, Point<T>)>,
}

impl<T: Scalar, O: CombOracle<T> + ?Sized> Runner<'_, T, O> {
    fn protocol(&self, depth: usize, tri: &Triangle<T>, reason: String) -> ChordError {
        ChordError::Protocol {
            depth,
            triangle: format!("l={} r={} s={}", tri.l, tri.r, tri.s),
            reason,
        }
    }

    /// Queries the oracle and checks the answer against every earlier certificate.
    fn ask(
        &mut self,
        slope: Slope<T>,
        depth: usize,
        tri: Option<&Triangle<T>>,
    ) -> Result<Point<T>, ChordError> {
        let q = self.oracle.answer(&slope)?;
        if !q.is_positive() {
            return Err(ChordError::Protocol {
                depth,
                triangle: String::new(),
                reason: format!("answer {q} is not strictly positive"),
            });
        }
        let scale = T::one() + &self.delta;
        let hq = q.weighted(&slope);
        for (s, p) in &self.calls {
            let below_earlier = !le(&p.weighted(s), &(q.weighted(s) * &scale));
            let beats_own = !le(&hq, &(p.weighted(&slope) * &scale));
            if below_earlier || beats_own {
                let reason = format!(
                    "answer {q} for slope {slope} contradicts earlier answer {p} for slope {s}"
                );
                return Err(match tri {
                    Some(t) => self.protocol(depth, t, reason),
                    None => ChordError::Protocol {
                        depth,
                        triangle: String::new(),
                        reason,
                    },
                });
            }
        }
        self.calls.push((slope, q.clone()));
        Ok(q)
    }

    fn close(&mut self, tri: &Triangle<T>) {
        self.returned.push(tri.l.clone());
        self.returned.push(tri.r.clone());
    }

    fn solve(
        &mut self,
        tri: Triangle<T>,
        depth: usize,
    ) -> Result<Option<Box<RecursionNode<T>>>, ChordError> {
        let chord = Segment::new(tri.l.clone(), tri.r.clone());
        if metric_to_segment(&tri.s, &chord, self.metric)?.within(&self.eps) {
            self.close(&tri);
            return Ok(None);
        }
        if depth >= self.cap {
            return Err(self.protocol(
                depth,
                &tri,
                format!("recursion depth cap {} reached", self.cap),
            ));
        }
        let lambda = abs_slope(&tri.l, &tri.r);
        let q = self.ask(Slope::Finite(lambda.clone()), depth, Some(&tri))?;
        let mut node = RecursionNode {
            triangle: tri.clone(),
            query_slope: lambda,
            answer: q.clone(),
            depth,
            split: None,
            left: None,
            right: None,
        };
        // An approximate answer on or above the chord line certifies the region
        // within the (1+δ) slack.
        let above = !self.delta.is_zero() && !lt(&cross(&tri.l, &tri.r, &q), &T::zero());
        if above
            || q == tri.l
            || q == tri.r
            || metric_to_segment(&q, &chord, self.metric)?.within(&self.eps)
        {
            self.close(&tri);
            return Ok(Some(Box::new(node)));
        }
        let split = if self.delta.is_zero() {
            chord_split(&tri, &q)
        } else {
            approximate_split(&tri, &q)
        }
        .map_err(|e| self.protocol(depth, &tri, e.to_string()))?;
        node.left = self.solve(split.left.clone(), depth + 1)?;
        node.right = self.solve(split.right.clone(), depth + 1)?;
        node.split = Some(split);
        Ok(Some(Box::new(node)))
    }
}

/// Intersection of the lines `p1 p2` and `p3 p4`.
fn meet<T: Scalar>(p1: &Point<T>, p2: &Point<T>, p3: &Point<T>, p4: &Point<T>) -> Option<Point<T>> {
    let (d1x, d1y) = p2.sub(p1);
    let (d2x, d2y) = p4.sub(p3);
    let den = d1x.clone() * &d2y - d1y.clone() * &d2x;
    if den.is_zero() {
        return None;
    }
    let (ex, ey) = p3.sub(p1);
    let t = (ex * &d2y - ey * &d2x) / den;
    Some(Point::new(
        p1.x.clone() + t.clone() * d1x,
        p1.y.clone() + t * d1y,
    ))
}

/// Split at a `(1+δ)`-approximate answer, which may lie past the supporting
/// line at `l` or `r`; the apex moves so that `q` is on the boundary and the
/// child on that side collapses onto `q`.
fn approximate_split<T: Scalar>(
    tri: &Triangle<T>,
    q: &Point<T>,
) -> Result<Split<T>, GeometryError> {
    let (l, r, s) = (&tri.l, &tri.r, &tri.s);
    let zero = T::zero();
    let past_l = lt(&zero, &cross(s, l, q));
    let past_r = lt(&zero, &cross(r, s, q));
    let apex = match (past_l, past_r) {
        (false, false) => return chord_split(tri, q),
        (true, true) => Some(q.clone()),
        (true, false) => meet(l, q, s, r),
        (false, true) => meet(r, q, l, s),
    };
    let apex = apex.ok_or_else(|| {
        GeometryError::Contract(format!("{q} is parallel to an edge of the triangle"))
    })?;
    chord_split(&Triangle::new(l.clone(), r.clone(), apex), q)
}

fn sorted_unique<T: Scalar>(mut pts: Vec<Point<T>>) -> Vec<Point<T>> {
    pts.sort_by(cmp_xy);
    pts.dedup();
    pts
}

/// Runs Chord against `oracle`; `m` bounds the instance coordinates and sets
/// the default depth cap.
pub fn run_chord<T: Scalar, O: CombOracle<T> + ?Sized>(
    oracle: &mut O,
    params: &ChordParams<T>,
    m: u32,
) -> Result<ChordResult<T>, ChordError> {
    if !params.eps.is_positive() {
        return Err(ChordError::Parameter(format!(
            "eps {} must be positive",
            params.eps.encode()
        )));
    }
    if params.delta.is_negative() {
        return Err(ChordError::Parameter(format!(
            "delta {} must be non-negative",
            params.delta.encode()
        )));
    }
    let eps_int = params.internal_eps()?;
    let cap = params.cap_for(m, &eps_int);
    let mut run = Runner {
        oracle,
        metric: params.metric,
        eps: eps_int.clone(),
        delta: params.delta.clone(),
        cap,
        returned: Vec::new(),
        calls: Vec::new(),
    };
    let a = run.ask(Slope::Infinite, 0, None)?;
    let b = run.ask(Slope::Finite(T::zero()), 0, None)?;
    let c = Point::new(a.x.clone(), b.y.clone());
    let trace = if a.x == b.x || a.y == b.y {
        run.returned.push(a.clone());
        run.returned.push(b.clone());
        None
    } else {
        let root = Triangle::new(a, b, c);
        root.check()
            .map_err(|e| run.protocol(0, &root, e.to_string()))?;
        run.solve(root, 0)?
    };
    let returned = sorted_unique(run.returned);
    let mut all = returned.clone();
    all.extend(run.calls.iter().map(|(_, p)| p.clone()));
    let node_count = trace.as_ref().map_or(0, |t| t.walk().len());
    let comb_calls = run.calls.len() as u64;
    debug_assert_eq!(comb_calls, 2 + node_count as u64);
    Ok(ChordResult {
        selected: sorted_unique(all),
        returned,
        comb_calls,
        trace: trace.map(|b| *b),
        calls: run.calls,
        metric: params.metric,
        epsilon: params.eps.clone(),
        epsilon_internal: eps_int,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification<T> {
    pub ok: bool,
    pub worst: MetricValue<T>,
    pub witness: Option<Point<T>>,
}

/// Checks that `set` ε-covers every instance point, from the point set alone.
pub fn verify_eps_cp<T: Scalar>(
    inst: &Instance<T>,
    set: &Chain<T>,
    eps: &T,
    metric: Metric,
) -> Result<Verification<T>, ChordError> {
    let pts = inst.points();
    for v in set.vertices() {
        if pts.binary_search_by(|p| cmp_xy(p, v)).is_err() {
            return Err(ChordError::Input(format!("{v} is not an instance point")));
        }
    }
    let (worst, witness) = coverage_error(pts, set, metric)?;
    Ok(Verification {
        ok: worst.within(eps),
        worst,
        witness,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStats<T> {
    pub max_depth: usize,
    pub node_count: usize,
    /// Split nodes none of whose child calls split again.
    pub lowest_internal_count: usize,
    pub per_level_area_max: Vec<T>,
}

pub fn trace_stats<T: Scalar>(res: &ChordResult<T>) -> TraceStats<T> {
    let Some(root) = &res.trace else {
        return TraceStats {
            max_depth: 0,
            node_count: 0,
            lowest_internal_count: 0,
            per_level_area_max: Vec::new(),
        };
    };
    let nodes = root.walk();
    let mut per_level: Vec<T> = Vec::new();
    let mut max_depth = 0;
    let mut lowest = 0;
    for n in &nodes {
        max_depth = max_depth.max(n.depth);
        let area = n.triangle.area();
        if per_level.len() <= n.depth {
            per_level.resize(n.depth + 1, T::zero());
        }
        if area > per_level[n.depth] {
            per_level[n.depth] = area;
        }
        if n.is_split() && n.children().all(|c| !c.is_split()) {
            lowest += 1;
        }
    }
    TraceStats {
        max_depth,
        node_count: nodes.len(),
        lowest_internal_count: lowest,
        per_level_area_max: per_level,
    }
}
