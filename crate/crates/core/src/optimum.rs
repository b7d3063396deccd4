//! Offline baselines: the minimum ε-convex Pareto set, a greedy upper bound,
//! and the performance ratio.
//!
//! Both solvers see the whole point set, which the algorithm under test never
//! does. The exact solver is a breadth-first search over cardinality on the
//! Pareto points in x order. For ratio and horizontal distance an edge is
//! usable iff every target point, moved by ε towards the curve, lies on or
//! above its supporting line. For Hausdorff distance coverage is tested per
//! vertex over the arc of normals between its two edges, which needs the
//! previous vertex as part of the search state.

use std::fmt;
use std::str::FromStr;

use num::{BigInt, BigRational};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chord::{trace_stats, ChordResult};
use crate::geometry::{
    coverage_error, cross, envelope, metric_to_segment, metric_to_vertex, pareto_points, Chain,
    GeometryError, Metric, Point, Segment,
};
use crate::instance::Instance;
use crate::scalar::{le, lt, Scalar};

/// Default largest Pareto set the exact solver accepts.
pub const EXACT_CAP: usize = 24;

/// Largest instance the exhaustive validator accepts.
pub const EXHAUSTIVE_CAP: usize = 12;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("{0} Pareto points exceed the exact solver cap {1}")]
    TooLarge(usize, usize),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("solver self-check failed: {0}")]
    Internal(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptMode {
    Exact,
    GreedyUpper,
    TraceLower,
}

impl OptMode {
    pub fn name(self) -> &'static str {
        match self {
            OptMode::Exact => "exact",
            OptMode::GreedyUpper => "greedy-upper",
            OptMode::TraceLower => "trace-lower",
        }
    }
}

impl fmt::Display for OptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(OptMode::Exact),
            "greedy" | "greedy-upper" => Ok(OptMode::GreedyUpper),
            "trace-lower" => Ok(OptMode::TraceLower),
            other => Err(format!("unknown opt mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult<T> {
    pub size: usize,
    /// Absent in trace-lower mode.
    pub witness: Option<Chain<T>>,
    pub mode: OptMode,
    pub metric: Metric,
    pub epsilon: T,
}

fn check_eps<T: Scalar>(eps: &T) -> Result<(), OptError> {
    if eps.is_negative() {
        return Err(OptError::Parameter(format!(
            "eps {} must be non-negative",
            eps.encode()
        )));
    }
    Ok(())
}

/// Minimum ε-CP size with the default cap.
pub fn opt_exact<T: Scalar>(
    inst: &Instance<T>,
    eps: &T,
    metric: Metric,
) -> Result<OptResult<T>, OptError> {
    opt_exact_capped(inst, eps, metric, EXACT_CAP)
}

pub fn opt_exact_capped<T: Scalar>(
    inst: &Instance<T>,
    eps: &T,
    metric: Metric,
    cap: usize,
) -> Result<OptResult<T>, OptError> {
    check_eps(eps)?;
    let pareto = pareto_points(inst.points());
    if pareto.len() > cap {
        return Err(OptError::TooLarge(pareto.len(), cap));
    }
    let targets = envelope(inst.points());
    let path = match metric {
        Metric::Ratio | Metric::Horizontal => search_shifted(&pareto, &targets, eps, metric),
        Metric::Hausdorff => search_arcs(&pareto, &targets, eps),
    }
    .ok_or_else(|| OptError::Internal("no covering path found".into()))?;
    let witness = Chain::envelope(&path)?;
    if witness.len() != path.len() {
        return Err(OptError::Internal(format!(
            "path of {} points is not convex",
            path.len()
        )));
    }
    let (worst, _) = coverage_error(inst.points(), &witness, metric)?;
    if !worst.within(eps) {
        return Err(OptError::Internal(format!("witness misses by {worst}")));
    }
    Ok(OptResult {
        size: witness.len(),
        witness: Some(witness),
        mode: OptMode::Exact,
        metric,
        epsilon: eps.clone(),
    })
}

/// Target moved by ε: scaled for ratio, shifted left for horizontal distance.
fn shifted<T: Scalar>(v: &Point<T>, eps: &T, metric: Metric) -> Point<T> {
    match metric {
        Metric::Ratio => {
            let f = T::one() + eps;
            Point::new(v.x.clone() * &f, v.y.clone() * &f)
        }
        _ => Point::new(v.x.clone() + eps, v.y.clone()),
    }
}

fn search_shifted<T: Scalar>(
    pareto: &[Point<T>],
    targets: &[Point<T>],
    eps: &T,
    metric: Metric,
) -> Option<Vec<Point<T>>> {
    let moved: Vec<Point<T>> = targets.iter().map(|v| shifted(v, eps, metric)).collect();
    let starts = |p: &Point<T>| moved.iter().all(|v| le(&p.x, &v.x));
    let ends = |p: &Point<T>| moved.iter().all(|v| le(&p.y, &v.y));
    let edge = |p: &Point<T>, q: &Point<T>| moved.iter().all(|v| !lt(&cross(p, q, v), &T::zero()));
    let n = pareto.len();
    let mut parent: Vec<Option<Option<usize>>> = vec![None; n];
    let mut layer: Vec<usize> = (0..n).filter(|&i| starts(&pareto[i])).collect();
    for &i in &layer {
        parent[i] = Some(None);
    }
    while !layer.is_empty() {
        if let Some(&end) = layer.iter().find(|&&i| ends(&pareto[i])) {
            let mut path = vec![pareto[end].clone()];
            let mut cur = end;
            while let Some(Some(p)) = parent[cur] {
                path.push(pareto[p].clone());
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        let mut next = Vec::new();
        for &i in &layer {
            for j in i + 1..n {
                if parent[j].is_none() && edge(&pareto[i], &pareto[j]) {
                    parent[j] = Some(Some(i));
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        layer = next;
    }
    None
}

/// Inward normal of the edge `p → q`.
fn normal<T: Scalar>(p: &Point<T>, q: &Point<T>) -> (T, T) {
    (p.y.clone() - &q.y, q.x.clone() - &p.x)
}

/// Whether every target is within ε of `s` along the normals between `w1` and `w2`.
fn arc_covers<T: Scalar>(
    s: &Point<T>,
    w1: &(T, T),
    w2: &(T, T),
    targets: &[Point<T>],
    eps: &T,
) -> bool {
    let eps2 = eps.clone() * eps;
    targets.iter().all(|v| {
        let g = (s.x.clone() - &v.x, s.y.clone() - &v.y);
        let c1 = w1.0.clone() * &g.1 - w1.1.clone() * &g.0;
        let c2 = g.0.clone() * &w2.1 - g.1.clone() * &w2.0;
        let zero = T::zero();
        let g_nonzero = !(g.0.is_zero() && g.1.is_zero());
        if g_nonzero && c1 >= zero && c2 >= zero {
            return le(&(g.0.clone() * &g.0 + g.1.clone() * &g.1), &eps2);
        }
        [w1, w2].iter().all(|w| {
            let d = w.0.clone() * &g.0 + w.1.clone() * &g.1;
            d <= zero
                || le(
                    &(d.clone() * &d),
                    &(eps2.clone() * (w.0.clone() * &w.0 + w.1.clone() * &w.1)),
                )
        })
    })
}

fn search_arcs<T: Scalar>(
    pareto: &[Point<T>],
    targets: &[Point<T>],
    eps: &T,
) -> Option<Vec<Point<T>>> {
    let n = pareto.len();
    let east = (T::one(), T::zero());
    let north = (T::zero(), T::one());
    // State (prev, cur) is stored at index prev_slot * n + cur, prev_slot = n for none.
    let slot = |prev: Option<usize>, cur: usize| prev.unwrap_or(n) * n + cur;
    let mut parent: Vec<Option<Option<usize>>> = vec![None; (n + 1) * n];
    let mut layer: Vec<(Option<usize>, usize)> = (0..n).map(|i| (None, i)).collect();
    for &(p, c) in &layer {
        parent[slot(p, c)] = Some(None);
    }
    while !layer.is_empty() {
        for &(prev, cur) in &layer {
            let w_in = prev.map_or(east.clone(), |p| normal(&pareto[p], &pareto[cur]));
            if arc_covers(&pareto[cur], &w_in, &north, targets, eps) {
                let mut path = vec![pareto[cur].clone()];
                let mut st = slot(prev, cur);
                while let Some(Some(ps)) = parent[st] {
                    path.push(pareto[ps % n].clone());
                    st = ps;
                }
                path.reverse();
                return Some(path);
            }
        }
        let mut next = Vec::new();
        for &(prev, cur) in &layer {
            let w_in = prev.map_or(east.clone(), |p| normal(&pareto[p], &pareto[cur]));
            for nx in cur + 1..n {
                if parent[slot(Some(cur), nx)].is_some() {
                    continue;
                }
                if let Some(p) = prev {
                    if cross(&pareto[p], &pareto[cur], &pareto[nx]) <= T::zero() {
                        continue;
                    }
                }
                let w_out = normal(&pareto[cur], &pareto[nx]);
                if arc_covers(&pareto[cur], &w_in, &w_out, targets, eps) {
                    parent[slot(Some(cur), nx)] = Some(Some(slot(prev, cur)));
                    next.push((Some(cur), nx));
                }
            }
        }
        layer = next;
    }
    None
}

/// Greedy farthest-reach walk over the envelope vertices.
pub fn opt_greedy<T: Scalar>(
    inst: &Instance<T>,
    eps: &T,
    metric: Metric,
) -> Result<OptResult<T>, OptError> {
    check_eps(eps)?;
    let v = envelope(inst.points());
    let n = v.len();
    let by_vertex = |anchor: usize, range: std::ops::Range<usize>| -> Result<bool, GeometryError> {
        for t in range {
            if !metric_to_vertex(&v[t], &v[anchor], metric)?.within(eps) {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let jump_ok = |i: usize, j: usize| -> Result<bool, GeometryError> {
        let seg = Segment::new(v[i].clone(), v[j].clone());
        for p in &v[i + 1..j] {
            if !metric_to_segment(p, &seg, metric)?.within(eps) {
                return Ok(false);
            }
        }
        Ok(true)
    };
    // Farthest index in lo..n passing `ok`, assuming the passing indices form a prefix.
    let farthest = |lo: usize,
                    ok: &dyn Fn(usize) -> Result<bool, GeometryError>|
     -> Result<usize, GeometryError> {
        let (mut good, mut bad) = (lo, n);
        while bad - good > 1 {
            let mid = good + (bad - good) / 2;
            if ok(mid)? {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Ok(good)
    };
    let mut anchor = farthest(0, &|i| by_vertex(i, 0..i))?;
    let mut chosen = vec![v[anchor].clone()];
    while !by_vertex(anchor, anchor + 1..n)? {
        let next = farthest(anchor + 1, &|j| jump_ok(anchor, j))?;
        anchor = next;
        chosen.push(v[anchor].clone());
    }
    let witness = Chain::new(chosen)?;
    let (worst, _) = coverage_error(inst.points(), &witness, metric)?;
    if !worst.within(eps) {
        return Err(OptError::Internal(format!(
            "greedy witness misses by {worst}"
        )));
    }
    Ok(OptResult {
        size: witness.len(),
        witness: Some(witness),
        mode: OptMode::GreedyUpper,
        metric,
        epsilon: eps.clone(),
    })
}

/// Minimum over every subset of the instance points, smallest first.
pub fn opt_exhaustive<T: Scalar>(
    inst: &Instance<T>,
    eps: &T,
    metric: Metric,
) -> Result<OptResult<T>, OptError> {
    check_eps(eps)?;
    let pts = inst.points();
    let n = pts.len();
    if n > EXHAUSTIVE_CAP {
        return Err(OptError::TooLarge(n, EXHAUSTIVE_CAP));
    }
    for size in 1..=n {
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let subset: Vec<Point<T>> = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| pts[i].clone())
                .collect();
            let chain = Chain::envelope(&subset)?;
            if coverage_error(pts, &chain, metric)?.0.within(eps) {
                return Ok(OptResult {
                    size: chain.len(),
                    witness: Some(chain),
                    mode: OptMode::Exact,
                    metric,
                    epsilon: eps.clone(),
                });
            }
        }
    }
    Err(OptError::Internal(
        "the full point set does not cover itself".into(),
    ))
}

/// Lower bound from the number of lowest split nodes of a Chord trace.
pub fn opt_trace_lower<T: Scalar>(res: &ChordResult<T>) -> OptResult<T> {
    OptResult {
        size: trace_stats(res).lowest_internal_count,
        witness: None,
        mode: OptMode::TraceLower,
        metric: res.metric,
        epsilon: res.epsilon.clone(),
    }
}

/// `comb_calls / opt size`, labeled with the opt mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceRatio {
    pub calls: u64,
    pub opt_size: usize,
    pub mode: OptMode,
}

impl PerformanceRatio {
    pub fn exact(&self) -> BigRational {
        BigRational::new(BigInt::from(self.calls), BigInt::from(self.opt_size as u64))
    }

    pub fn value(&self) -> f64 {
        self.calls as f64 / self.opt_size as f64
    }

    /// Ratios against a greedy upper bound underestimate the true ratio.
    pub fn is_lower_estimate(&self) -> bool {
        self.mode == OptMode::GreedyUpper
    }
}

pub fn performance_ratio<T: Scalar>(
    chord: &ChordResult<T>,
    opt: &OptResult<T>,
) -> Result<PerformanceRatio, OptError> {
    if opt.size == 0 {
        return Err(OptError::Parameter("opt size is zero".into()));
    }
    if chord.metric != opt.metric || chord.epsilon != opt.epsilon {
        return Err(OptError::Parameter(
            "chord run and opt result use different metric or eps".into(),
        ));
    }
    Ok(PerformanceRatio {
        calls: chord.comb_calls,
        opt_size: opt.size,
        mode: opt.mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chord::{run_chord, verify_eps_cp, ChordParams};
    use crate::generate::{gen_ig, gen_lb, IgParams, LbParams};
    use crate::oracle::{ExactComb, TieBreak};
    use crate::scalar::Rational;
    use std::collections::BTreeMap;

    fn q(n: i64, d: i64) -> Rational {
        Rational::ratio(n, d)
    }

    fn ig43() -> Instance<Rational> {
        gen_ig(&IgParams::new(q(1, 1), q(1, 1), 4, 3)).unwrap()
    }

    #[test]
    fn two_points() {
        let inst = Instance::new(
            vec![Point::new(q(1, 1), q(2, 1)), Point::new(q(2, 1), q(1, 1))],
            2,
            BTreeMap::new(),
        )
        .unwrap();
        for m in Metric::ALL {
            assert_eq!(opt_exact(&inst, &q(1, 100), m).unwrap().size, 2);
            assert_eq!(opt_greedy(&inst, &q(1, 100), m).unwrap().size, 2);
        }
        assert_eq!(opt_exact(&inst, &q(1, 1), Metric::Ratio).unwrap().size, 1);
    }

    #[test]
    fn ig_boundary_eps_admits_two_points() {
        // {q_3, b} has error 3/7 and {q_2, b} exactly 1/2; below 3/7 three points are needed.
        let inst = ig43();
        let pts = inst.points();
        for f in [opt_exact, opt_greedy, opt_exhaustive] {
            let r = f(&inst, &q(1, 2), Metric::Horizontal).unwrap();
            assert_eq!(r.size, 2);
            let w = r.witness.unwrap();
            assert!(
                verify_eps_cp(&inst, &w, &q(1, 2), Metric::Horizontal)
                    .unwrap()
                    .ok
            );
        }
        let q2b = Chain::new(vec![pts[2].clone(), pts[5].clone()]).unwrap();
        let v = verify_eps_cp(&inst, &q2b, &q(1, 2), Metric::Horizontal).unwrap();
        assert_eq!(v.worst.exact(), Some(&q(1, 2)));
        let q3b = Chain::new(vec![pts[3].clone(), pts[5].clone()]).unwrap();
        let v = verify_eps_cp(&inst, &q3b, &q(1, 2), Metric::Horizontal).unwrap();
        assert_eq!(v.worst.exact(), Some(&q(3, 7)));
        let below = q(2, 5);
        for f in [opt_exact, opt_greedy, opt_exhaustive] {
            assert_eq!(f(&inst, &below, Metric::Horizontal).unwrap().size, 3);
        }
    }

    #[test]
    fn ig_ratio_is_five_halves() {
        let inst = ig43();
        let mut o = ExactComb::new(&inst, TieBreak::Leftmost);
        let res = run_chord(
            &mut o,
            &ChordParams::new(q(1, 2), Metric::Horizontal),
            inst.m(),
        )
        .unwrap();
        let opt = opt_exact(&inst, &q(1, 2), Metric::Horizontal).unwrap();
        let r = performance_ratio(&res, &opt).unwrap();
        assert_eq!(r.exact(), q(5, 2));
        assert!(!r.is_lower_estimate());
        assert!(opt_trace_lower(&res).size <= opt.size);
    }

    #[test]
    fn lb_opt_is_small() {
        let inst = gen_lb(&LbParams::new(q(1, 10_000), 10)).unwrap();
        for m in Metric::ALL {
            assert!(opt_exact(&inst, &q(1, 10_000), m).unwrap().size <= 3, "{m}");
            assert!(
                opt_greedy(&inst, &q(1, 10_000), m).unwrap().size <= 3,
                "{m}"
            );
        }
    }

    #[test]
    fn cap_is_enforced() {
        let inst = ig43();
        assert!(matches!(
            opt_exact_capped(&inst, &q(1, 2), Metric::Ratio, 3),
            Err(OptError::TooLarge(5, 3))
        ));
    }

    #[test]
    fn hausdorff_threshold_is_the_line_distance() {
        // (19/10, 19/10) is 0.2/sqrt(2) ≈ 0.1414 from the segment (1,3)-(3,1).
        let inst = Instance::new(
            vec![
                Point::new(q(1, 1), q(3, 1)),
                Point::new(q(19, 10), q(19, 10)),
                Point::new(q(3, 1), q(1, 1)),
            ],
            2,
            BTreeMap::new(),
        )
        .unwrap();
        for f in [opt_exact, opt_exhaustive] {
            assert_eq!(f(&inst, &q(15, 100), Metric::Hausdorff).unwrap().size, 2);
            assert_eq!(f(&inst, &q(14, 100), Metric::Hausdorff).unwrap().size, 3);
            assert_eq!(f(&inst, &q(91, 100), Metric::Hausdorff).unwrap().size, 1);
        }
    }

    #[test]
    fn ratio_labels() {
        assert_eq!("greedy".parse::<OptMode>().unwrap(), OptMode::GreedyUpper);
        assert_eq!(OptMode::TraceLower.to_string(), "trace-lower");
    }
}
