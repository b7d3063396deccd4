//! Comb oracles: `answer(λ)` returns a point minimizing `y + λx`.
//!
//! Implementations: exact minimization over a finite instance, a
//! `(1+δ)`-approximate oracle with best, worst and random policies, the
//! adaptive horizontal-distance adversary and the prefix-family oracle.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::{gen_lb, LbParams};
use crate::geometry::{abs_slope, Point, Slope};
use crate::instance::{Instance, InstanceError};
use crate::scalar::{le, lt, Scalar};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("slope {0} is outside [0, +inf]")]
    Domain(String),
    #[error("adversary is finalized")]
    Finalized,
    #[error("adversary has no committed answers")]
    NothingCommitted,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

pub trait CombOracle<T: Scalar> {
    fn answer(&mut self, slope: &Slope<T>) -> Result<Point<T>, OracleError>;
    fn calls(&self) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    #[default]
    Leftmost,
    Rightmost,
}

impl FromStr for TieBreak {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "leftmost" => Ok(TieBreak::Leftmost),
            "rightmost" => Ok(TieBreak::Rightmost),
            other => Err(format!("unknown tie-break {other:?}")),
        }
    }
}

impl fmt::Display for TieBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieBreak::Leftmost => "leftmost",
            TieBreak::Rightmost => "rightmost",
        })
    }
}

fn check_slope<T: Scalar>(slope: &Slope<T>) -> Result<(), OracleError> {
    match slope {
        Slope::Finite(l) if l.is_negative() => Err(OracleError::Domain(l.encode())),
        _ => Ok(()),
    }
}

/// Point of minimum `x`; on a vertical tie the leftmost policy takes the
/// topmost point (first along the curve), the rightmost policy the lowest.
fn min_x<T: Scalar>(points: &[Point<T>], tb: TieBreak) -> Point<T> {
    let mut best = &points[0];
    for p in &points[1..] {
        let tie_wins = match tb {
            TieBreak::Leftmost => p.y > best.y,
            TieBreak::Rightmost => p.y < best.y,
        };
        if lt(&p.x, &best.x) || (le(&p.x, &best.x) && tie_wins) {
            best = p;
        }
    }
    best.clone()
}

/// Point of minimum `y`; on a horizontal tie the leftmost policy takes the
/// smallest x.
fn min_y<T: Scalar>(points: &[Point<T>], tb: TieBreak) -> Point<T> {
    let mut best = &points[0];
    for p in &points[1..] {
        let tie_wins = match tb {
            TieBreak::Leftmost => p.x < best.x,
            TieBreak::Rightmost => p.x > best.x,
        };
        if lt(&p.y, &best.y) || (le(&p.y, &best.y) && tie_wins) {
            best = p;
        }
    }
    best.clone()
}

/// Exact Comb over a point list sorted by x.
pub fn comb_points<T: Scalar>(
    points: &[Point<T>],
    slope: &Slope<T>,
    tb: TieBreak,
) -> Result<Point<T>, OracleError> {
    check_slope(slope)?;
    if points.is_empty() {
        return Err(OracleError::Parameter("empty point set".into()));
    }
    match slope {
        Slope::Infinite => Ok(min_x(points, tb)),
        Slope::Finite(l) if l.is_zero() => Ok(min_y(points, tb)),
        Slope::Finite(_) => {
            let mut best = &points[0];
            let mut best_h = best.weighted(slope);
            for p in &points[1..] {
                let h = p.weighted(slope);
                let better = match tb {
                    TieBreak::Leftmost => lt(&h, &best_h) || (le(&h, &best_h) && p.x < best.x),
                    TieBreak::Rightmost => lt(&h, &best_h) || (le(&h, &best_h) && p.x > best.x),
                };
                if better {
                    best = p;
                    best_h = h;
                }
            }
            Ok(best.clone())
        }
    }
}

pub fn comb_exact<T: Scalar>(
    inst: &Instance<T>,
    slope: &Slope<T>,
    tb: TieBreak,
) -> Result<Point<T>, OracleError> {
    comb_points(inst.points(), slope, tb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaPolicy {
    Best,
    Worst,
    Random(u64),
}

impl FromStr for DeltaPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.to_ascii_lowercase();
        match s.as_str() {
            "best" => Ok(DeltaPolicy::Best),
            "worst" => Ok(DeltaPolicy::Worst),
            _ => match s.strip_prefix("random") {
                Some(rest) => {
                    let seed = rest.trim_start_matches([':', '(']).trim_end_matches(')');
                    let seed = if seed.is_empty() {
                        0
                    } else {
                        seed.parse().map_err(|_| format!("bad seed in {s:?}"))?
                    };
                    Ok(DeltaPolicy::Random(seed))
                }
                None => Err(format!("unknown policy {s:?}")),
            },
        }
    }
}

/// Points whose combined objective is within a `1+δ` factor of the minimum.
pub fn admissible<'a, T: Scalar>(
    points: &'a [Point<T>],
    slope: &Slope<T>,
    delta: &T,
) -> Vec<&'a Point<T>> {
    let hs: Vec<T> = points.iter().map(|p| p.weighted(slope)).collect();
    let min = hs
        .iter()
        .fold(hs[0].clone(), |m, h| if *h < m { h.clone() } else { m });
    let bound = (T::one() + delta) * min;
    points
        .iter()
        .zip(&hs)
        .filter(|(_, h)| le(*h, &bound))
        .map(|(p, _)| p)
        .collect()
}

/// One `(1+δ)`-approximate Comb answer; `rng` is used by the random policy.
pub fn comb_delta<T: Scalar, R: Rng>(
    inst: &Instance<T>,
    slope: &Slope<T>,
    delta: &T,
    policy: DeltaPolicy,
    tb: TieBreak,
    rng: &mut R,
) -> Result<Point<T>, OracleError> {
    check_slope(slope)?;
    if delta.is_negative() {
        return Err(OracleError::Parameter(format!(
            "negative delta {}",
            delta.encode()
        )));
    }
    if delta.is_zero() {
        return comb_exact(inst, slope, tb);
    }
    match policy {
        DeltaPolicy::Best => comb_exact(inst, slope, tb),
        DeltaPolicy::Worst => {
            let adm = admissible(inst.points(), slope, delta);
            let mut best = adm[0];
            let mut best_h = best.weighted(slope);
            for p in &adm[1..] {
                let h = p.weighted(slope);
                if lt(&best_h, &h) {
                    best = p;
                    best_h = h;
                }
            }
            Ok(best.clone())
        }
        DeltaPolicy::Random(_) => {
            let adm = admissible(inst.points(), slope, delta);
            Ok(adm[rng.random_range(0..adm.len())].clone())
        }
    }
}

/// Exact Comb oracle over an instance.
pub struct ExactComb<'a, T> {
    inst: &'a Instance<T>,
    tb: TieBreak,
    calls: u64,
}

impl<'a, T: Scalar> ExactComb<'a, T> {
    pub fn new(inst: &'a Instance<T>, tb: TieBreak) -> Self {
        ExactComb { inst, tb, calls: 0 }
    }
}

impl<T: Scalar> CombOracle<T> for ExactComb<'_, T> {
    fn answer(&mut self, slope: &Slope<T>) -> Result<Point<T>, OracleError> {
        let p = comb_exact(self.inst, slope, self.tb)?;
        self.calls += 1;
        Ok(p)
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

/// `(1+δ)`-approximate Comb oracle over an instance.
pub struct DeltaComb<'a, T> {
    inst: &'a Instance<T>,
    delta: T,
    policy: DeltaPolicy,
    tb: TieBreak,
    rng: ChaCha8Rng,
    calls: u64,
}

impl<'a, T: Scalar> DeltaComb<'a, T> {
    pub fn new(inst: &'a Instance<T>, delta: T, policy: DeltaPolicy, tb: TieBreak) -> Self {
        let seed = match policy {
            DeltaPolicy::Random(s) => s,
            _ => 0,
        };
        DeltaComb {
            inst,
            delta,
            policy,
            tb,
            rng: ChaCha8Rng::seed_from_u64(seed),
            calls: 0,
        }
    }
}

impl<T: Scalar> CombOracle<T> for DeltaComb<'_, T> {
    fn answer(&mut self, slope: &Slope<T>) -> Result<Point<T>, OracleError> {
        let p = comb_delta(
            self.inst,
            slope,
            &self.delta,
            self.policy,
            self.tb,
            &mut self.rng,
        )?;
        self.calls += 1;
        Ok(p)
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

/// Whether no point lies strictly below the `(1+δ)^-1`-scaled supporting line of `q`.
pub fn certificate_holds<T: Scalar>(
    points: &[Point<T>],
    q: &Point<T>,
    slope: &Slope<T>,
    delta: &T,
) -> bool {
    let hq = q.weighted(slope);
    points
        .iter()
        .all(|p| le(&hq, &(p.weighted(slope) * (T::one() + delta))))
}

/// How the adversary sets `y` of a new answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// `y = min(λ, λ_{q b})/(2k)`.
    #[default]
    Exact,
    /// The largest power of two not above the exact value. Keeps every
    /// coordinate dyadic under the chord strategy, so exact runs stay small.
    Dyadic,
}

/// Adaptive adversary against horizontal-distance approximation.
///
/// Works in the frame `c = (0,0)`, `a = (0,1)`, `b = (1,0)`. Each answer sits
/// on the supporting line of the previous one, so earlier certificates stay
/// valid, while the certified error `1 − x(q_i*)` shrinks by less than
/// `1/(2k)` per query. [`finalize`](Self::finalize) shifts the frame by `(1, 1)`.
#[derive(Debug, Clone)]
pub struct AdversaryState<T> {
    k: u32,
    placement: Placement,
    committed: Vec<(T, Point<T>)>,
    stars: Vec<Point<T>>,
    finalized: bool,
}

impl<T: Scalar> AdversaryState<T> {
    pub fn new(k: u32) -> Result<Self, OracleError> {
        if k < 2 {
            return Err(OracleError::Parameter(format!(
                "k = {k} must be at least 2"
            )));
        }
        Self::with_placement(k, Placement::Exact)
    }

    pub fn with_placement(k: u32, placement: Placement) -> Result<Self, OracleError> {
        if k < 2 {
            return Err(OracleError::Parameter(format!(
                "k = {k} must be at least 2"
            )));
        }
        Ok(AdversaryState {
            k,
            placement,
            committed: Vec::new(),
            stars: Vec::new(),
            finalized: false,
        })
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    fn place(&self, y: T) -> T {
        match self.placement {
            Placement::Exact => y,
            Placement::Dyadic => pow2_floor(&y),
        }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn committed(&self) -> &[(T, Point<T>)] {
        &self.committed
    }

    /// Where the supporting line of the latest answer meets the x-axis.
    pub fn last_star(&self) -> Option<&Point<T>> {
        self.stars.last()
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    /// Horizontal error the answers so far cannot rule out: `1 − x(q_i*)`.
    pub fn certified_error(&self) -> T {
        match self.stars.last() {
            Some(s) => T::one() - &s.x,
            None => T::one(),
        }
    }

    /// Slope of the segment from the latest answer to `b`.
    pub fn slope_to_b(&self) -> Option<T> {
        self.committed
            .last()
            .map(|(_, q)| q.y.clone() / (T::one() - &q.x))
    }

    /// Latest committed slope, the strict upper bound for the next query.
    pub fn last_slope(&self) -> Option<&T> {
        self.committed.last().map(|(l, _)| l)
    }

    /// Answers a query with slope `λ > 0` in the adversary frame.
    ///
    /// A slope that does not strictly decrease is answered with the latest
    /// committed point and leaves the state unchanged.
    pub fn answer(&mut self, lambda: &T) -> Result<Point<T>, OracleError> {
        if self.finalized {
            return Err(OracleError::Finalized);
        }
        if !lambda.is_positive() {
            return Err(OracleError::Domain(lambda.encode()));
        }
        let two_k = T::from_int(2 * self.k as i64);
        let (q, star) = match self.committed.last() {
            None => {
                let y = self.place(if *lambda >= T::one() {
                    T::one() / &two_k
                } else {
                    lambda.clone() / &two_k
                });
                let star = Point::new(y.clone() / lambda, T::zero());
                (Point::new(T::zero(), y), star)
            }
            Some((prev_l, prev_q)) => {
                if lambda >= prev_l {
                    return Ok(prev_q.clone());
                }
                let to_b = prev_q.y.clone() / (T::one() - &prev_q.x);
                let y = self.place(if *lambda >= to_b {
                    to_b / &two_k
                } else {
                    lambda.clone() / &two_k
                });
                let x = prev_q.x.clone() + (prev_q.y.clone() - &y) / prev_l;
                let star = Point::new(x.clone() + y.clone() / lambda, T::zero());
                (Point::new(x, y), star)
            }
        };
        self.committed.push((lambda.clone(), q.clone()));
        self.stars.push(star);
        Ok(q)
    }

    /// The constructed instance `{a, q_1..q_i, q_i*, b}`, shifted by `(1, 1)`.
    pub fn finalize(&mut self) -> Result<Instance<T>, OracleError> {
        if self.committed.is_empty() {
            return Err(OracleError::NothingCommitted);
        }
        self.finalized = true;
        let one = T::one();
        let shift = |p: &Point<T>| Point::new(p.x.clone() + &one, p.y.clone() + &one);
        let mut pts = vec![Point::new(one.clone(), T::from_int(2))];
        pts.extend(self.committed.iter().map(|(_, q)| shift(q)));
        pts.push(shift(self.stars.last().expect("non-empty")));
        pts.push(Point::new(T::from_int(2), one.clone()));
        let meta = BTreeMap::from([
            ("family".to_string(), "adversary-hd".to_string()),
            ("k".to_string(), self.k.to_string()),
            ("queries".to_string(), self.committed.len().to_string()),
        ]);
        Ok(Instance::new(pts, 1, meta)?)
    }
}

/// Largest `2^e <= v` for `v > 0`.
fn pow2_floor<T: Scalar>(v: &T) -> T {
    let mut e = v.to_f64().log2().floor() as i32;
    while T::pow2(e) > *v {
        e -= 1;
    }
    while T::pow2(e + 1) <= *v {
        e += 1;
    }
    T::pow2(e)
}

/// Adversary exposed as a Comb oracle in the shifted frame `a = (1,2)`, `b = (2,1)`.
pub struct AdversaryOracle<T> {
    pub state: AdversaryState<T>,
    calls: u64,
}

impl<T: Scalar> AdversaryOracle<T> {
    pub fn new(k: u32) -> Result<Self, OracleError> {
        Ok(AdversaryOracle {
            state: AdversaryState::new(k)?,
            calls: 0,
        })
    }
}

impl<T: Scalar> CombOracle<T> for AdversaryOracle<T> {
    fn answer(&mut self, slope: &Slope<T>) -> Result<Point<T>, OracleError> {
        check_slope(slope)?;
        let p = match slope {
            Slope::Infinite => Point::new(T::one(), T::from_int(2)),
            Slope::Finite(l) if l.is_zero() => Point::new(T::from_int(2), T::one()),
            Slope::Finite(l) => {
                let q = self.state.answer(l)?;
                Point::new(q.x + T::one(), q.y + T::one())
            }
        };
        self.calls += 1;
        Ok(p)
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

/// Prefix family `I_ℓ = {a, q_1, …, q_ℓ, b}` over the lower-bound chain.
///
/// The answer to a slope only depends on which interval
/// `Λ_i = (λ(q_i q_{i+1}), λ(q_{i−1} q_i)]` contains it, so an algorithm must
/// probe near `q_{ℓ+1}` before it can tell `I_ℓ` from `I_{ℓ+1}`.
#[derive(Debug, Clone)]
pub struct PrefixFamily<T> {
    /// `q_0 = a, q_1, …, q_j, q_{j+1} = b`.
    chain: Vec<Point<T>>,
    /// `slopes[i] = λ(q_i q_{i+1})` for `i` in `0..=j`; `slopes[0]` is unused (vertical).
    slopes: Vec<T>,
    pub m: u32,
}

impl<T: Scalar> PrefixFamily<T> {
    /// Builds the family from the lower-bound instance at `(ε, m, μ = 1)`,
    /// keeping the first `j` interior points (default `max(1, ⌊j*/8⌋)`).
    pub fn from_lb(eps: T, m: u32, j: Option<usize>) -> Result<Self, OracleError> {
        let lb =
            gen_lb(&LbParams::new(eps, m)).map_err(|e| OracleError::Parameter(e.to_string()))?;
        let pts = lb.points();
        let jstar = pts.len() - 3;
        let j = j.unwrap_or((jstar / 8).max(1));
        if j == 0 || j > jstar {
            return Err(OracleError::Parameter(format!(
                "j = {j} must lie in 1..={jstar}"
            )));
        }
        let mut chain: Vec<Point<T>> = pts[..=j].to_vec();
        chain.push(pts[pts.len() - 1].clone());
        let mut slopes = vec![T::zero()];
        for i in 1..chain.len() - 1 {
            slopes.push(abs_slope(&chain[i], &chain[i + 1]));
        }
        Ok(PrefixFamily {
            chain,
            slopes,
            m: lb.m(),
        })
    }

    pub fn j(&self) -> usize {
        self.chain.len() - 2
    }

    /// `q_0 = a, …, q_{j+1} = b`.
    pub fn points(&self) -> &[Point<T>] {
        &self.chain
    }

    pub fn instance(&self, ell: usize) -> Result<Instance<T>, OracleError> {
        self.check_ell(ell)?;
        let mut pts = self.chain[..=ell].to_vec();
        pts.push(self.chain[self.chain.len() - 1].clone());
        let meta = BTreeMap::from([
            ("family".to_string(), "prefix".to_string()),
            ("ell".to_string(), ell.to_string()),
        ]);
        Ok(Instance::new(pts, self.m, meta)?)
    }

    fn check_ell(&self, ell: usize) -> Result<(), OracleError> {
        if ell == 0 || ell > self.j() {
            return Err(OracleError::Parameter(format!(
                "ell = {ell} must lie in 1..={}",
                self.j()
            )));
        }
        Ok(())
    }

    /// Index `i` with `λ ∈ Λ_i`, `0` for the vertical query and `j+1` below the last edge.
    pub fn interval_of(&self, slope: &Slope<T>) -> usize {
        match slope {
            Slope::Infinite => 0,
            Slope::Finite(l) => (1..=self.j())
                .find(|&i| *l > self.slopes[i])
                .unwrap_or(self.j() + 1),
        }
    }

    pub fn answer_for(&self, ell: usize, slope: &Slope<T>) -> Result<Point<T>, OracleError> {
        check_slope(slope)?;
        self.check_ell(ell)?;
        let b = &self.chain[self.chain.len() - 1];
        let i = self.interval_of(slope);
        let p = if i == 0 {
            &self.chain[0]
        } else if i > self.j() {
            b
        } else if ell >= i {
            &self.chain[i]
        } else if ell + 1 == i {
            // Λ_{ℓ+1} straddles the slope of q_ℓ b.
            let ql = &self.chain[ell];
            match slope {
                Slope::Finite(l) if *l > abs_slope(ql, b) => ql,
                _ => b,
            }
        } else {
            b
        };
        Ok(p.clone())
    }

    pub fn oracle(&self, ell: usize) -> Result<PrefixOracle<'_, T>, OracleError> {
        self.check_ell(ell)?;
        Ok(PrefixOracle {
            family: self,
            ell,
            calls: 0,
            log: Vec::new(),
        })
    }
}

/// Oracle for one member `I_ℓ` of a [`PrefixFamily`], logging queried slopes.
pub struct PrefixOracle<'a, T> {
    family: &'a PrefixFamily<T>,
    ell: usize,
    calls: u64,
    pub log: Vec<Slope<T>>,
}

impl<T: Scalar> CombOracle<T> for PrefixOracle<'_, T> {
    fn answer(&mut self, slope: &Slope<T>) -> Result<Point<T>, OracleError> {
        let p = self.family.answer_for(self.ell, slope)?;
        self.calls += 1;
        self.log.push(slope.clone());
        Ok(p)
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::ratio(n, d)
    }

    fn inst(pts: &[(Rational, Rational)]) -> Instance<Rational> {
        Instance::with_auto_m(
            pts.iter()
                .map(|(x, y)| Point::new(x.clone(), y.clone()))
                .collect(),
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn fin(n: i64, d: i64) -> Slope<Rational> {
        Slope::Finite(q(n, d))
    }

    #[test]
    fn exact_examples() {
        let i = inst(&[(q(1, 1), q(2, 1)), (q(2, 1), q(1, 1))]);
        assert_eq!(
            comb_exact(&i, &fin(2, 1), TieBreak::Leftmost).unwrap(),
            Point::new(q(1, 1), q(2, 1))
        );
        assert_eq!(
            comb_exact(&i, &fin(1, 1), TieBreak::Leftmost).unwrap(),
            Point::new(q(1, 1), q(2, 1))
        );
        assert_eq!(
            comb_exact(&i, &fin(1, 1), TieBreak::Rightmost).unwrap(),
            Point::new(q(2, 1), q(1, 1))
        );
        assert_eq!(
            comb_exact(&i, &Slope::Infinite, TieBreak::Leftmost).unwrap(),
            Point::new(q(1, 1), q(2, 1))
        );
        assert_eq!(
            comb_exact(&i, &fin(0, 1), TieBreak::Rightmost).unwrap(),
            Point::new(q(2, 1), q(1, 1))
        );
        assert!(comb_exact(&i, &fin(-1, 1), TieBreak::Leftmost).is_err());
    }

    #[test]
    fn extremes_break_ties_along_the_curve() {
        let i = inst(&[
            (q(1, 1), q(3, 1)),
            (q(1, 1), q(2, 1)),
            (q(2, 1), q(1, 1)),
            (q(3, 1), q(1, 1)),
        ]);
        assert_eq!(
            comb_exact(&i, &Slope::Infinite, TieBreak::Leftmost).unwrap(),
            Point::new(q(1, 1), q(3, 1))
        );
        assert_eq!(
            comb_exact(&i, &Slope::Infinite, TieBreak::Rightmost).unwrap(),
            Point::new(q(1, 1), q(2, 1))
        );
        assert_eq!(
            comb_exact(&i, &fin(0, 1), TieBreak::Leftmost).unwrap(),
            Point::new(q(2, 1), q(1, 1))
        );
        assert_eq!(
            comb_exact(&i, &fin(0, 1), TieBreak::Rightmost).unwrap(),
            Point::new(q(3, 1), q(1, 1))
        );
    }

    #[test]
    fn delta_examples() {
        let i = inst(&[(q(1, 1), q(2, 1)), (q(2, 1), q(1, 1)), (q(7, 5), q(17, 10))]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = q(1, 20);
        let worst = comb_delta(
            &i,
            &fin(1, 1),
            &d,
            DeltaPolicy::Worst,
            TieBreak::Leftmost,
            &mut rng,
        )
        .unwrap();
        assert_eq!(worst, Point::new(q(7, 5), q(17, 10)));
        let best = comb_delta(
            &i,
            &fin(1, 1),
            &d,
            DeltaPolicy::Best,
            TieBreak::Leftmost,
            &mut rng,
        )
        .unwrap();
        assert_eq!(best, Point::new(q(1, 1), q(2, 1)));
        for policy in [
            DeltaPolicy::Best,
            DeltaPolicy::Worst,
            DeltaPolicy::Random(3),
        ] {
            let p = comb_delta(
                &i,
                &fin(1, 1),
                &q(0, 1),
                policy,
                TieBreak::Leftmost,
                &mut rng,
            )
            .unwrap();
            assert_eq!(p, best);
        }
        for _ in 0..20 {
            let p = comb_delta(
                &i,
                &fin(1, 1),
                &d,
                DeltaPolicy::Random(0),
                TieBreak::Leftmost,
                &mut rng,
            )
            .unwrap();
            assert!(certificate_holds(i.points(), &p, &fin(1, 1), &d));
        }
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("worst".parse::<DeltaPolicy>().unwrap(), DeltaPolicy::Worst);
        assert_eq!(
            "random:7".parse::<DeltaPolicy>().unwrap(),
            DeltaPolicy::Random(7)
        );
        assert_eq!(
            "random".parse::<DeltaPolicy>().unwrap(),
            DeltaPolicy::Random(0)
        );
        assert!("nope".parse::<DeltaPolicy>().is_err());
    }

    #[test]
    fn adversary_first_answers() {
        let mut st = AdversaryState::<Rational>::new(4).unwrap();
        assert_eq!(st.answer(&q(1, 1)).unwrap(), Point::new(q(0, 1), q(1, 8)));
        assert_eq!(st.last_star().unwrap(), &Point::new(q(1, 8), q(0, 1)));
        assert_eq!(st.certified_error(), q(7, 8));
        let to_b = st.slope_to_b().unwrap();
        assert_eq!(to_b, q(1, 8));
        assert_eq!(st.answer(&to_b).unwrap(), Point::new(q(7, 64), q(1, 64)));
        assert_eq!(st.last_star().unwrap().x, q(15, 64));
        // A non-decreasing query leaves the state alone.
        assert_eq!(st.answer(&q(1, 2)).unwrap(), Point::new(q(7, 64), q(1, 64)));
        assert_eq!(st.committed().len(), 2);
    }

    #[test]
    fn adversary_small_first_slope() {
        let mut st = AdversaryState::<Rational>::new(4).unwrap();
        assert_eq!(st.answer(&q(1, 2)).unwrap(), Point::new(q(0, 1), q(1, 16)));
        assert_eq!(st.last_star().unwrap().x, q(1, 8));
    }

    #[test]
    fn adversary_finalize() {
        let mut st = AdversaryState::<Rational>::new(4).unwrap();
        assert!(matches!(st.finalize(), Err(OracleError::NothingCommitted)));
        for _ in 0..3 {
            let l = st.slope_to_b().unwrap_or(q(1, 1));
            st.answer(&l).unwrap();
        }
        let i = st.finalize().unwrap();
        // a, q_1, q_2, q_3, q_3*, b
        assert_eq!(i.len(), 6);
        assert!(matches!(st.answer(&q(1, 100)), Err(OracleError::Finalized)));
    }

    #[test]
    fn prefix_family_rule_matches_exact_comb() {
        let fam = PrefixFamily::<Rational>::from_lb(q(1, 256), 16, Some(4)).unwrap();
        assert_eq!(fam.j(), 4);
        let pts = fam.points().to_vec();
        let mut probes: Vec<Slope<Rational>> = vec![Slope::Infinite, fin(0, 1)];
        for w in pts[1..].windows(2) {
            let s = abs_slope(&w[0], &w[1]);
            probes.push(Slope::Finite(s.clone()));
            probes.push(Slope::Finite(s.clone() * q(3, 2)));
            probes.push(Slope::Finite(s * q(2, 3)));
        }
        for ell in 1..=fam.j() {
            let i = fam.instance(ell).unwrap();
            for s in &probes {
                let tb = if *s == Slope::Infinite {
                    TieBreak::Leftmost
                } else {
                    TieBreak::Rightmost
                };
                let want = comb_exact(&i, s, tb).unwrap();
                assert_eq!(fam.answer_for(ell, s).unwrap(), want, "ell={ell} slope={s}");
            }
        }
        assert_eq!(fam.answer_for(2, &Slope::Infinite).unwrap(), pts[0]);
        assert_eq!(fam.answer_for(2, &fin(0, 1)).unwrap(), pts[pts.len() - 1]);
        let l1 = Slope::Finite(abs_slope(&pts[1], &pts[2]) * q(2, 1));
        assert_eq!(fam.interval_of(&l1), 1);
        assert_eq!(fam.answer_for(2, &l1).unwrap(), pts[1]);
        assert!(fam.answer_for(2, &fin(-1, 1)).is_err());
    }
}
