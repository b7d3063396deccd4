//! Instance families: the staircase family `I_G` and its lower-bound
//! parameterisation, Poisson point processes, the average-case lower-bound
//! triangle and γ-balanced samples.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::geometry::{Point, Triangle};
use crate::instance::{Instance, InstanceError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid parameters: {0}")]
    Parameter(String),
    #[error("expected point count {0} exceeds the cap {1}")]
    TooLarge(f64, f64),
    #[error("unsupported tilt: {0}")]
    Tilt(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Parameters of `I_G(H, L, k, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IgParams<T> {
    pub h: T,
    pub l: T,
    pub k: u32,
    pub j: u32,
    /// Tilt each tied pair so the left point is the unique minimizer.
    pub perturb: bool,
}

impl<T: Scalar> IgParams<T> {
    pub fn new(h: T, l: T, k: u32, j: u32) -> Self {
        IgParams {
            h,
            l,
            k,
            j,
            perturb: false,
        }
    }

    /// `ε_L = L(k−1)/(k+j−1)`.
    pub fn eps_l(&self) -> T {
        self.l.clone() * T::from_int(self.k as i64 - 1) / T::from_int((self.k + self.j) as i64 - 1)
    }

    /// `ε'_L = (j/k)·ε_L`.
    pub fn eps_l_prime(&self) -> T {
        self.eps_l() * T::ratio(self.j as i64, self.k as i64)
    }
}

/// Builds `{a, q_1, …, q_{j+1}, b}` with `a = (1, 1+H)`, `b = (1+L, 1)`.
///
/// `q_1 = (1, 1 + H/k)`; each later `q_i` lies on the line through `q_{i−1}`
/// parallel to `q_{i−2} b`, with `y(q_i) − 1 = (y(q_{i−1}) − 1)/(k+i−1)`.
pub fn gen_ig<T: Scalar>(p: &IgParams<T>) -> Result<Instance<T>, GenError> {
    if !p.h.is_positive() || !p.l.is_positive() {
        return Err(GenError::Parameter("H and L must be positive".into()));
    }
    if p.k < 2 || p.j < 1 || p.j > p.k - 1 {
        return Err(GenError::Parameter(format!(
            "need k >= 2 and 1 <= j <= k-1, got k={}, j={}",
            p.k, p.j
        )));
    }
    let one = T::one();
    let a = Point::new(one.clone(), one.clone() + &p.h);
    let b = Point::new(one.clone() + &p.l, one.clone());
    let shrink = one.clone() - T::pow2(-64);
    let mut pts = vec![
        a.clone(),
        Point::new(
            one.clone(),
            one.clone() + p.h.clone() / T::from_int(p.k as i64),
        ),
    ];
    for i in 2..=(p.j as usize + 1) {
        let before = &pts[i - 2];
        let prev = &pts[i - 1];
        let mut slope = (before.y.clone() - &one) / (b.x.clone() - &before.x);
        if p.perturb {
            slope = slope * &shrink;
        }
        let y = one.clone() + (prev.y.clone() - &one) / T::from_int((p.k as usize + i - 1) as i64);
        let x = prev.x.clone() + (prev.y.clone() - &y) / slope;
        pts.push(Point::new(x, y));
    }
    pts.push(b);
    let meta = BTreeMap::from([
        ("family".to_string(), "ig".to_string()),
        ("H".to_string(), p.h.encode()),
        ("L".to_string(), p.l.encode()),
        ("k".to_string(), p.k.to_string()),
        ("j".to_string(), p.j.to_string()),
        ("eps_L".to_string(), p.eps_l().encode()),
        ("eps_prime_L".to_string(), p.eps_l_prime().encode()),
        ("perturbed".to_string(), p.perturb.to_string()),
    ]);
    Ok(Instance::with_auto_m(pts, meta)?)
}

/// Parameters of the worst-case family `I_LB(ε, m, μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LbParams<T> {
    pub eps: T,
    pub m: u32,
    pub mu: T,
    pub c0: f64,
    /// Largest accepted ε.
    pub max_eps: T,
    /// Smallest accepted m.
    pub min_m: u32,
}

impl<T: Scalar> LbParams<T> {
    pub fn new(eps: T, m: u32) -> Self {
        LbParams {
            eps,
            m,
            mu: T::one(),
            c0: 1.0,
            max_eps: T::pow2(-6),
            min_m: 4,
        }
    }
}

/// Derived sizes of the lower-bound construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LbDerived<T> {
    pub h: T,
    pub l: T,
    pub j: u32,
    pub k: u32,
    /// Whether `k` had to be raised to keep `j <= k − 1`.
    pub k_adjusted: bool,
}

/// `H* = 2^m − 1`, `L* = (μ+1)ε`, `j* = max(1, ⌊(c0/μ)·ln(H*/ε)/ln ln(H*/ε)⌋)`, `k* = ⌈μ j*⌉ + 1`.
pub fn lb_derived<T: Scalar>(p: &LbParams<T>) -> Result<LbDerived<T>, GenError> {
    if !p.eps.is_positive() || p.eps > p.max_eps {
        return Err(GenError::Parameter(format!(
            "eps = {} must lie in (0, {}]",
            p.eps.encode(),
            p.max_eps.encode()
        )));
    }
    if p.m < p.min_m || p.m > 1000 {
        return Err(GenError::Parameter(format!(
            "m = {} must lie in [{}, 1000]",
            p.m, p.min_m
        )));
    }
    if p.mu < T::one() || p.c0 <= 0.0 {
        return Err(GenError::Parameter("need mu >= 1 and c0 > 0".into()));
    }
    let h = T::pow2(p.m as i32) - T::one();
    let l = (p.mu.clone() + T::one()) * &p.eps;
    let log_ratio = (p.m as f64) * std::f64::consts::LN_2 + (1.0 - 2f64.powi(-(p.m as i32))).ln()
        - p.eps.to_f64().ln();
    let mu = p.mu.to_f64();
    let raw = p.c0 / mu * log_ratio / log_ratio.ln();
    let j = (raw.floor() as i64).max(1) as u32;
    let mut k = ((mu * j as f64) - 1e-9).ceil() as u32 + 1;
    let mut k_adjusted = false;
    while j > k - 1 {
        k += 1;
        k_adjusted = true;
    }
    Ok(LbDerived {
        h,
        l,
        j,
        k,
        k_adjusted,
    })
}

pub fn gen_lb<T: Scalar>(p: &LbParams<T>) -> Result<Instance<T>, GenError> {
    let d = lb_derived(p)?;
    let ig = IgParams::new(d.h.clone(), d.l.clone(), d.k, d.j);
    let inst = gen_ig(&ig)?;
    let mut meta = inst.meta.clone();
    meta.insert("family".into(), "lb".into());
    meta.insert("eps".into(), p.eps.encode());
    meta.insert("m".into(), p.m.to_string());
    meta.insert("mu".into(), p.mu.encode());
    meta.insert("c0".into(), p.c0.to_string());
    meta.insert("k_adjusted".into(), d.k_adjusted.to_string());
    Ok(Instance::new(inst.points().to_vec(), p.m, meta)?)
}

/// Stream seed for one trial of a sweep, independent of scheduling.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(trial.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Uniform point in a triangle.
pub fn uniform_in_triangle<R: Rng>(t: &Triangle<f64>, rng: &mut R) -> Point<f64> {
    let mut u: f64 = rng.random();
    let mut v: f64 = rng.random();
    if u + v > 1.0 {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    Point::new(
        t.s.x + u * (t.l.x - t.s.x) + v * (t.r.x - t.s.x),
        t.s.y + u * (t.l.y - t.s.y) + v * (t.r.y - t.s.y),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PppParams {
    pub triangle: Triangle<f64>,
    /// Points per unit area.
    pub nu: f64,
    pub seed: u64,
    /// Largest accepted expected point count.
    pub max_expected: f64,
}

impl PppParams {
    pub fn new(triangle: Triangle<f64>, nu: f64, seed: u64) -> Self {
        PppParams {
            triangle,
            nu,
            seed,
            max_expected: 1e7,
        }
    }
}

/// Homogeneous Poisson process on the triangle: a Poisson count, then uniform points.
pub fn sample_ppp(p: &PppParams) -> Result<Vec<Point<f64>>, GenError> {
    if !(p.nu.is_finite() && p.nu >= 0.0) {
        return Err(GenError::Parameter(format!(
            "intensity {} must be finite and non-negative",
            p.nu
        )));
    }
    let mean = p.nu * p.triangle.area();
    if mean > p.max_expected {
        return Err(GenError::TooLarge(mean, p.max_expected));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| GenError::Parameter(e.to_string()))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    Ok((0..n)
        .map(|_| uniform_in_triangle(&p.triangle, &mut rng))
        .collect())
}

pub fn gen_ppp(p: &PppParams) -> Result<Instance<f64>, GenError> {
    let pts = sample_ppp(p)?;
    let meta = BTreeMap::from([
        ("family".to_string(), "ppp".to_string()),
        ("nu".to_string(), p.nu.encode()),
        ("seed".to_string(), p.seed.to_string()),
    ]);
    Ok(Instance::with_auto_m(pts, meta)?)
}

/// Triangle `a = (1,2)`, `b = (1+2ε, 1)`, `c = (1,1)` of the average-case lower bound.
pub fn avg_lb_triangle(eps: f64) -> Triangle<f64> {
    Triangle::new(
        Point::new(1.0, 2.0),
        Point::new(1.0 + 2.0 * eps, 1.0),
        Point::new(1.0, 1.0),
    )
}

/// Poisson process of intensity `1/ε²` on [`avg_lb_triangle`], plus its endpoints `a` and `b`.
pub fn gen_avg_lb(eps: f64, seed: u64) -> Result<Instance<f64>, GenError> {
    gen_avg_lb_with(eps, None, seed)
}

/// [`gen_avg_lb`] with an optional intensity override.
pub fn gen_avg_lb_with(eps: f64, nu: Option<f64>, seed: u64) -> Result<Instance<f64>, GenError> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(GenError::Parameter(format!(
            "eps = {eps} must lie in (0, 1/4)"
        )));
    }
    let tri = avg_lb_triangle(eps);
    let nu = nu.unwrap_or(1.0 / (eps * eps));
    let mut pts = sample_ppp(&PppParams::new(tri.clone(), nu, seed))?;
    pts.push(tri.l.clone());
    pts.push(tri.r.clone());
    let meta = BTreeMap::from([
        ("family".to_string(), "avg-lb".to_string()),
        ("eps".to_string(), eps.encode()),
        ("nu".to_string(), nu.encode()),
        ("seed".to_string(), seed.to_string()),
    ]);
    Ok(Instance::with_auto_m(pts, meta)?)
}

/// Density relative to uniform, supported by [`gen_balanced`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tilt {
    Uniform,
    /// Unnormalised weight growing linearly in x from `lo` at the leftmost
    /// vertex to `hi` at the rightmost vertex.
    LinearX {
        lo: f64,
        hi: f64,
    },
}

impl Tilt {
    /// Density ratio to uniform at abscissa `x` within `region`.
    pub fn ratio_at(&self, region: &Triangle<f64>, x: f64) -> f64 {
        match *self {
            Tilt::Uniform => 1.0,
            Tilt::LinearX { lo, hi } => {
                let (x0, x1, t_c) = span(region);
                let mean = lo + (hi - lo) * t_c;
                let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
                (lo + (hi - lo) * t) / mean
            }
        }
    }

    /// Range of the density ratio over `region`.
    pub fn ratio_range(&self, region: &Triangle<f64>) -> (f64, f64) {
        let (x0, x1, _) = span(region);
        let a = self.ratio_at(region, x0);
        let b = self.ratio_at(region, x1);
        (a.min(b), a.max(b))
    }
}

/// Leftmost x, rightmost x and the centroid's relative position between them.
fn span(t: &Triangle<f64>) -> (f64, f64, f64) {
    let xs = [t.l.x, t.r.x, t.s.x];
    let x0 = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x1 = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cx = xs.iter().sum::<f64>() / 3.0;
    let t_c = if x1 > x0 { (cx - x0) / (x1 - x0) } else { 0.0 };
    (x0, x1, t_c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedParams {
    pub region: Triangle<f64>,
    pub n: usize,
    pub gamma: f64,
    pub tilt: Tilt,
    pub seed: u64,
}

/// `n` draws from a γ-balanced density by rejection against the uniform envelope.
///
/// The density ratio to uniform is checked pointwise against
/// `[1−γ, 1/(1−γ)]`, which implies the measure-wise condition.
pub fn gen_balanced(p: &BalancedParams) -> Result<Instance<f64>, GenError> {
    if p.n == 0 {
        return Err(GenError::Parameter("n must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&p.gamma) {
        return Err(GenError::Parameter(format!(
            "gamma = {} must lie in [0, 1)",
            p.gamma
        )));
    }
    if let Tilt::LinearX { lo, hi } = p.tilt {
        if !(lo > 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(GenError::Tilt(format!(
                "weights {lo}, {hi} must be positive"
            )));
        }
    }
    let (rmin, rmax) = p.tilt.ratio_range(&p.region);
    let slack = 1e-12;
    if rmin < 1.0 - p.gamma - slack || rmax > 1.0 / (1.0 - p.gamma) + slack {
        return Err(GenError::Tilt(format!(
            "density ratio range [{rmin}, {rmax}] exceeds [{}, {}]",
            1.0 - p.gamma,
            1.0 / (1.0 - p.gamma)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut pts = Vec::with_capacity(p.n);
    while pts.len() < p.n {
        let q = uniform_in_triangle(&p.region, &mut rng);
        let accept = match p.tilt {
            Tilt::Uniform => true,
            Tilt::LinearX { .. } => rng.random::<f64>() * rmax <= p.tilt.ratio_at(&p.region, q.x),
        };
        if accept {
            pts.push(q);
        }
    }
    let meta = BTreeMap::from([
        ("family".to_string(), "balanced".to_string()),
        ("n".to_string(), p.n.to_string()),
        ("gamma".to_string(), p.gamma.encode()),
        ("seed".to_string(), p.seed.to_string()),
    ]);
    Ok(Instance::with_auto_m(pts, meta)?)
}
