//! Sweep harness: grids of instances, one Chord run and one baseline per
//! cell and trial, CSV rows, grouped summaries and adversary duels.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Instant;

use num::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::chord::{run_chord, trace_stats, verify_eps_cp, ChordParams};
use crate::generate::{
    gen_avg_lb_with, gen_balanced, gen_ig, gen_lb, gen_ppp, trial_seed, BalancedParams, IgParams,
    LbParams, PppParams, Tilt,
};
use crate::geometry::{Chain, Metric, Point, Triangle};
use crate::instance::{AnyInstance, Instance};
use crate::optimum::{
    opt_exact_capped, opt_greedy, performance_ratio, OptError, OptMode, OptResult, EXACT_CAP,
};
use crate::oracle::{AdversaryState, DeltaComb, DeltaPolicy, Placement, TieBreak};
use crate::scalar::{Mode, Rational, Scalar};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "CHORD_BENCH_THREADS";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Ig,
    Lb,
    Ppp,
    AvgLb,
    Balanced,
    File,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Ig => "ig",
            Family::Lb => "lb",
            Family::Ppp => "ppp",
            Family::AvgLb => "avg-lb",
            Family::Balanced => "balanced",
            Family::File => "file",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptChoice {
    Exact,
    Greedy,
    #[default]
    Auto,
}

/// Parameter lists; the sweep runs their Cartesian product. Scalars may be
/// JSON numbers or `"p/q"` strings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    #[serde(rename = "H")]
    pub h: Vec<Value>,
    #[serde(rename = "L")]
    pub l: Vec<Value>,
    pub k: Vec<u32>,
    pub j: Vec<u32>,
    pub m: Vec<u32>,
    pub eps: Vec<Value>,
    pub mu: Vec<Value>,
    pub nu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub n: Vec<usize>,
    pub delta: Vec<Value>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub family: Family,
    #[serde(default)]
    pub grid: Grid,
    pub metric: Metric,
    #[serde(default)]
    pub tiebreak: TieBreak,
    /// Policy of the approximate oracle when δ > 0.
    #[serde(default = "default_policy")]
    pub delta_policy: String,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub opt_mode: OptChoice,
    #[serde(default = "default_cap")]
    pub opt_cap: usize,
    /// Sampling region for ppp and balanced; defaults to `(1,2), (2,1), (1,1)`.
    #[serde(default)]
    pub region: Option<[[f64; 2]; 3]>,
    /// `[lo, hi]` weights of a linear-in-x tilt for the balanced family.
    #[serde(default)]
    pub tilt: Option<[f64; 2]>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_policy() -> String {
    "worst".into()
}

fn default_trials() -> u64 {
    1
}

fn default_cap() -> usize {
    EXACT_CAP
}

impl SweepConfig {
    pub fn from_json(s: &str) -> Result<Self, BenchError> {
        serde_json::from_str(s).map_err(|e| BenchError::Config(e.to_string()))
    }

    fn region(&self) -> Triangle<f64> {
        let [l, r, s] = self.region.unwrap_or([[1.0, 2.0], [2.0, 1.0], [1.0, 1.0]]);
        Triangle::new(
            Point::new(l[0], l[1]),
            Point::new(r[0], r[1]),
            Point::new(s[0], s[1]),
        )
    }
}

/// Whether a row passed verification and the lower-bound bridge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validity {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "INVALID")]
    Invalid,
}

/// One CSV row. Parameters that do not apply to the family are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub family: String,
    #[serde(rename = "H")]
    pub h: Option<String>,
    #[serde(rename = "L")]
    pub l: Option<String>,
    pub k: Option<u32>,
    pub j: Option<u32>,
    pub m: Option<u32>,
    pub eps: Option<String>,
    pub mu: Option<String>,
    pub nu: Option<String>,
    pub gamma: Option<String>,
    pub delta: Option<String>,
    pub metric: Metric,
    pub seed: u64,
    pub trial: u64,
    pub chd_calls: u64,
    pub opt_size: usize,
    pub opt_mode: String,
    /// Twelve significant digits.
    pub ratio: String,
    /// `p/q`, rational mode only.
    pub ratio_exact: Option<String>,
    pub trace_depth: usize,
    pub lowest_internal: usize,
    pub runtime_ms: u64,
    pub valid: Validity,
}

impl BenchRecord {
    /// Column value by CSV header name.
    pub fn field(&self, name: &str) -> Option<String> {
        let opt = |v: &Option<String>| v.clone().unwrap_or_default();
        let num = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
        Some(match name {
            "family" => self.family.clone(),
            "H" => opt(&self.h),
            "L" => opt(&self.l),
            "k" => num(self.k),
            "j" => num(self.j),
            "m" => num(self.m),
            "eps" => opt(&self.eps),
            "mu" => opt(&self.mu),
            "nu" => opt(&self.nu),
            "gamma" => opt(&self.gamma),
            "delta" => opt(&self.delta),
            "metric" => self.metric.to_string(),
            "seed" => self.seed.to_string(),
            "trial" => self.trial.to_string(),
            "opt_mode" => self.opt_mode.clone(),
            _ => return None,
        })
    }

    pub fn ratio_value(&self) -> f64 {
        self.ratio.parse().unwrap_or(f64::NAN)
    }
}

/// Formats with twelve significant digits.
pub fn sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return v.to_string();
    }
    let decimals = (11 - v.abs().log10().floor() as i32).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn write_csv<W: Write>(rows: &[BenchRecord], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<BenchRecord>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<BenchRecord>, _>>()?)
}

pub const CSV_COLUMNS: [&str; 23] = [
    "family",
    "H",
    "L",
    "k",
    "j",
    "m",
    "eps",
    "mu",
    "nu",
    "gamma",
    "delta",
    "metric",
    "seed",
    "trial",
    "chd_calls",
    "opt_size",
    "opt_mode",
    "ratio",
    "ratio_exact",
    "trace_depth",
    "lowest_internal",
    "runtime_ms",
    "valid",
];

/// One grid point, before trials.
#[derive(Debug, Clone, Default)]
struct Cell {
    h: Option<Value>,
    l: Option<Value>,
    k: Option<u32>,
    j: Option<u32>,
    m: Option<u32>,
    eps: Option<Value>,
    mu: Option<Value>,
    nu: Option<f64>,
    gamma: Option<f64>,
    n: Option<usize>,
    delta: Option<Value>,
    file: Option<PathBuf>,
}

fn or_none<T: Clone>(v: &[T]) -> Vec<Option<T>> {
    if v.is_empty() {
        vec![None]
    } else {
        v.iter().cloned().map(Some).collect()
    }
}

fn required<T>(v: &[T], name: &str, family: Family) -> Result<(), BenchError> {
    if v.is_empty() {
        return Err(BenchError::Config(format!(
            "family {} needs a non-empty {name} grid",
            family.name()
        )));
    }
    Ok(())
}

fn cells(cfg: &SweepConfig) -> Result<Vec<Cell>, BenchError> {
    let g = &cfg.grid;
    let f = cfg.family;
    let mut out = Vec::new();
    let deltas = or_none(&g.delta);
    match f {
        Family::Ig => {
            for (v, n) in [(&g.h, "H"), (&g.l, "L")] {
                required(v, n, f)?;
            }
            required(&g.k, "k", f)?;
            required(&g.j, "j", f)?;
            for h in &g.h {
                for l in &g.l {
                    for &k in &g.k {
                        for &j in &g.j {
                            for eps in or_none(&g.eps) {
                                for d in &deltas {
                                    out.push(Cell {
                                        h: Some(h.clone()),
                                        l: Some(l.clone()),
                                        k: Some(k),
                                        j: Some(j),
                                        eps: eps.clone(),
                                        delta: d.clone(),
                                        ..Cell::default()
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        Family::Lb => {
            required(&g.m, "m", f)?;
            required(&g.eps, "eps", f)?;
            for &m in &g.m {
                for eps in &g.eps {
                    for mu in or_none(&g.mu) {
                        for d in &deltas {
                            out.push(Cell {
                                m: Some(m),
                                eps: Some(eps.clone()),
                                mu: mu.clone(),
                                delta: d.clone(),
                                ..Cell::default()
                            });
                        }
                    }
                }
            }
        }
        Family::Ppp => {
            required(&g.eps, "eps", f)?;
            required(&g.nu, "nu", f)?;
            for eps in &g.eps {
                for &nu in &g.nu {
                    for d in &deltas {
                        out.push(Cell {
                            eps: Some(eps.clone()),
                            nu: Some(nu),
                            delta: d.clone(),
                            ..Cell::default()
                        });
                    }
                }
            }
        }
        Family::AvgLb => {
            required(&g.eps, "eps", f)?;
            for eps in &g.eps {
                for nu in or_none(&g.nu) {
                    for d in &deltas {
                        out.push(Cell {
                            eps: Some(eps.clone()),
                            nu,
                            delta: d.clone(),
                            ..Cell::default()
                        });
                    }
                }
            }
        }
        Family::Balanced => {
            required(&g.eps, "eps", f)?;
            required(&g.n, "n", f)?;
            for eps in &g.eps {
                for &n in &g.n {
                    for gamma in or_none(&g.gamma) {
                        for d in &deltas {
                            out.push(Cell {
                                eps: Some(eps.clone()),
                                n: Some(n),
                                gamma,
                                delta: d.clone(),
                                ..Cell::default()
                            });
                        }
                    }
                }
            }
        }
        Family::File => {
            required(&g.files, "files", f)?;
            required(&g.eps, "eps", f)?;
            for file in &g.files {
                for eps in &g.eps {
                    for d in &deltas {
                        out.push(Cell {
                            file: Some(file.clone()),
                            eps: Some(eps.clone()),
                            delta: d.clone(),
                            ..Cell::default()
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn scalar<T: Scalar>(v: &Value, name: &str) -> Result<T, BenchError> {
    T::from_json(v).map_err(|e| BenchError::Config(format!("{name}: {e}")))
}

fn config<E: std::fmt::Display>(e: E) -> BenchError {
    BenchError::Config(e.to_string())
}

/// Measured quantities of one cell and trial.
struct Outcome {
    chd_calls: u64,
    opt_size: usize,
    opt_mode: String,
    ratio: String,
    ratio_exact: Option<String>,
    trace_depth: usize,
    lowest_internal: usize,
    valid: Validity,
    problem: Option<String>,
}

impl Outcome {
    fn failed(problem: String) -> Self {
        Outcome {
            chd_calls: 0,
            opt_size: 0,
            opt_mode: String::new(),
            ratio: String::new(),
            ratio_exact: None,
            trace_depth: 0,
            lowest_internal: 0,
            valid: Validity::Invalid,
            problem: Some(problem),
        }
    }
}

struct RunSpec<'c, T> {
    eps: T,
    delta: T,
    seed: u64,
    cfg: &'c SweepConfig,
}

fn baseline<T: Scalar>(
    inst: &Instance<T>,
    eps: &T,
    cfg: &SweepConfig,
) -> Result<OptResult<T>, OptError> {
    match cfg.opt_mode {
        OptChoice::Exact => opt_exact_capped(inst, eps, cfg.metric, cfg.opt_cap),
        OptChoice::Greedy => opt_greedy(inst, eps, cfg.metric),
        OptChoice::Auto => match opt_exact_capped(inst, eps, cfg.metric, cfg.opt_cap) {
            Err(OptError::TooLarge(..)) => opt_greedy(inst, eps, cfg.metric),
            other => other,
        },
    }
}

fn evaluate<T: Scalar>(inst: &Instance<T>, spec: &RunSpec<'_, T>) -> Outcome {
    let cfg = spec.cfg;
    let policy = match spec.cfg.delta_policy.parse::<DeltaPolicy>() {
        Ok(DeltaPolicy::Random(_)) => DeltaPolicy::Random(spec.seed),
        Ok(p) => p,
        Err(e) => return Outcome::failed(e),
    };
    let mut oracle = DeltaComb::new(inst, spec.delta.clone(), policy, cfg.tiebreak);
    let params = ChordParams::new(spec.eps.clone(), cfg.metric).with_delta(spec.delta.clone());
    let res = match run_chord(&mut oracle, &params, inst.m()) {
        Ok(r) => r,
        Err(e) => return Outcome::failed(format!("chord: {e}")),
    };
    let stats = trace_stats(&res);
    let mut problems = Vec::new();
    match verify_eps_cp(inst, &res.chain(), &spec.eps, cfg.metric) {
        Ok(v) if v.ok => {}
        Ok(v) => problems.push(format!("chord output misses by {}", v.worst)),
        Err(e) => problems.push(format!("verify: {e}")),
    }
    let opt = match baseline(inst, &spec.eps, cfg) {
        Ok(o) => o,
        Err(e) => return Outcome::failed(format!("opt: {e}")),
    };
    if let Some(w) = &opt.witness {
        match verify_eps_cp(inst, w, &spec.eps, cfg.metric) {
            Ok(v) if v.ok => {}
            _ => problems.push("opt witness fails verification".into()),
        }
    }
    if opt.mode == OptMode::Exact && stats.lowest_internal_count > opt.size {
        problems.push(format!(
            "lowest_internal {} exceeds opt {}",
            stats.lowest_internal_count, opt.size
        ));
    }
    let ratio = match performance_ratio(&res, &opt) {
        Ok(r) => r,
        Err(e) => return Outcome::failed(format!("ratio: {e}")),
    };
    let ratio_exact = (T::MODE == Mode::Rational).then(|| ratio.exact().encode());
    Outcome {
        chd_calls: res.comb_calls,
        opt_size: opt.size,
        opt_mode: opt.mode.name().to_string(),
        ratio: sig12(ratio.value()),
        ratio_exact,
        trace_depth: stats.max_depth,
        lowest_internal: stats.lowest_internal_count,
        valid: if problems.is_empty() {
            Validity::Ok
        } else {
            Validity::Invalid
        },
        problem: (!problems.is_empty()).then(|| problems.join("; ")),
    }
}

fn run_cell(
    cfg: &SweepConfig,
    cell: &Cell,
    trial: u64,
) -> Result<(BenchRecord, Option<String>), BenchError> {
    let seed = trial_seed(cfg.seed, trial);
    let start = Instant::now();
    let mut rec = BenchRecord {
        family: cfg.family.name().to_string(),
        h: None,
        l: None,
        k: cell.k,
        j: cell.j,
        m: cell.m,
        eps: None,
        mu: None,
        nu: cell.nu.map(|v| v.encode()),
        gamma: cell.gamma.map(|v| v.encode()),
        delta: None,
        metric: cfg.metric,
        seed,
        trial,
        chd_calls: 0,
        opt_size: 0,
        opt_mode: String::new(),
        ratio: String::new(),
        ratio_exact: None,
        trace_depth: 0,
        lowest_internal: 0,
        runtime_ms: 0,
        valid: Validity::Invalid,
    };
    let outcome = match cfg.family {
        Family::Ig | Family::Lb => {
            let delta: Rational = cell
                .delta
                .as_ref()
                .map_or(Ok(Rational::zero()), |v| scalar(v, "delta"))?;
            rec.delta = Some(delta.encode());
            let (inst, eps) = if cfg.family == Family::Ig {
                let h: Rational = scalar(cell.h.as_ref().expect("ig cell"), "H")?;
                let l: Rational = scalar(cell.l.as_ref().expect("ig cell"), "L")?;
                let p = IgParams::new(
                    h.clone(),
                    l.clone(),
                    cell.k.expect("ig cell"),
                    cell.j.expect("ig cell"),
                );
                let inst = gen_ig(&p).map_err(config)?;
                let eps = match &cell.eps {
                    Some(v) => scalar(v, "eps")?,
                    None => p.eps_l(),
                };
                rec.h = Some(h.encode());
                rec.l = Some(l.encode());
                (inst, eps)
            } else {
                let eps: Rational = scalar(cell.eps.as_ref().expect("lb cell"), "eps")?;
                let mut p = LbParams::new(eps.clone(), cell.m.expect("lb cell"));
                if let Some(mu) = &cell.mu {
                    p.mu = scalar(mu, "mu")?;
                }
                let inst = gen_lb(&p).map_err(config)?;
                let run_eps = Rational::parse(&inst.meta["eps_L"]).map_err(config)?;
                rec.h = Some(inst.meta["H"].clone());
                rec.l = Some(inst.meta["L"].clone());
                rec.k = inst.meta["k"].parse().ok();
                rec.j = inst.meta["j"].parse().ok();
                rec.mu = Some(p.mu.encode());
                (inst, run_eps)
            };
            if cfg.family == Family::Ig {
                rec.eps = Some(eps.encode());
            } else {
                rec.eps = cell
                    .eps
                    .as_ref()
                    .map(|v| scalar::<Rational>(v, "eps").map(|e| e.encode()))
                    .transpose()?;
            }
            evaluate(
                &inst,
                &RunSpec {
                    eps,
                    delta,
                    seed,
                    cfg,
                },
            )
        }
        Family::Ppp | Family::AvgLb | Family::Balanced => {
            let eps: f64 = scalar(cell.eps.as_ref().expect("float cell"), "eps")?;
            let delta: f64 = cell
                .delta
                .as_ref()
                .map_or(Ok(0.0), |v| scalar(v, "delta"))?;
            rec.eps = Some(eps.encode());
            rec.delta = Some(delta.encode());
            let inst = match cfg.family {
                Family::Ppp => gen_ppp(&PppParams::new(
                    cfg.region(),
                    cell.nu.expect("ppp cell"),
                    seed,
                )),
                Family::AvgLb => {
                    let inst = gen_avg_lb_with(eps, cell.nu, seed);
                    if let Ok(i) = &inst {
                        rec.nu = Some(i.meta["nu"].clone());
                    }
                    inst
                }
                _ => {
                    let tilt = match cfg.tilt {
                        Some([lo, hi]) => Tilt::LinearX { lo, hi },
                        None => Tilt::Uniform,
                    };
                    gen_balanced(&BalancedParams {
                        region: cfg.region(),
                        n: cell.n.expect("balanced cell"),
                        gamma: cell.gamma.unwrap_or(0.0),
                        tilt,
                        seed,
                    })
                }
            }
            .map_err(config)?;
            evaluate(
                &inst,
                &RunSpec {
                    eps,
                    delta,
                    seed,
                    cfg,
                },
            )
        }
        Family::File => {
            let path = cell.file.as_ref().expect("file cell");
            let any = AnyInstance::load(path)
                .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
            let eps_v = cell.eps.as_ref().expect("file cell");
            match any {
                AnyInstance::Rational(inst) => {
                    let eps: Rational = scalar(eps_v, "eps")?;
                    let delta: Rational = cell
                        .delta
                        .as_ref()
                        .map_or(Ok(Rational::zero()), |v| scalar(v, "delta"))?;
                    rec.eps = Some(eps.encode());
                    rec.delta = Some(delta.encode());
                    evaluate(
                        &inst,
                        &RunSpec {
                            eps,
                            delta,
                            seed,
                            cfg,
                        },
                    )
                }
                AnyInstance::Float(inst) => {
                    let eps: f64 = scalar(eps_v, "eps")?;
                    let delta: f64 = cell
                        .delta
                        .as_ref()
                        .map_or(Ok(0.0), |v| scalar(v, "delta"))?;
                    rec.eps = Some(eps.encode());
                    rec.delta = Some(delta.encode());
                    evaluate(
                        &inst,
                        &RunSpec {
                            eps,
                            delta,
                            seed,
                            cfg,
                        },
                    )
                }
            }
        }
    };
    rec.chd_calls = outcome.chd_calls;
    rec.opt_size = outcome.opt_size;
    rec.opt_mode = outcome.opt_mode;
    rec.ratio = outcome.ratio;
    rec.ratio_exact = outcome.ratio_exact;
    rec.trace_depth = outcome.trace_depth;
    rec.lowest_internal = outcome.lowest_internal;
    rec.valid = outcome.valid;
    rec.runtime_ms = start.elapsed().as_millis() as u64;
    Ok((rec, outcome.problem))
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<BenchRecord>,
    /// `(row index, reason)` for every INVALID row.
    pub problems: Vec<(usize, String)>,
}

impl SweepOutput {
    pub fn all_valid(&self) -> bool {
        self.rows.iter().all(|r| r.valid == Validity::Ok)
    }
}

fn pool() -> Result<rayon::ThreadPool, BenchError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| BenchError::Config(format!("{THREADS_ENV}={v:?} is not a count")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| BenchError::Config(e.to_string()))
}

/// Runs every grid cell and trial; rows are ordered by `(cell, trial)`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput, BenchError> {
    cfg.delta_policy
        .parse::<DeltaPolicy>()
        .map_err(BenchError::Config)?;
    let cells = cells(cfg)?;
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let results: Vec<Result<(BenchRecord, Option<String>), BenchError>> = pool()?.install(|| {
        jobs.par_iter()
            .map(|&(c, t)| run_cell(cfg, &cells[c], t))
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut problems = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (rec, problem) = r?;
        if let Some(p) = problem {
            problems.push((i, p));
        }
        rows.push(rec);
    }
    Ok(SweepOutput { rows, problems })
}

/// Per-group statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub key: Vec<String>,
    pub count: usize,
    pub mean_ratio: f64,
    pub median_ratio: f64,
    pub max_ratio: f64,
    pub mean_calls: f64,
    pub mean_opt: f64,
    pub exact_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub group_by: Vec<String>,
    pub rows: Vec<SummaryRow>,
}

const SUMMARY_STATS: [&str; 7] = [
    "count",
    "mean_ratio",
    "median_ratio",
    "max_ratio",
    "mean_calls",
    "mean_opt",
    "exact_fraction",
];

impl Summary {
    fn cells(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header: Vec<String> = self
            .group_by
            .iter()
            .cloned()
            .chain(SUMMARY_STATS.iter().map(|s| s.to_string()))
            .collect();
        let body = self
            .rows
            .iter()
            .map(|r| {
                let mut v = r.key.clone();
                v.push(r.count.to_string());
                for x in [
                    r.mean_ratio,
                    r.median_ratio,
                    r.max_ratio,
                    r.mean_calls,
                    r.mean_opt,
                    r.exact_fraction,
                ] {
                    v.push(sig12(x));
                }
                v
            })
            .collect();
        (header, body)
    }

    pub fn to_csv(&self) -> Result<String, BenchError> {
        let (header, body) = self.cells();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header)?;
        for r in &body {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Columns padded to a common width.
    pub fn to_text(&self) -> String {
        let (header, body) = self.cells();
        let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for r in &body {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        for r in std::iter::once(&header).chain(&body) {
            let line: Vec<String> = r
                .iter()
                .zip(&width)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

/// Groups rows by the named columns, in first-appearance order.
pub fn summarize(rows: &[BenchRecord], group_by: &[&str]) -> Result<Summary, BenchError> {
    let mut groups: Vec<(Vec<String>, Vec<&BenchRecord>)> = Vec::new();
    let mut index: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for r in rows {
        let key = group_by
            .iter()
            .map(|g| {
                r.field(g)
                    .ok_or_else(|| BenchError::Config(format!("unknown column {g:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let at = *index.entry(key.clone()).or_insert_with(|| {
            groups.push((key, Vec::new()));
            groups.len() - 1
        });
        groups[at].1.push(r);
    }
    let rows = groups
        .into_iter()
        .map(|(key, rs)| {
            let n = rs.len() as f64;
            let mut ratios: Vec<f64> = rs.iter().map(|r| r.ratio_value()).collect();
            ratios.sort_by(f64::total_cmp);
            let mid = ratios.len() / 2;
            let median = if ratios.len() % 2 == 1 {
                ratios[mid]
            } else {
                (ratios[mid - 1] + ratios[mid]) / 2.0
            };
            SummaryRow {
                key,
                count: rs.len(),
                mean_ratio: ratios.iter().sum::<f64>() / n,
                median_ratio: median,
                max_ratio: ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                mean_calls: rs.iter().map(|r| r.chd_calls as f64).sum::<f64>() / n,
                mean_opt: rs.iter().map(|r| r.opt_size as f64).sum::<f64>() / n,
                exact_fraction: rs
                    .iter()
                    .filter(|r| r.opt_mode == OptMode::Exact.name())
                    .count() as f64
                    / n,
            }
        })
        .collect();
    Ok(Summary {
        group_by: group_by.iter().map(|s| s.to_string()).collect(),
        rows,
    })
}

/// Query strategy played against the horizontal-distance adversary.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// `λ = 1`, then the slope from the latest answer to `b`.
    Chord,
    /// `λ = 1`, then the midpoint of the last slope and the slope to `b`.
    Bisection,
    /// Fixed slopes in the adversary frame, as JSON numbers or `"p/q"` strings.
    Script(Vec<Value>),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Chord => "chord",
            Strategy::Bisection => "bisection",
            Strategy::Script(_) => "file-script",
        }
    }

    /// Parses a JSON list of slopes.
    pub fn parse_script(s: &str) -> Result<Self, BenchError> {
        let v: Vec<Value> = serde_json::from_str(s)?;
        Ok(Strategy::Script(v))
    }

    fn next<T: Scalar>(&self, st: &AdversaryState<T>, i: usize) -> Result<Option<T>, BenchError> {
        Ok(match self {
            Strategy::Chord => Some(st.slope_to_b().unwrap_or_else(T::one)),
            Strategy::Bisection => Some(match (st.last_slope(), st.slope_to_b()) {
                (Some(l), Some(b)) => (l.clone() + b) / T::from_int(2),
                _ => T::one(),
            }),
            Strategy::Script(v) => v.get(i).map(|x| scalar(x, "slope")).transpose()?,
        })
    }
}

/// One query of a duel; `answer` is in the adversary frame, one unit below and
/// left of the finalized instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DuelStep<T> {
    pub slope: T,
    pub answer: Point<T>,
    pub certified_error: T,
    /// Set when the slope was clamped and did not advance the adversary.
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct DuelReport<T> {
    pub k: u32,
    pub placement: Placement,
    pub strategy: &'static str,
    pub steps: Vec<DuelStep<T>>,
    pub certified_within_half: bool,
    pub instance: Instance<T>,
    /// `opt_exact` at ε = 1/2, horizontal.
    pub opt_size: usize,
    /// `{a, q*, b}` in instance coordinates; `q*` shares its y with `b`.
    pub three_point_set: Vec<Point<T>>,
    pub three_point_error: T,
}

impl<T: Scalar> DuelReport<T> {
    pub fn queries(&self) -> usize {
        self.steps.len()
    }

    pub fn to_json_value(&self) -> Value {
        let steps: Vec<Value> = self
            .steps
            .iter()
            .map(|s| {
                serde_json::json!({
                    "slope": s.slope.to_json(),
                    "answer": [s.answer.x.to_json(), s.answer.y.to_json()],
                    "certified_error": s.certified_error.to_json(),
                    "note": s.note,
                })
            })
            .collect();
        serde_json::json!({
            "k": self.k,
            "strategy": self.strategy,
            "mode": T::MODE,
            "placement": self.placement,
            "queries": self.queries(),
            "steps": steps,
            "certified_within_half": self.certified_within_half,
            "opt_size": self.opt_size,
            "three_point_error": self.three_point_error.to_json(),
            "instance": self.instance.to_json_value(),
        })
    }
}

/// Plays `strategy` against the adversary until it certifies horizontal
/// error at most 1/2 or has issued `k − 1` queries.
///
/// Under the chord strategy and exact placement the digit count of rational
/// coordinates roughly doubles per query; dyadic placement keeps it linear.
pub fn adversary_duel<T: Scalar>(
    k: u32,
    strategy: &Strategy,
    placement: Placement,
) -> Result<DuelReport<T>, BenchError> {
    let mut st = AdversaryState::<T>::with_placement(k, placement).map_err(config)?;
    let half = T::one() / T::from_int(2);
    let mut steps = Vec::new();
    while steps.len() < (k - 1) as usize {
        let Some(slope) = strategy.next(&st, steps.len())? else {
            break;
        };
        let (answer, note) = if slope.is_positive() {
            (st.answer(&slope).map_err(config)?, None)
        } else {
            let kept = st
                .committed()
                .last()
                .map(|(_, q)| q.clone())
                .unwrap_or(Point::new(T::one(), T::zero()));
            (
                kept,
                Some(format!("slope {} clamped: not positive", slope.encode())),
            )
        };
        let note = note.or_else(|| {
            (st.last_slope() != Some(&slope)).then(|| {
                format!(
                    "slope {} does not decrease; answered from the last certificate",
                    slope.encode()
                )
            })
        });
        steps.push(DuelStep {
            slope,
            answer,
            certified_error: st.certified_error(),
            note,
        });
        if st.certified_error() <= half {
            break;
        }
    }
    let certified_within_half = st.certified_error() <= half;
    let star = st.last_star().cloned();
    let instance = st.finalize().map_err(config)?;
    let opt =
        opt_exact_capped(&instance, &half, Metric::Horizontal, instance.len()).map_err(config)?;
    let one = T::one();
    let star = star.expect("finalize succeeded, so a query was committed");
    let three = vec![
        Point::new(one.clone(), T::from_int(2)),
        Point::new(star.x + &one, star.y + &one),
        Point::new(T::from_int(2), one),
    ];
    let err = verify_eps_cp(
        &instance,
        &Chain::envelope(&three).map_err(config)?,
        &half,
        Metric::Horizontal,
    )
    .map_err(config)?;
    let three_point_error = err
        .worst
        .exact()
        .cloned()
        .expect("horizontal error is bounded on a covering set");
    Ok(DuelReport {
        k,
        placement,
        strategy: strategy.name(),
        steps,
        certified_within_half,
        instance,
        opt_size: opt.size,
        three_point_set: three,
        three_point_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn q(n: i64, d: i64) -> Rational {
        Rational::ratio(n, d)
    }

    fn ig_config() -> SweepConfig {
        SweepConfig::from_json(
            &json!({"family": "ig", "metric": "horizontal", "grid": {"H": [1], "L": [1], "k": [4], "j": [3], "eps": ["1/2"]}})
                .to_string(),
        )
        .unwrap()
    }

    #[test]
    fn ig_row() {
        let out = run_sweep(&ig_config()).unwrap();
        assert_eq!(out.rows.len(), 1);
        let r = &out.rows[0];
        assert_eq!((r.chd_calls, r.opt_size), (5, 2));
        assert_eq!(r.ratio_exact.as_deref(), Some("5/2"));
        assert_eq!(r.ratio, "2.50000000000");
        assert_eq!(r.valid, Validity::Ok);
        assert_eq!((r.trace_depth, r.lowest_internal), (2, 1));
    }

    #[test]
    fn zero_trials_is_empty() {
        let mut cfg = ig_config();
        cfg.trials = 0;
        let out = run_sweep(&cfg).unwrap();
        assert!(out.rows.is_empty() && out.all_valid());
        let mut buf = Vec::new();
        write_csv(&out.rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().trim(),
            CSV_COLUMNS.join(",")
        );
    }

    #[test]
    fn csv_round_trip_and_header() {
        let cfg = SweepConfig::from_json(
            &json!({"family": "avg-lb", "metric": "ratio", "grid": {"eps": [0.01]}, "trials": 3, "seed": 4}).to_string(),
        )
        .unwrap();
        let mut rows = run_sweep(&cfg).unwrap().rows;
        rows.extend(run_sweep(&ig_config()).unwrap().rows);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn config_errors() {
        assert!(SweepConfig::from_json(r#"{"family":"lb","metric":"ratio","bogus":1}"#).is_err());
        let cfg = SweepConfig::from_json(r#"{"family":"lb","metric":"ratio"}"#).unwrap();
        assert!(matches!(run_sweep(&cfg), Err(BenchError::Config(_))));
    }

    #[test]
    fn summary_of_equal_ratios() {
        let mut rows = run_sweep(&ig_config()).unwrap().rows;
        rows.push(rows[0].clone());
        let s = summarize(&rows, &["family", "k"]).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].count, 2);
        assert_eq!(s.rows[0].mean_ratio, 2.5);
        assert_eq!(s.rows[0].exact_fraction, 1.0);
        assert!(s.to_text().lines().next().unwrap().contains("mean_ratio"));
        assert!(s.to_csv().unwrap().starts_with("family,k,count"));
        assert!(summarize(&rows, &["nope"]).is_err());
    }

    #[test]
    fn duel_k4() {
        let r = adversary_duel::<Rational>(4, &Strategy::Chord, Placement::Exact).unwrap();
        assert_eq!(r.queries(), 3);
        assert_eq!(r.steps[0].certified_error, q(7, 8));
        assert!(r.steps.iter().all(|s| s.certified_error > q(1, 2)));
        assert!(!r.certified_within_half);
        assert!(r.opt_size <= 3);
        assert!(r.three_point_error < q(1, 2) - q(1, 8));
        assert_eq!(r.instance.len(), 6);
    }

    #[test]
    fn duel_script_and_clamping() {
        let s = Strategy::parse_script(r#"["1", "2", 0, "1/16"]"#).unwrap();
        let r = adversary_duel::<Rational>(8, &s, Placement::Exact).unwrap();
        assert_eq!(r.queries(), 4);
        assert!(r.steps[1].note.is_some());
        assert!(r.steps[2].note.is_some());
        assert!(r.steps[3].note.is_none());
        assert_eq!(r.steps[1].answer, r.steps[0].answer);
    }

    #[test]
    fn duel_float_matches_rational() {
        let r = adversary_duel::<Rational>(8, &Strategy::Chord, Placement::Exact).unwrap();
        let f = adversary_duel::<f64>(8, &Strategy::Chord, Placement::Exact).unwrap();
        assert_eq!(r.queries(), f.queries());
        for (a, b) in r.steps.iter().zip(&f.steps) {
            assert!((a.certified_error.to_f64() - b.certified_error).abs() < 1e-12);
        }
        assert!((r.three_point_error.to_f64() - f.three_point_error).abs() < 1e-12);
        assert_eq!(r.opt_size, f.opt_size);
    }

    #[test]
    fn dyadic_duel_stays_small() {
        for k in [4, 8, 16, 32] {
            let r = adversary_duel::<Rational>(k, &Strategy::Chord, Placement::Dyadic).unwrap();
            assert_eq!(r.queries(), (k - 1) as usize);
            assert!(!r.certified_within_half);
            assert!(r.three_point_error <= q(1, 2) - q(1, 2 * k as i64));
            for p in r.instance.points() {
                assert!(p.x.denom().bits() < 4096 && p.y.denom().bits() < 4096);
            }
        }
    }

    #[test]
    fn sig_digits() {
        assert_eq!(sig12(5.0 / 3.0), "1.66666666667");
        assert_eq!(sig12(12.5), "12.5000000000");
    }
}
