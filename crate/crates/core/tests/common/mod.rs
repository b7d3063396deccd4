#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;

use chordbench::chord::{run_chord, trace_stats, verify_eps_cp, ChordParams};
use chordbench::geometry::{pareto_points, Metric, Point};
use chordbench::instance::Instance;
use chordbench::optimum::{opt_exact, opt_greedy, EXACT_CAP};
use chordbench::oracle::{ExactComb, TieBreak};
use chordbench::{Rational, Scalar};
use num::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub fn q(n: i64, d: i64) -> Rational {
    Rational::ratio(n, d)
}

/// Prints one report line and returns whether the criterion passed. The line
/// goes to the stderr handle directly, so it shows even when output is captured.
pub fn report(id: &str, ok: bool, detail: &str) -> bool {
    let line = format!("[{}] {id}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    ok
}

/// A convex chain from integer edge vectors sorted by decreasing steepness,
/// scaled by 1/32 with every coordinate at least 1, plus a few dominated
/// points, `n` points at most.
pub fn random_chain<R: Rng>(rng: &mut R, n: usize) -> Instance<Rational> {
    let mut edges: Vec<(i64, i64)> = (1..n)
        .map(|_| (rng.random_range(1..=32), rng.random_range(1..=32)))
        .collect();
    // Steepest first: dy1/dx1 > dy2/dx2.
    edges.sort_by(|a, b| (b.1 * a.0).cmp(&(a.1 * b.0)));
    edges.dedup_by(|a, b| a.1 * b.0 == b.1 * a.0);
    let total_dy: i64 = edges.iter().map(|e| e.1).sum();
    let (mut x, mut y) = (32, 32 + total_dy);
    let mut pts = vec![Point::new(q(x, 32), q(y, 32))];
    for (dx, dy) in &edges {
        x += dx;
        y -= dy;
        pts.push(Point::new(q(x, 32), q(y, 32)));
    }
    if rng.random_bool(0.25) {
        let extra = rng.random_range(1..=5usize).min(n - pts.len());
        for _ in 0..extra {
            let v = pts[rng.random_range(0..pts.len())].clone();
            let d = Point::new(
                q(rng.random_range(1..=16), 32),
                q(rng.random_range(1..=16), 32),
            );
            pts.push(Point::new(v.x + d.x, v.y + d.y));
        }
    }
    pts.sort_by(|a, b| a.x.cmp(&b.x).then(b.y.cmp(&a.y)));
    pts.dedup();
    debug_assert!(pts.len() <= n);
    Instance::with_auto_m(pts, BTreeMap::new()).expect("corpus chain is a valid instance")
}

pub struct CorpusCase {
    pub inst: Instance<Rational>,
    pub eps: Rational,
}

pub const CORPUS_SIZE: usize = 10_000;

pub fn corpus_case(i: usize) -> CorpusCase {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE_0000 + i as u64);
    let n = rng.random_range(2..=50);
    let inst = random_chain(&mut rng, n);
    let eps = q(rng.random_range(1..=256), 1024);
    CorpusCase { inst, eps }
}

/// Outcome of one Chord run on a corpus instance.
pub struct CorpusRun {
    pub case: usize,
    pub metric: Metric,
    pub pareto: usize,
    pub verified: Result<bool, String>,
    /// Nodes whose children areas do not sum to `y(1−y)` times theirs, or exceed a quarter.
    pub area_failures: Vec<String>,
    pub split_nodes: usize,
    pub lowest_internal: usize,
    pub opt_exact: Option<usize>,
    pub opt_greedy: Option<usize>,
}

fn run_case(case: usize, c: &CorpusCase, metric: Metric) -> CorpusRun {
    let pareto = pareto_points(c.inst.points()).len();
    let mut out = CorpusRun {
        case,
        metric,
        pareto,
        verified: Err("not run".into()),
        area_failures: Vec::new(),
        split_nodes: 0,
        lowest_internal: 0,
        opt_exact: None,
        opt_greedy: None,
    };
    let mut oracle = ExactComb::new(&c.inst, TieBreak::Leftmost);
    let res = match run_chord(
        &mut oracle,
        &ChordParams::new(c.eps.clone(), metric),
        c.inst.m(),
    ) {
        Ok(r) => r,
        Err(e) => {
            out.verified = Err(format!("chord failed: {e}"));
            return out;
        }
    };
    out.verified = verify_eps_cp(&c.inst, &res.chain(), &c.eps, metric)
        .map(|v| v.ok)
        .map_err(|e| e.to_string());
    if let Some(root) = &res.trace {
        for node in root.walk() {
            let Some(split) = &node.split else { continue };
            out.split_nodes += 1;
            let parent = node.triangle.area();
            let children = split.left.area() + split.right.area();
            let expected = split.y.clone() * (Rational::one() - &split.y) * &parent;
            if children != expected || children.clone() * Rational::from_int(4) > parent {
                out.area_failures.push(format!(
                    "depth {} parent {} children {} y {}",
                    node.depth,
                    parent.encode(),
                    children.encode(),
                    split.y.encode()
                ));
            }
        }
    }
    out.lowest_internal = trace_stats(&res).lowest_internal_count;
    if pareto <= EXACT_CAP {
        out.opt_exact = opt_exact(&c.inst, &c.eps, metric).ok().map(|o| o.size);
    }
    out.opt_greedy = opt_greedy(&c.inst, &c.eps, metric).ok().map(|o| o.size);
    out
}

/// Every corpus instance under every metric, computed once per test binary.
pub fn corpus_runs() -> &'static [CorpusRun] {
    static RUNS: OnceLock<Vec<CorpusRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (0..CORPUS_SIZE)
            .into_par_iter()
            .flat_map_iter(|i| {
                let c = corpus_case(i);
                Metric::ALL
                    .into_iter()
                    .map(move |m| run_case(i, &c, m))
                    .collect::<Vec<_>>()
            })
            .collect()
    })
}
