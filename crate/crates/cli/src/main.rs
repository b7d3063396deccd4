use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use chordbench::bench::{
    adversary_duel, run_sweep, summarize, write_csv, BenchError, Strategy, SweepConfig,
};
use chordbench::chord::{run_chord, trace_stats, verify_eps_cp, ChordParams};
use chordbench::generate::{
    gen_avg_lb_with, gen_balanced, gen_ig, gen_lb, gen_ppp, BalancedParams, IgParams, LbParams,
    PppParams, Tilt,
};
use chordbench::geometry::{Chain, Metric, Point, Triangle};
use chordbench::instance::{parse_point_list, AnyInstance, Instance};
use chordbench::optimum::{opt_exact_capped, opt_greedy, EXACT_CAP};
use chordbench::oracle::{DeltaComb, DeltaPolicy, Placement, TieBreak};
use chordbench::{Rational, Scalar};

#[derive(Parser)]
#[command(
    name = "chord-bench",
    version,
    about = "Chord algorithm benchmarks for convex Pareto curves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Ig,
    Lb,
    Ppp,
    AvgLb,
    Balanced,
}

#[derive(Clone, Copy, ValueEnum)]
enum DuelMode {
    /// Rational with dyadic placement or k <= 10, float otherwise.
    Auto,
    Rational,
    Float,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum PlacementArg {
    Exact,
    Dyadic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Greedy,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long = "H")]
        h: Option<String>,
        #[arg(long = "L")]
        l: Option<String>,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long)]
        j: Option<u32>,
        /// Break the q_1 tie of I_G by a tiny exact perturbation.
        #[arg(long)]
        perturb: bool,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        mu: Option<String>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Sampling triangle as `x1,y1,x2,y2,x3,y3`.
        #[arg(long)]
        region: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run Chord on an instance.
    Run {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        eps: String,
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        delta: Option<String>,
        #[arg(long, default_value = "leftmost")]
        tiebreak: TieBreak,
        /// Approximate-oracle policy: best, worst or random:SEED.
        #[arg(long, default_value = "worst")]
        policy: String,
        /// Write the recursion trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compute the optimum (or greedy upper bound) on an instance.
    Opt {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        eps: String,
        #[arg(long)]
        metric: Metric,
        #[arg(long, value_enum, default_value = "exact")]
        mode: ModeArg,
        #[arg(long, default_value_t = EXACT_CAP)]
        cap: usize,
    },
    /// Check that a point set is an ε-convex Pareto set; exits 1 if not.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        /// JSON list of `[x, y]` points.
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        eps: String,
        #[arg(long)]
        metric: Metric,
    },
    /// Play a query strategy against the horizontal-distance adversary.
    Adversary {
        #[arg(long)]
        k: u32,
        /// `chord`, `bisection`, or a JSON file with a list of slopes.
        #[arg(long, default_value = "chord")]
        strategy: String,
        #[arg(long, value_enum, default_value = "auto")]
        mode: DuelMode,
        #[arg(long, value_enum, default_value = "exact")]
        placement: PlacementArg,
    },
    /// Run a parameter sweep and write CSV rows.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print a summary grouped by these comma-separated columns.
        #[arg(long, value_delimiter = ',')]
        summary: Vec<String>,
        /// Write the summary as CSV instead of aligned text.
        #[arg(long)]
        summary_csv: Option<PathBuf>,
    },
}

/// Failure after a valid configuration was accepted.
#[derive(Debug)]
struct Runtime(String);

impl std::fmt::Display for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Runtime {}

fn runtime<E: std::fmt::Display>(e: E) -> anyhow::Error {
    Runtime(e.to_string()).into()
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(runtime),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).map_err(runtime)
        }
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes") + "\n"
}

fn need<T>(v: Option<T>, flag: &str, family: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("--{flag} is required for family {family}"))
}

fn parse_region(s: &str) -> Result<Triangle<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()?;
    let [x1, y1, x2, y2, x3, y3] = v[..] else {
        bail!("--region needs six numbers, got {}", v.len())
    };
    Ok(Triangle::new(
        Point::new(x1, y1),
        Point::new(x2, y2),
        Point::new(x3, y3),
    ))
}

fn default_region() -> Triangle<f64> {
    Triangle::new(
        Point::new(1.0, 2.0),
        Point::new(2.0, 1.0),
        Point::new(1.0, 1.0),
    )
}

fn load(path: &Path) -> Result<AnyInstance> {
    AnyInstance::load(path).with_context(|| format!("loading {}", path.display()))
}

fn scalar<T: Scalar>(s: &str, flag: &str) -> Result<T> {
    T::parse(s).map_err(|e| anyhow!("--{flag} {s:?}: {e}"))
}

fn run_any<T: Scalar>(
    inst: &Instance<T>,
    eps: &str,
    metric: Metric,
    delta: Option<&str>,
    tiebreak: TieBreak,
    policy: DeltaPolicy,
    trace: Option<&Path>,
) -> Result<()> {
    let eps: T = scalar(eps, "eps")?;
    let delta: T = delta.map_or(Ok(T::zero()), |d| scalar(d, "delta"))?;
    let mut oracle = DeltaComb::new(inst, delta.clone(), policy, tiebreak);
    let params = ChordParams::new(eps.clone(), metric).with_delta(delta);
    params.internal_eps()?;
    let res = run_chord(&mut oracle, &params, inst.m()).map_err(runtime)?;
    let stats = trace_stats(&res);
    let check = verify_eps_cp(inst, &res.chain(), &eps, metric).map_err(runtime)?;
    if let Some(p) = trace {
        emit(Some(p), &(res.trace_json() + "\n"))?;
    }
    let mut v = res.to_json_value();
    if let Value::Object(o) = &mut v {
        o.remove("trace");
        o.insert("trace_depth".into(), json!(stats.max_depth));
        o.insert("lowest_internal".into(), json!(stats.lowest_internal_count));
        o.insert("verified".into(), json!(check.ok));
    }
    emit(None, &pretty(&v))?;
    if !check.ok {
        return Err(runtime(format!("chord output misses by {}", check.worst)));
    }
    Ok(())
}

fn opt_any<T: Scalar>(
    inst: &Instance<T>,
    eps: &str,
    metric: Metric,
    mode: ModeArg,
    cap: usize,
) -> Result<()> {
    let eps: T = scalar(eps, "eps")?;
    let r = match mode {
        ModeArg::Exact => opt_exact_capped(inst, &eps, metric, cap),
        ModeArg::Greedy => opt_greedy(inst, &eps, metric),
    }
    .map_err(runtime)?;
    let witness: Vec<Value> = r
        .witness
        .iter()
        .flat_map(|w| w.vertices())
        .map(|p| json!([p.x.to_json(), p.y.to_json()]))
        .collect();
    emit(
        None,
        &pretty(&json!({
            "size": r.size,
            "mode": r.mode.name(),
            "metric": metric.name(),
            "eps": r.epsilon.to_json(),
            "witness": witness,
        })),
    )
}

fn verify_any<T: Scalar>(inst: &Instance<T>, set: &str, eps: &str, metric: Metric) -> Result<bool> {
    let eps: T = scalar(eps, "eps")?;
    let pts: Vec<Point<T>> = parse_point_list(set)?;
    let chain = Chain::envelope(&pts)?;
    let v = verify_eps_cp(inst, &chain, &eps, metric)?;
    let worst = match v.worst.exact() {
        Some(x) => x.to_json(),
        None if v.worst.is_unbounded() => json!(null),
        None => json!(v.worst.to_f64()),
    };
    emit(
        None,
        &pretty(&json!({
            "ok": v.ok,
            "worst": worst,
            "worst_f64": v.worst.to_f64(),
            "witness": v.witness.map(|p| json!([p.x.to_json(), p.y.to_json()])),
        })),
    )?;
    Ok(v.ok)
}

fn gen(cmd: Command) -> Result<()> {
    let Command::Gen {
        family,
        h,
        l,
        k,
        j,
        perturb,
        m,
        eps,
        mu,
        nu,
        n,
        gamma,
        region,
        seed,
        out,
    } = cmd
    else {
        unreachable!()
    };
    let region = region.as_deref().map(parse_region).transpose()?;
    let inst: AnyInstance = match family {
        FamilyArg::Ig => {
            let h: Rational = scalar(&need(h, "H", "ig")?, "H")?;
            let l: Rational = scalar(&need(l, "L", "ig")?, "L")?;
            let mut p = IgParams::new(h, l, need(k, "k", "ig")?, need(j, "j", "ig")?);
            p.perturb = perturb;
            gen_ig(&p)?.into()
        }
        FamilyArg::Lb => {
            let mut p = LbParams::new(
                scalar::<Rational>(&need(eps, "eps", "lb")?, "eps")?,
                need(m, "m", "lb")?,
            );
            if let Some(mu) = mu {
                p.mu = scalar(&mu, "mu")?;
            }
            gen_lb(&p)?.into()
        }
        FamilyArg::Ppp => gen_ppp(&PppParams::new(
            region.unwrap_or_else(default_region),
            need(nu, "nu", "ppp")?,
            seed,
        ))?
        .into(),
        FamilyArg::AvgLb => {
            gen_avg_lb_with(scalar(&need(eps, "eps", "avg-lb")?, "eps")?, nu, seed)?.into()
        }
        FamilyArg::Balanced => gen_balanced(&BalancedParams {
            region: region.unwrap_or_else(default_region),
            n: need(n, "n", "balanced")?,
            gamma: gamma.unwrap_or(0.0),
            tilt: Tilt::Uniform,
            seed,
        })?
        .into(),
    };
    emit(out.as_deref(), &(inst.to_json() + "\n"))
}

fn bench(
    config: &Path,
    out: Option<PathBuf>,
    summary: &[String],
    summary_csv: Option<PathBuf>,
) -> Result<ExitCode> {
    let text =
        fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg = SweepConfig::from_json(&text)?;
    let res = match run_sweep(&cfg) {
        Ok(r) => r,
        Err(e @ BenchError::Config(_)) => return Err(e.into()),
        Err(e) => return Err(runtime(e)),
    };
    let out = out.or_else(|| cfg.output.clone());
    let mut buf = Vec::new();
    write_csv(&res.rows, &mut buf).map_err(runtime)?;
    emit(
        out.as_deref(),
        &String::from_utf8(buf).expect("csv is utf-8"),
    )?;
    if !summary.is_empty() {
        let cols: Vec<&str> = summary.iter().map(String::as_str).collect();
        let s = summarize(&res.rows, &cols)?;
        match summary_csv {
            Some(p) => emit(Some(&p), &s.to_csv().map_err(runtime)?)?,
            None => eprint!("{}", s.to_text()),
        }
    }
    for (i, why) in &res.problems {
        eprintln!("row {i} INVALID: {why}");
    }
    Ok(if res.all_valid() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        c @ Command::Gen { .. } => gen(c)?,
        Command::Run {
            instance,
            eps,
            metric,
            delta,
            tiebreak,
            policy,
            trace,
        } => {
            let policy: DeltaPolicy = policy.parse().map_err(|e: String| anyhow!(e))?;
            let (d, t) = (delta.as_deref(), trace.as_deref());
            match load(&instance)? {
                AnyInstance::Rational(i) => run_any(&i, &eps, metric, d, tiebreak, policy, t)?,
                AnyInstance::Float(i) => run_any(&i, &eps, metric, d, tiebreak, policy, t)?,
            }
        }
        Command::Opt {
            instance,
            eps,
            metric,
            mode,
            cap,
        } => match load(&instance)? {
            AnyInstance::Rational(i) => opt_any(&i, &eps, metric, mode, cap)?,
            AnyInstance::Float(i) => opt_any(&i, &eps, metric, mode, cap)?,
        },
        Command::Verify {
            instance,
            set,
            eps,
            metric,
        } => {
            let set =
                fs::read_to_string(&set).with_context(|| format!("reading {}", set.display()))?;
            let ok = match load(&instance)? {
                AnyInstance::Rational(i) => verify_any(&i, &set, &eps, metric)?,
                AnyInstance::Float(i) => verify_any(&i, &set, &eps, metric)?,
            };
            if !ok {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Adversary {
            k,
            strategy,
            mode,
            placement,
        } => {
            let s = match strategy.as_str() {
                "chord" => Strategy::Chord,
                "bisection" => Strategy::Bisection,
                path => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading strategy script {path}"))?;
                    Strategy::parse_script(&text)?
                }
            };
            let dyadic = placement == PlacementArg::Dyadic;
            let placement = if dyadic {
                Placement::Dyadic
            } else {
                Placement::Exact
            };
            let report = match mode {
                DuelMode::Rational => adversary_duel::<Rational>(k, &s, placement)?.to_json_value(),
                DuelMode::Auto if dyadic || k <= 10 => {
                    adversary_duel::<Rational>(k, &s, placement)?.to_json_value()
                }
                _ => adversary_duel::<f64>(k, &s, placement)?.to_json_value(),
            };
            emit(None, &pretty(&report))?;
        }
        Command::Bench {
            config,
            out,
            summary,
            summary_csv,
        } => return bench(&config, out, &summary, summary_csv),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Runtime>().is_some() {
                ExitCode::FAILURE
            } else {
                ExitCode::from(3)
            }
        }
    }
}
