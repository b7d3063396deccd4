mod common;

use chordbench::bench::{adversary_duel, Strategy as Duel};
use chordbench::chord::{run_chord, trace_stats, verify_eps_cp, ChordParams};
use chordbench::geometry::{
    chord_split, cross, metric_to_segment, ratio_distance, Metric, Point, Segment, Slope, Triangle,
};
use chordbench::optimum::{opt_exact, opt_exhaustive, opt_greedy};
use chordbench::oracle::{
    certificate_holds, comb_exact, DeltaComb, DeltaPolicy, ExactComb, Placement, TieBreak,
};
use chordbench::{Instance, Rational, Scalar};
use common::{q, random_chain};
use num::{One, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn chain_from(seed: u64, n: usize) -> Instance<Rational> {
    random_chain(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

fn metric() -> impl Strategy<Value = Metric> {
    prop_oneof![
        Just(Metric::Ratio),
        Just(Metric::Horizontal),
        Just(Metric::Hausdorff)
    ]
}

fn eps() -> impl Strategy<Value = Rational> {
    (1i64..=256).prop_map(|k| q(k, 1024))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn chord_output_is_an_eps_cp(seed in any::<u64>(), n in 2usize..=40, m in metric(), e in eps()) {
        let inst = chain_from(seed, n);
        let mut oracle = ExactComb::new(&inst, TieBreak::Leftmost);
        let res = run_chord(&mut oracle, &ChordParams::new(e.clone(), m), inst.m()).unwrap();
        prop_assert!(verify_eps_cp(&inst, &res.chain(), &e, m).unwrap().ok);
        prop_assert_eq!(res.comb_calls, res.calls.len() as u64);
        let nodes = res.trace.as_ref().map_or(0, |t| t.walk().len()) as u64;
        prop_assert_eq!(res.comb_calls, 2 + nodes);
        for p in &res.selected {
            prop_assert!(inst.points().contains(p));
        }
    }

    #[test]
    fn chord_with_approximate_comb_is_a_ratio_eps_cp(
        seed in any::<u64>(), n in 2usize..=30, e in eps(), d in 0i64..=8, policy in 0u64..3,
    ) {
        // The (1+δ) slack is multiplicative, so the guarantee is in ratio distance.
        let inst = chain_from(seed, n);
        let delta = q(d, 256);
        let policy = match policy { 0 => DeltaPolicy::Best, 1 => DeltaPolicy::Worst, s => DeltaPolicy::Random(s) };
        let mut oracle = DeltaComb::new(&inst, delta.clone(), policy, TieBreak::Leftmost);
        let params = ChordParams::new(e.clone(), Metric::Ratio).with_delta(delta);
        match params.internal_eps() {
            Ok(_) => {
                let res = run_chord(&mut oracle, &params, inst.m()).unwrap();
                prop_assert!(verify_eps_cp(&inst, &res.chain(), &e, Metric::Ratio).unwrap().ok);
            }
            Err(_) => prop_assert!(run_chord(&mut oracle, &params, inst.m()).is_err()),
        }
    }

    #[test]
    fn trace_children_split_parent_area(seed in any::<u64>(), n in 3usize..=40, m in metric(), e in eps()) {
        let inst = chain_from(seed, n);
        let mut oracle = ExactComb::new(&inst, TieBreak::Rightmost);
        let res = run_chord(&mut oracle, &ChordParams::new(e, m), inst.m()).unwrap();
        let Some(root) = &res.trace else { return Ok(()) };
        for node in root.walk() {
            for child in node.children() {
                prop_assert_eq!(child.depth, node.depth + 1);
                prop_assert!(node.triangle.contains(&child.triangle.s));
            }
            if let Some(split) = &node.split {
                let parent = node.triangle.area();
                let kids = split.left.area() + split.right.area();
                prop_assert_eq!(kids.clone(), split.y.clone() * (Rational::one() - &split.y) * &parent);
                prop_assert!(kids * Rational::from_int(4) <= parent);
            }
        }
        let stats = trace_stats(&res);
        prop_assert!(stats.lowest_internal_count <= stats.node_count);
    }

    #[test]
    fn split_of_an_interior_point(
        h in 1i64..64, l in 1i64..64, sx in 1i64..64, w in (1i64..100, 1i64..100, 1i64..100),
    ) {
        // l = (0, h), r = (l, 0), s = (sx', 0) scaled into the first quadrant by +1.
        let one = Rational::one();
        let tl = Point::new(one.clone(), one.clone() + q(h, 8));
        let tr = Point::new(one.clone() + q(l, 8), one.clone());
        let ts = Point::new(one.clone() + q(l, 8) * q(sx, 64), one.clone());
        let t = Triangle::new(tl.clone(), tr.clone(), ts.clone());
        let total = w.0 + w.1 + w.2;
        let pick = |f: fn(&Point<Rational>) -> &Rational| {
            (f(&tl).clone() * q(w.0, total)) + (f(&tr).clone() * q(w.1, total)) + (f(&ts).clone() * q(w.2, total))
        };
        let p = Point::new(pick(|v| &v.x), pick(|v| &v.y));
        let split = chord_split(&t, &p).unwrap();
        prop_assert!(split.y > Rational::zero() && split.y < one);
        prop_assert_eq!(
            split.left.area() + split.right.area(),
            split.y.clone() * (Rational::one() - &split.y) * t.area()
        );
        prop_assert_eq!(split.left.r.clone(), p.clone());
        prop_assert_eq!(split.right.l.clone(), p.clone());
        prop_assert!(t.contains(&split.left.s) && t.contains(&split.right.s));
    }

    #[test]
    fn exact_comb_answers_carry_certificates(seed in any::<u64>(), n in 2usize..=40, num in 0i64..200, den in 1i64..50) {
        let inst = chain_from(seed, n);
        let slope = Slope::Finite(q(num, den));
        for tb in [TieBreak::Leftmost, TieBreak::Rightmost] {
            let p = comb_exact(&inst, &slope, tb).unwrap();
            prop_assert!(certificate_holds(inst.points(), &p, &slope, &Rational::zero()));
            let h = p.weighted(&slope);
            prop_assert!(inst.points().iter().all(|o| o.weighted(&slope) >= h));
        }
    }

    #[test]
    fn exact_optimum_matches_subset_search(seed in any::<u64>(), n in 2usize..=9, m in metric(), e in eps()) {
        let inst = chain_from(seed, n);
        let exact = opt_exact(&inst, &e, m).unwrap();
        let brute = opt_exhaustive(&inst, &e, m).unwrap();
        prop_assert_eq!(exact.size, brute.size);
        let greedy = opt_greedy(&inst, &e, m).unwrap();
        prop_assert!(greedy.size >= exact.size);
        prop_assert!(verify_eps_cp(&inst, greedy.witness.as_ref().unwrap(), &e, m).unwrap().ok);
    }

    #[test]
    fn small_area_means_small_ratio_error(
        c in (16i64..64, 16i64..64), legs in (0i64..=16, 1i64..=16, 1i64..=16, 0i64..=16), e in eps(),
    ) {
        // Legs scaled by ε keep the area at most ε²·α² since α = min(x(c), y(c)) ≥ 1.
        let apex = Point::new(q(c.0, 16), q(c.1, 16));
        let unit = e.clone() / Rational::from_int(16);
        let l = Point::new(apex.x.clone() - unit.clone() * q(legs.0, 1), apex.y.clone() + unit.clone() * q(legs.1, 1));
        let r = Point::new(apex.x.clone() + unit.clone() * q(legs.2, 1), apex.y.clone() - unit * q(legs.3, 1));
        prop_assume!(cross(&l, &r, &apex) < Rational::zero());
        let t = Triangle::new(l.clone(), r.clone(), apex.clone());
        let alpha = if apex.x < apex.y { apex.x.clone() } else { apex.y.clone() };
        prop_assert!(t.area() <= e.clone() * &e * &alpha * &alpha);
        let d = metric_to_segment(&apex, &Segment::new(l, r), Metric::Ratio).unwrap();
        prop_assert!(d.within(&e), "distance {} above {}", d, e);
    }

    #[test]
    fn small_trace_triangles_are_within_eps(seed in any::<u64>(), n in 3usize..=40, e in eps(), probe in 1i64..=64) {
        let inst = chain_from(seed, n);
        let mut oracle = ExactComb::new(&inst, TieBreak::Leftmost);
        let res = run_chord(&mut oracle, &ChordParams::new(q(1, 4096), Metric::Ratio), inst.m()).unwrap();
        let Some(root) = &res.trace else { return Ok(()) };
        let probe_eps = e * q(probe, 16);
        for node in root.walk() {
            let t = &node.triangle;
            let alpha = if t.s.x < t.s.y { t.s.x.clone() } else { t.s.y.clone() };
            if t.area() <= probe_eps.clone() * &probe_eps * &alpha * &alpha {
                let d = metric_to_segment(&t.s, &Segment::new(t.l.clone(), t.r.clone()), Metric::Ratio).unwrap();
                prop_assert!(d.within(&probe_eps), "depth {}: {} above {}", node.depth, d, probe_eps);
            }
        }
    }

    #[test]
    fn sandwich_holds_for_random_rationals(
        h in 1i64..4096, l in 1i64..4096, w1 in (1i64..50, 1i64..50, 1i64..50), w2 in (1i64..50, 1i64..50, 1i64..50),
    ) {
        let one = Rational::one();
        let (hh, ll) = (q(h, 256), q(l, 4096));
        let a = Point::new(one.clone(), one.clone() + &hh);
        let b = Point::new(one.clone() + &ll, one.clone());
        let c = Point::new(one.clone(), one.clone());
        let inside = |p: &Point<Rational>, r: &Point<Rational>, s: &Point<Rational>, w: (i64, i64, i64)| {
            let t = w.0 + w.1 + w.2;
            Point::new(
                p.x.clone() * q(w.0, t) + r.x.clone() * q(w.1, t) + s.x.clone() * q(w.2, t),
                p.y.clone() * q(w.0, t) + r.y.clone() * q(w.1, t) + s.y.clone() * q(w.2, t),
            )
        };
        let s1 = inside(&a, &b, &c, w1);
        let c1 = Point::new(s1.x.clone(), one.clone());
        let s2 = inside(&s1, &c1, &b, w2);
        let seg = Segment::new(s1.clone(), b.clone());
        let rd = metric_to_segment(&s2, &seg, Metric::Ratio).unwrap().exact().cloned().unwrap();
        let hd = metric_to_segment(&s2, &seg, Metric::Horizontal).unwrap().exact().cloned().unwrap();
        let lam = (s1.y.clone() - &b.y) / (b.x.clone() - &s1.x);
        prop_assert!(rd < hd);
        prop_assert!(hd <= rd + ll.clone() * &ll + ll / lam);
    }

    #[test]
    fn ratio_distance_is_scale_free(x in 1i64..1000, y in 1i64..1000, u in 1i64..1000, v in 1i64..1000, k in 1i64..50) {
        let p = Point::new(q(x, 7), q(y, 7));
        let r = Point::new(q(u, 7), q(v, 7));
        let kp = Point::new(p.x.clone() * q(k, 3), p.y.clone() * q(k, 3));
        let kr = Point::new(r.x.clone() * q(k, 3), r.y.clone() * q(k, 3));
        prop_assert_eq!(ratio_distance(&p, &r).unwrap(), ratio_distance(&kp, &kr).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adversary_answers_replay_on_the_final_instance(k in 3u32..=12, script in prop::collection::vec(1i64..400, 1..12)) {
        let slopes: Vec<serde_json::Value> =
            script.iter().map(|s| serde_json::Value::String(q(*s, 16).encode())).collect();
        let strategy = Duel::Script(slopes);
        let report = adversary_duel::<Rational>(k, &strategy, Placement::Dyadic).unwrap();
        let inst = &report.instance;
        let one = Rational::one();
        for step in report.steps.iter().filter(|s| s.note.is_none()) {
            let slope = Slope::Finite(step.slope.clone());
            let answer = Point::new(step.answer.x.clone() + &one, step.answer.y.clone() + &one);
            prop_assert!(inst.points().contains(&answer));
            let best = comb_exact(inst, &slope, TieBreak::Leftmost).unwrap();
            prop_assert_eq!(best.weighted(&slope), answer.weighted(&slope));
        }
        // Every answer stays on the lower convex envelope.
        let pts = &inst.points()[1..];
        for w in pts.windows(3) {
            prop_assert!(cross(&w[0], &w[1], &w[2]) >= Rational::zero());
        }
    }
}
