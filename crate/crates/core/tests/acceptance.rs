//! End-to-end acceptance criteria. Runs as a plain binary so that every
//! criterion prints exactly one PASS/FAIL line.

use std::time::{Duration, Instant};

use coarse_forge::covers::{brick_cover, verify_cover};
use coarse_forge::flatten::{build_schedule, build_schedule_multi, verify_flattening, verify_log_control};
use coarse_forge::hyperbolicity::{delta_of_points, four_point_delta};
use coarse_forge::qirepair::{build_qi_schedules, verify_lsl, verify_qi_additive, CoarseProfile, QiVariant, SampledMap};
use coarse_forge::spaces::{verify_metric_axioms, MetricSpace, Point, SamplePlan};
use coarse_forge::PiecewiseLinearFn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;
const SEED: u64 = 0xC0A45E;

type Outcome = Result<String, String>;

/// Name, check and time limit in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Random convex piecewise-linear function with slopes ≥ 1 and nonnegative
/// intercept: nondecreasing and superlinear.
fn random_superlinear(rng: &mut ChaCha8Rng) -> PiecewiseLinearFn {
    let pieces = rng.gen_range(1..=5);
    let mut x = 0.0;
    let mut y = rng.gen_range(0.0..3.0);
    let mut slope: f64 = rng.gen_range(1.0..2.0);
    let mut bps = vec![(x, y)];
    for _ in 0..pieces {
        let w = rng.gen_range(0.5..8.0);
        x += w;
        y += slope * w;
        bps.push((x, y));
        slope += rng.gen_range(0.0..1.5);
    }
    PiecewiseLinearFn::new(bps, slope).unwrap()
}

/// Flattening function rebuilt from the schedule points by hand:
/// `c(0) = 0`, `c(a_k) = k + 1`, linear in between and past the end.
struct HandFlattening {
    knots: Vec<f64>,
}

impl HandFlattening {
    fn new(a: &[f64]) -> Self {
        let mut knots = vec![0.0];
        knots.extend_from_slice(a);
        Self { knots }
    }

    fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        let i = match k.iter().position(|&t| t > x) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => k.len() - 2,
        };
        i as f64 + (x - k[i]) / (k[i + 1] - k[i])
    }

    fn inverse(&self, v: f64) -> f64 {
        let k = &self.knots;
        let i = (v.floor() as usize).min(k.len() - 2);
        k[i] + (v - i as f64) * (k[i + 1] - k[i])
    }
}

fn flattening_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut controls = vec![PiecewiseLinearFn::affine(2.0, 1.0).unwrap()];
    controls.extend((0..10).map(|_| random_superlinear(&mut rng)));
    let samples: Vec<f64> = (1..=10_000).map(|j| 30.0 * j as f64 / 10_000.0).collect();
    let mut worst: f64 = f64::NEG_INFINITY;
    for (i, d) in controls.iter().enumerate() {
        let schedule = build_schedule(d, 34).map_err(|e| e.to_string())?;
        let report = verify_flattening(&schedule, d, &samples).map_err(|e| e.to_string())?;
        let hand = HandFlattening::new(schedule.a());
        for row in &report.rows {
            let oracle = hand.eval(d.value_at(hand.inverse(row.r))) - row.r;
            ensure((oracle - row.excess).abs() <= 1e-7 * (1.0 + oracle.abs()), || {
                format!("control {i}: library excess {} vs hand {} at r′={}", row.excess, oracle, row.r)
            })?;
            worst = worst.max(oracle);
        }
        ensure(report.max_excess <= 2.0 + TOL, || format!("control {i}: excess {}", report.max_excess))?;
    }
    ensure(worst <= 2.0 + TOL, || format!("excess {worst}"))?;
    Ok(format!("max excess {worst:.6} ≤ 2 over 11 controls × 10⁴ samples"))
}

fn post_log_control() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    let mut controls = vec![PiecewiseLinearFn::affine(2.0, 1.0).unwrap()];
    controls.extend((0..5).map(|_| random_superlinear(&mut rng)));
    let samples: Vec<f64> = (1..=2_000).map(|j| 5.0 * j as f64 / 2_000.0).collect();
    let mut summary = Vec::new();
    for (i, d) in controls.iter().enumerate() {
        let schedule = build_schedule(d, 8).map_err(|e| e.to_string())?;
        let report = verify_log_control(&schedule, d, &samples, 10).map_err(|e| e.to_string())?;
        for row in &report.rows {
            ensure(row.excess <= 3f64.ln() + report.chord_error + TOL, || {
                format!("control {i}: excess {} at r″={} (chord error {})", row.excess, row.r, report.chord_error)
            })?;
        }
        summary.push(report.max_excess);
    }
    let worst = summary.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(format!("max excess {worst:.6} ≤ ln 3 + chord error"))
}

fn brick_covers() -> Outcome {
    let cases: [(usize, std::ops::RangeInclusive<i64>, i64); 3] = [(1, 1..=20, 200), (2, 1..=8, 60), (3, 1..=3, 30)];
    let mut checked = 0;
    for (n, scales, radius) in cases {
        let space = MetricSpace::lattice(n, radius).map_err(|e| e.to_string())?;
        for r in scales {
            let cover = brick_cover(n, r).map_err(|e| e.to_string())?;
            let bound = (2 * (n as i64 + 1) * r) as f64;
            let report = verify_cover(&space, &cover, r as f64, bound, None).map_err(|e| e.to_string())?;
            ensure(report.uncovered == 0, || format!("n={n} r={r}: {} uncovered", report.uncovered))?;
            ensure(report.separation_violations.is_empty(), || {
                format!("n={n} r={r}: separation {:?}", report.separation_violations.first())
            })?;
            ensure(report.max_diameter <= bound, || format!("n={n} r={r}: diameter {}", report.max_diameter))?;
            ensure(report.passed(), || format!("n={n} r={r}: report failed"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} (n, r) configurations verified exhaustively"))
}

fn metric_axioms() -> Outcome {
    let c = build_schedule(&PiecewiseLinearFn::affine(6.0, 0.0).unwrap(), 6).map_err(|e| e.to_string())?.c().clone();
    let base = MetricSpace::lattice(2, 8).map_err(|e| e.to_string())?;
    let flat = verify_metric_axioms(&MetricSpace::transformed(base.clone(), c), SamplePlan::Exhaustive);
    ensure(flat.passed() && flat.violation_count == 0, || format!("{} violations", flat.violation_count))?;
    let square = PiecewiseLinearFn::chordal(40, |x| x * x).map_err(|e| e.to_string())?;
    let convex = verify_metric_axioms(&MetricSpace::transformed(base, square.clone()), SamplePlan::Exhaustive);
    let w = convex.violations.first().ok_or("convex transform produced no violation")?;
    let sq = |t: f64| t * t;
    let space = MetricSpace::lattice(2, 8).unwrap();
    let (dxy, dyz, dxz) = (space.dist(w.x, w.y), space.dist(w.y, w.z), space.dist(w.x, w.z));
    ensure(sq(dxz) > sq(dxy) + sq(dyz), || format!("witness {w:?} does not violate"))?;
    Ok(format!(
        "{} triples clean; convex control has {} violations, first ({}, {}, {})",
        flat.triples_checked, convex.violation_count, w.x, w.y, w.z
    ))
}

fn pushforward_covers() -> Outcome {
    let d = PiecewiseLinearFn::affine(6.0, 0.0).unwrap();
    let schedule = build_schedule(&d, 6).map_err(|e| e.to_string())?;
    let c = schedule.c().clone();
    let mut worst_diam: f64 = f64::NEG_INFINITY;
    for j in 1..=20 {
        let r_prime = 2.5 * j as f64 / 20.0;
        let rho = c.inverse_or_zero(r_prime).map_err(|e| e.to_string())?;
        let scale = (rho.ceil() as i64).max(1);
        let cover = brick_cover(2, scale).map_err(|e| e.to_string())?;
        let space = MetricSpace::transformed(MetricSpace::lattice(2, 18 * scale).map_err(|e| e.to_string())?, c.clone());
        let report = verify_cover(&space, &cover, r_prime, r_prime + 2.0, None).map_err(|e| e.to_string())?;
        ensure(report.passed(), || {
            format!(
                "r′={r_prime}: uncovered {}, separation {:?}, diameter {}",
                report.uncovered,
                report.separation_violations.first(),
                report.max_diameter
            )
        })?;
        worst_diam = worst_diam.max(report.max_diameter - r_prime);
    }
    Ok(format!("20 scales verified; largest diameter − r′ = {worst_diam:.6} ≤ 2"))
}

fn qi_repair() -> Outcome {
    let radius = 2000;
    let g = PiecewiseLinearFn::chordal(2 * radius as usize, f64::sqrt).map_err(|e| e.to_string())?;
    let dom = MetricSpace::lattice(1, radius).map_err(|e| e.to_string())?;
    let cod = MetricSpace::transformed(dom.clone(), g.clone());
    let map = SampledMap::identity(dom, cod).map_err(|e| e.to_string())?;
    let profile = CoarseProfile::exact(g).map_err(|e| e.to_string())?;
    let mut pair = build_qi_schedules(&profile, 4).map_err(|e| e.to_string())?;
    pair.ensure_radius(&profile, 2.0 * radius as f64).map_err(|e| e.to_string())?;
    ensure(pair.interleaving_holds(&profile), || "interleaving inequalities fail".into())?;
    let mut parts = Vec::new();
    for (variant, lo, hi) in [
        (QiVariant::Raw, -2.0, 1.0),
        (QiVariant::LogCorrected { nodes: 12 }, -2.0, 1.0),
        (QiVariant::Scaled { nodes: 12, eps: 0.1 }, -0.2, 0.1),
    ] {
        let (cx, cy, _, _) = variant.apply(&pair).map_err(|e| e.to_string())?;
        let report = verify_qi_additive(&map, &cx, &cy, lo, hi, SamplePlan::Exhaustive);
        ensure(report.min_diff >= lo - TOL && report.max_diff <= hi + TOL, || {
            format!("{variant:?}: differences in [{}, {}]", report.min_diff, report.max_diff)
        })?;
        ensure(report.pairs_checked == (4001 * 4000 / 2), || format!("{} pairs", report.pairs_checked))?;
        parts.push(format!("[{:.4}, {:.4}]", report.min_diff, report.max_diff));
    }
    Ok(format!("raw {}, log {}, ε=0.1 {}", parts[0], parts[1], parts[2]))
}

fn large_scale_lipschitz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 7);
    let mut dilations = vec![PiecewiseLinearFn::chordal(64, |x| x * x).unwrap()];
    dilations.extend((0..10).map(|_| random_superlinear(&mut rng)));
    let samples: Vec<f64> = (0..=5_000).map(|j| 50.0 * j as f64 / 5_000.0).collect();
    let mut worst: f64 = f64::NEG_INFINITY;
    for (i, phi) in dilations.iter().enumerate() {
        let report = verify_lsl(phi, &samples).map_err(|e| e.to_string())?;
        ensure(report.max_excess <= 1.0 + TOL, || format!("dilation {i}: excess {}", report.max_excess))?;
        worst = worst.max(report.max_excess);
    }
    Ok(format!("max c_Y(Φ(r)) − r = {worst:.6} ≤ 1"))
}

fn witness_indices(space: &MetricSpace, m: i64) -> Vec<usize> {
    [(-m, 0), (m, 0), (0, m), (0, -m)]
        .iter()
        .map(|&(a, b)| space.index_of(&Point::Lattice(vec![a, b])).unwrap())
        .collect()
}

fn hyperbolicity_contrast() -> Outcome {
    let mut log_deltas = Vec::new();
    for m in [4i64, 8, 16] {
        let raw = MetricSpace::lattice(2, m).map_err(|e| e.to_string())?;
        let raw_delta = delta_of_points(&raw, &witness_indices(&raw, m));
        ensure(raw_delta >= m as f64, || format!("raw δ {raw_delta} < {m}"))?;
        let logged = MetricSpace::log_transformed(raw);
        let plan = SamplePlan::Sampled { count: 1_000_000, seed: SEED };
        let report = four_point_delta(&logged, plan).map_err(|e| e.to_string())?;
        log_deltas.push(report.delta);
    }
    let (d4, d8, d16) = (log_deltas[0], log_deltas[1], log_deltas[2]);
    ensure(d16 - d8 <= d8 - d4 + TOL, || format!("log δ: {d4}, {d8}, {d16} not saturating"))?;
    Ok(format!("raw δ ≥ m; log δ(4, 8, 16) = {d4:.4}, {d8:.4}, {d16:.4}"))
}

/// Subadditivity by brute force on the integer grid up to twice the last breakpoint.
fn grid_subadditive(f: &PiecewiseLinearFn) -> bool {
    let top = 2 * f.last_breakpoint().0 as i64 + 1;
    (0..=top).all(|a| (0..=top).all(|b| f.value_at((a + b) as f64) <= f.value_at(a as f64) + f.value_at(b as f64) + TOL))
}

fn random_integer_fn(rng: &mut ChaCha8Rng, concave: bool) -> PiecewiseLinearFn {
    let pieces = rng.gen_range(1..=6);
    let mut x = 0.0;
    let mut y = if concave || rng.gen_bool(0.7) { 0.0 } else { rng.gen_range(0..3) as f64 };
    let mut bps = vec![(x, y)];
    let mut slopes: Vec<f64> = (0..=pieces).map(|_| rng.gen_range(0..6) as f64 * 0.5).collect();
    if concave {
        slopes.sort_by(|a, b| b.total_cmp(a));
        slopes[0] = slopes[0].max(0.5);
    }
    for &s in &slopes[..pieces] {
        let w = rng.gen_range(1..=5) as f64;
        x += w;
        y += s * w;
        bps.push((x, y));
    }
    PiecewiseLinearFn::new(bps, slopes[pieces]).unwrap()
}

fn analyzer_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 9);
    let mut disagreements = 0;
    let mut non_subadditive = 0;
    for _ in 0..100 {
        let f = random_integer_fn(&mut rng, false);
        let verdict = f.analyze(1.0).map_err(|e| e.to_string())?.is_subadditive;
        let oracle = grid_subadditive(&f);
        if verdict != oracle {
            disagreements += 1;
        }
        if !oracle {
            non_subadditive += 1;
        }
    }
    ensure(disagreements == 0, || format!("{disagreements} disagreements with the grid oracle"))?;
    let mut counterexamples = 0;
    for _ in 0..100 {
        let f = random_integer_fn(&mut rng, true);
        let a = f.analyze(1.0).map_err(|e| e.to_string())?;
        if a.is_concave && a.vanishes_only_at_zero && !(a.is_subadditive && grid_subadditive(&f)) {
            counterexamples += 1;
        }
    }
    ensure(counterexamples == 0, || format!("{counterexamples} concave counterexamples"))?;
    Ok(format!("100/100 verdicts agree ({non_subadditive} non-subadditive); 0 concave counterexamples"))
}

fn shared_product_flattening() -> Outcome {
    let d2 = PiecewiseLinearFn::affine(6.0, 0.0).unwrap();
    let d1 = PiecewiseLinearFn::affine(4.0, 0.0).unwrap();
    let schedule = build_schedule_multi(&[d2.clone(), d1.clone(), d1.clone()], 6).map_err(|e| e.to_string())?;
    let samples: Vec<f64> = (1..=3_000).map(|j| 30.0 * j as f64 / 3_000.0).collect();
    let mut excess = Vec::new();
    for d in [&d2, &d1, &d1] {
        let report = verify_flattening(&schedule, d, &samples).map_err(|e| e.to_string())?;
        ensure(report.max_excess <= 2.0 + TOL, || format!("excess {}", report.max_excess))?;
        excess.push(report.max_excess);
    }
    let c = schedule.c().clone();
    let plane = MetricSpace::transformed(MetricSpace::lattice(2, 10).unwrap(), c.clone());
    let line = MetricSpace::transformed(MetricSpace::lattice(1, 10).unwrap(), c.clone());
    let product = MetricSpace::sup_product(vec![line.clone(), line]).map_err(|e| e.to_string())?;
    let n = plane.len();
    let mut pairs = 0u64;
    for i in 0..n {
        let Point::Lattice(p) = plane.point(i).unwrap() else { unreachable!() };
        for j in i..n {
            let Point::Lattice(q) = plane.point(j).unwrap() else { unreachable!() };
            let factors = |p: &[i64]| Point::Product(p.iter().map(|&t| Point::Lattice(vec![t])).collect());
            let on_product = product.distance(&factors(&p), &factors(&q)).unwrap();
            let by_hand = (0..2).map(|k| c.value_at((p[k] - q[k]).abs() as f64)).fold(0.0, f64::max);
            let on_plane = plane.dist(i, j);
            ensure((on_plane - by_hand).abs() <= TOL && (on_product - by_hand).abs() <= TOL, || {
                format!("pair {i},{j}: plane {on_plane}, product {on_product}, expected {by_hand}")
            })?;
            pairs += 1;
        }
    }
    Ok(format!(
        "excess ℤ² {:.4}, factors {:.4}/{:.4}; c∘sup = sup∘c on {pairs} pairs",
        excess[0], excess[1], excess[2]
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("flattening bound", flattening_bound, 1),
        ("post-log control", post_log_control, 1),
        ("brick covers", brick_covers, 30),
        ("metric axioms", metric_axioms, 60),
        ("pushforward covers", pushforward_covers, 60),
        ("quasi-isometry repair", qi_repair, 30),
        ("large-scale Lipschitz repair", large_scale_lipschitz, 1),
        ("hyperbolicity contrast", hyperbolicity_contrast, 120),
        ("analyzer-oracle agreement", analyzer_agreement, 10),
        ("shared product flattening", shared_product_flattening, 30),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > Duration::from_secs(*limit) => Err(format!("{msg}; too slow ({elapsed:.2?} > {limit}s)")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS  {name} ({elapsed:.2?}): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({elapsed:.2?}): {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
