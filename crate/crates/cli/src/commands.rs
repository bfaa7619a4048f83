use std::io::Write;
use std::path::Path;

use coarse_forge::covers::{brick_control_samples, brick_cover, verify_cover, ColoredCover, ControlFit};
use coarse_forge::flatten::{build_schedule_multi, verify_flattening, verify_log_control, FlatteningSchedule};
use coarse_forge::hyperbolicity::four_point_delta;
use coarse_forge::qirepair::{build_lsl_schedule, build_qi_schedules, verify_lsl, verify_qi_additive, CoarseProfile, QiVariant, SampledMap};
use coarse_forge::spaces::{verify_metric_axioms, MetricSpace, Point, SamplePlan};
use coarse_forge::PiecewiseLinearFn;
use rayon::prelude::*;

use crate::expr::{parse_fn, parse_space};
use crate::output::{create, write_json};
use crate::{CliError, Command, Global, Status, Variant};

pub fn run(global: &Global, command: &Command) -> Result<Status, CliError> {
    match command {
        Command::Flatten { controls, steps, out } => flatten(global, controls, *steps, out),
        Command::VerifyFlatten { schedule, control, rmax, samples, log_nodes, out } => {
            verify_flatten(global, schedule, control, *rmax, *samples, *log_nodes, out)
        }
        Command::Cover { n, r, box_radius, verify, fit_scales, out } => {
            cover(global, *n, *r, *box_radius, *verify, fit_scales, out)
        }
        Command::VerifyCover { space, brick, scale, bound, probe, out } => {
            verify_cover_cmd(global, space, *brick, *scale, *bound, *probe, out)
        }
        Command::MetricCheck { space, exhaustive_limit, samples, out } => {
            metric_check(global, space, *exhaustive_limit, *samples, out)
        }
        Command::Qi { domain, codomain, phi, dilation, steps, variant, nodes, eps, exhaustive_limit, samples, prefix } => {
            let args = QiArgs {
                domain,
                codomain,
                phi,
                dilation: dilation.as_deref().unwrap_or(phi),
                steps: *steps,
                variant: *variant,
                nodes: *nodes,
                eps: *eps,
                exhaustive_limit: *exhaustive_limit,
                samples: *samples,
                prefix,
            };
            qi(global, &args)
        }
        Command::Lsl { dilation, rmax, samples, out } => lsl(global, dilation, *rmax, *samples, out),
        Command::Delta { boxes, dim, transform, space, samples, exhaustive_limit, out } => {
            delta(global, boxes, *dim, transform, space.as_deref(), *samples, *exhaustive_limit, out)
        }
        Command::ProductDemo { box_radius, steps, rmax, samples, prefix } => {
            product_demo(global, *box_radius, *steps, *rmax, *samples, prefix)
        }
    }
}

fn status(passed: bool) -> Status {
    if passed {
        Status::Passed
    } else {
        Status::Failed
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

/// `count` evenly spaced samples in `(0, rmax]`.
fn sweep(rmax: f64, count: usize) -> Result<Vec<f64>, CliError> {
    if rmax.is_nan() || rmax <= 0.0 || !rmax.is_finite() || count == 0 {
        return Err(CliError::Input(format!("need rmax > 0 and at least one sample, got {rmax} and {count}")));
    }
    Ok((1..=count).map(|j| rmax * j as f64 / count as f64).collect())
}

fn flatten(global: &Global, controls: &[String], steps: usize, out: &Path) -> Result<Status, CliError> {
    let fns = controls.iter().map(|c| parse_fn(c)).collect::<Result<Vec<_>, _>>()?;
    let schedule = build_schedule_multi(&fns, steps)?.with_source(controls.join(" | "));
    let path = write_json(&global.out_dir, out, &schedule)?;
    let shown: Vec<String> = schedule.a().iter().take(8).map(f64::to_string).collect();
    println!("schedule a = {}{}", shown.join(", "), if schedule.a().len() > 8 { ", …" } else { "" });
    println!("wrote {}", path.display());
    Ok(Status::Passed)
}

fn verify_flatten(
    global: &Global,
    schedule: &Path,
    control: &str,
    rmax: f64,
    samples: usize,
    log_nodes: Option<u32>,
    out: &Path,
) -> Result<Status, CliError> {
    let d = parse_fn(control)?;
    let text = std::fs::read_to_string(schedule)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", schedule.display())))?;
    let s = FlatteningSchedule::from_json(&text)?.with_controls(vec![d.clone()]);
    let points = sweep(rmax, samples)?;
    let report = verify_flattening(&s, &d, &points)?;
    let passed = report.max_excess <= 2.0 + global.tolerance;
    let (path, file) = create(&global.out_dir, out)?;
    report.write_csv(file)?;
    println!("max excess {} (limit 2) over {} samples: {}", report.max_excess, points.len(), verdict(passed));
    println!("wrote {}", path.display());
    let mut all = passed;
    if let Some(nodes) = log_nodes {
        let log_points = sweep(rmax.min(5.0), samples)?;
        let log = verify_log_control(&s, &d, &log_points, nodes)?;
        let ok = log.max_excess <= log.limit + global.tolerance;
        let log_path = out.with_extension("log.csv");
        let (path, file) = create(&global.out_dir, &log_path)?;
        log.write_csv(file)?;
        println!(
            "post-log max excess {} (limit ln 3 + {} = {}): {}",
            log.max_excess,
            log.chord_error,
            log.limit,
            verdict(ok)
        );
        println!("wrote {}", path.display());
        all &= ok;
    }
    Ok(status(all))
}

fn cover(
    global: &Global,
    n: usize,
    r: i64,
    box_radius: i64,
    verify: bool,
    fit_scales: &[i64],
    out: &Path,
) -> Result<Status, CliError> {
    let cover = brick_cover(n, r)?;
    println!(
        "brick cover n={n} r={r}: period {}, {} colors, core diameter {}, bound {}",
        cover.period(),
        cover.colors(),
        cover.core_diameter(),
        cover.diameter_bound()
    );
    let mut passed = true;
    if verify {
        let space = MetricSpace::lattice(n, box_radius)?;
        // Probe far enough to see the 2r + 1 gap between same-colored bricks.
        let probe = Some((2 * r + 1) as f64);
        let report = verify_cover(&space, &cover, r as f64, cover.diameter_bound(), probe)?;
        let (path, file) = create(&global.out_dir, out)?;
        report.write_cells_csv(file)?;
        passed = report.passed();
        println!(
            "box {box_radius}: {} points, {} cells, uncovered {}, max diameter {}, min same-color gap {}: {}",
            report.points,
            report.cells.len(),
            report.uncovered,
            report.max_diameter,
            report.min_gap.map_or("none".to_string(), |g| g.to_string()),
            verdict(passed)
        );
        for v in report.separation_violations.iter().take(3) {
            println!("  separation violation color {}: {:?} – {:?} at {}", v.color, v.a, v.b, v.distance);
        }
        println!("wrote {}", path.display());
    }
    if !fit_scales.is_empty() {
        let mut samples = brick_control_samples(n, fit_scales, box_radius)?;
        let fit = samples.fit()?;
        let path = out.with_extension("control.csv");
        let (path, file) = create(&global.out_dir, &path)?;
        samples.write_csv(file)?;
        match fit {
            ControlFit::Affine { slope, intercept } => println!("fitted control D(r) ≤ {slope}·r + {intercept}"),
            ControlFit::Superlinear { excess } => println!("measured diameters grow superlinearly (excess {excess})"),
        }
        println!("wrote {}", path.display());
    }
    Ok(status(passed))
}

fn verify_cover_cmd(
    global: &Global,
    space: &str,
    brick: i64,
    scale: f64,
    bound: f64,
    probe: Option<f64>,
    out: &Path,
) -> Result<Status, CliError> {
    let space = parse_space(space)?;
    let (lattice, _) = space
        .lattice_view()
        .ok_or_else(|| CliError::Input("verify-cover needs a lattice, possibly transformed".into()))?;
    let cover = brick_cover(lattice.dim(), brick)?;
    let report = verify_cover(&space, &cover, scale, bound, probe)?;
    let (path, file) = create(&global.out_dir, out)?;
    report.write_cells_csv(file)?;
    let passed = report.passed();
    println!(
        "{} points, {} cells, uncovered {}, max diameter {} (bound {bound}), min same-color gap {} (need {scale}): {}",
        report.points,
        report.cells.len(),
        report.uncovered,
        report.max_diameter,
        report.min_gap.map_or("none".to_string(), |g| g.to_string()),
        verdict(passed)
    );
    println!("wrote {}", path.display());
    Ok(status(passed))
}

fn metric_check(global: &Global, space: &str, limit: usize, samples: u64, out: &Path) -> Result<Status, CliError> {
    let space = parse_space(space)?;
    let plan = SamplePlan::auto(space.len(), limit, samples, global.seed);
    let report = verify_metric_axioms(&space, plan);
    let (path, file) = create(&global.out_dir, out)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["x", "y", "z", "defect"])?;
    for v in &report.violations {
        w.write_record([
            space.point(v.x)?.to_string(),
            space.point(v.y)?.to_string(),
            space.point(v.z)?.to_string(),
            v.defect.to_string(),
        ])?;
    }
    w.flush()?;
    let passed = report.passed();
    println!(
        "{} points, {} triples ({}), {} triangle violations (max defect {}), {} symmetry, {} identity: {}",
        report.points,
        report.triples_checked,
        if plan == SamplePlan::Exhaustive { "exhaustive" } else { "sampled" },
        report.violation_count,
        report.max_defect,
        report.symmetry_violations.len(),
        report.identity_violations.len(),
        verdict(passed)
    );
    println!("wrote {}", path.display());
    Ok(status(passed))
}

struct QiArgs<'a> {
    domain: &'a str,
    codomain: &'a str,
    phi: &'a str,
    dilation: &'a str,
    steps: usize,
    variant: Variant,
    nodes: u32,
    eps: f64,
    exhaustive_limit: usize,
    samples: u64,
    prefix: &'a str,
}

fn qi(global: &Global, args: &QiArgs) -> Result<Status, CliError> {
    let domain = parse_space(args.domain)?;
    let codomain = parse_space(args.codomain)?;
    let profile = CoarseProfile::new(parse_fn(args.phi)?, parse_fn(args.dilation)?)?;
    let map = SampledMap::identity(domain, codomain)?;
    let n = map.domain().len();
    let far = (0..n).into_par_iter().map(|i| map.domain().dist(0, i)).reduce(|| 0.0, f64::max);
    let mut pair = build_qi_schedules(&profile, args.steps)?;
    pair.ensure_radius(&profile, 2.0 * far)?;
    let path = write_json(&global.out_dir, Path::new(&format!("{}_schedules.json", args.prefix)), &pair)?;
    println!("schedules: {} steps, interleaving {}", pair.steps(), verdict(pair.interleaving_holds(&profile)));
    println!("wrote {}", path.display());

    let variants: Vec<(&str, QiVariant)> = [
        ("raw", QiVariant::Raw),
        ("log", QiVariant::LogCorrected { nodes: args.nodes }),
        ("scaled", QiVariant::Scaled { nodes: args.nodes, eps: args.eps }),
    ]
    .into_iter()
    .filter(|(name, _)| match args.variant {
        Variant::All => true,
        Variant::Raw => *name == "raw",
        Variant::Log => *name == "log",
        Variant::Scaled => *name == "scaled",
    })
    .collect();
    let plan = SamplePlan::auto(n, args.exhaustive_limit, args.samples, global.seed);
    let mut all = pair.interleaving_holds(&profile);
    for (name, variant) in variants {
        let (c_x, c_y, lower, upper) = variant.apply(&pair)?;
        let report = verify_qi_additive(&map, &c_x, &c_y, lower - global.tolerance, upper + global.tolerance, plan);
        let passed = report.passed();
        all &= passed;
        let (path, file) = create(&global.out_dir, Path::new(&format!("{}_{name}.csv", args.prefix)))?;
        report.write_csv(&map, file)?;
        println!(
            "{name}: {} pairs, differences in [{}, {}] (bounds [{lower}, {upper}]): {}",
            report.pairs_checked,
            report.min_diff,
            report.max_diff,
            verdict(passed)
        );
        println!("wrote {}", path.display());
    }
    Ok(status(all))
}

fn lsl(global: &Global, dilation: &str, rmax: f64, samples: usize, out: &Path) -> Result<Status, CliError> {
    let phi = parse_fn(dilation)?;
    let mut points = vec![0.0];
    points.extend(sweep(rmax, samples)?);
    let report = verify_lsl(&phi, &points)?;
    let schedule = build_lsl_schedule(&phi, report.steps_used)?;
    let passed = report.max_excess <= 1.0 + global.tolerance;
    let (path, file) = create(&global.out_dir, out)?;
    report.write_csv(file)?;
    let json_path = write_json(&global.out_dir, &out.with_extension("json"), &schedule)?;
    println!("max c_Y(Φ(r)) − r = {} (limit 1) over {} samples: {}", report.max_excess, points.len(), verdict(passed));
    println!("wrote {}", path.display());
    println!("wrote {}", json_path.display());
    Ok(status(passed))
}

fn transformed_box(dim: usize, radius: i64, transform: &str) -> Result<MetricSpace, CliError> {
    let base = MetricSpace::lattice(dim, radius)?;
    Ok(match transform {
        "raw" => base,
        "log1p" => MetricSpace::log_transformed(base),
        expr => MetricSpace::transformed(base, parse_fn(expr)?),
    })
}

#[allow(clippy::too_many_arguments)]
fn delta(
    global: &Global,
    boxes: &[i64],
    dim: usize,
    transform: &str,
    space: Option<&str>,
    samples: u64,
    limit: usize,
    out: &Path,
) -> Result<Status, CliError> {
    let runs: Vec<(String, String, MetricSpace)> = match space {
        Some(expr) => vec![(String::new(), expr.to_string(), parse_space(expr)?)],
        None => {
            if boxes.is_empty() {
                return Err(CliError::Input("delta needs --boxes or --space".into()));
            }
            boxes
                .iter()
                .map(|&m| Ok((m.to_string(), transform.to_string(), transformed_box(dim, m, transform)?)))
                .collect::<Result<_, CliError>>()?
        }
    };
    let (path, file) = create(&global.out_dir, out)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["box_radius", "transform", "quadruples", "delta", "witness"])?;
    for (radius, label, space) in &runs {
        let plan = SamplePlan::auto(space.len(), limit, samples, global.seed);
        let report = four_point_delta(space, plan)?;
        let witness = match report.witness {
            Some(q) => q.iter().map(|&i| space.point(i).map(|p| p.to_string())).collect::<Result<Vec<_>, _>>()?.join(";"),
            None => String::new(),
        };
        w.write_record([radius.clone(), label.clone(), report.quadruples_checked.to_string(), report.delta.to_string(), witness])?;
        println!(
            "box {} {label}: δ {} {} over {} quadruples",
            if radius.is_empty() { "-" } else { radius },
            if report.exhaustive { "=" } else { "≥" },
            report.delta,
            report.quadruples_checked
        );
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(Status::Passed)
}

fn product_demo(global: &Global, radius: i64, steps: usize, rmax: f64, samples: usize, prefix: &str) -> Result<Status, CliError> {
    let plane_control = PiecewiseLinearFn::affine(6.0, 0.0)?;
    let line_control = PiecewiseLinearFn::affine(4.0, 0.0)?;
    let controls = [plane_control.clone(), line_control.clone(), line_control.clone()];
    let schedule = build_schedule_multi(&controls, steps)?.with_source("affine:6,0 | affine:4,0 | affine:4,0");
    let json = write_json(&global.out_dir, Path::new(&format!("{prefix}_schedule.json")), &schedule)?;
    let points = sweep(rmax, samples)?;

    let (path, file) = create(&global.out_dir, Path::new(&format!("{prefix}.csv")))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["space", "control", "max_excess", "passed"])?;
    let mut all = true;
    for (label, d) in [("Z^2", &plane_control), ("Z (first factor)", &line_control), ("Z (second factor)", &line_control)] {
        let report = verify_flattening(&schedule, d, &points)?;
        let passed = report.max_excess <= 2.0 + global.tolerance;
        all &= passed;
        let expr = if std::ptr::eq(d, &plane_control) { "affine:6,0" } else { "affine:4,0" };
        w.write_record([label, expr, &report.max_excess.to_string(), &passed.to_string()])?;
        println!("{label}: max excess {} (limit 2): {}", report.max_excess, verdict(passed));
    }
    w.flush()?;

    let c = schedule.c();
    let plane = MetricSpace::transformed(MetricSpace::lattice(2, radius)?, c.clone());
    let line = MetricSpace::transformed(MetricSpace::lattice(1, radius)?, c.clone());
    let product = MetricSpace::sup_product(vec![line.clone(), line])?;
    let as_product = |p: &Point| match p {
        Point::Lattice(v) => Point::Product(v.iter().map(|&t| Point::Lattice(vec![t])).collect()),
        other => other.clone(),
    };
    let n = plane.len();
    let gaps = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(f64, u64), CliError> {
            let p = plane.point(i)?;
            let pp = as_product(&p);
            let mut worst: f64 = 0.0;
            for j in i..n {
                let q = plane.point(j)?;
                let gap = (plane.dist(i, j) - product.distance(&pp, &as_product(&q))?).abs();
                worst = worst.max(gap);
            }
            Ok((worst, (n - i) as u64))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let worst = gaps.iter().map(|g| g.0).fold(0.0, f64::max);
    let pairs: u64 = gaps.iter().map(|g| g.1).sum();
    let same = worst <= global.tolerance;
    all &= same;
    println!("c∘sup vs sup of c∘d_i on {pairs} pairs of lattice(2, {radius}): max gap {worst}: {}", verdict(same));
    println!("wrote {}", json.display());
    println!("wrote {}", path.display());
    std::io::stdout().flush()?;
    Ok(status(all))
}
