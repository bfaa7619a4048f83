//! Repairing coarse equivalences into quasi-isometries.
//!
//! A coarse equivalence `f: X → Y` with contraction `φ` and dilation `Φ`,
//! `φ(d_X(x, x′)) ≤ d_Y(f x, f x′) ≤ Φ(d_X(x, x′))`, becomes an isometry up to
//! additive constants `(−2, +1)` once both metrics are flattened by the
//! interleaved schedules
//!
//! ```text
//! b₀ = max(Φ(a₀), 1)
//! a_k = max(sup φ⁻¹([0, b_{k−1}]), 2a_{k−1} − a_{k−2})
//! b_k = max(Φ(a_k), 2b_{k−1} − b_{k−2})
//! ```
//!
//! with `c_X(a_k) = c_Y(b_k) = k + 1`.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatten::schedule_function;
use crate::plfun::{PiecewiseLinearFn, TOLERANCE};
use crate::spaces::{sampled_chunks, MetricSpace, Point, SamplePlan, WITNESS_CAP};

/// Contraction and dilation functions of a coarse map.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseProfile {
    phi: PiecewiseLinearFn,
    dilation: PiecewiseLinearFn,
}

impl CoarseProfile {
    pub fn new(phi: PiecewiseLinearFn, dilation: PiecewiseLinearFn) -> Result<Self> {
        if !phi.is_unbounded() || !dilation.is_unbounded() {
            return Err(Error::Precondition("contraction and dilation must be unbounded".into()));
        }
        // φ − Φ is piecewise linear with breakpoints among those of φ and Φ.
        let below_at = |x: f64| phi.value_at(x) <= dilation.value_at(x) + TOLERANCE;
        let nodes_ok = phi.breakpoints().iter().chain(dilation.breakpoints()).all(|&(x, _)| below_at(x));
        if !nodes_ok || phi.tail_slope() > dilation.tail_slope() + TOLERANCE {
            return Err(Error::Precondition("contraction exceeds dilation somewhere".into()));
        }
        Ok(Self { phi, dilation })
    }

    /// Profile of `y ↦ g(y)` applied to the source metric: `φ = Φ = g`.
    pub fn exact(g: PiecewiseLinearFn) -> Result<Self> {
        Self::new(g.clone(), g)
    }

    pub fn phi(&self) -> &PiecewiseLinearFn {
        &self.phi
    }

    pub fn dilation(&self) -> &PiecewiseLinearFn {
        &self.dilation
    }
}

/// Interleaved schedules `a₀ = 1, …, a_K` and `b₀, …, b_K` with their flattening
/// functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QISchedulePair {
    a: Vec<f64>,
    b: Vec<f64>,
    #[serde(rename = "c_X")]
    c_x: PiecewiseLinearFn,
    #[serde(rename = "c_Y")]
    c_y: PiecewiseLinearFn,
}

impl QISchedulePair {
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c_x(&self) -> &PiecewiseLinearFn {
        &self.c_x
    }

    pub fn c_y(&self) -> &PiecewiseLinearFn {
        &self.c_y
    }

    pub fn steps(&self) -> usize {
        self.a.len() - 1
    }

    /// Runs `steps` more interleaved steps `(k, 0), (k, 1)`.
    pub fn extend(&mut self, profile: &CoarseProfile, steps: usize) -> Result<()> {
        for _ in 0..steps {
            let k = self.a.len();
            let (a1, a2) = (self.a[k - 1], if k >= 2 { self.a[k - 2] } else { 0.0 });
            let (b1, b2) = (self.b[k - 1], if k >= 2 { self.b[k - 2] } else { 0.0 });
            let reach = profile.phi.sup_preimage(b1).unwrap_or(0.0);
            let a_next = reach.max(2.0 * a1 - a2);
            let b_next = profile.dilation.value_at(a_next).max(2.0 * b1 - b2);
            if !a_next.is_finite() || !b_next.is_finite() {
                return Err(Error::Range(format!("schedules overflow after {k} steps")));
            }
            self.a.push(a_next);
            self.b.push(b_next);
        }
        self.c_x = schedule_function(&self.a)?;
        self.c_y = level_function(&self.b)?;
        Ok(())
    }

    /// Extends until the source radius `r` lies within `[0, a_K]`.
    pub fn ensure_radius(&mut self, profile: &CoarseProfile, r: f64) -> Result<()> {
        while self.a[self.a.len() - 1] < r {
            self.extend(profile, 1)?;
        }
        Ok(())
    }

    /// The inequalities the additive bounds rest on:
    /// `φ(a_{k−1}) ≥ b_{k−2}` and `Φ(a_k) ≤ b_k` for every `k`.
    pub fn interleaving_holds(&self, profile: &CoarseProfile) -> bool {
        let at = |v: &[f64], i: isize| if i < 0 { 0.0 } else { v[i as usize] };
        (0..self.a.len() as isize).all(|k| {
            let lower = k < 1 || profile.phi.value_at(at(&self.a, k - 1)) >= at(&self.b, k - 2) - TOLERANCE;
            let upper = profile.dilation.value_at(self.a[k as usize]) <= self.b[k as usize] + TOLERANCE;
            lower && upper
        })
    }
}

/// `c(0) = 0`, `c(v_k) = k + 1`, continuing the last slope.
fn level_function(v: &[f64]) -> Result<PiecewiseLinearFn> {
    let mut breakpoints = Vec::with_capacity(v.len() + 1);
    breakpoints.push((0.0, 0.0));
    breakpoints.extend(v.iter().enumerate().map(|(k, &x)| (x, (k + 1) as f64)));
    let n = v.len();
    let last_gap = if n >= 2 { v[n - 1] - v[n - 2] } else { v[0] };
    PiecewiseLinearFn::new(breakpoints, 1.0 / last_gap)
}

pub fn build_qi_schedules(profile: &CoarseProfile, steps: usize) -> Result<QISchedulePair> {
    if steps == 0 {
        return Err(Error::Domain("schedules need at least one step".into()));
    }
    let b0 = profile.dilation.value_at(1.0).max(1.0);
    let mut pair = QISchedulePair {
        a: vec![1.0],
        b: vec![b0],
        c_x: PiecewiseLinearFn::identity(),
        c_y: PiecewiseLinearFn::identity(),
    };
    pair.extend(profile, steps)?;
    Ok(pair)
}

/// A map between finite metric spaces, tabulated on point indices.
#[derive(Clone, Debug)]
pub struct SampledMap {
    domain: MetricSpace,
    codomain: MetricSpace,
    image: Vec<usize>,
}

impl SampledMap {
    pub fn new(domain: MetricSpace, codomain: MetricSpace, f: impl Fn(&Point) -> Point) -> Result<Self> {
        let image = (0..domain.len())
            .map(|i| codomain.index_of(&f(&domain.point(i)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { domain, codomain, image })
    }

    /// The identity on a shared point set carrying two metrics.
    pub fn identity(domain: MetricSpace, codomain: MetricSpace) -> Result<Self> {
        Self::new(domain, codomain, Point::clone)
    }

    pub fn domain(&self) -> &MetricSpace {
        &self.domain
    }

    pub fn codomain(&self) -> &MetricSpace {
        &self.codomain
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QiRow {
    pub x: usize,
    pub x_prime: usize,
    pub d_prime_x: f64,
    pub d_prime_y: f64,
    pub diff: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct QiReport {
    pub pairs_checked: u64,
    pub min_diff: f64,
    pub max_diff: f64,
    pub lower: f64,
    pub upper: f64,
    pub argmin: Option<QiRow>,
    pub argmax: Option<QiRow>,
    pub violation_count: u64,
    pub violations: Vec<QiRow>,
}

impl QiReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    /// CSV with columns `x,x_prime,d_prime_X,d_prime_Y,diff`: the extremal pairs
    /// followed by any violations. Points are written by their coordinates.
    pub fn write_csv<W: Write>(&self, map: &SampledMap, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "x_prime", "d_prime_X", "d_prime_Y", "diff"])?;
        for row in self.argmin.iter().chain(&self.argmax).chain(&self.violations) {
            w.write_record([
                map.domain.point(row.x)?.to_string(),
                map.domain.point(row.x_prime)?.to_string(),
                row.d_prime_x.to_string(),
                row.d_prime_y.to_string(),
                row.diff.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which flattening functions to measure with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QiVariant {
    Raw,
    /// Both functions composed with the chordal `ln(1 + ·)`.
    LogCorrected { nodes: u32 },
    /// Log-corrected, then multiplied by `eps`.
    Scaled { nodes: u32, eps: f64 },
}

impl QiVariant {
    /// Transformed `(c_X, c_Y)` and the additive bounds they must meet.
    pub fn apply(&self, pair: &QISchedulePair) -> Result<(PiecewiseLinearFn, PiecewiseLinearFn, f64, f64)> {
        match *self {
            QiVariant::Raw => Ok((pair.c_x.clone(), pair.c_y.clone(), -2.0, 1.0)),
            QiVariant::LogCorrected { nodes } => {
                Ok((pair.c_x.log_correct(nodes), pair.c_y.log_correct(nodes), -2.0, 1.0))
            }
            QiVariant::Scaled { nodes, eps } => Ok((
                pair.c_x.log_correct(nodes).scale(eps)?,
                pair.c_y.log_correct(nodes).scale(eps)?,
                -2.0 * eps,
                eps,
            )),
        }
    }
}

#[derive(Clone, Debug)]
struct QiScan {
    checked: u64,
    min: Option<QiRow>,
    max: Option<QiRow>,
    violation_count: u64,
    violations: Vec<QiRow>,
}

impl QiScan {
    fn empty() -> Self {
        Self { checked: 0, min: None, max: None, violation_count: 0, violations: Vec::new() }
    }

    fn record(&mut self, row: QiRow, lower: f64, upper: f64) {
        self.checked += 1;
        if self.min.as_ref().is_none_or(|m| row.diff < m.diff) {
            self.min = Some(row.clone());
        }
        if self.max.as_ref().is_none_or(|m| row.diff > m.diff) {
            self.max = Some(row.clone());
        }
        if row.diff < lower - TOLERANCE || row.diff > upper + TOLERANCE {
            self.violation_count += 1;
            if self.violations.len() < WITNESS_CAP {
                self.violations.push(row);
            }
        }
    }

    fn merge(mut self, other: QiScan) -> QiScan {
        self.checked += other.checked;
        if let Some(m) = other.min {
            if self.min.as_ref().is_none_or(|s| m.diff < s.diff) {
                self.min = Some(m);
            }
        }
        if let Some(m) = other.max {
            if self.max.as_ref().is_none_or(|s| m.diff > s.diff) {
                self.max = Some(m);
            }
        }
        self.violation_count += other.violation_count;
        self.violations.extend(other.violations);
        self
    }
}

/// Measures `c_Y(d_Y(f x, f x′)) − c_X(d_X(x, x′))` and checks it lies in `[lower, upper]`.
pub fn verify_qi_additive(
    map: &SampledMap,
    c_x: &PiecewiseLinearFn,
    c_y: &PiecewiseLinearFn,
    lower: f64,
    upper: f64,
    plan: SamplePlan,
) -> QiReport {
    let row = |i: usize, j: usize| {
        let dx = c_x.value_at(map.domain.dist(i, j));
        let dy = c_y.value_at(map.codomain.dist(map.image[i], map.image[j]));
        QiRow { x: i, x_prime: j, d_prime_x: dx, d_prime_y: dy, diff: dy - dx }
    };
    let n = map.domain.len();
    let scan = match plan {
        SamplePlan::Exhaustive => (0..n)
            .into_par_iter()
            .map(|i| {
                let mut scan = QiScan::empty();
                for j in i + 1..n {
                    scan.record(row(i, j), lower, upper);
                }
                scan
            })
            .reduce(QiScan::empty, QiScan::merge),
        SamplePlan::Sampled { count, seed } => sampled_chunks(count, seed, |rng, m| {
            let mut scan = QiScan::empty();
            for _ in 0..m {
                let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
                scan.record(row(i.min(j), i.max(j)), lower, upper);
            }
            scan
        })
        .into_iter()
        .fold(QiScan::empty(), QiScan::merge),
    };
    let mut violations = scan.violations;
    violations.sort_by_key(|r| (r.x, r.x_prime));
    violations.truncate(WITNESS_CAP);
    QiReport {
        pairs_checked: scan.checked,
        min_diff: scan.min.as_ref().map_or(0.0, |r| r.diff),
        max_diff: scan.max.as_ref().map_or(0.0, |r| r.diff),
        lower,
        upper,
        argmin: scan.min,
        argmax: scan.max,
        violation_count: scan.violation_count,
        violations,
    }
}

/// Builds schedules covering every domain distance and verifies one variant.
pub fn repair_and_verify(
    map: &SampledMap,
    profile: &CoarseProfile,
    steps: usize,
    variant: QiVariant,
    plan: SamplePlan,
) -> Result<(QISchedulePair, QiReport)> {
    let mut pair = build_qi_schedules(profile, steps)?;
    let n = map.domain.len();
    let far = (0..n).into_par_iter().map(|i| map.domain.dist(0, i)).reduce(|| 0.0, f64::max);
    // Every distance is at most twice the largest distance from point 0.
    pair.ensure_radius(profile, 2.0 * far)?;
    let (c_x, c_y, lower, upper) = variant.apply(&pair)?;
    let report = verify_qi_additive(map, &c_x, &c_y, lower, upper, plan);
    Ok((pair, report))
}

/// Flattening `c_Y` that makes a coarse map with dilation `Φ` large-scale Lipschitz.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LslSchedule {
    pub b: Vec<f64>,
    pub c_y: PiecewiseLinearFn,
}

impl LslSchedule {
    pub fn steps(&self) -> usize {
        self.b.len() - 1
    }
}

/// `b₀ = max(Φ(1), 1)`, `b_k = max(Φ(k + 1), 2b_{k−1} − b_{k−2})`, `c_Y(b_k) = k + 1`.
///
/// For `r ∈ [k, k + 1]` this gives `c_Y(Φ(r)) ≤ c_Y(b_k) = k + 1 ≤ r + 1`.
pub fn build_lsl_schedule(dilation: &PiecewiseLinearFn, steps: usize) -> Result<LslSchedule> {
    if !dilation.is_unbounded() {
        return Err(Error::Precondition("dilation must be unbounded".into()));
    }
    let mut b = vec![dilation.value_at(1.0).max(1.0)];
    for k in 1..=steps {
        let prev = b[k - 1];
        let before = if k >= 2 { b[k - 2] } else { 0.0 };
        let next = dilation.value_at((k + 1) as f64).max(2.0 * prev - before);
        if !next.is_finite() {
            return Err(Error::Range(format!("schedule overflows after {k} steps")));
        }
        b.push(next);
    }
    let c_y = level_function(&b)?;
    Ok(LslSchedule { b, c_y })
}

#[derive(Clone, Debug, Serialize)]
pub struct LslRow {
    pub r: f64,
    pub dilation: f64,
    pub c_y: f64,
    pub excess: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LslReport {
    pub rows: Vec<LslRow>,
    pub max_excess: f64,
    pub steps_used: usize,
}

impl LslReport {
    pub fn passed(&self) -> bool {
        self.max_excess <= 1.0 + TOLERANCE
    }

    /// CSV with columns `r,Phi,c_Y,excess`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "Phi", "c_Y", "excess"])?;
        for row in &self.rows {
            w.write_record([row.r.to_string(), row.dilation.to_string(), row.c_y.to_string(), row.excess.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Measures `c_Y(Φ(r)) − r` on the samples, building enough steps to cover them.
pub fn verify_lsl(dilation: &PiecewiseLinearFn, samples: &[f64]) -> Result<LslReport> {
    if samples.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
        return Err(Error::Domain("samples must be finite and nonnegative".into()));
    }
    let top = samples.iter().copied().fold(0.0, f64::max);
    let schedule = build_lsl_schedule(dilation, (top.ceil() as usize).max(1))?;
    let rows: Vec<LslRow> = samples
        .iter()
        .map(|&r| {
            let phi = dilation.value_at(r);
            let c = schedule.c_y.value_at(phi);
            LslRow { r, dilation: phi, c_y: c, excess: c - r }
        })
        .collect();
    let max_excess = rows.iter().map(|r| r.excess).fold(f64::NEG_INFINITY, f64::max);
    Ok(LslReport { rows, max_excess, steps_used: schedule.steps() })
}
