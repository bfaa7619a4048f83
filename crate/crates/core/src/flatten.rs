//! Concave flattening functions built from control functions.
//!
//! Given a nondecreasing control function `D`, the schedule
//!
//! ```text
//! a₋₁ = 0,  a₀ = 1,  a_k = max(D(a_{k−1}), a_{k−1} + (a_{k−1} − a_{k−2}))
//! ```
//!
//! defines `c` affine on every `[a_{k−1}, a_k]` with `c(a_k) = k + 1`. The second
//! argument of the max keeps the segment lengths nondecreasing, so `c` is concave;
//! the first makes `c ∘ D ∘ c⁻¹(r′) ≤ r′ + 2`, an affine control for `c ∘ d`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plfun::{PiecewiseLinearFn, TOLERANCE};

/// Breakpoints `a₀ = 1, a₁, …, a_K` and the flattening function `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct FlatteningSchedule {
    a: Vec<f64>,
    c: PiecewiseLinearFn,
    source: String,
    #[serde(skip)]
    controls: Vec<PiecewiseLinearFn>,
}

#[derive(Deserialize)]
struct RawSchedule {
    a: Vec<f64>,
    c: PiecewiseLinearFn,
    source: String,
}

impl TryFrom<RawSchedule> for FlatteningSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        let c = schedule_function(&raw.a)?;
        let matches = c.breakpoints().len() == raw.c.breakpoints().len()
            && c.breakpoints()
                .iter()
                .zip(raw.c.breakpoints())
                .all(|(p, q)| (p.0 - q.0).abs() <= TOLERANCE * p.0.max(1.0) && (p.1 - q.1).abs() <= TOLERANCE);
        if !matches {
            return Err(Error::InvalidFunction("schedule function does not match its breakpoints".into()));
        }
        Ok(FlatteningSchedule { a: raw.a, c: raw.c, source: raw.source, controls: Vec::new() })
    }
}

/// `c` with `c(0) = 0`, `c(a_k) = k + 1`, continuing the last slope past `a_K`.
pub(crate) fn schedule_function(a: &[f64]) -> Result<PiecewiseLinearFn> {
    if a.len() < 2 || a[0] != 1.0 {
        return Err(Error::InvalidFunction("a schedule needs a₀ = 1 and at least one step".into()));
    }
    let mut prev_gap = 1.0;
    for w in a.windows(2) {
        let gap = w[1] - w[0];
        if !(gap >= prev_gap * (1.0 - 1e-9)) || !w[1].is_finite() {
            return Err(Error::InvalidFunction(format!("schedule gaps shrink after {}", w[0])));
        }
        prev_gap = gap;
    }
    let mut breakpoints = Vec::with_capacity(a.len() + 1);
    breakpoints.push((0.0, 0.0));
    breakpoints.extend(a.iter().enumerate().map(|(k, &x)| (x, (k + 1) as f64)));
    let tail = 1.0 / (a[a.len() - 1] - a[a.len() - 2]);
    PiecewiseLinearFn::new(breakpoints, tail)
}

impl FlatteningSchedule {
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn c(&self) -> &PiecewiseLinearFn {
        &self.c
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Number of recursion steps `K` taken so far.
    pub fn steps(&self) -> usize {
        self.a.len() - 1
    }

    /// `c(a_K) = K + 1`, the largest value of `c` covered by the schedule.
    pub fn top_level(&self) -> f64 {
        self.a.len() as f64
    }

    /// Replaces the free-text description of the controls.
    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// Attaches the control functions used to extend a deserialized schedule.
    pub fn with_controls(mut self, controls: Vec<PiecewiseLinearFn>) -> Self {
        self.controls = controls;
        self
    }

    pub fn controls(&self) -> &[PiecewiseLinearFn] {
        &self.controls
    }

    /// Runs `steps` more recursion steps with the stored control functions.
    pub fn extend(&mut self, steps: usize) -> Result<()> {
        if self.controls.is_empty() {
            return Err(Error::Precondition("schedule has no control functions to extend with".into()));
        }
        let controls = std::mem::take(&mut self.controls);
        let res = extend_breakpoints(&mut self.a, &controls, steps);
        self.controls = controls;
        res?;
        self.c = schedule_function(&self.a)?;
        Ok(())
    }

    /// Extends until `top_level() ≥ level`.
    pub fn ensure_level(&mut self, level: f64) -> Result<()> {
        if !level.is_finite() {
            return Err(Error::Domain(format!("cannot extend a schedule to level {level}")));
        }
        let missing = (level - self.top_level()).ceil();
        if missing > 0.0 {
            self.extend(missing as usize)?;
        }
        Ok(())
    }

    /// JSON `{"a": [...], "c": {...}, "source": "..."}`.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn extend_breakpoints(a: &mut Vec<f64>, controls: &[PiecewiseLinearFn], steps: usize) -> Result<()> {
    for _ in 0..steps {
        let prev = a[a.len() - 1];
        let before = if a.len() >= 2 { a[a.len() - 2] } else { 0.0 };
        let dominating = controls.iter().map(|d| d.value_at(prev)).fold(f64::NEG_INFINITY, f64::max);
        let next = dominating.max(2.0 * prev - before);
        if !next.is_finite() {
            return Err(Error::Range(format!("schedule overflows after {} steps", a.len())));
        }
        a.push(next);
    }
    Ok(())
}

pub fn build_schedule(control: &PiecewiseLinearFn, steps: usize) -> Result<FlatteningSchedule> {
    build_schedule_multi(std::slice::from_ref(control), steps)
}

/// Shared schedule for a sup-product and its factors: the first argument of the
/// max becomes the maximum over all supplied control functions.
pub fn build_schedule_multi(controls: &[PiecewiseLinearFn], steps: usize) -> Result<FlatteningSchedule> {
    if controls.is_empty() {
        return Err(Error::Precondition("no control functions given".into()));
    }
    if steps == 0 {
        return Err(Error::Domain("a schedule needs at least one step".into()));
    }
    for (i, d) in controls.iter().enumerate() {
        if !d.analyze(1.0)?.is_nondecreasing {
            return Err(Error::Precondition(format!("control function {i} is not nondecreasing")));
        }
    }
    let mut a = vec![1.0];
    extend_breakpoints(&mut a, controls, steps)?;
    let c = schedule_function(&a)?;
    let source = controls.iter().map(describe).collect::<Vec<_>>().join(" | ");
    Ok(FlatteningSchedule { a, c, source, controls: controls.to_vec() })
}

fn describe(f: &PiecewiseLinearFn) -> String {
    let bps: Vec<String> = f.breakpoints().iter().map(|(x, y)| format!("({x},{y})")).collect();
    format!("pl[{}; tail {}]", bps.join(","), f.tail_slope())
}

/// Affine control `r ↦ slope·r + intercept` with `slope ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineBound {
    pub slope: f64,
    pub intercept: f64,
}

impl AffineBound {
    pub fn new(slope: f64, intercept: f64) -> Result<Self> {
        if !(slope >= 1.0) || !slope.is_finite() {
            return Err(Error::Precondition(format!("affine control slope must be at least 1, found {slope}")));
        }
        if !(intercept >= 0.0) || !intercept.is_finite() {
            return Err(Error::Precondition(format!("affine control intercept must be nonnegative, found {intercept}")));
        }
        Ok(Self { slope, intercept })
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.slope * r + self.intercept
    }

    pub fn to_function(&self) -> PiecewiseLinearFn {
        PiecewiseLinearFn::affine(self.slope, self.intercept).expect("validated affine bound")
    }
}

fn check_admissible(c: &PiecewiseLinearFn) -> Result<()> {
    let a = c.analyze(1.0)?;
    if !(a.is_concave && a.is_nondecreasing && a.vanishes_only_at_zero && a.is_unbounded) {
        return Err(Error::Precondition(
            "c must be concave, nondecreasing, unbounded and vanish only at 0".into(),
        ));
    }
    Ok(())
}

/// Control of `(X, c ∘ d)` inherited from an affine control `A·r + B` of `(X, d)`:
/// the slope is kept and the intercept becomes `c(B)`.
pub fn transformed_control_bound(bound: AffineBound, c: &PiecewiseLinearFn) -> Result<AffineBound> {
    let bound = AffineBound::new(bound.slope, bound.intercept)?;
    check_admissible(c)?;
    Ok(AffineBound { slope: bound.slope, intercept: c.value_at(bound.intercept) })
}

/// The same inheritance written as `D(r) + C` with `C = c(B)`, i.e. `A·r + B + c(B)`.
/// Weaker than [`transformed_control_bound`] but majorizes the same samples.
pub fn shifted_control_bound(bound: AffineBound, c: &PiecewiseLinearFn) -> Result<AffineBound> {
    let t = transformed_control_bound(bound, c)?;
    Ok(AffineBound { slope: t.slope, intercept: bound.intercept + t.intercept })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ControlRow {
    pub r: f64,
    pub control: f64,
    pub excess: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlatteningReport {
    /// `(r′, D̃(r′), D̃(r′) − r′)` per sample.
    pub rows: Vec<ControlRow>,
    /// Largest excess over samples with `r′ > 0`.
    pub max_excess: f64,
    pub limit: f64,
    pub steps_used: usize,
}

impl FlatteningReport {
    pub fn passed(&self) -> bool {
        self.max_excess <= self.limit + TOLERANCE
    }

    /// CSV with columns `r_prime,D_tilde,excess`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, ["r_prime", "D_tilde", "excess"], &self.rows)
    }
}

fn write_rows<W: Write>(out: W, header: [&str; 3], rows: &[ControlRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record([row.r.to_string(), row.control.to_string(), row.excess.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn extended_for(schedule: &FlatteningSchedule, control: &PiecewiseLinearFn, level: f64) -> Result<FlatteningSchedule> {
    let mut s = schedule.clone();
    if s.controls.is_empty() {
        s.controls = vec![control.clone()];
    }
    s.ensure_level(level)?;
    Ok(s)
}

/// Measures `D̃(r′) = c(D(c⁻¹(r′)))` and its excess over `r′`.
///
/// The schedule is extended (on a copy) until every sample lies in its range.
/// Samples at `r′ = 0` are reported but excluded from `max_excess`.
pub fn verify_flattening(
    schedule: &FlatteningSchedule,
    control: &PiecewiseLinearFn,
    samples: &[f64],
) -> Result<FlatteningReport> {
    if samples.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
        return Err(Error::Domain("samples must be finite and nonnegative".into()));
    }
    let top = samples.iter().copied().fold(0.0, f64::max);
    let s = extended_for(schedule, control, top.ceil() + 2.0)?;
    let c = s.c();
    let mut rows = Vec::with_capacity(samples.len());
    let mut max_excess = f64::NEG_INFINITY;
    for &r in samples {
        let value = c.value_at(control.value_at(c.inverse_or_zero(r)?));
        let excess = value - r;
        if r > 0.0 {
            max_excess = max_excess.max(excess);
        }
        rows.push(ControlRow { r, control: value, excess });
    }
    Ok(FlatteningReport { rows, max_excess, limit: 2.0, steps_used: s.steps() })
}

#[derive(Clone, Debug, Serialize)]
pub struct LogControlReport {
    /// `(r″, D″(r″), D″(r″) − r″)` per sample.
    pub rows: Vec<ControlRow>,
    pub max_excess: f64,
    /// Largest gap between `ln(1 + c)` and its chordal interpolation.
    pub chord_error: f64,
    /// `ln 3 + chord_error`.
    pub limit: f64,
    pub steps_used: usize,
}

impl LogControlReport {
    pub fn passed(&self) -> bool {
        self.max_excess <= self.limit + TOLERANCE
    }

    /// CSV with columns `r_second,D_second,excess`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, ["r_second", "D_second", "excess"], &self.rows)
    }
}

/// Measures the control `D″(r″) = c″(D(c″⁻¹(r″)))` of `c″ ∘ d` where
/// `c″ = log_correct(c)`. Exact `ln(1 + c)` would give `D″(r″) ≤ r″ + ln 3`; the
/// chordal interpolation can add at most its chord error.
pub fn verify_log_control(
    schedule: &FlatteningSchedule,
    control: &PiecewiseLinearFn,
    samples: &[f64],
    node_count: u32,
) -> Result<LogControlReport> {
    if samples.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
        return Err(Error::Domain("samples must be finite and nonnegative".into()));
    }
    let top = samples.iter().copied().fold(0.0, f64::max);
    // Chord error never exceeds that on [0, 1], below 0.06.
    let level = (top + 0.1).exp_m1().ceil() + 3.0;
    let s = extended_for(schedule, control, level)?;
    let corrected = s.c().log_correct(node_count);
    let chord_error = s.c().log_chord_error(node_count);
    let mut rows = Vec::with_capacity(samples.len());
    let mut max_excess = f64::NEG_INFINITY;
    for &r in samples {
        let value = corrected.value_at(control.value_at(corrected.inverse_or_zero(r)?));
        let excess = value - r;
        if r > 0.0 {
            max_excess = max_excess.max(excess);
        }
        rows.push(ControlRow { r, control: value, excess });
    }
    Ok(LogControlReport {
        rows,
        max_excess,
        chord_error,
        limit: 3f64.ln() + chord_error,
        steps_used: s.steps(),
    })
}
