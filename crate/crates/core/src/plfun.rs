//! Monotone piecewise-linear functions on `[0, ∞)`.
//!
//! Every distance transform, control function and coarse profile in the crate
//! is a [`PiecewiseLinearFn`]: a list of breakpoints starting at `x = 0` with
//! affine interpolation in between and an affine tail past the last breakpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Global tolerance for equality comparisons on reals.
pub const TOLERANCE: f64 = 1e-9;

/// A continuous nondecreasing piecewise-linear function `[0, ∞) → [0, ∞)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPiecewiseLinear", into = "RawPiecewiseLinear")]
pub struct PiecewiseLinearFn {
    breakpoints: Vec<(f64, f64)>,
    tail_slope: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPiecewiseLinear {
    breakpoints: Vec<[f64; 2]>,
    tail_slope: f64,
}

impl TryFrom<RawPiecewiseLinear> for PiecewiseLinearFn {
    type Error = Error;

    fn try_from(raw: RawPiecewiseLinear) -> Result<Self> {
        let breakpoints = raw.breakpoints.into_iter().map(|[x, y]| (x, y)).collect();
        PiecewiseLinearFn::new(breakpoints, raw.tail_slope)
    }
}

impl From<PiecewiseLinearFn> for RawPiecewiseLinear {
    fn from(f: PiecewiseLinearFn) -> Self {
        RawPiecewiseLinear {
            breakpoints: f.breakpoints.into_iter().map(|(x, y)| [x, y]).collect(),
            tail_slope: f.tail_slope,
        }
    }
}

/// Structural report produced by [`PiecewiseLinearFn::analyze`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FnAnalysis {
    pub is_nondecreasing: bool,
    pub is_concave: bool,
    pub is_subadditive: bool,
    pub vanishes_only_at_zero: bool,
    pub is_unbounded: bool,
    /// A pair `(a, b)` with `f(a + b) > f(a) + f(b)`, when one was found.
    pub witness: Option<(f64, f64)>,
}

impl FnAnalysis {
    /// True when `c ∘ d` is a metric for every metric `d`.
    pub fn preserves_metrics(&self) -> bool {
        self.is_nondecreasing && self.is_subadditive && self.vanishes_only_at_zero
    }
}

impl PiecewiseLinearFn {
    pub fn new(breakpoints: Vec<(f64, f64)>, tail_slope: f64) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidFunction(msg));
        let Some(&(x0, _)) = breakpoints.first() else {
            return invalid("no breakpoints".into());
        };
        if x0 != 0.0 {
            return invalid(format!("first breakpoint must sit at x = 0, found {x0}"));
        }
        if !tail_slope.is_finite() || tail_slope < 0.0 {
            return invalid(format!("tail slope must be finite and nonnegative, found {tail_slope}"));
        }
        for (i, &(x, y)) in breakpoints.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return invalid(format!("breakpoint {i} is not finite"));
            }
            if y < 0.0 {
                return invalid(format!("breakpoint {i} has negative value {y}"));
            }
        }
        for (i, w) in breakpoints.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return invalid(format!("breakpoint abscissae not strictly increasing at index {}", i + 1));
            }
            if w[1].1 < w[0].1 {
                return invalid(format!("function decreases between breakpoints {i} and {}", i + 1));
            }
        }
        Ok(Self { breakpoints, tail_slope })
    }

    pub fn identity() -> Self {
        Self { breakpoints: vec![(0.0, 0.0), (1.0, 1.0)], tail_slope: 1.0 }
    }

    /// `r ↦ slope·r + intercept`.
    pub fn affine(slope: f64, intercept: f64) -> Result<Self> {
        Self::new(vec![(0.0, intercept), (1.0, slope + intercept)], slope)
    }

    /// Chordal encoding of `g`, exact at the integer nodes `0..=nodes`.
    ///
    /// The tail continues the last chord.
    pub fn chordal(nodes: usize, g: impl Fn(f64) -> f64) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::Domain("chordal encoding needs at least one node past 0".into()));
        }
        let breakpoints: Vec<(f64, f64)> = (0..=nodes)
            .map(|k| {
                let x = k as f64;
                (x, g(x))
            })
            .collect();
        let tail = breakpoints[nodes].1 - breakpoints[nodes - 1].1;
        Self::new(breakpoints, tail)
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    pub fn last_breakpoint(&self) -> (f64, f64) {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn is_unbounded(&self) -> bool {
        self.tail_slope > 0.0
    }

    /// Slopes of the bounded segments followed by the tail slope.
    pub fn slopes(&self) -> Vec<f64> {
        self.breakpoints
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .chain(std::iter::once(self.tail_slope))
            .collect()
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::Domain(format!("cannot evaluate at negative radius {r}")));
        }
        Ok(self.value_at(r))
    }

    /// Evaluation without the domain check. `r` must be nonnegative.
    #[inline]
    pub fn value_at(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0, "negative radius {r}");
        let bps = &self.breakpoints;
        let idx = bps.partition_point(|&(x, _)| x <= r).max(1) - 1;
        let (x0, y0) = bps[idx];
        match bps.get(idx + 1) {
            None => y0 + self.tail_slope * (r - x0),
            Some(&(x1, y1)) => y0 + (y1 - y0) * ((r - x0) / (x1 - x0)),
        }
    }

    /// The least `r` with `f(r) ≥ y`; zero whenever `y ≤ f(0)`.
    pub fn inverse_or_zero(&self, y: f64) -> Result<f64> {
        if y.is_nan() || y < 0.0 {
            return Err(Error::Domain(format!("cannot invert at negative value {y}")));
        }
        let bps = &self.breakpoints;
        if y <= bps[0].1 {
            return Ok(0.0);
        }
        let j = bps.partition_point(|&(_, v)| v < y);
        if j == bps.len() {
            let (x_last, y_last) = self.last_breakpoint();
            if self.tail_slope > 0.0 {
                return Ok(x_last + (y - y_last) / self.tail_slope);
            }
            return Err(Error::Range(format!("{y} exceeds the supremum {y_last} of a bounded function")));
        }
        let (x1, y1) = bps[j];
        if y == y1 {
            return Ok(x1);
        }
        let (x0, y0) = bps[j - 1];
        Ok((x0 + (y - y0) * ((x1 - x0) / (y1 - y0))).min(x1))
    }

    /// The largest `r` with `f(r) ≤ b`, i.e. `sup f⁻¹([0, b])`.
    ///
    /// On a flat segment at height `b` this is the right endpoint of the segment.
    pub fn sup_preimage(&self, b: f64) -> Result<f64> {
        let bps = &self.breakpoints;
        if b.is_nan() || b < bps[0].1 {
            return Err(Error::Range(format!("{b} lies below f(0) = {}", bps[0].1)));
        }
        let j = bps.partition_point(|&(_, v)| v <= b);
        let (x0, y0) = bps[j - 1];
        match bps.get(j) {
            None if self.tail_slope > 0.0 => Ok(x0 + (b - y0) / self.tail_slope),
            None => Err(Error::Range(format!("preimage of [0, {b}] is unbounded"))),
            Some(&(x1, y1)) => Ok((x0 + (b - y0) * ((x1 - x0) / (y1 - y0))).min(x1)),
        }
    }

    /// Decides monotonicity, concavity and unboundedness from the slopes, and
    /// subadditivity exactly for concave inputs.
    ///
    /// Non-concave inputs are searched for a subadditivity violation over all
    /// breakpoint pairs, the pairs `(x_i, x_k − x_i)`, and the grid
    /// `{0, h, 2h, …}` up to twice the last breakpoint. A violation of a
    /// piecewise-linear function always shows up at a breakpoint-aligned pair, so the
    /// search is exhaustive for breakpoints on the grid.
    pub fn analyze(&self, grid_step: f64) -> Result<FnAnalysis> {
        if !(grid_step > 0.0) || !grid_step.is_finite() {
            return Err(Error::Domain(format!("grid step must be positive, found {grid_step}")));
        }
        let slopes = self.slopes();
        let is_nondecreasing = slopes.iter().all(|&s| s >= -TOLERANCE);
        let is_concave = slopes.windows(2).all(|w| w[1] <= w[0] + TOLERANCE);
        let f0 = self.breakpoints[0].1;
        let vanishes_only_at_zero = f0.abs() <= TOLERANCE && slopes[0] > 0.0;
        let is_unbounded = self.is_unbounded();

        // Concave and nonnegative at 0 already forces subadditivity.
        let witness = if is_concave { None } else { self.find_subadditivity_violation(grid_step) };

        Ok(FnAnalysis {
            is_nondecreasing,
            is_concave,
            is_subadditive: witness.is_none(),
            vanishes_only_at_zero,
            is_unbounded,
            witness,
        })
    }

    fn violates(&self, a: f64, b: f64) -> bool {
        self.value_at(a + b) > self.value_at(a) + self.value_at(b) + TOLERANCE
    }

    fn find_subadditivity_violation(&self, grid_step: f64) -> Option<(f64, f64)> {
        let xs: Vec<f64> = self.breakpoints.iter().map(|&(x, _)| x).collect();
        for (i, &a) in xs.iter().enumerate() {
            for &b in &xs[i..] {
                if self.violates(a, b) {
                    return Some((a, b));
                }
            }
        }
        for (i, &a) in xs.iter().enumerate() {
            for &s in &xs[i + 1..] {
                let b = s - a;
                if b >= a && self.violates(a, b) {
                    return Some((a, b));
                }
            }
        }
        let limit = 2.0 * self.last_breakpoint().0;
        let steps = (limit / grid_step + TOLERANCE).floor() as usize;
        for i in 0..=steps {
            let a = i as f64 * grid_step;
            for j in i..=steps {
                let b = j as f64 * grid_step;
                if self.violates(a, b) {
                    return Some((a, b));
                }
            }
        }
        None
    }

    /// Chordal interpolation of `r ↦ ln(f(r) + 1)`.
    ///
    /// Nodes are the breakpoints of `f` together with the preimages of the values
    /// `2^j − 1` for `j = 1..=node_count`. Past the last node the tail follows the
    /// chord of `ln(1 + ·)` towards the virtual value `2Y + 1`, `Y` being the value
    /// of `f` at the last node.
    ///
    /// Since `f` is affine between nodes, the result equals `L ∘ f` where `L` is the
    /// chordal interpolant of `ln(1 + ·)` at the value nodes. Two functions with the
    /// same value nodes are therefore corrected by the same 1-Lipschitz `L`.
    pub fn log_correct(&self, node_count: u32) -> PiecewiseLinearFn {
        let nodes = self.log_nodes(node_count);
        let y_last = self.value_at(nodes[nodes.len() - 1]);
        let breakpoints = nodes.iter().map(|&x| (x, self.value_at(x).ln_1p())).collect();
        let tail = self.tail_slope * std::f64::consts::LN_2 / (1.0 + y_last);
        PiecewiseLinearFn::new(breakpoints, tail).expect("log correction of a valid function is valid")
    }

    /// Largest gap between `ln(f + 1)` and [`log_correct`](Self::log_correct)
    /// over the span of the nodes.
    pub fn log_chord_error(&self, node_count: u32) -> f64 {
        let values: Vec<f64> = self.log_nodes(node_count).iter().map(|&x| self.value_at(x)).collect();
        values
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| ln1p_chord_error(w[0], w[1]))
            .fold(0.0, f64::max)
    }

    fn log_nodes(&self, node_count: u32) -> Vec<f64> {
        let mut nodes: Vec<f64> = self.breakpoints.iter().map(|&(x, _)| x).collect();
        let f0 = self.breakpoints[0].1;
        for j in 1..=node_count.min(1000) {
            let v = 2f64.powi(j as i32) - 1.0;
            if v <= f0 {
                continue;
            }
            match self.inverse_or_zero(v) {
                Ok(x) => nodes.push(x),
                Err(_) => break,
            }
        }
        nodes.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::with_capacity(nodes.len());
        for x in nodes {
            match out.last() {
                Some(&prev) if x - prev <= 1e-12 * prev.max(1.0) => {}
                _ => out.push(x),
            }
        }
        out
    }

    pub fn scale(&self, eps: f64) -> Result<PiecewiseLinearFn> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("scale factor must be positive, found {eps}")));
        }
        let breakpoints = self.breakpoints.iter().map(|&(x, y)| (x, y * eps)).collect();
        PiecewiseLinearFn::new(breakpoints, self.tail_slope * eps)
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &PiecewiseLinearFn) -> PiecewiseLinearFn {
        let mut nodes: Vec<f64> = inner.breakpoints.iter().map(|&(x, _)| x).collect();
        let base = inner.breakpoints[0].1;
        for &(u, _) in &self.breakpoints {
            if u <= base {
                continue;
            }
            match inner.inverse_or_zero(u) {
                Ok(x) => nodes.push(x),
                Err(_) => break,
            }
        }
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| *a - *b <= 1e-12 * b.max(1.0));
        let breakpoints = nodes.iter().map(|&x| (x, self.value_at(inner.value_at(x)))).collect();
        let tail = if inner.is_unbounded() { self.tail_slope * inner.tail_slope } else { 0.0 };
        PiecewiseLinearFn::new(breakpoints, tail).expect("composition of valid functions is valid")
    }
}

/// Maximal gap between `ln(1 + t)` and its chord over `[t0, t1]`.
pub fn ln1p_chord_error(t0: f64, t1: f64) -> f64 {
    let (g0, g1) = (t0.ln_1p(), t1.ln_1p());
    let m = (g1 - g0) / (t1 - t0);
    let t = (1.0 / m - 1.0).clamp(t0, t1);
    (t.ln_1p() - (g0 + m * (t - t0))).max(0.0)
}
