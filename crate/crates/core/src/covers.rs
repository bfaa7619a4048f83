//! Colored covers of lattice boxes witnessing control functions.
//!
//! A cover of `X` by `n + 1` colors is a witness for an `n`-dimensional control
//! function `D` at scale `r` when cells of equal color are `r`-disjoint and every
//! cell has diameter at most `D(r)`. Here "r-disjoint" means inter-set distance
//! `≥ r`.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::plfun::TOLERANCE;
use crate::spaces::{MetricSpace, MetricTransform, WITNESS_CAP};

/// Integer label of a cell within its color.
pub type CellId = Vec<i64>;

/// An `(n + 1)`-colored cover of `ℤⁿ` given by a membership oracle.
pub trait ColoredCover: Sync {
    fn dim(&self) -> usize;

    /// Number of colors, `n + 1` for an `n`-dimensional witness.
    fn colors(&self) -> usize;

    /// Color and cell of a lattice point, `None` if the point is uncovered.
    fn cell_of(&self, p: &[i64]) -> Option<(usize, CellId)>;

    /// Advertised bound on cell diameters in the sup metric.
    fn diameter_bound(&self) -> f64;
}

/// Shifted-core brick cover of `ℤⁿ` at integer scale `r`.
///
/// With period `L = 2(n + 1)r`, color `k` tiles every axis by intervals of length
/// `L` offset by `2rk` and keeps the core `[mL + 2rk, mL + 2rk + L − 2r)` of each.
/// A point takes the smallest color whose core contains it. Each color misses one
/// of the `n + 1` residue zones of width `2r` per axis, and `n` coordinates occupy
/// at most `n` zones, so every point is covered.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BrickCover {
    dim: usize,
    scale: i64,
    period: i64,
}

pub fn brick_cover(n: usize, r: i64) -> Result<BrickCover> {
    if n == 0 {
        return Err(Error::Domain("brick cover needs dimension at least 1".into()));
    }
    if r < 1 {
        return Err(Error::Domain(format!("brick cover needs scale at least 1, found {r}")));
    }
    let period = 2 * (n as i64 + 1) * r;
    Ok(BrickCover { dim: n, scale: r, period })
}

impl BrickCover {
    pub fn scale(&self) -> i64 {
        self.scale
    }

    pub fn period(&self) -> i64 {
        self.period
    }

    /// Sup-diameter of a full core, `L − 2r − 1`.
    pub fn core_diameter(&self) -> i64 {
        self.period - 2 * self.scale - 1
    }
}

impl ColoredCover for BrickCover {
    fn dim(&self) -> usize {
        self.dim
    }

    fn colors(&self) -> usize {
        self.dim + 1
    }

    fn cell_of(&self, p: &[i64]) -> Option<(usize, CellId)> {
        if p.len() != self.dim {
            return None;
        }
        let core = self.period - 2 * self.scale;
        'colors: for k in 0..=self.dim {
            let offset = 2 * self.scale * k as i64;
            let mut cell = Vec::with_capacity(self.dim);
            for &x in p {
                let t = x - offset;
                if t.rem_euclid(self.period) >= core {
                    continue 'colors;
                }
                cell.push(t.div_euclid(self.period));
            }
            return Some((k, cell));
        }
        None
    }

    fn diameter_bound(&self) -> f64 {
        (2 * (self.dim as i64 + 1) * self.scale) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub color: usize,
    pub cell_id: CellId,
    pub points: usize,
    pub diameter: f64,
    /// Distance to the nearest other cell of the same color, when within the probe radius.
    pub min_same_color_gap: Option<f64>,
    /// Points realizing the gap: one in this cell, one in the other cell.
    pub gap_pair: Option<(Vec<i64>, Vec<i64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationViolation {
    pub color: usize,
    pub a: Vec<i64>,
    pub b: Vec<i64>,
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverReport {
    pub points: usize,
    pub scale: f64,
    pub bound: f64,
    /// Same-color gaps up to this many lattice steps were measured.
    pub probe_steps: u32,
    pub uncovered: u64,
    pub uncovered_witnesses: Vec<Vec<i64>>,
    pub cells: Vec<CellSummary>,
    pub separation_violations: Vec<SeparationViolation>,
    pub diameter_violations: Vec<(usize, CellId, f64)>,
    pub max_diameter: f64,
    pub min_gap: Option<f64>,
}

impl CoverReport {
    pub fn passed(&self) -> bool {
        self.uncovered == 0 && self.separation_violations.is_empty() && self.diameter_violations.is_empty()
    }

    /// Per-cell CSV: `color,cell_id,diameter,min_same_color_gap`.
    /// An empty gap means no other cell of that color within the probe radius.
    pub fn write_cells_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["color", "cell_id", "diameter", "min_same_color_gap"])?;
        for cell in &self.cells {
            w.write_record([
                cell.color.to_string(),
                format_cell(&cell.cell_id),
                cell.diameter.to_string(),
                cell.min_same_color_gap.map(|g| g.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn format_cell(id: &[i64]) -> String {
    let parts: Vec<String> = id.iter().map(i64::to_string).collect();
    format!("({})", parts.join(" "))
}

fn apply_chain(chain: &[&MetricTransform], t: f64) -> f64 {
    chain.iter().fold(t, |acc, f| f.apply(acc))
}

/// Least base distance whose image under the chain reaches `y`; `None` if never reached.
fn invert_chain(chain: &[&MetricTransform], y: f64) -> Option<f64> {
    chain.iter().rev().try_fold(y, |acc, f| f.inverse(acc).ok())
}

/// Exhaustively checks `cover` on a lattice box, possibly carrying transformed
/// distances: coverage, `r`-disjointness of each color, and cell diameters `≤ bound`.
///
/// `r`, `bound` and `probe` are in the units of `space`. Same-color gaps are measured
/// up to `max(r, probe)`.
pub fn verify_cover(
    space: &MetricSpace,
    cover: &dyn ColoredCover,
    r: f64,
    bound: f64,
    probe: Option<f64>,
) -> Result<CoverReport> {
    let (lattice, chain) = space
        .lattice_view()
        .ok_or_else(|| Error::InvalidSpace("cover verification needs a lattice box".into()))?;
    if lattice.dim() != cover.dim() {
        return Err(Error::InvalidSpace(format!(
            "cover of dimension {} on a lattice of dimension {}",
            cover.dim(),
            lattice.dim()
        )));
    }
    if !(r >= 0.0) || bound.is_nan() {
        return Err(Error::Domain(format!("invalid scale {r} or bound {bound}")));
    }
    let side = lattice.side();
    let n_points = lattice.len();
    let box_diameter = (side - 1) as f64;
    let steps_for = |y: f64| invert_chain(&chain, y).map_or(box_diameter, |t| t.ceil().min(box_diameter));
    let probe_steps = steps_for(r.max(probe.unwrap_or(0.0))) as u32;

    let assignments: Vec<Option<(usize, CellId)>> =
        (0..n_points).into_par_iter().map(|i| cover.cell_of(&lattice.coords(i))).collect();

    let mut cell_index: HashMap<(usize, CellId), u32> = HashMap::new();
    let mut cells: Vec<(usize, CellId)> = Vec::new();
    let mut labels = vec![NONE; n_points];
    let mut uncovered = 0u64;
    let mut uncovered_witnesses = Vec::new();
    for (i, a) in assignments.into_iter().enumerate() {
        match a {
            Some(key) => {
                let next = cells.len() as u32;
                let id = *cell_index.entry(key.clone()).or_insert_with(|| {
                    cells.push(key);
                    next
                });
                labels[i] = id;
            }
            None => {
                uncovered += 1;
                if uncovered_witnesses.len() < WITNESS_CAP {
                    uncovered_witnesses.push(lattice.coords(i));
                }
            }
        }
    }

    // Bounding boxes give exact sup-diameters.
    let dim = lattice.dim();
    let mut lo = vec![vec![i64::MAX; dim]; cells.len()];
    let mut hi = vec![vec![i64::MIN; dim]; cells.len()];
    let mut counts = vec![0usize; cells.len()];
    for (i, &label) in labels.iter().enumerate() {
        if label == NONE {
            continue;
        }
        let c = lattice.coords(i);
        let l = label as usize;
        counts[l] += 1;
        for k in 0..dim {
            lo[l][k] = lo[l][k].min(c[k]);
            hi[l][k] = hi[l][k].max(c[k]);
        }
    }

    let mut gaps: Vec<Option<(u32, usize, usize)>> = vec![None; cells.len()];
    for color in 0..cover.colors() {
        let color_labels: Vec<u32> = labels
            .iter()
            .map(|&l| if l != NONE && cells[l as usize].0 == color { l } else { NONE })
            .collect();
        let nearest = nearest_other_label(&color_labels, side, dim, probe_steps);
        for (i, &l) in color_labels.iter().enumerate() {
            if l == NONE {
                continue;
            }
            let other = nearest[i][1];
            if other.label == NONE {
                continue;
            }
            let slot = &mut gaps[l as usize];
            let cand = (other.dist, i, other.src as usize);
            if slot.is_none_or(|g| cand < g) {
                *slot = Some(cand);
            }
        }
    }

    let mut summaries = Vec::with_capacity(cells.len());
    let mut separation_violations = Vec::new();
    let mut diameter_violations = Vec::new();
    let mut max_diameter = 0.0f64;
    let mut min_gap: Option<f64> = None;
    for (l, (color, cell_id)) in cells.iter().enumerate() {
        let base_diameter = (0..dim).map(|k| hi[l][k] - lo[l][k]).max().unwrap_or(0) as f64;
        let diameter = apply_chain(&chain, base_diameter);
        max_diameter = max_diameter.max(diameter);
        if diameter > bound + TOLERANCE {
            diameter_violations.push((*color, cell_id.clone(), diameter));
        }
        let (gap, gap_pair) = match gaps[l] {
            Some((steps, a, b)) => {
                let g = apply_chain(&chain, steps as f64);
                min_gap = Some(min_gap.map_or(g, |m| m.min(g)));
                let pair = (lattice.coords(a), lattice.coords(b));
                if g < r - TOLERANCE {
                    separation_violations.push(SeparationViolation {
                        color: *color,
                        a: pair.0.clone(),
                        b: pair.1.clone(),
                        distance: g,
                    });
                }
                (Some(g), Some(pair))
            }
            None => (None, None),
        };
        summaries.push(CellSummary {
            color: *color,
            cell_id: cell_id.clone(),
            points: counts[l],
            diameter,
            min_same_color_gap: gap,
            gap_pair,
        });
    }
    summaries.sort_by(|a, b| (a.color, &a.cell_id).cmp(&(b.color, &b.cell_id)));
    separation_violations.sort_by(|a, b| {
        a.distance.total_cmp(&b.distance).then_with(|| (a.color, &a.a, &a.b).cmp(&(b.color, &b.a, &b.b)))
    });
    separation_violations.truncate(WITNESS_CAP);
    diameter_violations.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    diameter_violations.truncate(WITNESS_CAP);

    Ok(CoverReport {
        points: n_points,
        scale: r,
        bound,
        probe_steps,
        uncovered,
        uncovered_witnesses,
        cells: summaries,
        separation_violations,
        diameter_violations,
        max_diameter,
        min_gap,
    })
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Nearest {
    dist: u32,
    label: u32,
    src: u32,
}

const EMPTY: Nearest = Nearest { dist: u32::MAX, label: NONE, src: u32::MAX };

fn offer(best: &mut [Nearest; 2], cand: Nearest) {
    if cand.label == NONE {
        return;
    }
    if cand.label == best[0].label {
        best[0] = best[0].min(cand);
    } else if cand.label == best[1].label {
        best[1] = best[1].min(cand);
        if best[1] < best[0] {
            best.swap(0, 1);
        }
    } else if cand < best[0] {
        best[1] = best[0];
        best[0] = cand;
    } else if cand < best[1] {
        best[1] = cand;
    }
}

/// For every point of a `side^dim` box, the two nearest distinct labels in the sup
/// metric, truncated at `max_steps`. Separable: one pass per axis, each pass combining
/// `max(dist, |Δ|)` along the axis.
fn nearest_other_label(labels: &[u32], side: usize, dim: usize, max_steps: u32) -> Vec<[Nearest; 2]> {
    let mut current: Vec<[Nearest; 2]> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if l == NONE {
                [EMPTY, EMPTY]
            } else {
                [Nearest { dist: 0, label: l, src: i as u32 }, EMPTY]
            }
        })
        .collect();
    let w = max_steps as usize;
    for axis in 0..dim {
        let stride = side.pow((dim - 1 - axis) as u32);
        let next: Vec<[Nearest; 2]> = (0..current.len())
            .into_par_iter()
            .map(|idx| {
                let t = (idx / stride) % side;
                let line_start = idx - t * stride;
                let mut best = [EMPTY, EMPTY];
                for s in t.saturating_sub(w)..=(t + w).min(side - 1) {
                    let shift = s.abs_diff(t) as u32;
                    for e in current[line_start + s * stride] {
                        if e.label != NONE {
                            offer(&mut best, Nearest { dist: e.dist.max(shift), ..e });
                        }
                    }
                }
                best
            })
            .collect();
        current = next;
    }
    current
}

/// Measured `(r, D)` pairs of a control function.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ControlSamples {
    pub samples: Vec<(f64, f64)>,
    /// `(A, B)` with `D ≤ A·r + B` on every sample.
    pub fitted: Option<(f64, f64)>,
}

impl ControlSamples {
    pub fn new(samples: Vec<(f64, f64)>) -> Self {
        Self { samples, fitted: None }
    }

    /// Runs [`fit_affine_control`] and records the affine majorant when one exists.
    pub fn fit(&mut self) -> Result<ControlFit> {
        let fit = fit_affine_control(&self.samples)?;
        self.fitted = match fit {
            ControlFit::Affine { slope, intercept } => Some((slope, intercept)),
            ControlFit::Superlinear { .. } => None,
        };
        Ok(fit)
    }

    /// CSV with columns `r,D`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "D"])?;
        for &(r, d) in &self.samples {
            w.write_record([r.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ControlFit {
    Affine { slope: f64, intercept: f64 },
    /// The second half of the samples outgrows the affine majorant of the first
    /// half by `excess`, relative to the largest sample.
    Superlinear { excess: f64 },
}

/// Relative growth beyond the first-half majorant that counts as superlinear.
pub const SUPERLINEAR_TOLERANCE: f64 = 0.05;

/// Affine majorant `A·r + B` supported by the upper convex hull of the samples.
///
/// The slope is that of the last hull edge (the trend at the largest scales) and
/// the intercept is the least nonnegative value majorizing every sample. Samples
/// are declared superlinear when those of the larger half of scales exceed the
/// majorant fitted on the smaller half by more than [`SUPERLINEAR_TOLERANCE`] of
/// the largest sample.
pub fn fit_affine_control(samples: &[(f64, f64)]) -> Result<ControlFit> {
    let mut pts: Vec<(f64, f64)> = samples.to_vec();
    if pts.iter().any(|&(r, d)| !r.is_finite() || !d.is_finite()) {
        return Err(Error::Domain("control samples must be finite".into()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pts.dedup_by(|a, b| a.0 == b.0);
    if pts.len() < 2 {
        return Err(Error::Domain("affine fitting needs at least two distinct scales".into()));
    }
    if pts.len() >= 4 {
        let half = pts.len() / 2;
        let (slope, intercept) = hull_majorant(&pts[..half]);
        let scale = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        let excess = pts[half..].iter().map(|&(r, d)| d - (slope * r + intercept)).fold(0.0, f64::max);
        if excess > SUPERLINEAR_TOLERANCE * scale + TOLERANCE {
            return Ok(ControlFit::Superlinear { excess: excess / scale.max(TOLERANCE) });
        }
    }
    let (slope, intercept) = hull_majorant(&pts);
    Ok(ControlFit::Affine { slope, intercept })
}

fn hull_majorant(pts: &[(f64, f64)]) -> (f64, f64) {
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let slope = match hull.len() {
        0 | 1 => 0.0,
        m => {
            let (a, b) = (hull[m - 2], hull[m - 1]);
            ((b.1 - a.1) / (b.0 - a.0)).max(0.0)
        }
    };
    let intercept = pts.iter().map(|&(r, d)| d - slope * r).fold(0.0, f64::max);
    (slope, intercept)
}

/// Largest measured cell diameter of `brick_cover(n, r)` on a box of the given
/// radius, for each scale. Fails if a cover does not verify.
pub fn brick_control_samples(n: usize, scales: &[i64], radius: i64) -> Result<ControlSamples> {
    let space = MetricSpace::lattice(n, radius)?;
    let mut samples = Vec::with_capacity(scales.len());
    for &r in scales {
        let cover = brick_cover(n, r)?;
        let report = verify_cover(&space, &cover, r as f64, cover.diameter_bound(), None)?;
        if !report.passed() {
            return Err(Error::Precondition(format!("brick cover (n={n}, r={r}) failed verification")));
        }
        samples.push((r as f64, report.max_diameter));
    }
    Ok(ControlSamples::new(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plfun::PiecewiseLinearFn;

    #[test]
    fn brick_cover_one_dimensional_cells() {
        let c = brick_cover(1, 5).unwrap();
        assert_eq!(c.period(), 20);
        assert_eq!(c.cell_of(&[13]), Some((1, vec![0])));
        assert_eq!(c.cell_of(&[0]), Some((0, vec![0])));
        assert_eq!(c.cell_of(&[9]), Some((0, vec![0])));
        assert_eq!(c.cell_of(&[10]), Some((1, vec![0])));
        assert_eq!(c.cell_of(&[20]), Some((0, vec![1])));
        assert_eq!(c.cell_of(&[-1]), Some((1, vec![-1])));
        assert_eq!(c.cell_of(&[1, 2]), None);
    }

    #[test]
    fn brick_cover_one_dimensional_verification() {
        let space = MetricSpace::lattice(1, 100).unwrap();
        let c = brick_cover(1, 5).unwrap();
        let report = verify_cover(&space, &c, 5.0, 20.0, Some(12.0)).unwrap();
        assert!(report.passed());
        assert_eq!(report.max_diameter, 9.0);
        assert_eq!(report.min_gap, Some(11.0));
        assert!(report
            .cells
            .iter()
            .filter(|cell| cell.points == 10)
            .all(|cell| cell.diameter == 9.0 && cell.min_same_color_gap.is_none_or(|g| g == 11.0)));

        let fail = verify_cover(&space, &c, 12.0, 20.0, None).unwrap();
        assert!(!fail.passed());
        let v = &fail.separation_violations[0];
        assert_eq!(v.distance, 11.0);
        assert_eq!(space.distance(&crate::Point::Lattice(v.a.clone()), &crate::Point::Lattice(v.b.clone())).unwrap(), 11.0);
    }

    #[test]
    fn brick_cover_two_dimensional_origin() {
        let c = brick_cover(2, 1).unwrap();
        assert_eq!(c.period(), 6);
        assert_eq!(c.cell_of(&[0, 0]), Some((0, vec![0, 0])));
        let space = MetricSpace::lattice(2, 30).unwrap();
        let report = verify_cover(&space, &c, 1.0, 6.0, None).unwrap();
        assert!(report.passed());
        assert_eq!(report.uncovered, 0);
        assert_eq!(report.cells.iter().map(|c| c.points).sum::<usize>(), 61 * 61);
    }

    #[test]
    fn diameter_bound_violation_is_reported() {
        let space = MetricSpace::lattice(2, 12).unwrap();
        let c = brick_cover(2, 2).unwrap();
        let report = verify_cover(&space, &c, 2.0, 3.0, None).unwrap();
        assert!(!report.passed());
        assert!(!report.diameter_violations.is_empty());
        assert!(report.separation_violations.is_empty());
    }

    struct HalfCover;
    impl ColoredCover for HalfCover {
        fn dim(&self) -> usize {
            1
        }
        fn colors(&self) -> usize {
            2
        }
        fn cell_of(&self, p: &[i64]) -> Option<(usize, CellId)> {
            (p[0] >= 0).then(|| (0, vec![p[0] / 3]))
        }
        fn diameter_bound(&self) -> f64 {
            2.0
        }
    }

    #[test]
    fn uncovered_points_are_reported() {
        let space = MetricSpace::lattice(1, 6).unwrap();
        let report = verify_cover(&space, &HalfCover, 1.0, 2.0, None).unwrap();
        assert_eq!(report.uncovered, 6);
        assert_eq!(report.uncovered_witnesses[0], vec![-6]);
        // adjacent cells of one color touch at distance 1, which is still 1-disjoint
        assert!(report.separation_violations.is_empty());
        let strict = verify_cover(&space, &HalfCover, 2.0, 2.0, None).unwrap();
        assert!(!strict.separation_violations.is_empty());
    }

    #[test]
    fn verify_cover_rejects_non_lattice() {
        let p = MetricSpace::sup_product(vec![MetricSpace::lattice(1, 3).unwrap()]).unwrap();
        assert!(verify_cover(&p, &brick_cover(1, 1).unwrap(), 1.0, 4.0, None).is_err());
        let l = MetricSpace::lattice(2, 3).unwrap();
        assert!(verify_cover(&l, &brick_cover(1, 1).unwrap(), 1.0, 4.0, None).is_err());
    }

    #[test]
    fn pushforward_through_concave_transform() {
        let c = PiecewiseLinearFn::new(vec![(0.0, 0.0), (1.0, 1.0), (3.0, 2.0), (7.0, 3.0), (15.0, 4.0)], 0.125)
            .unwrap();
        let base = MetricSpace::lattice(2, 20).unwrap();
        let moved = MetricSpace::transformed(base.clone(), c.clone());
        let cover = brick_cover(2, 1).unwrap();
        let plain = verify_cover(&base, &cover, 1.0, 6.0, Some(4.0)).unwrap();
        let pushed = verify_cover(&moved, &cover, c.value_at(1.0), c.value_at(6.0), Some(c.value_at(4.0))).unwrap();
        assert!(plain.passed() && pushed.passed());
        for (a, b) in plain.cells.iter().zip(&pushed.cells) {
            assert_eq!(a.cell_id, b.cell_id);
            assert!((c.value_at(a.diameter) - b.diameter).abs() < 1e-12);
            assert_eq!(a.min_same_color_gap.map(|g| c.value_at(g)), b.min_same_color_gap);
        }
    }

    #[test]
    fn fit_examples() {
        let samples: Vec<(f64, f64)> = (1..=8).map(|r| (r as f64, 6.0 * r as f64)).collect();
        assert_eq!(fit_affine_control(&samples).unwrap(), ControlFit::Affine { slope: 6.0, intercept: 0.0 });

        let square: Vec<(f64, f64)> = (1..=20).map(|r| (r as f64, (r * r) as f64)).collect();
        assert!(matches!(fit_affine_control(&square).unwrap(), ControlFit::Superlinear { .. }));

        assert!(fit_affine_control(&[(1.0, 2.0)]).is_err());
        assert!(fit_affine_control(&[(1.0, 2.0), (1.0, 3.0)]).is_err());
    }

    #[test]
    fn fit_tolerates_rounding_wiggle() {
        let samples: Vec<(f64, f64)> = (1..=20).map(|r| (r as f64, (2.5 * r as f64).floor())).collect();
        let ControlFit::Affine { slope, intercept } = fit_affine_control(&samples).unwrap() else {
            panic!("floor(2.5 r) is affine up to rounding");
        };
        assert!((slope - 2.5).abs() < 0.6);
        for &(r, d) in &samples {
            assert!(d <= slope * r + intercept + 1e-12);
        }
    }

    #[test]
    fn measured_brick_controls() {
        let mut s = brick_control_samples(2, &[1, 2, 3, 4], 40).unwrap();
        assert_eq!(s.samples, vec![(1.0, 3.0), (2.0, 7.0), (3.0, 11.0), (4.0, 15.0)]);
        assert_eq!(s.fit().unwrap(), ControlFit::Affine { slope: 4.0, intercept: 0.0 });
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "r,D\n1,3\n2,7\n3,11\n4,15\n");
    }
}
