//! Finite metric spaces and empirical checks of the metric axioms.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::plfun::{PiecewiseLinearFn, TOLERANCE};

/// Default seed for every sampled verification plan.
pub const DEFAULT_SEED: u64 = 0xC0A45E;

/// Number of witnesses kept in verification reports.
pub const WITNESS_CAP: usize = 64;

/// A point of a [`MetricSpace`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Point {
    Lattice(Vec<i64>),
    Index(usize),
    Product(Vec<Point>),
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fn join<T: std::fmt::Display>(f: &mut std::fmt::Formatter<'_>, items: &[T]) -> std::fmt::Result {
            write!(f, "(")?;
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{item}")?;
            }
            write!(f, ")")
        }
        match self {
            Point::Lattice(c) => join(f, c),
            Point::Index(i) => write!(f, "{i}"),
            Point::Product(ps) => join(f, ps),
        }
    }
}

/// The box `{−radius, …, radius}^dim` of `ℤ^dim` with the sup metric.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    dim: usize,
    radius: i64,
}

impl Lattice {
    pub fn new(dim: usize, radius: i64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpace("lattice dimension must be at least 1".into()));
        }
        if radius < 0 {
            return Err(Error::InvalidSpace(format!("negative box radius {radius}")));
        }
        let side = (2 * radius + 1) as u128;
        if side.checked_pow(dim as u32).is_none_or(|n| n > u32::MAX as u128) {
            return Err(Error::InvalidSpace(format!("lattice box {radius}^{dim} is too large")));
        }
        Ok(Self { dim, radius })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn side(&self) -> usize {
        (2 * self.radius + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinates of the point with the given index; the first coordinate is most significant.
    pub fn coords(&self, mut index: usize) -> Vec<i64> {
        let side = self.side();
        let mut out = vec![0; self.dim];
        for slot in out.iter_mut().rev() {
            *slot = (index % side) as i64 - self.radius;
            index /= side;
        }
        out
    }

    pub fn index(&self, coords: &[i64]) -> Option<usize> {
        if coords.len() != self.dim {
            return None;
        }
        let side = self.side();
        coords.iter().try_fold(0usize, |acc, &c| {
            (c.abs() <= self.radius).then(|| acc * side + (c + self.radius) as usize)
        })
    }

    #[inline]
    fn dist(&self, mut i: usize, mut j: usize) -> f64 {
        let side = self.side();
        let mut best = 0usize;
        for _ in 0..self.dim {
            best = best.max((i % side).abs_diff(j % side));
            i /= side;
            j /= side;
        }
        best as f64
    }
}

/// A finite metric given by a validated distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitSpace {
    labels: Vec<String>,
    matrix: Vec<f64>,
}

impl ExplicitSpace {
    /// Builds the space, rejecting any matrix that is not a metric.
    pub fn new(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidSpace("empty distance matrix".into()));
        }
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidSpace(format!("distance matrix must be {n}×{n}")));
        }
        let matrix: Vec<f64> = rows.into_iter().flatten().collect();
        let d = |i: usize, j: usize| matrix[i * n + j];
        for i in 0..n {
            if d(i, i).abs() > TOLERANCE {
                return Err(Error::InvalidSpace(format!("nonzero diagonal at {}", labels[i])));
            }
            for j in 0..n {
                let v = d(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidSpace(format!("invalid distance {v} at ({i}, {j})")));
                }
                if i != j && v <= TOLERANCE {
                    return Err(Error::InvalidSpace(format!(
                        "distinct points {} and {} at distance zero",
                        labels[i], labels[j]
                    )));
                }
                if (v - d(j, i)).abs() > TOLERANCE {
                    return Err(Error::InvalidSpace(format!("asymmetric distances at ({i}, {j})")));
                }
            }
        }
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let defect = d(x, z) - d(x, y) - d(y, z);
                    if defect > TOLERANCE {
                        return Err(Error::InvalidSpace(format!(
                            "triangle inequality fails for ({}, {}, {}) by {defect}",
                            labels[x], labels[y], labels[z]
                        )));
                    }
                }
            }
        }
        Ok(Self { labels, matrix })
    }

    /// Reads a CSV matrix: a header row of point labels followed by one row of distances per point.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let labels: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|field| {
                    field
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidSpace(format!("bad distance {field:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(labels, rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Function applied to the distances of a base space.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricTransform {
    Piecewise(PiecewiseLinearFn),
    /// Exact `r ↦ ln(r + 1)`.
    Log1p,
}

impl MetricTransform {
    #[inline]
    pub fn apply(&self, r: f64) -> f64 {
        match self {
            MetricTransform::Piecewise(c) => c.value_at(r),
            MetricTransform::Log1p => r.ln_1p(),
        }
    }

    /// Least `r` with `apply(r) ≥ y`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        match self {
            MetricTransform::Piecewise(c) => c.inverse_or_zero(y),
            MetricTransform::Log1p => Ok(y.max(0.0).exp_m1()),
        }
    }
}

/// A distance oracle over a finite indexed point set.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricSpace {
    Lattice(Lattice),
    Explicit(ExplicitSpace),
    /// Sup (ℓ∞) product of the factors.
    SupProduct(Vec<MetricSpace>),
    Transformed { base: Box<MetricSpace>, transform: MetricTransform },
}

impl MetricSpace {
    pub fn lattice(dim: usize, radius: i64) -> Result<Self> {
        Lattice::new(dim, radius).map(MetricSpace::Lattice)
    }

    pub fn sup_product(factors: Vec<MetricSpace>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidSpace("product needs at least one factor".into()));
        }
        let total = factors.iter().try_fold(1usize, |acc, f| acc.checked_mul(f.len()));
        if total.is_none_or(|n| n > u32::MAX as usize) {
            return Err(Error::InvalidSpace("product space is too large".into()));
        }
        Ok(MetricSpace::SupProduct(factors))
    }

    /// `c ∘ d` for the given base metric `d`.
    pub fn transformed(base: MetricSpace, c: PiecewiseLinearFn) -> Self {
        MetricSpace::Transformed { base: Box::new(base), transform: MetricTransform::Piecewise(c) }
    }

    /// `ln(d + 1)` for the given base metric `d`.
    pub fn log_transformed(base: MetricSpace) -> Self {
        MetricSpace::Transformed { base: Box::new(base), transform: MetricTransform::Log1p }
    }

    pub fn len(&self) -> usize {
        match self {
            MetricSpace::Lattice(l) => l.len(),
            MetricSpace::Explicit(e) => e.len(),
            MetricSpace::SupProduct(fs) => fs.iter().map(MetricSpace::len).product(),
            MetricSpace::Transformed { base, .. } => base.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, index: usize) -> Result<Point> {
        if index >= self.len() {
            return Err(Error::InvalidSpace(format!("point index {index} out of range")));
        }
        Ok(self.point_unchecked(index))
    }

    fn point_unchecked(&self, mut index: usize) -> Point {
        match self {
            MetricSpace::Lattice(l) => Point::Lattice(l.coords(index)),
            MetricSpace::Explicit(_) => Point::Index(index),
            MetricSpace::SupProduct(fs) => {
                let mut parts = Vec::with_capacity(fs.len());
                for f in fs.iter().rev() {
                    parts.push(f.point_unchecked(index % f.len()));
                    index /= f.len();
                }
                parts.reverse();
                Point::Product(parts)
            }
            MetricSpace::Transformed { base, .. } => base.point_unchecked(index),
        }
    }

    pub fn index_of(&self, p: &Point) -> Result<usize> {
        let outside = || Error::InvalidSpace(format!("point {p} lies outside the space"));
        match (self, p) {
            (MetricSpace::Lattice(l), Point::Lattice(c)) => l.index(c).ok_or_else(outside),
            (MetricSpace::Explicit(e), Point::Index(i)) if *i < e.len() => Ok(*i),
            (MetricSpace::SupProduct(fs), Point::Product(ps)) if fs.len() == ps.len() => {
                fs.iter().zip(ps).try_fold(0usize, |acc, (f, q)| Ok(acc * f.len() + f.index_of(q)?))
            }
            (MetricSpace::Transformed { base, .. }, _) => base.index_of(p),
            _ => Err(outside()),
        }
    }

    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        Ok(self.dist(self.index_of(x)?, self.index_of(y)?))
    }

    /// Distance between points given by index. Both indices must be below [`len`](Self::len).
    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match self {
            MetricSpace::Lattice(l) => l.dist(i, j),
            MetricSpace::Explicit(e) => e.matrix[i * e.len() + j],
            MetricSpace::SupProduct(fs) => {
                let (mut i, mut j) = (i, j);
                let mut best = 0.0f64;
                for f in fs.iter().rev() {
                    let n = f.len();
                    best = best.max(f.dist(i % n, j % n));
                    i /= n;
                    j /= n;
                }
                best
            }
            MetricSpace::Transformed { base, transform } => transform.apply(base.dist(i, j)),
        }
    }

    /// The underlying lattice together with the transforms applied on top of
    /// it, innermost first. `None` unless the space is a (transformed) lattice.
    pub fn lattice_view(&self) -> Option<(&Lattice, Vec<&MetricTransform>)> {
        match self {
            MetricSpace::Lattice(l) => Some((l, Vec::new())),
            MetricSpace::Transformed { base, transform } => {
                let (l, mut chain) = base.lattice_view()?;
                chain.push(transform);
                Some((l, chain))
            }
            _ => None,
        }
    }
}

/// How tuples of points are enumerated by the verifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplePlan {
    Exhaustive,
    Sampled { count: u64, seed: u64 },
}

impl SamplePlan {
    /// Exhaustive when the space has at most `exhaustive_limit` points, sampled otherwise.
    pub fn auto(points: usize, exhaustive_limit: usize, count: u64, seed: u64) -> Self {
        if points <= exhaustive_limit {
            SamplePlan::Exhaustive
        } else {
            SamplePlan::Sampled { count, seed }
        }
    }
}

/// Runs `f` on `count` random index tuples, in parallel but deterministically:
/// chunk `k` draws from stream `k` of a ChaCha generator seeded with `seed`.
pub(crate) fn sampled_chunks<T, F>(count: u64, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
{
    const CHUNK: u64 = 1 << 15;
    let chunks = count.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let n = CHUNK.min(count - k * CHUNK);
            f(&mut rng, n)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TriangleViolation {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    /// `d(x, z) − d(x, y) − d(y, z)`.
    pub defect: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AxiomReport {
    pub points: usize,
    pub triples_checked: u64,
    pub violation_count: u64,
    pub max_defect: f64,
    /// First violations in lexicographic `(x, y, z)` order, at most [`WITNESS_CAP`].
    pub violations: Vec<TriangleViolation>,
    pub symmetry_violations: Vec<(usize, usize)>,
    pub identity_violations: Vec<(usize, usize)>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.symmetry_violations.is_empty() && self.identity_violations.is_empty()
    }
}

#[derive(Default)]
struct TripleScan {
    checked: u64,
    count: u64,
    max_defect: f64,
    witnesses: Vec<TriangleViolation>,
}

impl TripleScan {
    fn record(&mut self, x: usize, y: usize, z: usize, defect: f64) {
        self.checked += 1;
        if defect > TOLERANCE {
            self.count += 1;
            self.max_defect = self.max_defect.max(defect);
            if self.witnesses.len() < WITNESS_CAP {
                self.witnesses.push(TriangleViolation { x, y, z, defect });
            }
        }
    }

    fn merge(mut self, other: TripleScan) -> TripleScan {
        self.checked += other.checked;
        self.count += other.count;
        self.max_defect = self.max_defect.max(other.max_defect);
        self.witnesses.extend(other.witnesses);
        self
    }
}

/// Checks symmetry, identity of indiscernibles and the triangle inequality.
///
/// Symmetry and identity are checked on all pairs when the plan is exhaustive
/// and on the sampled triples' pairs otherwise.
pub fn verify_metric_axioms(space: &MetricSpace, plan: SamplePlan) -> AxiomReport {
    let n = space.len();
    let mut report = AxiomReport { points: n, ..Default::default() };
    let scan = match plan {
        SamplePlan::Exhaustive => {
            let matrix: Vec<f64> =
                (0..n * n).into_par_iter().map(|k| space.dist(k / n, k % n)).collect();
            let d = |i: usize, j: usize| matrix[i * n + j];
            for i in 0..n {
                for j in 0..n {
                    check_pair(&mut report, i, j, d(i, j), d(j, i));
                }
            }
            (0..n)
                .into_par_iter()
                .map(|x| {
                    let mut scan = TripleScan::default();
                    for y in 0..n {
                        let dxy = d(x, y);
                        for z in 0..n {
                            scan.record(x, y, z, d(x, z) - dxy - d(y, z));
                        }
                    }
                    scan
                })
                .reduce(TripleScan::default, TripleScan::merge)
        }
        SamplePlan::Sampled { count, seed } => {
            let chunks = sampled_chunks(count, seed, |rng, m| {
                let mut scan = TripleScan::default();
                let mut pairs = Vec::new();
                for _ in 0..m {
                    let (x, y, z) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
                    scan.record(x, y, z, space.dist(x, z) - space.dist(x, y) - space.dist(y, z));
                    pairs.push((x, y));
                }
                (scan, pairs)
            });
            let mut total = TripleScan::default();
            for (scan, pairs) in chunks {
                for (i, j) in pairs {
                    check_pair(&mut report, i, j, space.dist(i, j), space.dist(j, i));
                }
                total = total.merge(scan);
            }
            total
        }
    };
    let mut witnesses = scan.witnesses;
    witnesses.sort_by_key(|v| (v.x, v.y, v.z));
    witnesses.dedup_by_key(|v| (v.x, v.y, v.z));
    witnesses.truncate(WITNESS_CAP);
    report.symmetry_violations.sort_unstable();
    report.symmetry_violations.dedup();
    report.identity_violations.sort_unstable();
    report.identity_violations.dedup();
    report.triples_checked = scan.checked;
    report.violation_count = scan.count;
    report.max_defect = scan.max_defect;
    report.violations = witnesses;
    report
}

fn check_pair(report: &mut AxiomReport, i: usize, j: usize, dij: f64, dji: f64) {
    if (dij - dji).abs() > TOLERANCE && report.symmetry_violations.len() < WITNESS_CAP {
        report.symmetry_violations.push((i.min(j), i.max(j)));
    }
    let zero = dij.abs() <= TOLERANCE;
    if (i == j) != zero && report.identity_violations.len() < WITNESS_CAP {
        report.identity_violations.push((i, j));
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoarseIdentityReport {
    pub pairs_checked: u64,
    /// Largest `|c⁻¹(c(d)) − d| / max(1, d)` over the checked pairs.
    pub max_defect: f64,
    pub worst_pair: Option<(usize, usize)>,
    pub continuous_at_zero: bool,
}

impl CoarseIdentityReport {
    pub fn passed(&self) -> bool {
        self.max_defect <= TOLERANCE && self.continuous_at_zero
    }
}

/// Checks that the identity `(X, d) → (X, c ∘ d)` is a coarse equivalence whose
/// control functions are `c` and its inverse: `c⁻¹(c(d(x, y))) = d(x, y)`.
pub fn verify_coarse_identity(
    base: &MetricSpace,
    c: &PiecewiseLinearFn,
    plan: SamplePlan,
) -> Result<CoarseIdentityReport> {
    if !c.is_unbounded() {
        return Err(Error::Precondition("coarse equivalence needs an unbounded c".into()));
    }
    let c0 = c.value_at(0.0);
    if c0.abs() > TOLERANCE {
        return Err(Error::Precondition(format!("c(0) = {c0}, expected 0")));
    }
    let defect = |i: usize, j: usize| {
        let d = base.dist(i, j);
        let back = c.inverse_or_zero(c.value_at(d)).unwrap_or(f64::INFINITY);
        (back - d).abs() / d.max(1.0)
    };
    let n = base.len();
    let pick = |a: (u64, f64, Option<(usize, usize)>), b: (u64, f64, Option<(usize, usize)>)| {
        // Ties keep the earlier pair; rayon's reduce preserves order.
        let worst = if b.1 > a.1 { b.2 } else { a.2.or(b.2) };
        (a.0 + b.0, a.1.max(b.1), worst)
    };
    let (pairs_checked, max_defect, worst_pair) = match plan {
        SamplePlan::Exhaustive => (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n).fold((0u64, 0.0f64, None), |acc, j| pick(acc, (1, defect(i, j), Some((i, j)))))
            })
            .reduce(|| (0, 0.0, None), pick),
        SamplePlan::Sampled { count, seed } => sampled_chunks(count, seed, |rng, m| {
            (0..m).fold((0u64, 0.0f64, None), |acc, _| {
                let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
                pick(acc, (1, defect(i, j), Some((i.min(j), i.max(j)))))
            })
        })
        .into_iter()
        .fold((0, 0.0, None), pick),
    };
    // A continuous c with c(0) = 0 is continuous at 0; its inverse is continuous
    // at 0 when c increases near 0.
    let continuous_at_zero = c.slopes()[0] > 0.0;
    Ok(CoarseIdentityReport { pairs_checked, max_defect, worst_pair, continuous_at_zero })
}
