//! Gromov's four-point hyperbolicity constant of finite metric spaces.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spaces::{sampled_chunks, MetricSpace, SamplePlan};

/// Exhaustive enumeration is refused above this many points.
pub const EXHAUSTIVE_LIMIT: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaReport {
    pub points: usize,
    pub quadruples_checked: u64,
    pub delta: f64,
    /// Lexicographically least quadruple attaining `delta` among those checked.
    pub witness: Option<[usize; 4]>,
    pub exhaustive: bool,
}

/// Half the gap between the two largest of the three pair sums
/// `d(x,y) + d(z,w)`, `d(x,z) + d(y,w)`, `d(x,w) + d(y,z)`.
pub fn quadruple_delta(dxy: f64, dzw: f64, dxz: f64, dyw: f64, dxw: f64, dyz: f64) -> f64 {
    let mut s = [dxy + dzw, dxz + dyw, dxw + dyz];
    s.sort_by(|a, b| b.total_cmp(a));
    (s[0] - s[1]) / 2.0
}

fn delta_at(space: &MetricSpace, q: [usize; 4]) -> f64 {
    let [x, y, z, w] = q;
    let d = |i, j| space.dist(i, j);
    quadruple_delta(d(x, y), d(z, w), d(x, z), d(y, w), d(x, w), d(y, z))
}

fn better(a: (f64, Option<[usize; 4]>), b: (f64, Option<[usize; 4]>)) -> (f64, Option<[usize; 4]>) {
    match (a.1, b.1) {
        (None, _) => b,
        (_, None) => a,
        (Some(qa), Some(qb)) => {
            if b.0 > a.0 || (b.0 == a.0 && qb < qa) {
                b
            } else {
                a
            }
        }
    }
}

/// Sup of the four-point quantity over all (or sampled) quadruples.
///
/// The quantity is symmetric under permutations, so exhaustive mode visits
/// increasing quadruples only. Sampled quadruples are sorted before use.
pub fn four_point_delta(space: &MetricSpace, plan: SamplePlan) -> Result<DeltaReport> {
    let n = space.len();
    match plan {
        SamplePlan::Exhaustive => {
            if n > EXHAUSTIVE_LIMIT {
                return Err(Error::Precondition(format!(
                    "exhaustive four-point enumeration needs at most {EXHAUSTIVE_LIMIT} points, got {n}"
                )));
            }
            let (delta, witness, checked) = (0..n)
                .into_par_iter()
                .map(|x| {
                    let mut best = (0.0, None);
                    let mut checked = 0u64;
                    for y in x + 1..n {
                        for z in y + 1..n {
                            for w in z + 1..n {
                                checked += 1;
                                let q = [x, y, z, w];
                                best = better(best, (delta_at(space, q), Some(q)));
                            }
                        }
                    }
                    (best.0, best.1, checked)
                })
                .reduce(|| (0.0, None, 0), |a, b| {
                    let (d, w) = better((a.0, a.1), (b.0, b.1));
                    (d, w, a.2 + b.2)
                });
            Ok(DeltaReport { points: n, quadruples_checked: checked, delta, witness, exhaustive: true })
        }
        SamplePlan::Sampled { count, seed } => {
            if n == 0 {
                return Err(Error::InvalidSpace("space has no points".into()));
            }
            let best = sampled_chunks(count, seed, |rng, m| {
                let mut best = (0.0, None);
                for _ in 0..m {
                    let mut q = [0usize; 4];
                    for slot in &mut q {
                        *slot = rng.gen_range(0..n);
                    }
                    q.sort_unstable();
                    best = better(best, (delta_at(space, q), Some(q)));
                }
                best
            })
            .into_iter()
            .fold((0.0, None), better);
            Ok(DeltaReport { points: n, quadruples_checked: count, delta: best.0, witness: best.1, exhaustive: false })
        }
    }
}

/// δ of the subspace on the given point indices, exhaustively.
pub fn delta_of_points(space: &MetricSpace, indices: &[usize]) -> f64 {
    let k = indices.len();
    let mut delta: f64 = 0.0;
    for a in 0..k {
        for b in a + 1..k {
            for c in b + 1..k {
                for d in c + 1..k {
                    delta = delta.max(delta_at(space, [indices[a], indices[b], indices[c], indices[d]]));
                }
            }
        }
    }
    delta
}
