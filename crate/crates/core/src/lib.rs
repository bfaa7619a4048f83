//! Coarse geometry on finite samples: concave flattening of metrics, colored
//! covers of lattices, repair of coarse equivalences into quasi-isometries,
//! and four-point hyperbolicity.

// Negated comparisons below are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covers;
pub mod error;
pub mod flatten;
pub mod hyperbolicity;
pub mod plfun;
pub mod qirepair;
pub mod spaces;

pub use covers::{brick_cover, fit_affine_control, verify_cover, BrickCover, ColoredCover, ControlFit, CoverReport};
pub use error::{Error, Result};
pub use flatten::{build_schedule, build_schedule_multi, verify_flattening, AffineBound, FlatteningSchedule};
pub use hyperbolicity::{four_point_delta, DeltaReport};
pub use plfun::{FnAnalysis, PiecewiseLinearFn};
pub use qirepair::{build_lsl_schedule, build_qi_schedules, CoarseProfile, QISchedulePair, SampledMap};
pub use spaces::{verify_metric_axioms, ExplicitSpace, Lattice, MetricSpace, Point, SamplePlan, DEFAULT_SEED};
