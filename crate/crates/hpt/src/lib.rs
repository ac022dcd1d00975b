//! Hybrid periodic train timetabling.
//!
//! Given a periodic timetable, a rolling-stock fleet and time-dependent
//! passenger demand, this crate jointly decides timetable adjustments,
//! extra-train insertion, rolling-stock balance and passenger routing so
//! that total passenger travel cost is minimized. The solution engine is
//! a Benders decomposition whose subproblem (capacitated passenger
//! routing) is solved by column generation over a time-space network.
//!
//! Module map:
//! - [`instance`]: problem data model, validation, JSON schema, generators
//! - [`tsnet`]: time-space network, train/extra/passenger subnetworks,
//!   incompatible (headway) arc sets
//! - [`preprocess`]: network reductions and inventory variable bounding
//! - [`solver`]: LP/MIP backend abstraction (in-process HiGHS by default)
//! - [`model`]: arc-path master model and the monolithic arc-based model
//! - [`pricing`]: resource-constrained shortest paths and column generation
//! - [`benders`]: the decomposition driver with strengthened optimality cuts
//! - [`psr`]: the passenger-subset-routing variant and post-optimization
//! - [`validate`]: solver-independent feasibility checking of solutions
//! - [`report`]: solve reports, cost breakdowns and iteration traces

pub mod benders;
pub mod instance;
pub mod model;
pub mod preprocess;
pub mod pricing;
pub mod psr;
pub mod report;
pub mod solver;
pub mod tsnet;
pub mod validate;

/// All times are integer minutes on a regular grid (multiples of the
/// instance step). Durations and timestamps share this type.
pub type Minute = i64;
