//! First passage percolation on the square lattice.
//!
//! The crate computes exact passage times and geodesics under reproducible
//! random edge weights and estimates the statistics that describe passage
//! time fluctuations: the fluctuation scale, transverse increments, geodesic
//! wandering, long-range correlations and conditional variance
//! decompositions, plus the log-log fits that turn them into scaling
//! exponents.
//!
//! Module map:
//!
//! - [`weights`]: counter-based i.i.d. edge weights.
//! - [`geometry`]: lattice points, direction frames, segments.
//! - [`engine`]: Dijkstra kernels, wet regions, hitting times, wandering.
//! - [`estimators`]: Monte Carlo estimators over replicate fields.
//! - [`fit`]: power-law fits and scale tables.
//! - [`harness`]: experiment configs, deterministic parallel runs, outputs.
//! - [`formats`]: parsers and writers for every file the harness produces.

pub mod engine;
pub mod estimators;
pub mod fit;
pub mod formats;
pub mod geometry;
pub mod harness;
pub mod stats;
pub mod weights;

pub use engine::{passage_time, EngineError, GeodesicResult, Window, WindowPolicy};
pub use estimators::{Lab, ReplicatePlan, SampleSummary};
pub use geometry::{DirectionFrame, LatticePoint, RealPoint};
pub use weights::{EdgeId, EdgeWeightField, WeightDistribution};
