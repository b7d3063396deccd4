//! Benchmarking kit for the Chord algorithm on bi-objective convex Pareto
//! curves: exact and approximate Comb oracles, the recursion with tracing,
//! optimal ε-convex-Pareto-set solvers, instance families and sweeps.

pub mod bench;
pub mod chord;
pub mod generate;
pub mod geometry;
pub mod instance;
pub mod optimum;
pub mod oracle;
pub mod scalar;

pub use chord::{run_chord, verify_eps_cp, ChordParams, ChordResult};
pub use geometry::{Chain, Metric, Point, Slope};
pub use instance::{AnyInstance, Instance};
pub use scalar::{Rational, Scalar};
