//! Proximal quasi-Newton methods for composite multiobjective optimization
//! with piecewise-affine nonsmooth terms, including robust counterparts
//! built from polytopic uncertainty sets.

pub mod error;
pub mod experiment;
pub mod metric;
pub mod oracles;
pub mod problem;
pub mod solver;
pub mod subproblem;
pub mod uncertainty;

pub use error::{Error, Result};
pub use metric::{MetricSet, UpdateKind};
pub use problem::{AffinePiece, PiecewiseAffine, ProblemInstance, QuadraticObjective};
pub use solver::{run, RunResult, SolverConfig, Status};
pub use subproblem::{solve_direction, SolveOptions, SubproblemSolution};
pub use uncertainty::UncertaintySet;
