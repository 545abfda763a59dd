//! Density-based topology optimization of structures loaded by their own weight.
//!
//! The design is carried through three coupled fields: the optimizer acts on the
//! design field `x`, a linear-hat density filter produces `x_tilde`, and a smooth
//! Heaviside projection yields the physical field `x_bar` that drives both the
//! modified-SIMP stiffness and a Heaviside-shaped mass density. Compliance under
//! gravity (plus an optional fixed external load) is minimized by the Method of
//! Moving Asymptotes subject to a volume bound and a minimum-mass constraint.

// NaN must fail the validity checks, hence negated comparisons; dense kernels index by position.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fem;
pub mod field_chain;
pub mod material;
pub mod mesh;
pub mod mma;
pub mod optimizer;
pub mod problems;
pub mod sensitivity;
pub mod sparse;

pub use error::{Error, Result};
pub use field_chain::{Continuation, FieldChain, FilterOperator};
pub use material::{HeavisideStep, MassDensityModel, SimpModel};
pub use mesh::{BoundarySpec, BoxRegion, Mesh, NodeSelector, ResolvedBoundary};
pub use mma::{Mma, MmaSettings};
pub use optimizer::{GradientCheck, IterationRecord, Materials, Optimizer, OptimizerConfig, RunHistory, RunOutcome};
pub use problems::{BuiltProblem, LoadRule, ProblemSpec, Reduction};
