//! Component-based acausal modeling kernel.
//!
//! Systems are assembled from components that carry their own governing
//! equations ("internal processes") and typed connectors; connecting ports
//! generates equality equations for across variables and zero-sum equations
//! for through variables ("external connections"). The flattened global
//! system is reduced by alias elimination and solved with a damped
//! Newton-Raphson iteration.
//!
//! Crate layout:
//!
//! - [`expr`] — symbolic scalar expressions (evaluate / differentiate /
//!   substitute / simplify)
//! - [`model`] — connectors, components, connection semantics, flattening,
//!   alias elimination, structural checks
//! - [`solve`] — dense Newton solver with line search and continuation sweeps
//! - [`hydraulics`] — incompressible pipe-flow components (pipe, centrifugal
//!   pump, pressure sink)
//! - [`thermo`] — thermodynamic process components over pluggable fluid
//!   property backends
//! - [`circuit`] — minimal resistive electrical components

pub mod circuit;
pub mod expr;
pub mod hydraulics;
pub mod model;
pub mod solve;
pub mod thermo;

pub use expr::{Binding, Expr, ExprError};
pub use model::{
    ComponentInstance, ConnectSet, ConnectorType, FlatSystem, ModelError, NodeInstance,
    StructuralReport, VariableRole,
};
pub use solve::{RampSchedule, Solution, SolveError, SolveOptions};
