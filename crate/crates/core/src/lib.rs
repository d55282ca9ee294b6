//! Numerical toolkit for single-point blow-up of the semilinear heat
//! equation with a nonlocal gradient source,
//!
//! `u_t = Δu + |u|^{p-1} u + μ |∇u| ∫_{B(0,|x|)} |u|^{q-1}`,
//!
//! in one space dimension. The similarity-variable solver, shrinking-set
//! tracker and shooting search construct solutions that blow up with the
//! flat profile; kernel and Duhamel diagnostics check the linear estimates
//! those constructions rely on.

pub mod duhamel;
pub mod grid;
pub mod io;
pub mod kernel_lab;
pub mod params;
pub mod profiles;
pub mod shooting;
pub mod shrinking_set;
pub mod similarity;
pub mod spectral;
pub mod verify;

pub use grid::{Field, Grid1D};
pub use params::{ModelParams, RawParams};
