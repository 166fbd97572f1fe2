//! driftlab: a numerical laboratory for the Dirichlet problem
//! `-div(grad u + A grad u) = f` with rough skew-symmetric drift `A`.
//!
//! The crate builds approximation solutions by drift truncation, measures
//! the energy defect and the skew bilinear form `[u,v] = int A grad u . grad v`
//! that govern uniqueness, constructs skew potentials `A` with `div A = a`
//! from solenoidal fields, reproduces the explicit nonuniqueness example on
//! the unit ball (Zhikov) with `[u,u] = -1`, implements Lipschitz
//! truncation, and classifies drifts against the function-space uniqueness
//! criteria (exp-summability / BMO growth, L^n, Morrey, grand Lebesgue).
//!
//! Start with the runnable examples (`cargo run --release --example ...`)
//! or the `driftlab` binary, which exposes the same experiments behind
//! config files.

pub mod cli;
pub mod error;
pub mod field;
pub mod io;
pub mod mesh;
pub mod norms;
pub mod potentials;
pub mod quad;
pub mod solver;
pub mod sparse;
pub mod truncation;
pub mod zhikov;

pub use error::{Error, Result};
pub use field::{Functional, Layout, ScalarField, SkewField, VectorField};
pub use mesh::{Domain, DomainKind, Mesh};

/// Version string embedded in every JSON report.
pub const REPORT_SCHEMA_VERSION: &str = "driftlab-report/1";
