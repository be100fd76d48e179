//! Iterated integrals of differential forms over paths and membranes.
//!
//! Forms have symbolic coefficients ([`expr`], [`forms`]). Paths and
//! membranes ([`geometry`]) are integrated with deterministic nested
//! quadrature ([`quadrature`]). Path integrals and transport series live
//! in [`chen`]; membrane integrals in [`membranes`]. Identity checks emit
//! [`report::Check`] records, and [`scene`] documents drive the [`cli`].

pub mod error;
pub mod expr;
pub mod forms;
pub mod geometry;
pub mod quadrature;
pub mod report;
pub mod shuffles;
pub mod chen;
pub mod membranes;
pub mod scene;
pub mod cli;

pub use error::{Error, Result};
pub use expr::{parse, Expr, ExprError};
pub use forms::DifferentialForm;
pub use quadrature::{Estimate, QuadratureConfig, Rule};
