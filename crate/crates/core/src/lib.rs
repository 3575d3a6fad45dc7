//! Disturbance-rejection analysis for multi-inverter AC networks.
//!
//! The crate turns a network description into a grounded susceptance
//! Laplacian, builds linearized dq-frame admittance models for grid-following
//! (GFL) and grid-forming (GFM) inverters, and sweeps the largest singular
//! value of the closed-loop sensitivity function to obtain the sensitivity
//! peak `kappa_p`. It also checks the eigenvalue inequalities that explain why
//! mixing GFL and GFM inverters lowers the peak.
//!
//! Module map:
//!
//! * [`netgraph`] parses networks and Kron-reduces them to a [`GroundedLaplacian`].
//! * [`gridstrength`] does the symmetric eigen-analysis, Schur complements and lemma checks.
//! * [`inverters`] builds the admittance state-space models and the network factor `F(s)`.
//! * [`sensitivity`] assembles open loops, sweeps `sigma_max(S)` and runs the decoupling checks.
//! * [`casecli`] drives the three-inverter case study and writes CSV/JSON/Markdown reports.

pub mod casecli;
pub mod error;
pub mod gridstrength;
pub mod inverters;
pub mod netgraph;
pub mod sensitivity;

pub use error::{Error, Result};
pub use netgraph::{GroundedLaplacian, NetworkSpec};
