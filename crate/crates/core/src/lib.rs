//! Edge-element finite-element engine for layered on-chip structures with a
//! fast DC-mode extraction path.
//!
//! The frequency-domain system `(S + jωR − ω²T) x = b` is assembled on a
//! structured brick mesh. The curl-free (DC) part of the field is recovered
//! from per-layer stiffness nullspaces computed on standalone layers, then
//! solved either as one projected system or by a layer-by-layer block sweep.

pub mod assembly;
pub mod constants;
pub mod dc_solver;
pub mod element;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod postprocess;
pub mod report;
pub mod scenario;
pub mod spectral;

pub use error::{Error, Result};
