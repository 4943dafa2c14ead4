//! Quasi-invariant measures on the projective limit of a subshift of finite
//! type.
//!
//! The crate works with exact finite cylinder linear algebra:
//!
//! - [`shift`]: the subshift `X(A)`, admissible words and cylinder functions;
//! - [`reference`]: the strongly invariant reference measure `ρ_A`;
//! - [`transfer`]: the Ruelle operator `R_V`, its matrix, `h_V` and `ν_V`;
//! - [`measure`]: measures, the transformer `T_V` and fixed-point solvers;
//! - [`path`]: path-space measures through their marginals, exact sampling
//!   and martingale coordinates;
//! - [`extremality`]: conditional expectations and relative ergodicity;
//! - [`config`] and [`io`]: JSON ingestion and CSV/JSON output.

pub mod config;
pub mod error;
pub mod extremality;
pub mod io;
mod linalg;
pub mod measure;
pub mod path;
pub mod reference;
pub mod shift;
pub mod transfer;

pub use error::{Error, Result};
pub use measure::{DensityMeasure, Measure, RawMeasure};
pub use path::PathMeasure;
pub use reference::MarkovMeasure;
pub use shift::{CylinderFunction, Subshift, Word};
