//! Variational ground states of lattice models built from weighted graph
//! states: superpositions of deformed product states, entangled by two-site
//! phase gates and rotated by local unitaries.
//!
//! All numerical kernels are generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the double-precision instantiation used by
//! the command-line driver.

pub mod error;
pub mod geometry;
pub mod gradients;
pub mod linalg;
pub mod minimize;
pub mod models;
pub mod oracle;
pub mod rdm;
pub mod scalar;
pub mod varstate;
pub mod verify;

pub use error::{Result, WgsError};
pub use geometry::{Bond, Geometry, GeometrySpec, PhaseIndexMap, PhaseMode};
pub use scalar::Real;
pub use varstate::{Ansatz, InitRanges, Layout, LayoutHeader, ParameterVector, StateParts};

pub type Params = ParameterVector<f64>;
pub type Params32 = ParameterVector<f32>;
pub type Parts = StateParts<f64>;
pub type Prepared = rdm::PreparedState<f64>;
pub type Prepared32 = rdm::PreparedState<f32>;
