// `!(x > 0)` is used deliberately throughout so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agu;
pub mod calculus;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod galerkin;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod jet;
pub mod linalg;
pub mod pressure;
pub mod scalar;
pub mod state;

pub use error::{Error, Result};
pub use geometry::{build_geometry, Cutoff, Geometry};
pub use grid::{make_grid, Field, Grid, Spectrum, VecField};
pub use scalar::Real;
pub use state::{Model, Params, State};

pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
pub type State64 = State<f64>;
pub type Model64 = Model<f64>;
