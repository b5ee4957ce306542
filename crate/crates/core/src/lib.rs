//! Partial-information filtering and log-utility value computations for a
//! market whose drift is a hidden Ornstein–Uhlenbeck process observed through
//! returns and expert opinions.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod filter;
pub mod fit;
pub mod math;
pub mod matrix;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod value;

pub use matrix::{loewner_leq, solve_spd, spectral_norm, sym_sqrt, Matrix, MatrixError, SymMatrix};
pub use model::{DateScheme, Model, ModelParams, SchemeError, ValidationError};
pub use simulate::{make_grid, simulate_path, MarketPath, NodeKind, SimError, TimeGrid};
pub use filter::{run_filter, CovTrack, FilterError, FilterState, FilterTrajectory, Regime};
pub use fit::{fit_loglog_slope, FitError, SlopeFit};
pub use value::{deterministic_value, ValueError};
