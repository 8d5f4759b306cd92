//! Hitting times of the Ehrenfest and Engset birth–death processes.
//!
//! Exact Laplace transforms through martingale integral formulas, exact
//! simulation, and the limit laws of the sub-critical, critical and
//! super-critical regimes.

pub mod asymptotics;
pub mod error;
pub mod laplace;
pub mod martingale;
pub mod model;
pub mod numeric;
pub mod polys;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use model::{ModelParams, ProcessKind, Regime, RegimeReport};
