//! Multi-user DSL spectrum balancing by Lagrange dual decomposition.
//!
//! The crate maximizes a weighted sum of user rates under per-user total
//! power budgets and per-tone masks. The dual decomposes tone by tone; the
//! multipliers are driven either by a projected subgradient method or by an
//! optimal-gradient scheme on a prox-smoothed dual. Per-tone subproblems are
//! solved exhaustively on a grid, by coordinate ascent, by KKT fixed-point
//! sweeps, or (on a concave surrogate) by projected Newton.
//!
//! ```
//! use spectra_dd::harness::preset;
//! use spectra_dd::dual::{solve_ica_dsb, SolverConfig, IterationBudget};
//!
//! let scenario = preset("adsl-nearfar-2").unwrap();
//! let config = SolverConfig { i_max: IterationBudget::Fixed(50), outer_max: 2, ..SolverConfig::default() };
//! let report = solve_ica_dsb(&scenario, &config).unwrap();
//! assert!(report.weighted_rate > 0.0);
//! ```

pub mod approx;
pub mod channel;
pub mod dual;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod oracle;
pub mod pertone;

pub use error::{Error, Result};
pub use model::{PhysicalConstants, Scenario, SpectrumAllocation, ToneAllocation, ToneChannel};
