//! Simulator for carbonation-driven consolidation of a porous solid.
//!
//! A lime-water solution is driven into the pore space of a solid, where the
//! dissolved hydroxide reacts with carbon dioxide and deposits solid carbonate
//! that binds the grain structure. The model couples a nonlinear saturation
//! equation (capillary flow), a convection–diffusion equation for the
//! hydroxide concentration with a one-sided inflow boundary, and an
//! irreversible precipitate balance. Time stepping is implicit with lagged
//! coupling: each step solves the saturation equation, then the hydroxide
//! equation with the previous step's saturation and transport velocity, then
//! updates the precipitate.
//!
//! Module map:
//! - [`constitutive`]: pointwise material laws (wetting curve, permeability,
//!   reaction kinetics, truncation clamp).
//! - [`mesh`]: graded 1D grid with trapezoidal mass lumping.
//! - [`transport`]: water flux, mollified transport velocity, velocity clamp.
//! - [`timestep`]: one implicit step (Newton saturation solve, active-set
//!   hydroxide solve, precipitate update).
//! - [`scenario`]: boundary schedules, presets, full simulation runs.
//! - [`diagnostics`]: invariant monitors and brute-force oracle comparisons.
//! - [`io`]: config parsing, CSV/report serialization.
//! - [`cli`]: command-line interface.

pub mod cli;
pub mod constitutive;
pub mod diagnostics;
pub mod io;
pub mod mesh;
pub mod scenario;
pub mod timestep;
pub mod transport;

mod tridiag;

pub use constitutive::{PermeabilityLaw, PhysParams, WettingCurve};
pub use mesh::Grid1D;
pub use scenario::{build_fill_dry_scenario, run_scenario, ScenarioConfig, Snapshot};
pub use timestep::{advance_one_step, SolverConfig, State, StepReport};
