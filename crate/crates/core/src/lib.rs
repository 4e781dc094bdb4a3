//! Spectral solver and qualitative-analysis toolkit for a two-layer energy
//! balance climate model on the latitude interval (-1, 1).
//!
//! The crate is organized bottom-up:
//!
//! * [`legendre`]: Gauss-Legendre grids, spectral transforms, the degenerate
//!   diffusion operator and its semigroup, weighted norms, Hardy inequality.
//! * [`model`]: physical parameters, coalbedo and forcing laws, the reaction
//!   term of the coupled system and its Jacobian.
//! * [`ode`]: the space-homogeneous companion system, its equilibria,
//!   invariant rectangles and extremal bounds.
//! * [`pde`]: exponential time differencing integrators for the full model,
//!   with adaptive step control and blow-up bracketing.
//! * [`qualitative`]: comparison/positivity/invariance harnesses, steady
//!   states, energy diagnostics, and the dissipation and absorbing-set probes.
//! * [`verify`]: the named check suites behind the command-line `verify`.

pub mod error;
pub mod legendre;
pub mod model;
pub mod ode;
pub mod pde;
pub mod qualitative;
pub mod verify;

pub use error::{Error, Result};
pub use legendre::{gauss_legendre, hardy_check, HardyReport, NormTriple, SpectralField, SpectralGrid};
pub use model::{
    energy_h, energy_v, eval_g, eval_g_jacobian, g_time_lipschitz_bound, validate, Coalbedo,
    Forcing, GJacobian, InsolationShape, ModelParams, SolarFactor, StateVec,
};
pub use ode::{
    coldest_equilibrium, default_search_max, extremal_data, find_equilibria, integrate_ode,
    minimal_rectangle, ode_rhs, ode_states_at, warmest_equilibrium, CoalbedoPair, ExtremalData,
    InvariantRectangle, OdeState, OdeTrajectory, B_STOP,
};
pub use pde::{
    detect_blowup, integrate, integrate_with, phi1, phi2, step_etd1, step_etd1_with, step_etdrk2,
    step_etdrk2_with, ModelReaction, Reaction, RunStatus, StepControls, TrajectoryRecord,
    ZeroReaction,
};
pub use qualitative::{
    absorbing_probe, check_comparison, check_comparison_with, check_positivity, check_rectangle,
    check_sandwich, dissipation_check, energy_series, solve_equilibrium, stationary_residual,
    tol_order, weak_mp_probe, AbsorbReport, DissipationReport, EnergyRow, EquilibriumMethod,
    EquilibriumSeed, EquilibriumSolution, FrozenLinearReaction, OrderingReport, L1_DESK,
};
pub use verify::{
    run_check, run_suite, suite_checks, CheckResult, Suite, CORE_CHECKS, QUALITATIVE_CHECKS,
};
