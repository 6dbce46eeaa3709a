//! Effective objects: the strip Hamiltonian `H^M`, truncated ergodic
//! constants, the flux limiters `E^{L,M}`, `E^{M,R}`, `E`, `E_eps`, slope
//! thresholds and corrector slope checks.

mod effective;
mod limiters;
mod slopes;

use serde::{Deserialize, Serialize};

use crate::hj_engines::{ErgodicMethod, SolverControl};
use crate::scalar::Real;

pub use effective::{effective_hm, hm_oracle, EffectiveTable, TableAxis};
pub use limiters::{
    epsilon_flux_limiter, epsilon_problem_grid, finger_problem_grid, flux_limiter, flux_limiter_1d,
    lambda_rho, mu_rho, FluxLimiterCurve, LimiterKind, LimiterOutcome, Orientation,
};
pub use slopes::{
    corrector_slope_check, slope_band, slope_thresholds, CorrectorProfile, GrowthReport,
    SlopeCheckReport, SlopeRange, SlopeThresholds, ThresholdSide, Wedge,
};

/// Discretization and stopping parameters of every cell problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSettings<T> {
    /// Nodes per period of the one-dimensional column defining `H^M`.
    pub column_nodes: usize,
    /// Horizontal spacing of finger problems.
    pub finger_h1: T,
    /// Nodes per period `eta` of finger problems.
    pub finger_nodes_per_period: usize,
    /// Spacing of the one-dimensional truncated problems.
    pub line_h: T,
    /// Nodes per period `eps` of the oscillatory truncated problems.
    pub eps_nodes_per_period: usize,
    /// Horizontal nodes per `eps` of the oscillatory truncated problems.
    pub eps_nodes_per_eps_h1: usize,
    pub method: ErgodicMethod<T>,
    /// Stopping rule of the ergodic solves (tolerance on the constant).
    pub control: SolverControl<T>,
    /// Stopping rule of the `H^M` column solves.
    pub hm_control: SolverControl<T>,
    /// Increment below which a rho schedule is declared converged.
    pub rho_tol: T,
}

impl<T: Real> Default for CellSettings<T> {
    fn default() -> Self {
        Self {
            column_nodes: 64,
            finger_h1: T::lit(1.0 / 16.0),
            finger_nodes_per_period: 32,
            line_h: T::lit(1.0 / 32.0),
            eps_nodes_per_period: 16,
            eps_nodes_per_eps_h1: 8,
            method: ErgodicMethod::default_schedule(),
            control: SolverControl {
                tol: T::lit(1e-4),
                max_iter: 20_000_000,
            },
            hm_control: SolverControl {
                tol: T::lit(1e-9),
                max_iter: 50_000_000,
            },
            rho_tol: T::lit(5e-3),
        }
    }
}
