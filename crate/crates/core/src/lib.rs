//! Simulation of the Schrödinger-Lohe synchronization model and two variants
//! whose coupling weights follow Cucker-Smale consensus dynamics.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: periodic grids, wave fields, quadrature and spectral propagators.
//! * [`cucker_smale`]: communication kernels and the consensus ODE for `theta`.
//! * [`dynamics`]: coupled PDE/ODE stepping, preflight checks and the run loop.
//! * [`observables`]: per-frame diagnostics, rate fits and regime detection.
//! * [`reduced`]: the closed two-oscillator ODE and its explicit solutions.
//! * [`experiments`]: the named scenario catalog and its assertions.
//! * [`io`]: configs, CSV trajectories and binary checkpoints.

pub mod cucker_smale;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod observables;
pub mod reduced;

pub use cucker_smale::{kernel_eval, theta_rhs, KernelSpec, ThetaState};
pub use dynamics::{
    coupling_rhs, mass_rhs_check, oracle_step, preflight, run, step, EnsembleState, ModelKind,
    ModelParams, PreflightReport, RunError, Solver, Trajectory,
};
pub use error::{QsyncError, Result};
pub use grid::{inner_product, norm, GaussianPacket, GridSpec, PotentialSpec, WaveField, C64};
pub use observables::{
    detect_regime, fit_exponential_rate, frame, order_parameter, ObservableFrame, RateFit, Regime,
};
