//! Quantum state diffusion for a particle in a potential coupled to a
//! thermal environment.
//!
//! The crate integrates the Ito stochastic Schrödinger equation on a
//! position grid, the Lindblad master equation it unravels, and the
//! phase-space Fokker-Planck equation obeyed by the centres of localized
//! trajectories. It also provides the stationary Gaussian solutions, the
//! localization functional (ΔA)² and a two-time decoherent-histories layer.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod fokker_planck;
pub mod gaussian;
pub mod hilbert;
pub mod histories;
pub mod io;
pub mod localization;
pub mod master;
pub mod model;
pub mod qsd;

pub use num_complex::Complex64;

pub use ensemble::{
    coherent_diagonality, estimate_f, husimi, reconstruct_rho, run_ensemble, EnsembleResult, EnsembleSpec,
    PhaseSpaceHistogram, ThermalExponents,
};
pub use error::{QsdError, Result};
pub use fokker_planck::{
    coefficients, evolve_fp, fp_propagator, FpCoefficients, PhaseSpaceField, PhaseSpaceLattice,
};
pub use gaussian::{coherent_state, solve_beta, StationaryParams};
pub use hilbert::{correlation, expectation, Grid, Operator, OperatorTag, WaveFunction};
pub use histories::{
    build_projector, decoherence_functional_2, history_probabilities_vs_fp, PhaseSpaceCell, QuasiProjector,
};
pub use localization::{da2_drift, delta_a2, verify_localization, DeviationCoords};
pub use master::{evolve, lindblad_rhs, purity, trace_distance, DensityMatrix};
pub use model::{validity_ratio, LindbladModel, Potential, QbmParams};
pub use qsd::{ito_step, run_trajectory, MomentState, NoiseProcess, Scheme, TrajectoryConfig, TrajectoryRecord};
