//! Damped Timoshenko beam with a tip obstacle: finite-element
//! semi-discretization, energy-consistent time stepping, spectral analysis
//! and diagnostics.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod band;
pub mod diagnostics;
pub mod discretize;
pub mod error;
pub mod model;
pub mod spectral;
pub mod timestep;

pub use diagnostics::{
    absorbing_probe, complementarity_report, constraint_violation, energy, fit_decay, observability,
    AbsorbingReport, ComplementarityReport, DecayFit, EnergyReport, ObservabilityReport,
};
pub use discretize::{assemble, assemble_beam, build_mesh, recover_stress, Mesh, SemiDiscreteSystem};
pub use error::{Error, Result};
pub use model::{
    body_force, contact_potential, contact_traction, is_stabilizing_xi, multiplier_q, BeamParams,
    ContactLaw, ForceLaw, MultiplierSpec, TipParams, XiLocation, XiVerdict,
};
pub use spectral::{generator, spectrum, xi_study, GeneratorPair, ModelTag, SpectralReport};
pub use timestep::{
    energy_balance_residual, initial_state, simulate, step, InitialData, Laws, Problem, RunOptions,
    SchemeConfig, State, Trajectory,
};
