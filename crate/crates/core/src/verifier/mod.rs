//! Quantitative checks on trajectories and states: Ehrenfest residuals,
//! commutator-form identities, norm traces along a run, relative-bound
//! estimates, Coulomb singularity scaling and time-step convergence.

mod bound;
mod convergence;
mod ehrenfest;
mod fit;
mod report;
mod scaling;
mod trace;

pub use bound::{
    kato_rellich_estimate, kato_rellich_from_samples, BoundConfig, BoundEstimate, BoundSample, MIN_ENSEMBLE,
};
pub use convergence::{convergence_study, ConvergenceReport, ConvergenceSetup, OrderFit, RunSummary};
pub use ehrenfest::{
    derivative, ehrenfest_residuals, identity_check, identity_check_all, AxisResiduals, IdentityDefects,
    ResidualReport, STENCIL,
};
pub use fit::{linear_fit, log_log_fit, LineFit};
pub use report::{to_value, CheckOutcome, Provenance, Report, Verdict};
pub use scaling::{singularity_scaling, ScalingPoint, ScalingReport, MIN_SOFTENING_SPACINGS};
pub use trace::{h2_diagnostic, h_opnorm, hypothesis_trace, H2Diagnostic, HypothesisTrace};
