//! Classical samplers standing in for hardware Boltzmann sampling:
//! systematic-scan Gibbs, simulated annealing, and exact inverse-CDF draws,
//! plus the estimators and benchmarks built on their output.

mod analysis;
mod anneal;
mod exact;
mod gibbs;
mod sample_set;
mod stability;

pub use analysis::{
    boltzmann_fidelity, log_z_mean_energy_estimate, negative_phase_moments, total_variation, FidelityReport,
    FIDELITY_MIN_COUNT, FIDELITY_MIN_STATES,
};
pub use anneal::{simulated_annealing, AnnealResult, AnnealSchedule, ScheduleShape, SA_ID};
pub use exact::{exact_sampler, EXACT_ID};
pub(crate) use gibbs::logistic;
pub use gibbs::{gibbs_sample, GibbsConfig, GIBBS_ID};
pub use sample_set::{SampleMeta, SampleSet, VariableKind};
pub use stability::{stability_harness, write_stability_csv, StabilityConfig, StabilityTick};
