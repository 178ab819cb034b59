//! Bayesian-generational population-based training.
//!
//! A library for online hyperparameter and architecture adaptation of a
//! population of trainable agents. A Gaussian-process surrogate with a
//! mixed-space, time-decayed kernel models recent observations; trust-region
//! bounded acquisition proposes replacements for the weakest population
//! members; a generational layer searches over architectures with successive
//! halving and transfers behavior to new generations at a discounted cost.

pub mod acquisition;
pub mod analysis;
pub mod benchmark;
pub mod generation;
pub mod gp;
pub mod kernel;
pub mod scheduler;
pub mod space;
pub mod trust_region;

pub use acquisition::{AcquisitionContext, AcquisitionOptions};
pub use analysis::{
    beta_schedule, dataset_info_gain, info_gain, regret_trace, spearman, AnalysisError,
    RegretTrace,
};
pub use benchmark::{
    AgentSimObjective, AgentState, BenchmarkError, Objective, OracleGrid, SimParams,
    SyntheticObjective,
};
pub use generation::{
    anneal_weights, arch_similarity, collect_arch_records, distill_transfer, run_generation,
    successive_halving, suggest_architectures, transfer_efficiency, ArchRecord,
    DistillationSchedule, GenerationError, GenerationOutcome, GenerationPlan,
};
pub use gp::{Dataset, FitBounds, FitOptions, GpError, GpModel};
pub use kernel::{KernelError, KernelParams};
pub use scheduler::{
    exploit_assignments, run, Agent, EventTag, RunOutput, RunSummary, ScheduleRecord,
    ScheduleRow, SchedulerConfig, SchedulerError, TReadyMode, TReadySchedule,
};
pub use space::{
    ArchKey, ConfigVector, DimensionSpec, RawValue, Scale, SearchSpace, SpaceError,
    TimestampedObservation, XSlotKind,
};
pub use trust_region::{
    ArchiveEntry, RestartArchive, TrustRegionConfig, TrustRegionError, TrustRegionState,
};
