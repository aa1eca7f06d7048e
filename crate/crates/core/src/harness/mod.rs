//! Config-driven experiments and the acceptance suite.

pub mod acceptance;
mod config;
mod run;

pub use config::{
    Analyses, DecayConfig, ExperimentConfig, HsvConfig, InduceConfig, MapConfig, MeasureConfig, MeasureSource,
    PoissonConfig, SamplingConfig, SandwichConfig, TargetConfig, OUTPUT_ROOT_ENV,
};
pub use run::{
    radius_sweep, read_artifacts, return_statistics, run_experiment, run_induce, spearman, target_mass, with_workers,
    CertificateSummary, DecaySummary, HittingSummary, HsvSummary, MassSummary, PoissonSummary, ReturnSummary,
    RunReport, Summary, SweepRow, SweepTable, FAILED_MARKER,
};
