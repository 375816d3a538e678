//! Bias injection, household aggregation and multi-run experiments.

mod bias;
mod experiment;
mod household;

pub use bias::{inject_bias, inject_bias_rows, keep_one_category_per_stratum, BiasOutcome, BiasRule, Condition, Test};
pub use experiment::{
    run_debias_experiment, run_experiment, run_population_experiment, DebiasBundle, DebiasExperiment,
    ExperimentConfig, ExperimentReport, PopulationExperiment, PopulationReport, RunReport,
};
pub use household::{aggregate, household_aggregate, Aggregate, AggregateSpec, ControlTotals, StratumAggregate};
