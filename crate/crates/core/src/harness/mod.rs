//! Closed-loop simulation: an SRB plant stepped with RK4 on its own terrain
//! level of detail, a planner invoked at a fixed rate, outcome
//! classification, matched-seed batches, open-loop error analysis and the
//! summary statistics used to compare formulations.

mod batch;
mod openloop;
mod scenario;
mod stats;
mod trial;

pub use batch::{
    compare_formulations, read_trials_csv, run_batch, trial_seed, BatchOutput, BatchPlan,
    BatchSummary, CellSummary, FormulationComparison, TrialSummary, SUMMARY_HEADER, TRIALS_HEADER,
};
pub use openloop::{
    controls_from_rows, open_loop_errors, open_loop_segments, OpenLoopConfig, OpenLoopError,
    Segment,
};
pub use scenario::{
    ConstraintSpec, GoalSpec, Layers, PlannerSpec, Scenario, Setup, StartSpec, TerrainSource,
    TrialSpec, WeightSpec, World,
};
pub use stats::{mann_whitney_u, median, stat_summary, Proportion, EXACT_LIMIT};
pub use trial::{
    perturbed_start, planner_state, plant_step, read_trial_csv, run_scenario_trial, run_trial,
    IterationStats, Outcome, PlantConfig, TrialContext, TrialRecord, TrialRow, TrialSettings,
    TRIAL_COLUMNS,
};
