//! Hessian-informed selection of trainable parameter groups.
//!
//! The toolkit estimates how much loss each parameter group of a model can
//! shave off per update, using only forward-pass probes and a quadratic fit,
//! then treats "which groups should train" as a 0-1 knapsack problem: values
//! are accumulated loss reductions, weights are parameter counts, and a
//! budget fraction caps the trainable share. Solvers range from exhaustive
//! search (with a Pareto-optimality refinement) to a greedy ratio sort whose
//! nested prefixes sweep out the whole frontier at once.
//!
//! Everything is validated end-to-end on synthetic quadratic models where
//! gradients, curvatures, and optimal step sizes are known in closed form.
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability, and the `adapeft` binary for the file-based pipeline.

pub mod commands;
pub mod config;
pub mod influence;
pub mod knapsack;
pub mod simulator;
pub mod svg;
pub mod traces;

pub use influence::{
    accumulate_appi, accumulate_values, fit_quadratic, optimal_lr, ppi, reduction_value,
    InfluenceError, InfluenceTrace, ParameterGroup, ProbeSet, QuadraticFit, ValueConvention,
};
pub use knapsack::{
    dominates, enumerate_optima, greedy_at_epsilon, greedy_frontier, pareto_frontier,
    refine_pareto, solve_dp, solve_dp_scaled, solve_exhaustive, solve_greedy, solve_mitm,
    KnapsackError, KnapsackInstance, KnapsackItem, ParetoPoint, SelectionResult,
};
pub use simulator::{
    knapsack_from_trace, run_adapeft, run_algorithm1, GroupSpec, RunOptions, RunRecord,
    SimulatorError, SyntheticModel, TrainingMask,
};
pub use traces::{TraceError, TraceFile, TraceWriter};
