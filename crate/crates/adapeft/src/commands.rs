//! Command-level drivers behind the `adapeft` binary. Each function loads
//! its inputs, runs the corresponding pipeline stage, and returns a typed
//! report that renders both as plain text and as JSON.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::{ConfigError, FrontierMode, RenderKind, RunConfig, SolverKind};
use crate::influence::{accumulate_values, ValueConvention};
use crate::knapsack::{
    greedy_at_epsilon, greedy_frontier, pareto_frontier, solve_dp, solve_exhaustive, solve_mitm,
    KnapsackError, KnapsackInstance, SelectionResult,
};
use crate::simulator::{run_adapeft, run_algorithm1, SimulatorError, TrainingMask};
use crate::svg::heatmap_svg;
use crate::traces::{
    export_appi, export_heatmap, heatmap_tsv, GroupMeta, HeatmapOptions, TraceError, TraceFile,
};

/// Environment variable that overrides the seed of any loaded config.
pub const SEED_ENV_VAR: &str = "ADAPEFT_SEED";

/// Stable exit-code contract: 0 success, 2 config/usage, 3 solver guard,
/// 4 model compatibility.
#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Guard(String),
    #[error("{0}")]
    Compatibility(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            CommandError::Guard(_) => 3,
            CommandError::Compatibility(_) => 4,
        }
    }
}

impl From<ConfigError> for CommandError {
    fn from(err: ConfigError) -> Self {
        match err {
            ConfigError::GuardAtLoad { .. } => CommandError::Guard(err.to_string()),
            other => CommandError::Config(other.to_string()),
        }
    }
}

impl From<TraceError> for CommandError {
    fn from(err: TraceError) -> Self {
        CommandError::Config(err.to_string())
    }
}

impl From<KnapsackError> for CommandError {
    fn from(err: KnapsackError) -> Self {
        match err {
            KnapsackError::TooManyItems { .. } | KnapsackError::CapacityTooLarge { .. } => {
                CommandError::Guard(err.to_string())
            }
            other => CommandError::Config(other.to_string()),
        }
    }
}

impl From<SimulatorError> for CommandError {
    fn from(err: SimulatorError) -> Self {
        match err {
            SimulatorError::GroupNameMismatch(_) => CommandError::Compatibility(err.to_string()),
            SimulatorError::Knapsack(inner) => inner.into(),
            other => CommandError::Config(other.to_string()),
        }
    }
}

/// Loads a run config from JSON, honoring the [`SEED_ENV_VAR`] override.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, CommandError> {
    let text = fs::read_to_string(&path)
        .map_err(|e| CommandError::Config(format!("{}: {e}", path.as_ref().display())))?;
    let mut config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CommandError::Config(format!("bad config: {e}")))?;
    if let Ok(seed) = std::env::var(SEED_ENV_VAR) {
        let seed: u64 = seed.parse().map_err(|_| {
            CommandError::Config(format!("{SEED_ENV_VAR} must be an unsigned integer"))
        })?;
        config.training.seed = seed;
    }
    Ok(config)
}

fn sorted_by_value_desc(values: &std::collections::BTreeMap<String, f64>) -> Vec<(&str, f64)> {
    let mut rows: Vec<(&str, f64)> = values.iter().map(|(k, &v)| (k.as_str(), v)).collect();
    rows.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite values")
            .then(a.0.cmp(b.0))
    });
    rows
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub model: String,
    pub seed: u64,
    pub iterations: u64,
    pub trace_path: String,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub cumulative_values: std::collections::BTreeMap<String, f64>,
}

impl SimulateReport {
    pub fn human(&self) -> String {
        let mut out = String::new();
        writeln!(out, "model: {} (seed {})", self.model, self.seed).unwrap();
        writeln!(out, "iterations: {}", self.iterations).unwrap();
        writeln!(out, "trace: {}", self.trace_path).unwrap();
        writeln!(out, "initial loss: {}", self.initial_loss).unwrap();
        writeln!(out, "final loss: {}", self.final_loss).unwrap();
        writeln!(out, "cumulative values:").unwrap();
        for (name, value) in sorted_by_value_desc(&self.cumulative_values) {
            writeln!(out, "  {name}\t{value}").unwrap();
        }
        out
    }
}

/// Runs the configured training loop and writes the trace.
pub fn simulate(config: &RunConfig, out: impl AsRef<Path>) -> Result<SimulateReport, CommandError> {
    let mut model = config.build_model()?;
    let mask = config.training_mask(&model);
    let options = config.run_options();
    let record = run_algorithm1(&mut model, config.training.iterations, &mask, &options)?;
    let trace = TraceFile::from_influence(model.name(), &record.trace);
    trace.write(&out)?;
    Ok(SimulateReport {
        model: model.name().to_string(),
        seed: model.seed(),
        iterations: config.training.iterations,
        trace_path: out.as_ref().display().to_string(),
        initial_loss: record.initial_loss(),
        final_loss: record.final_loss(),
        cumulative_values: record.cumulative_values(config.value_convention),
    })
}

#[derive(Debug, Serialize)]
pub struct SelectReport {
    pub trace_path: String,
    pub solver: SolverKind,
    pub epsilon: f64,
    pub selected: Vec<String>,
    pub total_value: f64,
    pub total_weight: u64,
    pub weight_fraction: f64,
    /// `true` for the exact solvers, whose refined optimum is never
    /// dominated; unknown for greedy.
    pub pareto_optimal: Option<bool>,
}

impl SelectReport {
    pub fn human(&self) -> String {
        let mut out = String::new();
        writeln!(out, "trace: {}", self.trace_path).unwrap();
        writeln!(out, "solver: {} (epsilon {})", self.solver, self.epsilon).unwrap();
        writeln!(out, "mask: {}", self.selected.join(",")).unwrap();
        writeln!(out, "total value: {}", self.total_value).unwrap();
        writeln!(
            out,
            "total weight: {} (fraction {})",
            self.total_weight, self.weight_fraction
        )
        .unwrap();
        match self.pareto_optimal {
            Some(true) => writeln!(out, "pareto optimal: yes").unwrap(),
            Some(false) => writeln!(out, "pareto optimal: no").unwrap(),
            None => writeln!(out, "pareto optimal: unknown (greedy)").unwrap(),
        }
        out
    }
}

fn instance_from_trace(
    trace: &TraceFile,
    convention: ValueConvention,
) -> Result<KnapsackInstance, CommandError> {
    let influence = trace.to_influence()?;
    let values = accumulate_values(&influence, u64::MAX, convention);
    let items = trace
        .groups()
        .iter()
        .map(|g| (g.name.clone(), values[&g.name], g.size))
        .collect();
    Ok(KnapsackInstance::new(items)?)
}

/// Solves the selection problem recorded in a trace.
pub fn select(
    trace_path: impl AsRef<Path>,
    epsilon: f64,
    solver: SolverKind,
) -> Result<SelectReport, CommandError> {
    let trace = TraceFile::read(&trace_path)?;
    let instance = instance_from_trace(&trace, ValueConvention::default())?;
    let (selection, pareto) = match solver {
        SolverKind::Greedy => (greedy_at_epsilon(&instance, epsilon)?, None),
        SolverKind::Dp => (solve_dp(&instance, epsilon)?, Some(true)),
        SolverKind::Exhaustive => (solve_exhaustive(&instance, epsilon)?, Some(true)),
        SolverKind::Mitm => (solve_mitm(&instance, epsilon)?, Some(true)),
    };
    Ok(SelectReport {
        trace_path: trace_path.as_ref().display().to_string(),
        solver,
        epsilon,
        selected: selection
            .selected_names(&instance)
            .into_iter()
            .map(str::to_string)
            .collect(),
        total_value: selection.total_value,
        total_weight: selection.total_weight,
        weight_fraction: selection.fraction,
        pareto_optimal: pareto,
    })
}

#[derive(Debug, Serialize)]
pub struct FrontierRow {
    pub source: &'static str,
    pub weight: u64,
    pub weight_fraction: f64,
    pub value: f64,
    pub groups: Vec<String>,
    pub dominated: bool,
}

#[derive(Debug, Serialize)]
pub struct FrontierReport {
    pub trace_path: String,
    pub mode: FrontierMode,
    pub rows: Vec<FrontierRow>,
}

impl FrontierReport {
    pub fn human(&self) -> String {
        let mut out = String::from("source\tfraction\tvalue\tdominated\tgroups\n");
        for row in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                row.source,
                row.weight_fraction,
                row.value,
                row.dominated,
                row.groups.join(",")
            )
            .unwrap();
        }
        out
    }
}

fn frontier_row(
    source: &'static str,
    inst: &KnapsackInstance,
    selection: &SelectionResult,
    dominated: bool,
) -> FrontierRow {
    FrontierRow {
        source,
        weight: selection.total_weight,
        weight_fraction: selection.fraction,
        value: selection.total_value,
        groups: selection
            .selected_names(inst)
            .into_iter()
            .map(str::to_string)
            .collect(),
        dominated,
    }
}

/// Emits the (weight fraction, value) frontier of a trace: the exact
/// frontier (in exact mode) plus the greedy prefix points for comparison.
pub fn frontier(
    trace_path: impl AsRef<Path>,
    mode: FrontierMode,
) -> Result<FrontierReport, CommandError> {
    let trace = TraceFile::read(&trace_path)?;
    let instance = instance_from_trace(&trace, ValueConvention::default())?;
    let mut rows = Vec::new();
    if mode == FrontierMode::Exact {
        for point in pareto_frontier(&instance)? {
            rows.push(frontier_row(
                "exact",
                &instance,
                &point.selection,
                point.dominated,
            ));
        }
    }
    for point in greedy_frontier(&instance) {
        rows.push(frontier_row(
            "greedy",
            &instance,
            &point.selection,
            point.dominated,
        ));
    }
    Ok(FrontierReport {
        trace_path: trace_path.as_ref().display().to_string(),
        mode,
        rows,
    })
}

#[derive(Debug, Serialize)]
pub struct TransferReport {
    pub small: String,
    pub large: String,
    pub epsilon: f64,
    pub budget_fraction: f64,
    pub iterations: u64,
    pub mask: Vec<String>,
    pub mask_weight_fraction: f64,
    pub large_initial_loss: f64,
    pub large_final_loss: f64,
    /// Final loss of a full-model run on the large model, when requested.
    pub baseline_final_loss: Option<f64>,
}

impl TransferReport {
    pub fn human(&self) -> String {
        let mut out = String::new();
        writeln!(out, "small: {}", self.small).unwrap();
        writeln!(out, "large: {}", self.large).unwrap();
        writeln!(
            out,
            "epsilon: {} (budget fraction {}, iterations {})",
            self.epsilon, self.budget_fraction, self.iterations
        )
        .unwrap();
        writeln!(out, "mask: {}", self.mask.join(",")).unwrap();
        writeln!(out, "mask weight fraction: {}", self.mask_weight_fraction).unwrap();
        writeln!(out, "large initial loss: {}", self.large_initial_loss).unwrap();
        writeln!(out, "large final loss: {}", self.large_final_loss).unwrap();
        if let Some(baseline) = self.baseline_final_loss {
            writeln!(out, "full-model baseline final loss: {baseline}").unwrap();
        }
        out
    }
}

/// Transfers a selection from a small run (config, or a finished
/// `.ppitrace`) onto a large model and trains it under the mask.
#[allow(clippy::too_many_arguments)]
pub fn transfer(
    small_path: impl AsRef<Path>,
    large_path: impl AsRef<Path>,
    epsilon: f64,
    iterations: u64,
    budget_fraction: f64,
    baseline: bool,
) -> Result<TransferReport, CommandError> {
    let large_config = load_config(&large_path)?;
    let mut large = large_config.build_model()?;
    let options = large_config.run_options();

    let small_is_trace = small_path
        .as_ref()
        .extension()
        .is_some_and(|ext| ext == "ppitrace");

    let (small_name, mask, record) = if small_is_trace {
        let trace = TraceFile::read(&small_path)?;
        let trace_names: BTreeSet<&str> = trace.groups().iter().map(|g| g.name.as_str()).collect();
        let large_names: BTreeSet<&str> = large
            .specs()
            .iter()
            .map(|s| s.group.name.as_str())
            .collect();
        if trace_names != large_names {
            return Err(CommandError::Compatibility(format!(
                "trace groups {trace_names:?} do not match large model groups {large_names:?}"
            )));
        }
        let influence = trace.to_influence()?;
        let values = accumulate_values(&influence, u64::MAX, large_config.value_convention);
        let items: Vec<(String, f64, u64)> = large
            .specs()
            .iter()
            .map(|s| (s.group.name.clone(), values[&s.group.name], s.group.size))
            .collect();
        let instance = KnapsackInstance::new(items)?;
        let selection = greedy_at_epsilon(&instance, epsilon)?;
        let mask = TrainingMask::from_names(
            selection
                .selected_names(&instance)
                .into_iter()
                .map(str::to_string),
        );
        let record = run_algorithm1(&mut large, iterations, &mask, &options)?;
        (trace.model_name.clone(), mask, record)
    } else {
        let small_config = load_config(&small_path)?;
        let mut small = small_config.build_model()?;
        let name = small.name().to_string();
        let (mask, record) = run_adapeft(
            &mut small,
            &mut large,
            budget_fraction,
            epsilon,
            iterations,
            &options,
        )?;
        (name, mask, record)
    };

    let baseline_final_loss = if baseline {
        let mut fresh = large_config.build_model()?;
        let full = TrainingMask::all(&fresh);
        let baseline_record = run_algorithm1(&mut fresh, iterations, &full, &options)?;
        Some(baseline_record.final_loss())
    } else {
        None
    };

    let mask_weight: u64 = large
        .specs()
        .iter()
        .filter(|s| mask.contains(&s.group.name))
        .map(|s| s.group.size)
        .sum();
    let total_weight: u64 = large.specs().iter().map(|s| s.group.size).sum();

    Ok(TransferReport {
        small: small_name,
        large: large.name().to_string(),
        epsilon,
        budget_fraction,
        iterations,
        mask: mask.names().map(str::to_string).collect(),
        mask_weight_fraction: mask_weight as f64 / total_weight as f64,
        large_initial_loss: record.initial_loss(),
        large_final_loss: record.final_loss(),
        baseline_final_loss,
    })
}

#[derive(Debug, Serialize)]
pub struct RenderReport {
    pub kind: RenderKind,
    pub trace_path: String,
    pub out_path: String,
    pub bytes: usize,
}

impl RenderReport {
    pub fn human(&self) -> String {
        format!(
            "wrote {} render of {} to {} ({} bytes)\n",
            match self.kind {
                RenderKind::Heatmap => "heatmap",
                RenderKind::Appi => "appi",
            },
            self.trace_path,
            self.out_path,
            self.bytes
        )
    }
}

/// Renders a trace to a heatmap (TSV, or SVG when the output path ends in
/// `.svg`) or to the cumulative-influence TSV.
pub fn render(
    kind: RenderKind,
    trace_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
) -> Result<RenderReport, CommandError> {
    let trace = TraceFile::read(&trace_path)?;
    let content = match kind {
        RenderKind::Heatmap => {
            let matrix = export_heatmap(&trace, &HeatmapOptions::default())?;
            let wants_svg = out_path
                .as_ref()
                .extension()
                .is_some_and(|ext| ext == "svg");
            if wants_svg {
                heatmap_svg(&matrix)
            } else {
                heatmap_tsv(&matrix)
            }
        }
        RenderKind::Appi => export_appi(&trace, ValueConvention::default())?,
    };
    fs::write(&out_path, &content)
        .map_err(|e| CommandError::Config(format!("{}: {e}", out_path.as_ref().display())))?;
    Ok(RenderReport {
        kind,
        trace_path: trace_path.as_ref().display().to_string(),
        out_path: out_path.as_ref().display().to_string(),
        bytes: content.len(),
    })
}

/// Builds the knapsack items of a trace without solving; shared by the
/// examples.
pub fn trace_instance(trace: &TraceFile) -> Result<KnapsackInstance, CommandError> {
    instance_from_trace(trace, ValueConvention::default())
}

/// Convenience used by tests and examples: writes a model's trace without
/// going through a config file.
pub fn write_trace_for(
    model_name: &str,
    groups: Vec<GroupMeta>,
    rows: &[(u64, String, crate::influence::QuadraticFit)],
    path: impl AsRef<Path>,
) -> Result<(), CommandError> {
    let mut trace = TraceFile::new(model_name, groups)?;
    for (iteration, group, fit) in rows {
        trace.push_row(*iteration, group, *fit)?;
    }
    trace.write(path)?;
    Ok(())
}
