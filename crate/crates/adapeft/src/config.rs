//! Declarative run configuration: a single JSON document describing the
//! model (a named preset or explicit groups), the training loop, and the
//! selection step. Guard limits are checked when the config is loaded, not
//! when a solver finally trips over them.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::influence::ValueConvention;
use crate::knapsack::{MAX_EXHAUSTIVE_ITEMS, MAX_MITM_ITEMS};
use crate::simulator::{presets, GroupSpec, RunOptions, SyntheticModel, TrainingMask};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown preset {0:?}; known presets: {}", presets::names().join(", "))]
    UnknownPreset(String),
    #[error("unknown solver {0:?}; expected greedy, dp, exhaustive or mitm")]
    UnknownSolver(String),
    #[error("unknown frontier mode {0:?}; expected exact or greedy")]
    UnknownMode(String),
    #[error("unknown render kind {0:?}; expected heatmap or appi")]
    UnknownKind(String),
    #[error("epsilon must lie in [0, 1], got {0}")]
    BadEpsilon(f64),
    #[error("group {0:?} needs a nonnegative offset norm")]
    BadOffset(String),
    #[error("solver {solver} cannot handle {groups} groups (limit {limit}); pick dp or greedy")]
    GuardAtLoad {
        solver: SolverKind,
        groups: usize,
        limit: usize,
    },
    #[error("mask references undefined group {0:?}")]
    UnknownMaskGroup(String),
    #[error(transparent)]
    Model(#[from] crate::simulator::SimulatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Greedy,
    Dp,
    Exhaustive,
    Mitm,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SolverKind::Greedy => "greedy",
            SolverKind::Dp => "dp",
            SolverKind::Exhaustive => "exhaustive",
            SolverKind::Mitm => "mitm",
        };
        f.write_str(name)
    }
}

impl FromStr for SolverKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(SolverKind::Greedy),
            "dp" => Ok(SolverKind::Dp),
            "exhaustive" => Ok(SolverKind::Exhaustive),
            "mitm" => Ok(SolverKind::Mitm),
            other => Err(ConfigError::UnknownSolver(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontierMode {
    Exact,
    Greedy,
}

impl FromStr for FrontierMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(FrontierMode::Exact),
            "greedy" => Ok(FrontierMode::Greedy),
            other => Err(ConfigError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderKind {
    Heatmap,
    Appi,
}

impl FromStr for RenderKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heatmap" => Ok(RenderKind::Heatmap),
            "appi" => Ok(RenderKind::Appi),
            other => Err(ConfigError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupConfig {
    pub name: String,
    pub size: u64,
    pub dim: usize,
    pub curvature: f64,
    /// Distance from the starting parameters to the group's optimum.
    pub offset_norm: f64,
    #[serde(default)]
    pub quartic: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Preset {
        preset: String,
    },
    Explicit {
        #[serde(default = "default_model_name")]
        name: String,
        groups: Vec<GroupConfig>,
    },
}

fn default_model_name() -> String {
    "custom".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub iterations: u64,
    /// Probing period; `null` means 4K for K groups.
    pub lazy_period: Option<u64>,
    pub seed: u64,
    pub noise_sigma: f64,
    /// Trainable group names; `null` trains everything.
    pub mask: Option<Vec<String>>,
    pub sequential: bool,
    pub fallback_lr: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            lazy_period: None,
            seed: 0,
            noise_sigma: 0.0,
            mask: None,
            sequential: false,
            fallback_lr: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub epsilon: f64,
    pub solver: SolverKind,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            solver: SolverKind::Greedy,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub value_convention: ValueConvention,
}

impl RunConfig {
    pub fn preset(name: &str) -> Self {
        Self {
            model: ModelConfig::Preset {
                preset: name.to_string(),
            },
            training: TrainingConfig::default(),
            selection: SelectionConfig::default(),
            value_convention: ValueConvention::default(),
        }
    }

    /// Builds the model and checks every limit that would otherwise only
    /// surface mid-run.
    pub fn build_model(&self) -> Result<SyntheticModel, ConfigError> {
        let model = match &self.model {
            ModelConfig::Preset { preset } => {
                presets::build(preset, self.training.noise_sigma, self.training.seed)
                    .ok_or_else(|| ConfigError::UnknownPreset(preset.clone()))?
            }
            ModelConfig::Explicit { name, groups } => {
                let mut specs = Vec::with_capacity(groups.len());
                for g in groups {
                    if g.offset_norm.is_nan() || g.offset_norm < 0.0 {
                        return Err(ConfigError::BadOffset(g.name.clone()));
                    }
                    // The offset sits on the first coordinate so its norm
                    // is exact.
                    let mut target = vec![0.0; g.dim.max(1)];
                    target[0] = g.offset_norm;
                    let spec = GroupSpec::new(g.name.clone(), g.size, g.curvature, target)?
                        .with_quartic(g.quartic);
                    specs.push(spec);
                }
                SyntheticModel::new(
                    name.clone(),
                    specs,
                    self.training.noise_sigma,
                    self.training.seed,
                )?
            }
        };
        self.validate_against(&model)?;
        Ok(model)
    }

    fn validate_against(&self, model: &SyntheticModel) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.selection.epsilon) {
            return Err(ConfigError::BadEpsilon(self.selection.epsilon));
        }
        let groups = model.num_groups();
        let limit = match self.selection.solver {
            SolverKind::Exhaustive => Some(MAX_EXHAUSTIVE_ITEMS),
            SolverKind::Mitm => Some(MAX_MITM_ITEMS),
            _ => None,
        };
        if let Some(limit) = limit {
            if groups > limit {
                return Err(ConfigError::GuardAtLoad {
                    solver: self.selection.solver,
                    groups,
                    limit,
                });
            }
        }
        if let Some(mask) = &self.training.mask {
            for name in mask {
                if model.group_index(name).is_none() {
                    return Err(ConfigError::UnknownMaskGroup(name.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn training_mask(&self, model: &SyntheticModel) -> TrainingMask {
        match &self.training.mask {
            Some(names) => TrainingMask::from_names(names.iter().cloned()),
            None => TrainingMask::all(model),
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            lazy_period: self.training.lazy_period,
            fallback_lr: self.training.fallback_lr,
            sequential: self.training.sequential,
            convention: self.value_convention,
        }
    }
}
