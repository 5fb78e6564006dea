//! Synthetic differentiable models with grouped parameters and known
//! curvature, plus the probing training loop that exercises the influence
//! and knapsack machinery end to end.
//!
//! Each group k holds a quadratic bowl `(c_k / 2) * |w_k - target_k|^2`
//! (optionally perturbed by a small quartic term), so gradients, directional
//! curvatures, optimal step sizes, and loss reductions are all known in
//! closed form and every fitted quantity can be checked exactly.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::influence::{
    accumulate_values, fit_quadratic, InfluenceError, InfluenceTrace, ParameterGroup, ProbeSet,
    QuadraticFit, ValueConvention, DEFAULT_MULTIPLIERS,
};
use crate::knapsack::{self, KnapsackError, KnapsackInstance};

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("model has no groups")]
    NoGroups,
    #[error("group {0:?} has zero dimension")]
    ZeroDimension(String),
    #[error("group {0:?} needs a positive curvature")]
    BadCurvature(String),
    #[error("group {name:?}: target length {got} does not match dimension {want}")]
    TargetLength {
        name: String,
        got: usize,
        want: usize,
    },
    #[error("duplicate group name {0:?}")]
    DuplicateGroup(String),
    #[error("unknown group {0:?}")]
    UnknownGroup(String),
    #[error("lazy period must be at least 1")]
    BadLazyPeriod,
    #[error("budget fraction must lie in (0, 1], got {0}")]
    BadBudget(f64),
    #[error("models do not share group names: {0}")]
    GroupNameMismatch(String),
    #[error(transparent)]
    Influence(#[from] InfluenceError),
    #[error(transparent)]
    Knapsack(#[from] KnapsackError),
}

/// One group of a synthetic model. `group.size` is the selection weight
/// (parameter count as reported to the knapsack), while `dim` is the actual
/// vector length simulated; keeping them independent lets fixtures plant
/// high influence in groups with a small weight share.
#[derive(Debug, Clone)]
pub struct GroupSpec {
    pub group: ParameterGroup,
    pub dim: usize,
    pub curvature: f64,
    pub target: Vec<f64>,
    /// Coefficient of an optional quartic perturbation `q * sum(d_i^4)`.
    pub quartic: f64,
}

impl GroupSpec {
    pub fn new(
        name: impl Into<String>,
        size: u64,
        curvature: f64,
        target: Vec<f64>,
    ) -> Result<Self, SimulatorError> {
        let group = ParameterGroup::new(name, size)?;
        if target.is_empty() {
            return Err(SimulatorError::ZeroDimension(group.name));
        }
        if curvature.is_nan() || curvature <= 0.0 {
            return Err(SimulatorError::BadCurvature(group.name));
        }
        Ok(Self {
            group,
            dim: target.len(),
            curvature,
            target,
            quartic: 0.0,
        })
    }

    pub fn with_quartic(mut self, quartic: f64) -> Self {
        self.quartic = quartic;
        self
    }
}

/// Separable synthetic model. Parameters start at the origin, so each
/// group's initial offset is its target vector.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    name: String,
    specs: Vec<GroupSpec>,
    params: Vec<Vec<f64>>,
    noise_sigma: f64,
    seed: u64,
    rng: ChaCha8Rng,
}

impl SyntheticModel {
    pub fn new(
        name: impl Into<String>,
        specs: Vec<GroupSpec>,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self, SimulatorError> {
        if specs.is_empty() {
            return Err(SimulatorError::NoGroups);
        }
        for (i, spec) in specs.iter().enumerate() {
            if spec.target.len() != spec.dim {
                return Err(SimulatorError::TargetLength {
                    name: spec.group.name.clone(),
                    got: spec.target.len(),
                    want: spec.dim,
                });
            }
            if specs[..i].iter().any(|s| s.group.name == spec.group.name) {
                return Err(SimulatorError::DuplicateGroup(spec.group.name.clone()));
            }
        }
        let params = specs.iter().map(|s| vec![0.0; s.dim]).collect();
        Ok(Self {
            name: name.into(),
            specs,
            params,
            noise_sigma,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_groups(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[GroupSpec] {
        &self.specs
    }

    pub fn groups(&self) -> Vec<ParameterGroup> {
        self.specs.iter().map(|s| s.group.clone()).collect()
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.group.name == name)
    }

    pub fn parameters(&self) -> &[Vec<f64>] {
        &self.params
    }

    fn group_loss_at(&self, index: usize, params: &[f64]) -> f64 {
        let spec = &self.specs[index];
        let mut quadratic = 0.0;
        let mut quartic = 0.0;
        for (p, t) in params.iter().zip(&spec.target) {
            let d = p - t;
            quadratic += d * d;
            if spec.quartic != 0.0 {
                quartic += d * d * d * d;
            }
        }
        0.5 * spec.curvature * quadratic + spec.quartic * quartic
    }

    /// Loss contribution of one group at the current parameters.
    pub fn group_loss(&self, index: usize) -> f64 {
        self.group_loss_at(index, &self.params[index])
    }

    /// Total loss; zero exactly when every group sits on its target.
    pub fn loss(&self) -> f64 {
        (0..self.specs.len()).map(|i| self.group_loss(i)).sum()
    }

    /// Per-group gradient of the loss, with optional additive Gaussian
    /// noise of scale `noise_sigma`. Noise draws advance the model RNG, so
    /// identical seeds and call sequences reproduce identical gradients.
    pub fn gradient(&mut self) -> Vec<Vec<f64>> {
        let mut grads = Vec::with_capacity(self.specs.len());
        for (spec, params) in self.specs.iter().zip(&self.params) {
            let mut g = Vec::with_capacity(spec.dim);
            for (p, t) in params.iter().zip(&spec.target) {
                let d = p - t;
                let mut gi = spec.curvature * d;
                if spec.quartic != 0.0 {
                    gi += 4.0 * spec.quartic * d * d * d;
                }
                g.push(gi);
            }
            if self.noise_sigma > 0.0 {
                for gi in &mut g {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    *gi += self.noise_sigma * z;
                }
            }
            grads.push(g);
        }
        grads
    }

    /// Loss deltas for probing one group at the default step multipliers.
    /// Probes are pure: only the perturbed loss is evaluated, the stored
    /// parameters are never touched.
    pub fn probe_losses(
        &self,
        gradient: &[Vec<f64>],
        group: &str,
        base_lr: f64,
    ) -> Result<ProbeSet, SimulatorError> {
        let index = self
            .group_index(group)
            .ok_or_else(|| SimulatorError::UnknownGroup(group.to_string()))?;
        let current = self.group_loss(index);
        let mut deltas = Vec::with_capacity(DEFAULT_MULTIPLIERS.len());
        let mut shifted = vec![0.0; self.specs[index].dim];
        for multiplier in DEFAULT_MULTIPLIERS {
            let eta = multiplier * base_lr;
            for ((s, p), g) in shifted
                .iter_mut()
                .zip(&self.params[index])
                .zip(&gradient[index])
            {
                *s = p - eta * g;
            }
            // Other groups are unchanged, so their contributions cancel in
            // the delta; only this group's loss difference remains.
            deltas.push(self.group_loss_at(index, &shifted) - current);
        }
        Ok(ProbeSet::new(
            base_lr,
            DEFAULT_MULTIPLIERS.to_vec(),
            deltas,
        )?)
    }
}

/// The set of trainable group names; everything else stays frozen.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TrainingMask {
    active: BTreeSet<String>,
}

impl TrainingMask {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn all(model: &SyntheticModel) -> Self {
        Self {
            active: model.specs.iter().map(|s| s.group.name.clone()).collect(),
        }
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            active: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.active.contains(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.active.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
}

/// Knobs of the training loop.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Probing period; `None` selects the default of 4K iterations for K
    /// groups, so the probing overhead stays O(1) per iteration.
    pub lazy_period: Option<u64>,
    /// Step size used by groups that have no valid fit yet.
    pub fallback_lr: f64,
    /// Update one active group per iteration instead of all of them.
    pub sequential: bool,
    /// Value convention used when accumulating knapsack values.
    pub convention: ValueConvention,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            lazy_period: None,
            fallback_lr: 1e-2,
            sequential: false,
            convention: ValueConvention::default(),
        }
    }
}

/// Everything observable about one training run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    /// Loss per iteration, including the starting loss (length T + 1).
    pub losses: Vec<f64>,
    pub trace: InfluenceTrace,
    pub final_parameters: Vec<Vec<f64>>,
    /// Fitted step-size history per group, as (iteration, step) pairs.
    pub per_group_lrs: BTreeMap<String, Vec<(u64, f64)>>,
}

impl RunRecord {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("losses include the initial loss")
    }

    /// Accumulated reduction values per group over the whole run.
    pub fn cumulative_values(&self, convention: ValueConvention) -> BTreeMap<String, f64> {
        accumulate_values(&self.trace, u64::MAX, convention)
    }
}

/// Trains the model for `iterations` steps with probing-derived step sizes.
///
/// On probing iterations (`t % lazy_period == 0`) every active group is
/// probed at four step sizes, a parabola is fitted, and groups passing the
/// gate refresh their optimal step; every iteration then applies
/// `w_k <- w_k - eta_k * g_k` to active groups only. Frozen groups never
/// move. Numerical divergence shows up as growing losses in the record,
/// never as a panic.
pub fn run_algorithm1(
    model: &mut SyntheticModel,
    iterations: u64,
    mask: &TrainingMask,
    options: &RunOptions,
) -> Result<RunRecord, SimulatorError> {
    for name in mask.names() {
        if model.group_index(name).is_none() {
            return Err(SimulatorError::UnknownGroup(name.to_string()));
        }
    }
    if options.lazy_period == Some(0) {
        return Err(SimulatorError::BadLazyPeriod);
    }
    let lazy_period = options
        .lazy_period
        .unwrap_or(4 * model.num_groups() as u64)
        .max(1);

    let active: Vec<usize> = (0..model.num_groups())
        .filter(|&i| mask.contains(&model.specs[i].group.name))
        .collect();

    let mut trace = InfluenceTrace::new(model.groups())?;
    let mut etas: Vec<Option<f64>> = vec![None; model.num_groups()];
    let mut per_group_lrs: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
    let mut losses = Vec::with_capacity(iterations as usize + 1);
    losses.push(model.loss());

    for t in 0..iterations {
        let gradient = model.gradient();

        let movers: &[usize] = if options.sequential && !active.is_empty() {
            std::slice::from_ref(&active[(t % active.len() as u64) as usize])
        } else {
            &active
        };

        if t % lazy_period == 0 && !movers.is_empty() {
            let mut fits: Vec<Option<QuadraticFit>> = vec![None; model.num_groups()];
            for &gi in movers {
                let name = model.specs[gi].group.name.clone();
                let base_lr = etas[gi].unwrap_or(options.fallback_lr);
                let probes = model.probe_losses(&gradient, &name, base_lr)?;
                if let Ok(fit) = fit_quadratic(&probes) {
                    if fit.valid {
                        let eta = fit.b / fit.a;
                        etas[gi] = Some(eta);
                        per_group_lrs.entry(name).or_default().push((t, eta));
                    }
                    fits[gi] = Some(fit);
                }
            }
            trace.push_iteration(t, fits)?;
        }

        for &gi in movers {
            let eta = etas[gi].unwrap_or(options.fallback_lr);
            for (p, g) in model.params[gi].iter_mut().zip(&gradient[gi]) {
                *p -= eta * g;
            }
        }
        losses.push(model.loss());
    }

    Ok(RunRecord {
        losses,
        trace,
        final_parameters: model.params.clone(),
        per_group_lrs,
    })
}

/// Short full-model run on the small model, greedy selection under the
/// budget, then a masked long run on the large model.
///
/// Knapsack values come from the small run's accumulated reductions while
/// weights are the large model's group sizes, so the selection transfers
/// across model scales. Returns the selected mask and the large run record.
pub fn run_adapeft(
    small: &mut SyntheticModel,
    large: &mut SyntheticModel,
    budget_fraction: f64,
    epsilon: f64,
    iterations: u64,
    options: &RunOptions,
) -> Result<(TrainingMask, RunRecord), SimulatorError> {
    if !(budget_fraction > 0.0 && budget_fraction <= 1.0) {
        return Err(SimulatorError::BadBudget(budget_fraction));
    }
    let small_names: BTreeSet<&str> = small.specs.iter().map(|s| s.group.name.as_str()).collect();
    let large_names: BTreeSet<&str> = large.specs.iter().map(|s| s.group.name.as_str()).collect();
    if small_names != large_names {
        let diff: Vec<&str> = small_names
            .symmetric_difference(&large_names)
            .copied()
            .collect();
        return Err(SimulatorError::GroupNameMismatch(diff.join(", ")));
    }

    let budget_iterations = (budget_fraction * iterations as f64).floor() as u64;
    let full = TrainingMask::all(small);
    let small_record = run_algorithm1(small, budget_iterations, &full, options)?;
    let values = small_record.cumulative_values(options.convention);

    let items: Vec<(String, f64, u64)> = large
        .specs
        .iter()
        .map(|spec| {
            (
                spec.group.name.clone(),
                values[&spec.group.name],
                spec.group.size,
            )
        })
        .collect();
    let instance = KnapsackInstance::new(items)?;
    let selection = knapsack::greedy_at_epsilon(&instance, epsilon)?;
    let mask = TrainingMask::from_names(
        selection
            .selected_names(&instance)
            .into_iter()
            .map(str::to_string),
    );

    let record = run_algorithm1(large, iterations, &mask, options)?;
    Ok((mask, record))
}

/// Selection values and weights of a finished run, ready for the solvers.
pub fn knapsack_from_trace(
    trace: &InfluenceTrace,
    convention: ValueConvention,
) -> Result<KnapsackInstance, SimulatorError> {
    let values = accumulate_values(trace, u64::MAX, convention);
    let items = trace
        .groups()
        .iter()
        .map(|g| (g.name.clone(), values[&g.name], g.size))
        .collect();
    Ok(KnapsackInstance::new(items)?)
}

pub mod presets {
    //! Built-in models with planted, analytically known influence patterns.

    use super::*;

    /// The two dominant groups of the `planted8` preset.
    pub const PLANTED8_TOP: [&str; 2] = ["g3", "g7"];
    /// Budget fraction that affords exactly the two planted groups.
    pub const PLANTED8_EPSILON: f64 = 0.01;

    pub fn names() -> &'static [&'static str] {
        &["planted8", "planted8-large", "triple", "frontier6"]
    }

    /// Builds a preset by name. `planted8` hides over 90% of the initial
    /// loss in two groups holding a tiny share of the weight; `triple` and
    /// `frontier6` have integer-exact per-group losses for golden tests.
    pub fn build(name: &str, noise_sigma: f64, seed: u64) -> Option<SyntheticModel> {
        let model = match name {
            "planted8" => planted8(name, 1, noise_sigma, seed),
            "planted8-large" => planted8(name, 10, noise_sigma, seed),
            // Per-group losses 10, 7, 5 with weights 4, 3, 2.
            "triple" => SyntheticModel::new(
                name,
                vec![
                    GroupSpec::new("g1", 4, 1.0, vec![4.0, 2.0]).unwrap(),
                    GroupSpec::new("g2", 3, 1.0, vec![1.0, 2.0, 3.0]).unwrap(),
                    GroupSpec::new("g3", 2, 1.0, vec![1.0, 3.0]).unwrap(),
                ],
                noise_sigma,
                seed,
            )
            .unwrap(),
            // Strictly decreasing value-to-weight ratios: losses
            // 32,16,8,4,2,1 over weights 4,4,4,8,8,8.
            "frontier6" => SyntheticModel::new(
                name,
                vec![
                    GroupSpec::new("f0", 4, 1.0, vec![8.0]).unwrap(),
                    GroupSpec::new("f1", 4, 1.0, vec![4.0, 4.0]).unwrap(),
                    GroupSpec::new("f2", 4, 1.0, vec![4.0]).unwrap(),
                    GroupSpec::new("f3", 8, 1.0, vec![2.0, 2.0]).unwrap(),
                    GroupSpec::new("f4", 8, 1.0, vec![2.0]).unwrap(),
                    GroupSpec::new("f5", 8, 1.0, vec![1.0, 1.0]).unwrap(),
                ],
                noise_sigma,
                seed,
            )
            .unwrap(),
            _ => return None,
        };
        Some(model)
    }

    fn planted8(name: &str, scale: usize, noise_sigma: f64, seed: u64) -> SyntheticModel {
        let specs = (0..8)
            .map(|i| {
                let group = format!("g{i}");
                if group == "g3" || group == "g7" {
                    // Loss 72 per group at scale 1, 4.5 per parameter-weight.
                    GroupSpec::new(group, 16 * scale as u64, 2.0, vec![3.0; 8 * scale]).unwrap()
                } else {
                    // Loss 2 per group at scale 1, ~0.0005 per weight.
                    GroupSpec::new(group, 4096 * scale as u64, 1.0, vec![1.0; 4 * scale]).unwrap()
                }
            })
            .collect();
        SyntheticModel::new(name, specs, noise_sigma, seed).unwrap()
    }
}
