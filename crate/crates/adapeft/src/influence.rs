//! Per-group influence estimation from forward-pass loss probes.
//!
//! A parameter group's one-step loss change along the gradient direction is
//! modelled as the origin-constrained parabola
//!
//! ```text
//! dL(eta) = -eta * b + (eta^2 / 2) * a
//! ```
//!
//! where `b` is the first directional derivative (gradient dotted with the
//! probe direction) and `a` is the directional curvature. Both scalars are
//! recovered by least squares from a handful of probed loss deltas, without
//! ever materializing full gradients or Hessians. Valid fits yield an
//! optimal step size `b / a` and a predicted loss reduction, which accumulate
//! into per-parameter influence (PPI) and its running sum (APPI).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// R^2 threshold a fit must clear to be trusted.
pub const R2_GATE: f64 = 0.99;

/// Relative floor on curvature: `a` must exceed `CURVATURE_FLOOR * |b|`
/// for a fit to be valid, so `b / a` cannot overflow.
pub const CURVATURE_FLOOR: f64 = 1e-12;

/// Default probe multipliers applied to the base step size.
pub const DEFAULT_MULTIPLIERS: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

#[derive(Debug, Error)]
pub enum InfluenceError {
    #[error("probe set needs at least 3 probes, got {0}")]
    TooFewProbes(usize),
    #[error("probe multipliers must be nonzero and pairwise distinct")]
    BadMultipliers,
    #[error("base step size must be positive, got {0}")]
    NonPositiveBaseLr(f64),
    #[error("probe multipliers and loss deltas differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate probe design: normal equations are singular")]
    SingularFit,
    #[error("group size must be at least 1")]
    EmptyGroup,
    #[error("optimal step size requested for an invalid fit")]
    InvalidFit,
    #[error("trace iterations must be strictly increasing")]
    NonMonotonicIterations,
    #[error("trace record shape does not match groups x iterations")]
    ShapeMismatch,
    #[error("duplicate group name {0:?}")]
    DuplicateGroup(String),
}

/// A named group of parameters. `size` is the parameter count and doubles
/// as the knapsack weight when groups compete for a trainable budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterGroup {
    pub name: String,
    pub size: u64,
}

impl ParameterGroup {
    pub fn new(name: impl Into<String>, size: u64) -> Result<Self, InfluenceError> {
        if size == 0 {
            return Err(InfluenceError::EmptyGroup);
        }
        Ok(Self {
            name: name.into(),
            size,
        })
    }
}

/// Loss deltas observed at a few step sizes along one group's gradient.
///
/// Probe `j` moves the group by `multipliers[j] * base_lr` along the
/// gradient and records `L(perturbed) - L(current)`. The zero step is not
/// probed: its delta is identically zero and the fitted model is constrained
/// through the origin instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    base_lr: f64,
    multipliers: Vec<f64>,
    loss_deltas: Vec<f64>,
}

impl ProbeSet {
    pub fn new(
        base_lr: f64,
        multipliers: Vec<f64>,
        loss_deltas: Vec<f64>,
    ) -> Result<Self, InfluenceError> {
        if base_lr.is_nan() || base_lr <= 0.0 {
            return Err(InfluenceError::NonPositiveBaseLr(base_lr));
        }
        if multipliers.len() < 3 {
            return Err(InfluenceError::TooFewProbes(multipliers.len()));
        }
        if multipliers.len() != loss_deltas.len() {
            return Err(InfluenceError::LengthMismatch(
                multipliers.len(),
                loss_deltas.len(),
            ));
        }
        for (i, m) in multipliers.iter().enumerate() {
            if *m == 0.0 || !m.is_finite() {
                return Err(InfluenceError::BadMultipliers);
            }
            if multipliers[..i].contains(m) {
                return Err(InfluenceError::BadMultipliers);
            }
        }
        Ok(Self {
            base_lr,
            multipliers,
            loss_deltas,
        })
    }

    pub fn base_lr(&self) -> f64 {
        self.base_lr
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn loss_deltas(&self) -> &[f64] {
        &self.loss_deltas
    }

    /// Actual step sizes probed, `multiplier * base_lr`.
    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.multipliers.iter().map(move |m| m * self.base_lr)
    }
}

/// Recovered parabola coefficients for one group at one iteration.
///
/// `b` estimates the first directional derivative, `a` the directional
/// curvature, both contracted to scalars along the probe direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub b: f64,
    pub a: f64,
    pub r2: f64,
    pub valid: bool,
}

impl QuadraticFit {
    /// Applies the validity gate: positive slope, positive curvature above
    /// the relative floor, and R^2 above [`R2_GATE`].
    pub fn gated(b: f64, a: f64, r2: f64) -> Self {
        let valid = b > 0.0 && a > 0.0 && a > CURVATURE_FLOOR * b.abs() && r2 > R2_GATE;
        Self { b, a, r2, valid }
    }
}

/// Which scalar a valid fit contributes as its loss-reduction value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueConvention {
    /// `b^2 / (2a)`: the exact minimum depth of the fitted parabola. Sums of
    /// these values are directly comparable to observed loss drops.
    #[default]
    Exact,
    /// `b^2 / a`: twice the parabola minimum (the first-order term of the
    /// drop at the fitted step). Rankings are identical to `Exact`.
    Doubled,
}

/// Fits `dL(eta) = -eta*b + (eta^2/2)*a` to the probe deltas by ordinary
/// least squares. The model passes through the origin by construction.
///
/// Returns an error only if the 2x2 normal system is singular, which cannot
/// happen for a `ProbeSet` that satisfied its constructor checks.
pub fn fit_quadratic(probes: &ProbeSet) -> Result<QuadraticFit, InfluenceError> {
    // Basis functions u(eta) = -eta and v(eta) = eta^2 / 2.
    let mut s_uu = 0.0;
    let mut s_uv = 0.0;
    let mut s_vv = 0.0;
    let mut s_uy = 0.0;
    let mut s_vy = 0.0;
    for (eta, y) in probes.steps().zip(probes.loss_deltas.iter()) {
        let u = -eta;
        let v = eta * eta / 2.0;
        s_uu += u * u;
        s_uv += u * v;
        s_vv += v * v;
        s_uy += u * y;
        s_vy += v * y;
    }
    let det = s_uu * s_vv - s_uv * s_uv;
    // Relative singularity test; the Gram determinant is nonnegative.
    if !det.is_finite() || det <= 1e-12 * s_uu * s_vv {
        return Err(InfluenceError::SingularFit);
    }
    let b = (s_uy * s_vv - s_vy * s_uv) / det;
    let a = (s_vy * s_uu - s_uy * s_uv) / det;

    let n = probes.loss_deltas.len() as f64;
    let mean = probes.loss_deltas.iter().sum::<f64>() / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (eta, y) in probes.steps().zip(probes.loss_deltas.iter()) {
        let predicted = -eta * b + eta * eta / 2.0 * a;
        ss_res += (y - predicted) * (y - predicted);
        ss_tot += (y - mean) * (y - mean);
    }
    let mut r2 = 1.0 - ss_res / ss_tot;
    if r2.is_nan() {
        // 0/0: constant deltas matched exactly (the all-zero case).
        r2 = 1.0;
    }
    Ok(QuadraticFit::gated(b, a, r2))
}

/// Step size minimizing the fitted parabola, `b / a`.
pub fn optimal_lr(fit: &QuadraticFit) -> Result<f64, InfluenceError> {
    if !fit.valid {
        return Err(InfluenceError::InvalidFit);
    }
    Ok(fit.b / fit.a)
}

/// Predicted loss reduction of one optimal step. Invalid fits contribute 0.
pub fn reduction_value(fit: &QuadraticFit, convention: ValueConvention) -> f64 {
    if !fit.valid {
        return 0.0;
    }
    match convention {
        ValueConvention::Exact => fit.b * fit.b / (2.0 * fit.a),
        ValueConvention::Doubled => fit.b * fit.b / fit.a,
    }
}

/// Per-parameter influence: the reduction value divided by group size.
pub fn ppi(fit: &QuadraticFit, group: &ParameterGroup, convention: ValueConvention) -> f64 {
    reduction_value(fit, convention) / group.size as f64
}

/// Time series of fit results per (group, iteration). Iterations are the
/// probe iterations of a run; a `None` record means the group was not probed
/// there, while an invalid record means the fit was rejected by the gate.
/// Both contribute zero to every accumulation.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceTrace {
    groups: Vec<ParameterGroup>,
    iterations: Vec<u64>,
    // records[group_index][iteration_index]
    records: Vec<Vec<Option<QuadraticFit>>>,
}

impl InfluenceTrace {
    pub fn new(groups: Vec<ParameterGroup>) -> Result<Self, InfluenceError> {
        for (i, g) in groups.iter().enumerate() {
            if groups[..i].iter().any(|other| other.name == g.name) {
                return Err(InfluenceError::DuplicateGroup(g.name.clone()));
            }
        }
        let records = vec![Vec::new(); groups.len()];
        Ok(Self {
            groups,
            iterations: Vec::new(),
            records,
        })
    }

    /// Appends one probing round. `fits` must hold one entry per group, in
    /// group order; `None` marks groups that were not probed this round.
    pub fn push_iteration(
        &mut self,
        iteration: u64,
        fits: Vec<Option<QuadraticFit>>,
    ) -> Result<(), InfluenceError> {
        if let Some(&last) = self.iterations.last() {
            if iteration <= last {
                return Err(InfluenceError::NonMonotonicIterations);
            }
        }
        if fits.len() != self.groups.len() {
            return Err(InfluenceError::ShapeMismatch);
        }
        self.iterations.push(iteration);
        for (row, fit) in self.records.iter_mut().zip(fits) {
            row.push(fit);
        }
        Ok(())
    }

    pub fn groups(&self) -> &[ParameterGroup] {
        &self.groups
    }

    pub fn iterations(&self) -> &[u64] {
        &self.iterations
    }

    pub fn record(&self, group_index: usize, iteration_index: usize) -> Option<&QuadraticFit> {
        self.records
            .get(group_index)
            .and_then(|row| row.get(iteration_index))
            .and_then(|r| r.as_ref())
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }
}

/// Accumulated PPI per group over all recorded iterations `<= upto_iteration`.
pub fn accumulate_appi(
    trace: &InfluenceTrace,
    upto_iteration: u64,
    convention: ValueConvention,
) -> BTreeMap<String, f64> {
    accumulate_by(trace, upto_iteration, |fit, group| {
        ppi(fit, group, convention)
    })
}

/// Accumulated raw reduction values per group (not divided by group size),
/// over all recorded iterations `<= upto_iteration`. These sums are the
/// knapsack values and are directly comparable to observed loss drops.
pub fn accumulate_values(
    trace: &InfluenceTrace,
    upto_iteration: u64,
    convention: ValueConvention,
) -> BTreeMap<String, f64> {
    accumulate_by(trace, upto_iteration, |fit, _| {
        reduction_value(fit, convention)
    })
}

fn accumulate_by(
    trace: &InfluenceTrace,
    upto_iteration: u64,
    term: impl Fn(&QuadraticFit, &ParameterGroup) -> f64,
) -> BTreeMap<String, f64> {
    let mut totals = BTreeMap::new();
    for (gi, group) in trace.groups.iter().enumerate() {
        let mut sum = 0.0;
        for (ii, &iteration) in trace.iterations.iter().enumerate() {
            if iteration > upto_iteration {
                break;
            }
            if let Some(fit) = trace.record(gi, ii) {
                sum += term(fit, group);
            }
        }
        totals.insert(group.name.clone(), sum);
    }
    totals
}
