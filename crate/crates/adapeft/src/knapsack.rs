//! 0-1 knapsack solvers over parameter groups, plus Pareto-frontier
//! enumeration of the (value, weight) trade-off.
//!
//! Groups become items: the accumulated loss-reduction value is the item
//! value and the parameter count is the integer weight. A budget fraction
//! `epsilon` caps the selectable weight at `floor(epsilon * total_weight)`.
//! All solvers break ties the same way — maximum value, then minimum
//! weight, then lexicographically smallest mask — so identical inputs give
//! identical selections, and value-tied optima resolve to the selection
//! with the fewest trainable parameters, which is never dominated.

use serde::Serialize;
use thiserror::Error;

/// Item-count guard for the 2^K solvers.
pub const MAX_EXHAUSTIVE_ITEMS: usize = 25;
/// Item-count guard for meet-in-the-middle (two 2^(K/2) halves).
pub const MAX_MITM_ITEMS: usize = 40;
/// Largest admissible DP table, in capacity cells.
pub const MAX_DP_CELLS: u64 = 1 << 24;

#[derive(Debug, Error)]
pub enum KnapsackError {
    #[error("{count} items exceed the {limit}-item guard for exhaustive search; use the dp or greedy solver")]
    TooManyItems { count: usize, limit: usize },
    #[error("scaled capacity {cells} exceeds the {limit}-cell table guard; rerun with a larger weight divisor")]
    CapacityTooLarge { cells: u64, limit: u64 },
    #[error("epsilon must lie in [0, 1], got {0}")]
    BadEpsilon(f64),
    #[error("weight divisor must be at least 1")]
    BadDivisor,
    #[error("instance has no items")]
    EmptyInstance,
    #[error("item {0:?} has zero weight; weights are positive parameter counts")]
    ZeroWeight(String),
    #[error("duplicate item name {0:?}")]
    DuplicateItem(String),
    #[error("no candidates to refine")]
    EmptyCandidates,
    #[error("candidate exceeds the epsilon capacity")]
    InfeasibleCandidate,
    #[error("selection mask length {got} does not match item count {want}")]
    MaskLength { got: usize, want: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnapsackItem {
    pub name: String,
    pub value: f64,
    pub weight: u64,
}

/// An immutable selection problem. Values are clamped to be nonnegative at
/// construction; a negative value can never help a maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackInstance {
    items: Vec<KnapsackItem>,
    total_weight: u64,
}

impl KnapsackInstance {
    pub fn new(items: Vec<(String, f64, u64)>) -> Result<Self, KnapsackError> {
        if items.is_empty() {
            return Err(KnapsackError::EmptyInstance);
        }
        let mut built = Vec::with_capacity(items.len());
        let mut total_weight = 0u64;
        for (name, value, weight) in items {
            if weight == 0 {
                return Err(KnapsackError::ZeroWeight(name));
            }
            if built.iter().any(|it: &KnapsackItem| it.name == name) {
                return Err(KnapsackError::DuplicateItem(name));
            }
            let value = if value < 0.0 {
                log::warn!("clamping negative value {value} of item {name:?} to 0");
                0.0
            } else {
                value
            };
            total_weight += weight;
            built.push(KnapsackItem {
                name,
                value,
                weight,
            });
        }
        Ok(Self {
            items: built,
            total_weight,
        })
    }

    pub fn items(&self) -> &[KnapsackItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    /// Weight budget for a fraction `epsilon`: `floor(epsilon * total)`.
    /// Flooring can only tighten the constraint, never violate it.
    pub fn capacity(&self, epsilon: f64) -> Result<u64, KnapsackError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(KnapsackError::BadEpsilon(epsilon));
        }
        Ok((epsilon * self.total_weight as f64).floor() as u64)
    }
}

/// A binary selection with its recomputable aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub mask: Vec<bool>,
    pub total_value: f64,
    pub total_weight: u64,
    /// `total_weight / instance_total_weight`.
    pub fraction: f64,
}

impl SelectionResult {
    /// Builds a result from a mask, summing values in item order so equal
    /// masks always reproduce bit-identical totals.
    pub fn from_mask(inst: &KnapsackInstance, mask: Vec<bool>) -> Result<Self, KnapsackError> {
        if mask.len() != inst.len() {
            return Err(KnapsackError::MaskLength {
                got: mask.len(),
                want: inst.len(),
            });
        }
        let mut total_value = 0.0;
        let mut total_weight = 0u64;
        for (item, &selected) in inst.items.iter().zip(&mask) {
            if selected {
                total_value += item.value;
                total_weight += item.weight;
            }
        }
        Ok(Self {
            mask,
            total_value,
            total_weight,
            fraction: total_weight as f64 / inst.total_weight as f64,
        })
    }

    pub fn selected_names<'a>(&self, inst: &'a KnapsackInstance) -> Vec<&'a str> {
        inst.items
            .iter()
            .zip(&self.mask)
            .filter(|(_, &sel)| sel)
            .map(|(item, _)| item.name.as_str())
            .collect()
    }
}

/// One point of a (value, weight) frontier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub selection: SelectionResult,
    pub dominated: bool,
}

/// `s1` dominates `s2` when it has at least the value for at most the
/// weight, strictly better in one of the two.
pub fn dominates(s1: &SelectionResult, s2: &SelectionResult) -> bool {
    s1.total_value >= s2.total_value
        && s1.total_weight <= s2.total_weight
        && (s1.total_value > s2.total_value || s1.total_weight < s2.total_weight)
}

// Shared tie-break: larger value, then smaller weight, then the
// lexicographically smallest mask (bit i of a mask word is item i).
fn mask_lex_less(m1: u64, m2: u64) -> bool {
    let diff = m1 ^ m2;
    if diff == 0 {
        return false;
    }
    let first = diff.trailing_zeros();
    (m1 >> first) & 1 == 0
}

fn candidate_better(value: f64, weight: u64, mask: u64, best: Option<&(f64, u64, u64)>) -> bool {
    match best {
        None => true,
        Some(&(bv, bw, bm)) => {
            value > bv
                || (value == bv && weight < bw)
                || (value == bv && weight == bw && mask_lex_less(mask, bm))
        }
    }
}

fn mask_bits_to_vec(mask: u64, len: usize) -> Vec<bool> {
    (0..len).map(|i| (mask >> i) & 1 == 1).collect()
}

fn subset_totals(inst: &KnapsackInstance, mask: u64) -> (f64, u64) {
    let mut value = 0.0;
    let mut weight = 0u64;
    let mut bits = mask;
    while bits != 0 {
        let i = bits.trailing_zeros() as usize;
        value += inst.items[i].value;
        weight += inst.items[i].weight;
        bits &= bits - 1;
    }
    (value, weight)
}

fn guard_exhaustive(inst: &KnapsackInstance) -> Result<(), KnapsackError> {
    if inst.len() > MAX_EXHAUSTIVE_ITEMS {
        return Err(KnapsackError::TooManyItems {
            count: inst.len(),
            limit: MAX_EXHAUSTIVE_ITEMS,
        });
    }
    Ok(())
}

/// Enumerates all 2^K subsets and returns the refined optimum: maximum
/// value within the budget, with weight-minimal (then lexicographic)
/// tie-breaking. The weight tie-break makes the result Pareto optimal.
pub fn solve_exhaustive(
    inst: &KnapsackInstance,
    epsilon: f64,
) -> Result<SelectionResult, KnapsackError> {
    guard_exhaustive(inst)?;
    let capacity = inst.capacity(epsilon)?;
    let mut best: Option<(f64, u64, u64)> = None;
    for mask in 0..1u64 << inst.len() {
        let (value, weight) = subset_totals(inst, mask);
        if weight <= capacity && candidate_better(value, weight, mask, best.as_ref()) {
            best = Some((value, weight, mask));
        }
    }
    let (_, _, mask) = best.expect("the empty subset is always feasible");
    SelectionResult::from_mask(inst, mask_bits_to_vec(mask, inst.len()))
}

/// All feasible selections attaining the maximum value, in mask order.
/// This is the unrefined argmax set; it may contain dominated members.
pub fn enumerate_optima(
    inst: &KnapsackInstance,
    epsilon: f64,
) -> Result<Vec<SelectionResult>, KnapsackError> {
    guard_exhaustive(inst)?;
    let capacity = inst.capacity(epsilon)?;
    let mut best_value = f64::NEG_INFINITY;
    for mask in 0..1u64 << inst.len() {
        let (value, weight) = subset_totals(inst, mask);
        if weight <= capacity && value > best_value {
            best_value = value;
        }
    }
    let mut optima = Vec::new();
    for mask in 0..1u64 << inst.len() {
        let (value, weight) = subset_totals(inst, mask);
        if weight <= capacity && value == best_value {
            optima.push(SelectionResult::from_mask(
                inst,
                mask_bits_to_vec(mask, inst.len()),
            )?);
        }
    }
    Ok(optima)
}

/// Exact dynamic program over the weight budget, divisor 1.
pub fn solve_dp(inst: &KnapsackInstance, epsilon: f64) -> Result<SelectionResult, KnapsackError> {
    solve_dp_scaled(inst, epsilon, 1)
}

/// Dynamic program with weights coarsened by `divisor`.
///
/// Scaled weights are rounded up, so any selection feasible in the scaled
/// problem is feasible in the original one; the cost of coarsening is that
/// some feasible selections become unreachable and the result can be
/// suboptimal. Divisor 1 is exact.
pub fn solve_dp_scaled(
    inst: &KnapsackInstance,
    epsilon: f64,
    divisor: u64,
) -> Result<SelectionResult, KnapsackError> {
    if divisor == 0 {
        return Err(KnapsackError::BadDivisor);
    }
    let capacity = inst.capacity(epsilon)?;
    let scaled_capacity = capacity / divisor;
    let cells = scaled_capacity + 1;
    if cells > MAX_DP_CELLS {
        return Err(KnapsackError::CapacityTooLarge {
            cells,
            limit: MAX_DP_CELLS,
        });
    }
    let k = inst.len();
    let cells = cells as usize;
    let mut dp_value = vec![0.0f64; cells];
    let mut dp_weight = vec![0u64; cells];
    let words_per_row = cells.div_ceil(64);
    let mut take = vec![0u64; k * words_per_row];

    // Items are processed from last to first so that on exact (value,
    // weight) ties the kept cell excludes the lowest-indexed items.
    for (pass, index) in (0..k).rev().enumerate() {
        let item = &inst.items[index];
        let w = item.weight.div_ceil(divisor) as usize;
        if w > cells - 1 {
            continue;
        }
        let row = &mut take[pass * words_per_row..(pass + 1) * words_per_row];
        for cap in (w..cells).rev() {
            let cand_value = dp_value[cap - w] + item.value;
            let cand_weight = dp_weight[cap - w] + w as u64;
            let better = cand_value > dp_value[cap]
                || (cand_value == dp_value[cap] && cand_weight < dp_weight[cap]);
            if better {
                dp_value[cap] = cand_value;
                dp_weight[cap] = cand_weight;
                row[cap / 64] |= 1 << (cap % 64);
            }
        }
    }

    let mut mask = vec![false; k];
    let mut cap = cells - 1;
    for (pass, index) in (0..k).rev().enumerate().rev() {
        let row = &take[pass * words_per_row..(pass + 1) * words_per_row];
        if row[cap / 64] >> (cap % 64) & 1 == 1 {
            mask[index] = true;
            cap -= inst.items[index].weight.div_ceil(divisor) as usize;
        }
    }
    SelectionResult::from_mask(inst, mask)
}

/// Meet-in-the-middle exact solver for up to [`MAX_MITM_ITEMS`] items.
pub fn solve_mitm(inst: &KnapsackInstance, epsilon: f64) -> Result<SelectionResult, KnapsackError> {
    if inst.len() > MAX_MITM_ITEMS {
        return Err(KnapsackError::TooManyItems {
            count: inst.len(),
            limit: MAX_MITM_ITEMS,
        });
    }
    let capacity = inst.capacity(epsilon)?;
    let split = inst.len() / 2;
    let right_len = inst.len() - split;

    // Enumerate the right half and reduce to the best candidate per weight.
    let mut right: Vec<(u64, f64, u64)> = Vec::with_capacity(1 << right_len);
    for rmask in 0..1u64 << right_len {
        let mut value = 0.0;
        let mut weight = 0u64;
        for i in 0..right_len {
            if (rmask >> i) & 1 == 1 {
                value += inst.items[split + i].value;
                weight += inst.items[split + i].weight;
            }
        }
        if weight <= capacity {
            right.push((weight, value, rmask));
        }
    }
    right.sort_by_key(|entry| entry.0);
    // Prefix-fold: entry i holds the best candidate among weights <= right[i].0.
    let mut folded: Vec<(u64, (f64, u64, u64))> = Vec::with_capacity(right.len());
    let mut best: Option<(f64, u64, u64)> = None;
    for (weight, value, rmask) in right {
        if candidate_better(value, weight, rmask, best.as_ref()) {
            best = Some((value, weight, rmask));
        }
        let entry = best.unwrap();
        match folded.last_mut() {
            Some(last) if last.0 == weight => last.1 = entry,
            _ => folded.push((weight, entry)),
        }
    }

    let mut overall: Option<(f64, u64, u64)> = None;
    for lmask in 0..1u64 << split {
        let mut lvalue = 0.0;
        let mut lweight = 0u64;
        for i in 0..split {
            if (lmask >> i) & 1 == 1 {
                lvalue += inst.items[i].value;
                lweight += inst.items[i].weight;
            }
        }
        if lweight > capacity {
            continue;
        }
        let budget = capacity - lweight;
        // Largest folded entry with weight <= budget.
        let idx = folded.partition_point(|e| e.0 <= budget);
        if idx == 0 {
            continue;
        }
        let (rvalue, rweight, rmask) = folded[idx - 1].1;
        let mask = lmask | (rmask << split);
        let value = lvalue + rvalue;
        let weight = lweight + rweight;
        if candidate_better(value, weight, mask, overall.as_ref()) {
            overall = Some((value, weight, mask));
        }
    }
    let (_, _, mask) = overall.expect("the empty subset is always feasible");
    SelectionResult::from_mask(inst, mask_bits_to_vec(mask, inst.len()))
}

/// Sorts items by value-to-weight ratio (descending; ties to the lighter
/// item, then by name) and returns the K nested prefix selections.
pub fn solve_greedy(inst: &KnapsackInstance) -> Vec<SelectionResult> {
    let mut order: Vec<usize> = (0..inst.len()).collect();
    order.sort_by(|&i, &j| {
        let a = &inst.items[i];
        let b = &inst.items[j];
        let ra = a.value / a.weight as f64;
        let rb = b.value / b.weight as f64;
        rb.partial_cmp(&ra)
            .expect("finite ratios")
            .then_with(|| a.weight.cmp(&b.weight))
            .then_with(|| a.name.cmp(&b.name))
    });
    let mut mask = vec![false; inst.len()];
    let mut prefixes = Vec::with_capacity(inst.len());
    for &index in &order {
        mask[index] = true;
        prefixes.push(
            SelectionResult::from_mask(inst, mask.clone()).expect("mask built from instance"),
        );
    }
    prefixes
}

/// Applies the budget-interval rule to the greedy prefixes: the selected
/// prefix is the largest one whose weight fraction does not exceed
/// `epsilon`; if even the first prefix is too heavy, nothing is selected.
pub fn greedy_at_epsilon(
    inst: &KnapsackInstance,
    epsilon: f64,
) -> Result<SelectionResult, KnapsackError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(KnapsackError::BadEpsilon(epsilon));
    }
    let mut chosen = SelectionResult::from_mask(inst, vec![false; inst.len()])?;
    for prefix in solve_greedy(inst) {
        if prefix.fraction <= epsilon {
            chosen = prefix;
        } else {
            break;
        }
    }
    Ok(chosen)
}

/// Among the candidates attaining the maximum value, returns the one with
/// minimum weight (mask order breaking exact ties). When the candidates are
/// the full feasible argmax set, the result is undominated.
pub fn refine_pareto(
    inst: &KnapsackInstance,
    epsilon: f64,
    candidates: &[SelectionResult],
) -> Result<SelectionResult, KnapsackError> {
    if candidates.is_empty() {
        return Err(KnapsackError::EmptyCandidates);
    }
    let capacity = inst.capacity(epsilon)?;
    let mut best: Option<&SelectionResult> = None;
    for cand in candidates {
        if cand.mask.len() != inst.len() {
            return Err(KnapsackError::MaskLength {
                got: cand.mask.len(),
                want: inst.len(),
            });
        }
        if cand.total_weight > capacity {
            return Err(KnapsackError::InfeasibleCandidate);
        }
        let better = match best {
            None => true,
            Some(b) => {
                cand.total_value > b.total_value
                    || (cand.total_value == b.total_value && cand.total_weight < b.total_weight)
                    || (cand.total_value == b.total_value
                        && cand.total_weight == b.total_weight
                        && cand.mask < b.mask)
            }
        };
        if better {
            best = Some(cand);
        }
    }
    Ok(best.expect("nonempty candidates").clone())
}

/// Enumerates all 2^K subsets and returns the undominated (value, weight)
/// points, weight ascending with strictly increasing value. Coincident
/// points collapse to the lexicographically smallest mask.
pub fn pareto_frontier(inst: &KnapsackInstance) -> Result<Vec<ParetoPoint>, KnapsackError> {
    guard_exhaustive(inst)?;
    // Best candidate at each distinct weight.
    let mut by_weight: std::collections::BTreeMap<u64, (f64, u64)> =
        std::collections::BTreeMap::new();
    for mask in 0..1u64 << inst.len() {
        let (value, weight) = subset_totals(inst, mask);
        match by_weight.get_mut(&weight) {
            None => {
                by_weight.insert(weight, (value, mask));
            }
            Some(entry) => {
                if value > entry.0 || (value == entry.0 && mask_lex_less(mask, entry.1)) {
                    *entry = (value, mask);
                }
            }
        }
    }
    let mut frontier = Vec::new();
    let mut best_value = f64::NEG_INFINITY;
    for (_, (value, mask)) in by_weight {
        if value > best_value {
            best_value = value;
            frontier.push(ParetoPoint {
                selection: SelectionResult::from_mask(inst, mask_bits_to_vec(mask, inst.len()))?,
                dominated: false,
            });
        }
    }
    Ok(frontier)
}

/// The K+1 greedy prefix points (including the empty selection), with
/// dominance computed only among themselves.
pub fn greedy_frontier(inst: &KnapsackInstance) -> Vec<ParetoPoint> {
    let mut selections =
        vec![SelectionResult::from_mask(inst, vec![false; inst.len()]).expect("empty mask")];
    selections.extend(solve_greedy(inst));
    selections
        .iter()
        .map(|sel| ParetoPoint {
            selection: sel.clone(),
            dominated: selections.iter().any(|other| dominates(other, sel)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn instance(values: &[f64], weights: &[u64]) -> KnapsackInstance {
        let items = values
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (&v, &w))| (format!("g{}", i + 1), v, w))
            .collect();
        KnapsackInstance::new(items).unwrap()
    }

    fn random_instance(rng: &mut StdRng, max_items: usize) -> (KnapsackInstance, f64) {
        let k = rng.gen_range(1..=max_items);
        let items = (0..k)
            .map(|i| {
                (
                    format!("g{i}"),
                    rng.gen_range(0.0..1.0) + f64::MIN_POSITIVE,
                    rng.gen_range(1..=100u64),
                )
            })
            .collect();
        (
            KnapsackInstance::new(items).unwrap(),
            rng.gen_range(0.0..1.0),
        )
    }

    #[test]
    fn dominates_examples() {
        let inst = instance(&[5.0, 0.0], &[2, 1]);
        let mk = |value: f64, weight: u64| SelectionResult {
            mask: vec![false, false],
            total_value: value,
            total_weight: weight,
            fraction: weight as f64 / inst.total_weight() as f64,
        };
        assert!(dominates(&mk(5.0, 2), &mk(5.0, 3)));
        assert!(!dominates(&mk(5.0, 2), &mk(5.0, 2)));
        assert!(!dominates(&mk(4.0, 2), &mk(5.0, 3)));
        assert!(!dominates(&mk(5.0, 3), &mk(4.0, 2)));
    }

    #[test]
    fn exhaustive_small_example() {
        let inst = instance(&[10.0, 7.0, 5.0], &[4, 3, 2]);
        // floor(0.6 * 9) = 5
        let result = solve_exhaustive(&inst, 0.6).unwrap();
        assert_eq!(result.mask, vec![false, true, true]);
        assert_eq!(result.total_value, 12.0);
        assert_eq!(result.total_weight, 5);
    }

    #[test]
    fn exhaustive_zero_budget_is_empty() {
        let inst = instance(&[10.0, 7.0, 5.0], &[4, 3, 2]);
        let result = solve_exhaustive(&inst, 0.0).unwrap();
        assert!(result.mask.iter().all(|&b| !b));
        assert_eq!(result.total_value, 0.0);
    }

    #[test]
    fn exhaustive_full_budget_takes_everything_positive() {
        let inst = instance(&[10.0, 7.0, 5.0], &[4, 3, 2]);
        let result = solve_exhaustive(&inst, 1.0).unwrap();
        assert_eq!(result.mask, vec![true, true, true]);
    }

    #[test]
    fn exhaustive_guard_trips() {
        let values = vec![1.0; 26];
        let weights = vec![1u64; 26];
        let inst = instance(&values, &weights);
        assert!(matches!(
            solve_exhaustive(&inst, 0.5),
            Err(KnapsackError::TooManyItems { count: 26, .. })
        ));
    }

    #[test]
    fn dp_matches_exhaustive_on_fixture() {
        let inst = instance(&[10.0, 7.0, 5.0], &[4, 3, 2]);
        let dp = solve_dp(&inst, 0.6).unwrap();
        assert_eq!(dp.total_value, 12.0);
        assert_eq!(dp.total_weight, 5);
    }

    #[test]
    fn dp_single_heavy_item_gives_empty_mask() {
        let inst = instance(&[10.0], &[100]);
        let dp = solve_dp(&inst, 0.5).unwrap();
        assert_eq!(dp.mask, vec![false]);
    }

    #[test]
    fn dp_agrees_with_exhaustive_on_random_instances() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..120 {
            let (inst, epsilon) = random_instance(&mut rng, 12);
            let ex = solve_exhaustive(&inst, epsilon).unwrap();
            let dp = solve_dp(&inst, epsilon).unwrap();
            assert_eq!(
                dp.total_value, ex.total_value,
                "instance {inst:?} eps {epsilon}"
            );
            assert!(dp.total_weight <= inst.capacity(epsilon).unwrap());
        }
    }

    #[test]
    fn dp_scaled_stays_feasible() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..60 {
            let (inst, epsilon) = random_instance(&mut rng, 12);
            let exact = solve_dp(&inst, epsilon).unwrap();
            let coarse = solve_dp_scaled(&inst, epsilon, 7).unwrap();
            assert!(coarse.total_weight <= inst.capacity(epsilon).unwrap());
            assert!(coarse.total_value <= exact.total_value + 1e-12);
        }
    }

    #[test]
    fn dp_capacity_guard_trips() {
        let inst = instance(&[1.0], &[u64::MAX / 2]);
        let err = solve_dp(&inst, 1.0).unwrap_err();
        assert!(matches!(err, KnapsackError::CapacityTooLarge { .. }));
        // A big enough divisor brings it back in range.
        assert!(solve_dp_scaled(&inst, 1.0, u64::MAX / 4).is_ok());
    }

    #[test]
    fn mitm_agrees_with_exhaustive_on_random_instances() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..120 {
            let (inst, epsilon) = random_instance(&mut rng, 14);
            let ex = solve_exhaustive(&inst, epsilon).unwrap();
            let mitm = solve_mitm(&inst, epsilon).unwrap();
            assert_eq!(mitm.total_value, ex.total_value);
            assert_eq!(mitm.total_weight, ex.total_weight);
        }
    }

    #[test]
    fn mitm_guard_trips() {
        let values = vec![1.0; 41];
        let weights = vec![1u64; 41];
        let inst = instance(&values, &weights);
        assert!(matches!(
            solve_mitm(&inst, 0.5),
            Err(KnapsackError::TooManyItems { count: 41, .. })
        ));
    }

    #[test]
    fn greedy_ratio_order_and_prefix_sums() {
        let inst = instance(&[8.0, 6.0, 3.0], &[2, 3, 3]);
        let prefixes = solve_greedy(&inst);
        let summary: Vec<(f64, u64)> = prefixes
            .iter()
            .map(|p| (p.total_value, p.total_weight))
            .collect();
        assert_eq!(summary, vec![(8.0, 2), (14.0, 5), (17.0, 8)]);
    }

    #[test]
    fn greedy_single_item() {
        let inst = instance(&[3.0], &[2]);
        let prefixes = solve_greedy(&inst);
        assert_eq!(prefixes.len(), 1);
        assert_eq!(prefixes[0].mask, vec![true]);
    }

    #[test]
    fn greedy_equal_ratios_prefer_lighter() {
        // Ratios are both 2.0; the lighter item must come first.
        let inst = instance(&[8.0, 4.0], &[4, 2]);
        let prefixes = solve_greedy(&inst);
        assert_eq!(prefixes[0].mask, vec![false, true]);
    }

    #[test]
    fn greedy_prefixes_are_nested_and_never_beat_exhaustive() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..60 {
            let (inst, _) = random_instance(&mut rng, 10);
            let prefixes = solve_greedy(&inst);
            for window in prefixes.windows(2) {
                for (a, b) in window[0].mask.iter().zip(&window[1].mask) {
                    assert!(!a | b, "prefixes must be nested");
                }
                assert!(window[0].total_weight < window[1].total_weight);
            }
            for prefix in &prefixes {
                // Epsilon chosen so floor(eps * total) is exactly the
                // prefix weight despite float rounding of the fraction.
                let epsilon = (prefix.total_weight as f64 + 0.5) / inst.total_weight() as f64;
                let ex = solve_exhaustive(&inst, epsilon.min(1.0)).unwrap();
                assert!(prefix.total_value <= ex.total_value + 1e-12);
            }
        }
    }

    #[test]
    fn each_prefix_owns_its_fraction_interval() {
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..40 {
            let (inst, _) = random_instance(&mut rng, 8);
            let prefixes = solve_greedy(&inst);
            let bounds: Vec<f64> = prefixes
                .iter()
                .map(|p| p.fraction)
                .chain([1.0])
                .collect();
            for (k, prefix) in prefixes.iter().enumerate() {
                // Any epsilon inside [fraction_k, fraction_{k+1}) selects
                // exactly prefix k.
                let eps = (bounds[k] + bounds[k + 1]) / 2.0;
                let chosen = greedy_at_epsilon(&inst, eps).unwrap();
                assert_eq!(&chosen, prefix);
                let at_lower = greedy_at_epsilon(&inst, bounds[k]).unwrap();
                assert_eq!(&at_lower, prefix);
            }
        }
    }

    #[test]
    fn greedy_epsilon_interval_rule() {
        let inst = instance(&[8.0, 6.0, 3.0], &[2, 3, 3]);
        // fractions: 0.25, 0.625, 1.0
        let sel = greedy_at_epsilon(&inst, 0.7).unwrap();
        assert_eq!(sel.total_weight, 5);
        let none = greedy_at_epsilon(&inst, 0.1).unwrap();
        assert_eq!(none.total_weight, 0);
        let all = greedy_at_epsilon(&inst, 1.0).unwrap();
        assert_eq!(all.total_weight, 8);
    }

    #[test]
    fn refine_prefers_lighter_optimum() {
        // Two value-5 items; capacity 3 admits either alone. The heavier
        // one is value-optimal yet dominated.
        let inst = instance(&[5.0, 5.0], &[2, 3]);
        let optima = enumerate_optima(&inst, 0.6).unwrap();
        assert_eq!(optima.len(), 2);
        assert!(optima
            .iter()
            .any(|o| optima.iter().any(|p| dominates(p, o))));
        let refined = refine_pareto(&inst, 0.6, &optima).unwrap();
        assert_eq!(refined.mask, vec![true, false]);
        assert_eq!(refined.total_weight, 2);
    }

    #[test]
    fn refine_single_candidate_and_distinct_values() {
        let inst = instance(&[5.0, 4.0], &[2, 3]);
        let only = SelectionResult::from_mask(&inst, vec![true, false]).unwrap();
        let refined = refine_pareto(&inst, 1.0, std::slice::from_ref(&only)).unwrap();
        assert_eq!(refined, only);

        let both = vec![
            SelectionResult::from_mask(&inst, vec![true, false]).unwrap(),
            SelectionResult::from_mask(&inst, vec![false, true]).unwrap(),
        ];
        let refined = refine_pareto(&inst, 1.0, &both).unwrap();
        assert_eq!(refined.total_value, 5.0);
    }

    #[test]
    fn refine_rejects_empty_and_infeasible() {
        let inst = instance(&[5.0, 5.0], &[2, 3]);
        assert!(matches!(
            refine_pareto(&inst, 0.5, &[]),
            Err(KnapsackError::EmptyCandidates)
        ));
        let heavy = SelectionResult::from_mask(&inst, vec![true, true]).unwrap();
        assert!(matches!(
            refine_pareto(&inst, 0.5, &[heavy]),
            Err(KnapsackError::InfeasibleCandidate)
        ));
    }

    #[test]
    fn frontier_excludes_dominated_point() {
        let inst = instance(&[5.0, 5.0], &[2, 3]);
        let frontier = pareto_frontier(&inst).unwrap();
        let points: Vec<(f64, u64)> = frontier
            .iter()
            .map(|p| (p.selection.total_value, p.selection.total_weight))
            .collect();
        assert_eq!(points, vec![(0.0, 0), (5.0, 2), (10.0, 5)]);
    }

    #[test]
    fn frontier_single_item() {
        let inst = instance(&[3.0], &[2]);
        let frontier = pareto_frontier(&inst).unwrap();
        let points: Vec<(f64, u64)> = frontier
            .iter()
            .map(|p| (p.selection.total_value, p.selection.total_weight))
            .collect();
        assert_eq!(points, vec![(0.0, 0), (3.0, 2)]);
    }

    #[test]
    fn frontier_is_strictly_monotone() {
        let inst = instance(&[10.0, 7.0, 5.0], &[4, 3, 2]);
        let frontier = pareto_frontier(&inst).unwrap();
        for pair in frontier.windows(2) {
            assert!(pair[0].selection.total_weight < pair[1].selection.total_weight);
            assert!(pair[0].selection.total_value < pair[1].selection.total_value);
        }
    }

    #[test]
    fn every_subset_is_covered_by_the_frontier() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..40 {
            let (inst, _) = random_instance(&mut rng, 8);
            let frontier = pareto_frontier(&inst).unwrap();
            for mask in 0..1u64 << inst.len() {
                let sel =
                    SelectionResult::from_mask(&inst, mask_bits_to_vec(mask, inst.len())).unwrap();
                let covered = frontier.iter().any(|p| {
                    dominates(&p.selection, &sel)
                        || (p.selection.total_value == sel.total_value
                            && p.selection.total_weight == sel.total_weight)
                });
                assert!(covered);
            }
        }
    }

    #[test]
    fn refined_exhaustive_is_never_dominated() {
        let mut rng = StdRng::seed_from_u64(29);
        for _ in 0..60 {
            let (inst, epsilon) = random_instance(&mut rng, 10);
            let chosen = solve_exhaustive(&inst, epsilon).unwrap();
            for mask in 0..1u64 << inst.len() {
                let other =
                    SelectionResult::from_mask(&inst, mask_bits_to_vec(mask, inst.len())).unwrap();
                assert!(!dominates(&other, &chosen));
            }
        }
    }

    #[test]
    fn solvers_are_deterministic() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..20 {
            let (inst, epsilon) = random_instance(&mut rng, 12);
            assert_eq!(
                solve_exhaustive(&inst, epsilon).unwrap(),
                solve_exhaustive(&inst, epsilon).unwrap()
            );
            assert_eq!(
                solve_dp(&inst, epsilon).unwrap(),
                solve_dp(&inst, epsilon).unwrap()
            );
            assert_eq!(
                solve_mitm(&inst, epsilon).unwrap(),
                solve_mitm(&inst, epsilon).unwrap()
            );
            assert_eq!(solve_greedy(&inst), solve_greedy(&inst));
        }
    }

    #[test]
    fn greedy_frontier_marks_dominated_prefixes() {
        // The zero-value item adds weight without value, so the final
        // prefix is dominated by the one before it.
        let inst = instance(&[6.0, 0.0], &[2, 3]);
        let points = greedy_frontier(&inst);
        assert_eq!(points.len(), 3);
        assert!(!points[0].dominated);
        assert!(!points[1].dominated);
        assert!(points[2].dominated);
    }

    #[test]
    fn negative_values_are_clamped() {
        let inst =
            KnapsackInstance::new(vec![("a".into(), -3.0, 2), ("b".into(), 1.0, 1)]).unwrap();
        assert_eq!(inst.items()[0].value, 0.0);
    }

    #[test]
    fn instance_validation() {
        assert!(matches!(
            KnapsackInstance::new(vec![]),
            Err(KnapsackError::EmptyInstance)
        ));
        assert!(matches!(
            KnapsackInstance::new(vec![("a".into(), 1.0, 0)]),
            Err(KnapsackError::ZeroWeight(_))
        ));
        assert!(matches!(
            KnapsackInstance::new(vec![("a".into(), 1.0, 1), ("a".into(), 1.0, 2)]),
            Err(KnapsackError::DuplicateItem(_))
        ));
        let inst = instance(&[1.0], &[1]);
        assert!(matches!(
            solve_exhaustive(&inst, 1.5),
            Err(KnapsackError::BadEpsilon(_))
        ));
    }
}
