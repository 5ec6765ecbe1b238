//! Budget allocation across groups.
//!
//! Both allocators hand out the total budget one unit at a time. Water
//! filling gives the next unit to the group with the lowest size-normalised
//! value (maximin reward); the Nash-welfare greedy gives it to the group with
//! the largest gain in log value. Group values come from any
//! [`GroupValueOracle`].

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::IndexError;

/// Values below this are raised to it before taking logs.
pub const LOG_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("total budget {budget} exceeds the {arms} arms available")]
    BudgetExceedsArms { budget: usize, arms: usize },
    #[error("oracle returned {value} for group {group} at budget {budget}")]
    NonPositiveValue {
        group: usize,
        budget: usize,
        value: f64,
    },
    #[error("no groups to allocate across")]
    NoGroups,
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Evaluates the value of a group at a given budget.
///
/// States and remaining horizon are fixed by the oracle for the duration of
/// one allocation run.
pub trait GroupValueOracle {
    fn group_value(&mut self, group: usize, budget: usize) -> Result<f64, AllocError>;
}

/// Oracle backed by a plain function of `(group, budget)`.
pub struct FnOracle<F>(pub F);

impl<F: FnMut(usize, usize) -> f64> GroupValueOracle for FnOracle<F> {
    fn group_value(&mut self, group: usize, budget: usize) -> Result<f64, AllocError> {
        Ok((self.0)(group, budget))
    }
}

/// Caches every `(group, budget)` evaluation of the wrapped oracle.
pub struct Memoized<O> {
    inner: O,
    memo: HashMap<(usize, usize), f64>,
    calls: usize,
}

impl<O: GroupValueOracle> Memoized<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            memo: HashMap::new(),
            calls: 0,
        }
    }

    /// Evaluations that reached the inner oracle.
    pub fn inner_calls(&self) -> usize {
        self.calls
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: GroupValueOracle> GroupValueOracle for Memoized<O> {
    fn group_value(&mut self, group: usize, budget: usize) -> Result<f64, AllocError> {
        if let Some(&v) = self.memo.get(&(group, budget)) {
            return Ok(v);
        }
        let v = self.inner.group_value(group, budget)?;
        self.calls += 1;
        self.memo.insert((group, budget), v);
        Ok(v)
    }
}

/// Upper limit on the budget a group may absorb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BudgetCaps {
    /// `b_g ≤ |group|`: a group cannot use more units than it has arms.
    GroupSize,
    /// No cap; for abstract oracles whose groups are not arm sets.
    Unbounded,
}

impl BudgetCaps {
    fn caps(self, sizes: &[usize]) -> Vec<usize> {
        match self {
            BudgetCaps::GroupSize => sizes.to_vec(),
            BudgetCaps::Unbounded => vec![usize::MAX; sizes.len()],
        }
    }
}

/// How the Nash-welfare greedy treats unequal group sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MnwMode {
    /// Allocate on raw group values (biased toward small groups).
    Naive,
    /// The oracle evaluates groups upsampled to the largest group size;
    /// budgets are rescaled back to the original sizes afterwards.
    EqualizedGroups,
}

/// Per-group budgets and how they were reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub budgets: Vec<usize>,
    /// `(chosen group, value that decided the step)` per unit handed out.
    pub objective_trace: Vec<(usize, f64)>,
    /// Oracle values at the greedy budgets (before any rescale).
    pub final_values: Vec<f64>,
    /// Greedy budgets on equalized groups, when a rescale followed.
    pub pre_rescale: Option<Vec<usize>>,
}

impl AllocationResult {
    pub fn total(&self) -> usize {
        self.budgets.iter().sum()
    }
}

fn check_budget(sizes: &[usize], total: usize, caps: BudgetCaps) -> Result<(), AllocError> {
    if sizes.is_empty() {
        return Err(AllocError::NoGroups);
    }
    let arms: usize = sizes.iter().sum();
    if caps == BudgetCaps::GroupSize && total > arms {
        return Err(AllocError::BudgetExceedsArms {
            budget: total,
            arms,
        });
    }
    Ok(())
}

fn checked_value<O: GroupValueOracle>(
    oracle: &mut O,
    group: usize,
    budget: usize,
) -> Result<f64, AllocError> {
    let value = oracle.group_value(group, budget)?;
    if value.is_nan() || value < 0.0 {
        return Err(AllocError::NonPositiveValue {
            group,
            budget,
            value,
        });
    }
    Ok(value)
}

/// Water filling for maximin reward.
///
/// Starts from zero budgets and repeatedly gives one unit to the group whose
/// value divided by its size is smallest, re-evaluating only that group.
/// Ties go to the lowest group index; capped groups drop out.
pub fn allocate_mmr<O: GroupValueOracle>(
    sizes: &[usize],
    total_budget: usize,
    caps: BudgetCaps,
    oracle: &mut O,
) -> Result<AllocationResult, AllocError> {
    check_budget(sizes, total_budget, caps)?;
    let caps = caps.caps(sizes);
    let mut budgets = vec![0usize; sizes.len()];
    let mut raw = Vec::with_capacity(sizes.len());
    for g in 0..sizes.len() {
        raw.push(checked_value(oracle, g, 0)?);
    }
    let normalized = |g: usize, v: f64| v / sizes[g].max(1) as f64;
    let mut trace = Vec::with_capacity(total_budget);
    for _ in 0..total_budget {
        let mut best: Option<(usize, f64)> = None;
        for g in 0..sizes.len() {
            if budgets[g] >= caps[g] {
                continue;
            }
            let v = normalized(g, raw[g]);
            if best.is_none_or(|(_, bv)| v < bv) {
                best = Some((g, v));
            }
        }
        let (g, v) = best.ok_or(AllocError::BudgetExceedsArms {
            budget: total_budget,
            arms: sizes.iter().sum(),
        })?;
        budgets[g] += 1;
        raw[g] = checked_value(oracle, g, budgets[g])?;
        trace.push((g, v));
    }
    Ok(AllocationResult {
        budgets,
        objective_trace: trace,
        final_values: raw,
        pre_rescale: None,
    })
}

fn log_gain(lower: f64, upper: f64) -> f64 {
    upper.max(LOG_FLOOR).ln() - lower.max(LOG_FLOOR).ln()
}

/// Greedy maximisation of `Σ_g log L_g(b_g)`.
///
/// Keeps `L(b_g)` and `L(b_g + 1)` per group and gives each unit to the group
/// with the largest log gain. In [`MnwMode::EqualizedGroups`] the oracle must
/// evaluate groups upsampled to `θ = max size`; the greedy runs with every
/// group at size θ and the budgets are then [`rescale`]d to `sizes`.
pub fn allocate_mnw<O: GroupValueOracle>(
    sizes: &[usize],
    total_budget: usize,
    caps: BudgetCaps,
    mode: MnwMode,
    oracle: &mut O,
) -> Result<AllocationResult, AllocError> {
    check_budget(sizes, total_budget, caps)?;
    let theta = sizes.iter().copied().max().unwrap_or(0);
    let greedy_sizes = match mode {
        MnwMode::Naive => sizes.to_vec(),
        MnwMode::EqualizedGroups => vec![theta; sizes.len()],
    };
    let greedy_caps = caps.caps(&greedy_sizes);
    let n = sizes.len();
    let mut budgets = vec![0usize; n];
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for (g, &cap) in greedy_caps.iter().enumerate() {
        lower.push(checked_value(oracle, g, 0)?);
        upper.push(if cap > 0 {
            Some(checked_value(oracle, g, 1)?)
        } else {
            None
        });
    }
    let mut trace = Vec::with_capacity(total_budget);
    for _ in 0..total_budget {
        let mut best: Option<(usize, f64)> = None;
        for g in 0..n {
            if let Some(u) = upper[g] {
                let gain = log_gain(lower[g], u);
                if best.is_none_or(|(_, bg)| gain > bg) {
                    best = Some((g, gain));
                }
            }
        }
        let (g, gain) = best.ok_or(AllocError::BudgetExceedsArms {
            budget: total_budget,
            arms: greedy_sizes.iter().sum(),
        })?;
        budgets[g] += 1;
        lower[g] = upper[g].expect("chosen group has a next value");
        upper[g] = if budgets[g] < greedy_caps[g] {
            Some(checked_value(oracle, g, budgets[g] + 1)?)
        } else {
            None
        };
        trace.push((g, gain));
    }
    match mode {
        MnwMode::Naive => Ok(AllocationResult {
            budgets,
            objective_trace: trace,
            final_values: lower,
            pre_rescale: None,
        }),
        MnwMode::EqualizedGroups => {
            let rescaled = rescale(&budgets, sizes, theta, total_budget, caps);
            Ok(AllocationResult {
                budgets: rescaled,
                objective_trace: trace,
                final_values: lower,
                pre_rescale: Some(budgets),
            })
        }
    }
}

/// Pads `members` to `target` entries with uniform draws (with replacement)
/// from the originals, which stay in front.
pub fn upsample<T: Clone, R: Rng + ?Sized>(members: &[T], target: usize, rng: &mut R) -> Vec<T> {
    let mut out = members.to_vec();
    if members.is_empty() {
        return out;
    }
    while out.len() < target {
        out.push(members[rng.gen_range(0..members.len())].clone());
    }
    out
}

/// Maps budgets found on equal-size groups back to the original sizes.
///
/// Weights are `b_g · |g| / θ`; `total` units are apportioned proportionally
/// by largest remainder (ties to the lower index), respecting `caps`, with
/// overflow passed on in remainder order. All-zero weights split uniformly.
pub fn rescale(
    upsampled: &[usize],
    sizes: &[usize],
    theta: usize,
    total: usize,
    caps: BudgetCaps,
) -> Vec<usize> {
    let n = sizes.len();
    let mut weights: Vec<f64> = upsampled
        .iter()
        .zip(sizes)
        .map(|(&b, &s)| b as f64 * s as f64 / theta.max(1) as f64)
        .collect();
    let mut sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        weights = vec![1.0; n];
        sum = n as f64;
    }
    let caps = caps.caps(sizes);
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<usize> = quotas
        .iter()
        .zip(&caps)
        .map(|(&q, &c)| (q.floor() as usize).min(c))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total.saturating_sub(out.iter().sum());
    while left > 0 {
        let before = left;
        for &g in &order {
            if left == 0 {
                break;
            }
            if out[g] < caps[g] {
                out[g] += 1;
                left -= 1;
            }
        }
        if left == before {
            break;
        }
    }
    out
}

/// Relative gap `|h(A∪B)(C b) − C h(A)(b)| / (C h(A)(b))` between an
/// upsampled group's value at the scaled budget and the scaled original value.
pub fn conjecture_gap(original_value: f64, upsampled_value: f64, scale: f64) -> f64 {
    let target = scale * original_value;
    if target == 0.0 {
        return if upsampled_value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    (upsampled_value - target).abs() / target
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(g: usize, b: usize) -> f64 {
        let b = b as f64;
        match g {
            0 => 2.0 * b + 1.0,
            _ => 4.0 * (b + 1.0),
        }
    }

    #[test]
    fn mmr_toy_puts_everything_on_worst_group() {
        let r = allocate_mmr(&[1, 1], 2, BudgetCaps::Unbounded, &mut FnOracle(toy)).unwrap();
        assert_eq!(r.budgets, vec![2, 0]);
        assert_eq!(r.final_values, vec![5.0, 4.0]);
    }

    #[test]
    fn mnw_toy_splits_evenly() {
        let r = allocate_mnw(
            &[1, 1],
            2,
            BudgetCaps::Unbounded,
            MnwMode::Naive,
            &mut FnOracle(toy),
        )
        .unwrap();
        assert_eq!(r.budgets, vec![1, 1]);
        assert_eq!(r.final_values, vec![3.0, 8.0]);
    }

    #[test]
    fn identical_groups_split_evenly() {
        let concave = |_: usize, b: usize| (b as f64 + 1.0).sqrt();
        let r = allocate_mmr(&[3, 3], 2, BudgetCaps::GroupSize, &mut FnOracle(concave)).unwrap();
        assert_eq!(r.budgets, vec![1, 1]);
        let linear = |_: usize, b: usize| b as f64 + 1.0;
        let r = allocate_mnw(
            &[4, 4],
            4,
            BudgetCaps::GroupSize,
            MnwMode::Naive,
            &mut FnOracle(linear),
        )
        .unwrap();
        assert_eq!(r.budgets, vec![2, 2]);
    }

    #[test]
    fn constant_values_fill_the_lowest_group() {
        let r = allocate_mmr(
            &[1, 1, 1],
            3,
            BudgetCaps::Unbounded,
            &mut FnOracle(|g: usize, _| (g + 1) as f64),
        )
        .unwrap();
        assert_eq!(r.budgets, vec![3, 0, 0]);
        assert_eq!(r.objective_trace.len(), 3);
    }

    #[test]
    fn zero_budget_takes_no_steps() {
        let mut oracle = Memoized::new(FnOracle(toy));
        let r = allocate_mnw(
            &[2, 3],
            0,
            BudgetCaps::GroupSize,
            MnwMode::Naive,
            &mut oracle,
        )
        .unwrap();
        assert_eq!(r.budgets, vec![0, 0]);
        assert!(r.objective_trace.is_empty());
    }

    #[test]
    fn caps_limit_group_budgets() {
        let r = allocate_mmr(&[1, 3], 3, BudgetCaps::GroupSize, &mut FnOracle(toy)).unwrap();
        assert_eq!(r.budgets, vec![1, 2]);
        let err = allocate_mmr(&[1, 1], 3, BudgetCaps::GroupSize, &mut FnOracle(toy)).unwrap_err();
        assert_eq!(err, AllocError::BudgetExceedsArms { budget: 3, arms: 2 });
    }

    #[test]
    fn negative_values_are_rejected() {
        let err = allocate_mnw(
            &[1, 1],
            1,
            BudgetCaps::Unbounded,
            MnwMode::Naive,
            &mut FnOracle(|g: usize, _| if g == 1 { -1.0 } else { 1.0 }),
        )
        .unwrap_err();
        assert!(matches!(err, AllocError::NonPositiveValue { group: 1, .. }));
    }

    #[test]
    fn zero_values_are_floored_not_rejected() {
        let r = allocate_mnw(
            &[2, 2],
            2,
            BudgetCaps::GroupSize,
            MnwMode::Naive,
            &mut FnOracle(|g: usize, b: usize| if g == 0 { 0.0 } else { b as f64 }),
        )
        .unwrap();
        assert_eq!(r.total(), 2);
    }

    #[test]
    fn memoization_avoids_repeat_calls() {
        let mut oracle = Memoized::new(FnOracle(toy));
        for _ in 0..3 {
            oracle.group_value(0, 2).unwrap();
        }
        assert_eq!(oracle.inner_calls(), 1);
    }

    #[test]
    fn upsample_identity_at_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(upsample(&[3, 4], 2, &mut rng), vec![3, 4]);
    }

    #[test]
    fn upsample_draws_copies_of_originals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = upsample(&['a', 'b'], 4, &mut rng);
        assert_eq!(out.len(), 4);
        assert_eq!(&out[..2], &['a', 'b']);
        assert!(out[2..].iter().all(|c| *c == 'a' || *c == 'b'));
        let single = upsample(&[9], 3, &mut rng);
        assert_eq!(single, vec![9, 9, 9]);
    }

    #[test]
    fn rescale_is_identity_on_equal_sizes() {
        let b = rescale(&[3, 1, 2], &[4, 4, 4], 4, 6, BudgetCaps::GroupSize);
        assert_eq!(b, vec![3, 1, 2]);
    }

    #[test]
    fn rescale_trace_uncapped_and_capped() {
        // weights (4·2/4, 2·4/4) = (2, 2) → even split of 6
        let b = rescale(&[4, 2], &[2, 4], 4, 6, BudgetCaps::Unbounded);
        assert_eq!(b, vec![3, 3]);
        // group 0 only has 2 arms; its third unit spills over
        let b = rescale(&[4, 2], &[2, 4], 4, 6, BudgetCaps::GroupSize);
        assert_eq!(b, vec![2, 4]);
    }

    #[test]
    fn rescale_zero_weights_split_uniformly() {
        assert_eq!(
            rescale(&[0, 0], &[3, 3], 3, 2, BudgetCaps::GroupSize),
            vec![1, 1]
        );
    }

    #[test]
    fn equalized_mnw_rescales() {
        // two groups of sizes (1, 4), θ = 4; oracle already on equalized groups
        let r = allocate_mnw(
            &[1, 4],
            2,
            BudgetCaps::GroupSize,
            MnwMode::EqualizedGroups,
            &mut FnOracle(|_, b: usize| (b as f64 + 1.0).ln() + 1.0),
        )
        .unwrap();
        assert_eq!(r.pre_rescale, Some(vec![1, 1]));
        assert_eq!(r.total(), 2);
        assert!(r.budgets[1] >= r.budgets[0]);
    }

    #[test]
    fn conjecture_gap_is_relative() {
        assert_eq!(conjecture_gap(2.0, 4.0, 2.0), 0.0);
        assert!((conjecture_gap(2.0, 3.0, 2.0) - 0.25).abs() < 1e-15);
    }
}
