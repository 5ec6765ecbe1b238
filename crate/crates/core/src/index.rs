//! Whittle indexes and the Whittle-to-Lagrange group value bound.

use std::collections::HashMap;
use std::sync::Mutex;

use thiserror::Error;

use crate::allocation::{AllocError, GroupValueOracle};
use crate::mdp::{charged_values, ArmModel, GroupedInstance};

/// Number of probe points used to locate the first sign change before bisecting.
const PROBE_POINTS: usize = 17;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("budget {budget} exceeds group size {size}")]
    BudgetExceedsGroup { budget: usize, size: usize },
    #[error("group has {arms} arms but {indexes} indexes and {states} states")]
    Shape {
        arms: usize,
        indexes: usize,
        states: usize,
    },
    #[error("remaining horizon must be at least 1")]
    ZeroHorizon,
    #[error("precision must be positive, got {0}")]
    BadPrecision(f64),
}

/// Result of one index search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhittleIndex {
    pub value: f64,
    /// False when the act-minus-passive advantage was not monotone on the probe grid.
    pub indexable: bool,
}

/// `Q(s, act) - Q(s, passive)` with `remaining` rounds left, at charge λ.
pub fn act_advantage(arm: &ArmModel, state: usize, remaining: usize, charge: f64) -> f64 {
    let next = charged_values(arm, remaining - 1, charge);
    arm.expect(state, 1, &next) - charge - arm.expect(state, 0, &next)
}

/// Whittle index of `arm` in `state` with `remaining` rounds to go.
///
/// Searches `[-1, remaining + 1]` for the charge at which acting and not
/// acting are worth the same. The interval is first scanned on a coarse grid
/// for the first sign change of the advantage, which is then bisected to
/// width `precision`. Non-monotone advantages are reported through
/// [`WhittleIndex::indexable`] and a log warning; the first crossing is still
/// returned.
pub fn whittle_index(
    arm: &ArmModel,
    state: usize,
    remaining: usize,
    precision: f64,
) -> Result<WhittleIndex, IndexError> {
    if remaining == 0 {
        return Err(IndexError::ZeroHorizon);
    }
    if precision.is_nan() || precision <= 0.0 {
        return Err(IndexError::BadPrecision(precision));
    }
    let lo = -1.0;
    let hi = remaining as f64 + 1.0;
    let step = (hi - lo) / (PROBE_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..PROBE_POINTS).map(|i| lo + step * i as f64).collect();
    let adv: Vec<f64> = grid
        .iter()
        .map(|&l| act_advantage(arm, state, remaining, l))
        .collect();
    let indexable = adv.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    if !indexable {
        log::warn!("arm not indexable at state {state} with {remaining} rounds left");
    }

    let value = match adv.iter().position(|&d| d <= 0.0) {
        None => hi,
        Some(0) => lo,
        Some(j) => {
            let (mut a, mut b) = (grid[j - 1], grid[j]);
            while b - a >= precision {
                let mid = 0.5 * (a + b);
                if act_advantage(arm, state, remaining, mid) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        }
    };
    Ok(WhittleIndex { value, indexable })
}

/// Indexes of a set of arms at their current states.
#[derive(Debug, Clone, PartialEq)]
pub struct WhittleIndexSet {
    pub indexes: Vec<f64>,
    pub precision: f64,
}

/// `L_g(s_g, b)` as produced by the Whittle-to-Lagrange conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupValueBound {
    pub value: f64,
    pub lambda_star: f64,
    pub per_arm_values: Vec<f64>,
    pub budget: usize,
}

/// Charge separating the `budget`-th and `budget+1`-th best arms.
///
/// With a 0-indexed descending sort `W`: `b = n` gives 0, `b = 0` prices
/// acting out of every state (any charge above the remaining horizon does),
/// and otherwise `(W[b-1] + W[b]) / 2`, clamped at 0.
pub fn lagrange_charge(
    indexes: &[f64],
    budget: usize,
    remaining: usize,
    precision: f64,
) -> Result<f64, IndexError> {
    let n = indexes.len();
    if budget > n {
        return Err(IndexError::BudgetExceedsGroup { budget, size: n });
    }
    if budget == n {
        return Ok(0.0);
    }
    let mut sorted = indexes.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if budget == 0 {
        return Ok((sorted[0].max(0.0) + precision).max(remaining as f64));
    }
    Ok((0.5 * (sorted[budget - 1] + sorted[budget])).max(0.0))
}

/// Whittle-to-Lagrange: `L = Σ_n V_n(s_n, λ*) + b h λ*`.
pub fn whittle_to_lagrange(
    arms: &[&ArmModel],
    states: &[usize],
    budget: usize,
    remaining: usize,
    indexes: &WhittleIndexSet,
) -> Result<GroupValueBound, IndexError> {
    if arms.len() != states.len() || arms.len() != indexes.indexes.len() {
        return Err(IndexError::Shape {
            arms: arms.len(),
            indexes: indexes.indexes.len(),
            states: states.len(),
        });
    }
    let lambda_star = lagrange_charge(&indexes.indexes, budget, remaining, indexes.precision)?;
    let per_arm_values: Vec<f64> = arms
        .iter()
        .zip(states)
        .map(|(arm, &s)| charged_values(arm, remaining, lambda_star)[s])
        .collect();
    let value = per_arm_values.iter().sum::<f64>() + (budget * remaining) as f64 * lambda_star;
    Ok(GroupValueBound {
        value,
        lambda_star,
        per_arm_values,
        budget,
    })
}

/// Thread-safe memo of Whittle indexes keyed by `(model class, state, remaining)`.
///
/// Valid for a single instance and precision; arms with identical dynamics
/// share entries.
#[derive(Debug)]
pub struct IndexCache {
    precision: f64,
    fingerprint: u64,
    memo: Mutex<HashMap<(usize, usize, usize), f64>>,
}

impl IndexCache {
    pub fn new(instance: &GroupedInstance, precision: f64) -> Self {
        Self {
            precision,
            fingerprint: instance.fingerprint(),
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn precision(&self) -> f64 {
        self.precision
    }

    /// Whether this cache was built for `instance`.
    pub fn matches(&self, instance: &GroupedInstance) -> bool {
        self.fingerprint == instance.fingerprint()
    }

    pub fn index(
        &self,
        instance: &GroupedInstance,
        arm: usize,
        state: usize,
        remaining: usize,
    ) -> Result<f64, IndexError> {
        let key = (instance.model_class(arm), state, remaining);
        if let Some(&w) = self.memo.lock().expect("index cache poisoned").get(&key) {
            return Ok(w);
        }
        let w = whittle_index(instance.arm(arm), state, remaining, self.precision)?.value;
        self.memo
            .lock()
            .expect("index cache poisoned")
            .insert(key, w);
        Ok(w)
    }

    /// Indexes of every arm at `states` with `remaining` rounds left.
    pub fn indexes(
        &self,
        instance: &GroupedInstance,
        states: &[usize],
        remaining: usize,
    ) -> Result<WhittleIndexSet, IndexError> {
        let indexes = states
            .iter()
            .enumerate()
            .map(|(n, &s)| self.index(instance, n, s, remaining))
            .collect::<Result<_, _>>()?;
        Ok(WhittleIndexSet {
            indexes,
            precision: self.precision,
        })
    }
}

/// One slot of a (possibly upsampled) group: which arm model, in which state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupMember {
    pub arm: usize,
    pub state: usize,
}

/// Whittle-to-Lagrange as an allocation oracle over fixed group states.
pub struct LagrangeOracle<'a> {
    instance: &'a GroupedInstance,
    groups: Vec<Vec<GroupMember>>,
    indexes: Vec<Vec<f64>>,
    remaining: usize,
    precision: f64,
    values: HashMap<(usize, u64), Vec<f64>>,
}

impl<'a> LagrangeOracle<'a> {
    /// `indexes[g][i]` must be the index of `groups[g][i]`.
    pub fn new(
        instance: &'a GroupedInstance,
        groups: Vec<Vec<GroupMember>>,
        indexes: Vec<Vec<f64>>,
        remaining: usize,
        precision: f64,
    ) -> Result<Self, IndexError> {
        for (members, w) in groups.iter().zip(&indexes) {
            if members.len() != w.len() {
                return Err(IndexError::Shape {
                    arms: members.len(),
                    indexes: w.len(),
                    states: members.len(),
                });
            }
        }
        if remaining == 0 {
            return Err(IndexError::ZeroHorizon);
        }
        Ok(Self {
            instance,
            groups,
            indexes,
            remaining,
            precision,
            values: HashMap::new(),
        })
    }

    pub fn group_size(&self, group: usize) -> usize {
        self.groups[group].len()
    }

    pub fn bound(&mut self, group: usize, budget: usize) -> Result<GroupValueBound, IndexError> {
        let lambda_star =
            lagrange_charge(&self.indexes[group], budget, self.remaining, self.precision)?;
        let mut per_arm_values = Vec::with_capacity(self.groups[group].len());
        for m in &self.groups[group] {
            let class = self.instance.model_class(m.arm);
            let values = self
                .values
                .entry((class, lambda_star.to_bits()))
                .or_insert_with(|| {
                    charged_values(self.instance.arm(m.arm), self.remaining, lambda_star)
                });
            per_arm_values.push(values[m.state]);
        }
        let value =
            per_arm_values.iter().sum::<f64>() + (budget * self.remaining) as f64 * lambda_star;
        Ok(GroupValueBound {
            value,
            lambda_star,
            per_arm_values,
            budget,
        })
    }
}

impl GroupValueOracle for LagrangeOracle<'_> {
    fn group_value(&mut self, group: usize, budget: usize) -> Result<f64, AllocError> {
        Ok(self.bound(group, budget)?.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAMMA: f64 = 1e-4;

    fn inert_arm() -> ArmModel {
        ArmModel::two_state([[0.3, 0.3], [0.6, 0.6]], 0).unwrap()
    }

    fn group_a() -> ArmModel {
        ArmModel::two_state([[0.05, 0.99], [0.35, 0.99]], 0).unwrap()
    }

    #[test]
    fn inert_arm_has_zero_index() {
        for s in 0..2 {
            let w = whittle_index(&inert_arm(), s, 5, GAMMA).unwrap();
            assert!(w.value.abs() <= 2.0 * GAMMA, "{w:?}");
            assert!(w.indexable);
        }
    }

    #[test]
    fn last_round_index_is_zero() {
        for s in 0..2 {
            let w = whittle_index(&group_a(), s, 1, GAMMA).unwrap();
            assert!(w.value.abs() <= 2.0 * GAMMA);
        }
    }

    #[test]
    fn group_a_two_round_index_matches_closed_form() {
        // For λ ≥ 0 the last layer is V = R, so acting from state 0 is worth
        // 0.99 - λ against 0.05 passively: equal at λ = 0.94.
        let w = whittle_index(&group_a(), 0, 2, GAMMA).unwrap();
        assert!((w.value - 0.94).abs() <= GAMMA, "{w:?}");
    }

    #[test]
    fn zero_remaining_is_rejected() {
        assert_eq!(
            whittle_index(&group_a(), 0, 0, GAMMA),
            Err(IndexError::ZeroHorizon)
        );
    }

    #[test]
    fn non_indexable_arm_still_returns_a_crossing() {
        // acting from state 0 drops into an absorbing zero state; non-monotone
        // advantages are tolerated
        let arm = ArmModel::new(
            vec![
                [vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
                [vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]],
                [vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
            ],
            vec![0.5, 0.2, 1.0],
            0,
        )
        .unwrap();
        let w = whittle_index(&arm, 1, 4, GAMMA).unwrap();
        assert!(w.value.is_finite());
        assert!((-1.0..=5.0).contains(&w.value));
    }

    #[test]
    fn zero_indexes_give_zero_charge() {
        let arms = [&group_a(), &group_a(), &inert_arm()];
        let set = WhittleIndexSet {
            indexes: vec![0.0; 3],
            precision: GAMMA,
        };
        let bound = whittle_to_lagrange(&arms, &[0, 1, 0], 1, 4, &set).unwrap();
        assert_eq!(bound.lambda_star, 0.0);
        let direct: f64 = arms
            .iter()
            .zip([0, 1, 0])
            .map(|(a, s)| charged_values(a, 4, 0.0)[s])
            .sum();
        assert!((bound.value - direct).abs() < 1e-12);
    }

    #[test]
    fn full_budget_uses_zero_charge() {
        let arms = [&group_a(), &inert_arm()];
        let set = WhittleIndexSet {
            indexes: vec![0.7, 0.2],
            precision: GAMMA,
        };
        let bound = whittle_to_lagrange(&arms, &[0, 0], 2, 3, &set).unwrap();
        assert_eq!(bound.lambda_star, 0.0);
        assert_eq!(bound.value, bound.per_arm_values.iter().sum::<f64>());
    }

    #[test]
    fn midpoint_charge_trace() {
        let arms = [&group_a(), &group_a(), &inert_arm()];
        let set = WhittleIndexSet {
            indexes: vec![0.1, 0.5, 0.3],
            precision: GAMMA,
        };
        let h = 3;
        let bound = whittle_to_lagrange(&arms, &[0, 0, 1], 1, h, &set).unwrap();
        assert!((bound.lambda_star - 0.4).abs() < 1e-15);
        let expected: f64 = [
            charged_values(&group_a(), h, 0.4)[0],
            charged_values(&group_a(), h, 0.4)[0],
            charged_values(&inert_arm(), h, 0.4)[1],
        ]
        .iter()
        .sum::<f64>()
            + 1.0 * h as f64 * 0.4;
        assert!((bound.value - expected).abs() < 1e-12);
        assert!(
            (bound.value
                - (bound.per_arm_values.iter().sum::<f64>()
                    + (bound.budget * h) as f64 * bound.lambda_star))
                .abs()
                == 0.0
        );
    }

    #[test]
    fn budget_above_group_size_errors() {
        let arms = [&group_a()];
        let set = WhittleIndexSet {
            indexes: vec![0.1],
            precision: GAMMA,
        };
        assert_eq!(
            whittle_to_lagrange(&arms, &[0], 2, 3, &set),
            Err(IndexError::BudgetExceedsGroup { budget: 2, size: 1 })
        );
    }

    #[test]
    fn zero_budget_prices_out_all_actions() {
        let charge = lagrange_charge(&[0.9, 0.1], 0, 5, GAMMA).unwrap();
        assert!(charge >= 5.0);
        let charge = lagrange_charge(&[-0.3], 0, 1, GAMMA).unwrap();
        assert!(charge >= 1.0);
    }

    #[test]
    fn cache_matches_direct_search() {
        let arms = vec![group_a(), group_a(), inert_arm().with_group(1)];
        let inst = GroupedInstance::new(arms, 5, 1, vec![0, 1, 0]).unwrap();
        let cache = IndexCache::new(&inst, GAMMA);
        let set = cache.indexes(&inst, inst.start_states(), 3).unwrap();
        for (n, &s) in inst.start_states().iter().enumerate() {
            let direct = whittle_index(inst.arm(n), s, 3, GAMMA).unwrap().value;
            assert_eq!(set.indexes[n], direct);
        }
        assert!(cache.matches(&inst));
    }
}
