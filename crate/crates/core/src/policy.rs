//! Per-round action selection.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{
    allocate_mmr, allocate_mnw, conjecture_gap, upsample, AllocError, AllocationResult, BudgetCaps,
    MnwMode,
};
use crate::index::{GroupMember, IndexCache, IndexError, LagrangeOracle, WhittleIndexSet};
use crate::mdp::GroupedInstance;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy {0} needs a budget allocation")]
    MissingAllocation(PolicyKind),
    #[error("policy {0} needs Whittle indexes for the round")]
    MissingIndexes(PolicyKind),
    #[error("policy {0} needs a domain with a clinical risk flag")]
    DomainLacksClinicalFlag(PolicyKind),
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    NoAct,
    Random,
    Opt,
    #[serde(rename = "MMR")]
    Mmr,
    #[serde(rename = "MNW")]
    Mnw,
    #[serde(rename = "MNW-EG")]
    MnwEg,
    #[serde(rename = "HR-RR")]
    HrRr,
    #[serde(rename = "HR-Rand")]
    HrRand,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::NoAct,
        PolicyKind::Random,
        PolicyKind::Opt,
        PolicyKind::Mmr,
        PolicyKind::Mnw,
        PolicyKind::MnwEg,
        PolicyKind::HrRr,
        PolicyKind::HrRand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::NoAct => "NoAct",
            PolicyKind::Random => "Random",
            PolicyKind::Opt => "Opt",
            PolicyKind::Mmr => "MMR",
            PolicyKind::Mnw => "MNW",
            PolicyKind::MnwEg => "MNW-EG",
            PolicyKind::HrRr => "HR-RR",
            PolicyKind::HrRand => "HR-Rand",
        }
    }

    /// Runs a group budget allocator before acting.
    pub fn needs_allocation(self) -> bool {
        matches!(self, PolicyKind::Mmr | PolicyKind::Mnw | PolicyKind::MnwEg)
    }

    pub fn needs_indexes(self) -> bool {
        self.needs_allocation() || self == PolicyKind::Opt
    }

    pub fn needs_clinical_flag(self) -> bool {
        matches!(self, PolicyKind::HrRr | PolicyKind::HrRand)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| PolicyError::UnknownPolicy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Recompute group budgets every round instead of only at t = 0.
    pub realloc_every_round: bool,
    pub precision: f64,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            realloc_every_round: true,
            precision: crate::DEFAULT_PRECISION,
        }
    }

    pub fn check_domain(&self, instance: &GroupedInstance) -> Result<(), PolicyError> {
        if self.kind.needs_clinical_flag() && instance.clinical().is_none() {
            return Err(PolicyError::DomainLacksClinicalFlag(self.kind));
        }
        Ok(())
    }
}

/// Arms acted on in one round, ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionVector {
    pub acted: Vec<usize>,
}

impl ActionVector {
    fn from_unsorted(mut acted: Vec<usize>) -> Self {
        acted.sort_unstable();
        Self { acted }
    }

    pub fn len(&self) -> usize {
        self.acted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acted.is_empty()
    }

    pub fn contains(&self, arm: usize) -> bool {
        self.acted.binary_search(&arm).is_ok()
    }
}

/// Last round each arm was acted on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionHistory {
    last_acted: Vec<Option<usize>>,
}

impl ActionHistory {
    pub fn new(n_arms: usize) -> Self {
        Self {
            last_acted: vec![None; n_arms],
        }
    }

    pub fn last_acted(&self, arm: usize) -> Option<usize> {
        self.last_acted[arm]
    }

    pub fn record(&mut self, t: usize, actions: &ActionVector) {
        for &n in &actions.acted {
            self.last_acted[n] = Some(t);
        }
    }
}

/// What a policy sees at round `t`.
pub struct RoundView<'a> {
    pub instance: &'a GroupedInstance,
    pub states: &'a [usize],
    pub t: usize,
    /// Current Whittle indexes of every arm, for index-based policies.
    pub indexes: Option<&'a WhittleIndexSet>,
}

/// Top `k` of `candidates` by descending index, ties to the lower arm.
fn top_by_index(candidates: &[usize], indexes: &[f64], k: usize) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| indexes[b].total_cmp(&indexes[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// `k` arms drawn uniformly from `pool` without replacement.
fn uniform_pick<R: Rng + ?Sized>(pool: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let k = k.min(pool.len());
    sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// High-risk and other non-dropout arms.
fn risk_pools(
    view: &RoundView<'_>,
    kind: PolicyKind,
) -> Result<(Vec<usize>, Vec<usize>), PolicyError> {
    let flags = view
        .instance
        .clinical()
        .ok_or(PolicyError::DomainLacksClinicalFlag(kind))?;
    let mut high = Vec::new();
    let mut rest = Vec::new();
    for (n, &s) in view.states.iter().enumerate() {
        if flags.dropout[s] {
            continue;
        }
        if flags.high[s] {
            high.push(n);
        } else {
            rest.push(n);
        }
    }
    Ok((high, rest))
}

/// Chooses the arms to act on this round.
///
/// Index policies pick the top Whittle indexes (globally for Opt, within
/// each group's budget for the allocation policies). The risk heuristics
/// pick among high-risk, non-dropout arms first and fill any remaining slots
/// from the other non-dropout arms.
pub fn select_actions<R: Rng + ?Sized>(
    policy: &PolicySpec,
    view: &RoundView<'_>,
    allocation: Option<&AllocationResult>,
    history: &ActionHistory,
    rng: &mut R,
) -> Result<ActionVector, PolicyError> {
    let instance = view.instance;
    let budget = instance.total_budget();
    let kind = policy.kind;
    let acted = match kind {
        PolicyKind::NoAct => Vec::new(),
        PolicyKind::Random => {
            let all: Vec<usize> = (0..instance.n_arms()).collect();
            uniform_pick(&all, budget, rng)
        }
        PolicyKind::Opt => {
            let w = view.indexes.ok_or(PolicyError::MissingIndexes(kind))?;
            let all: Vec<usize> = (0..instance.n_arms()).collect();
            top_by_index(&all, &w.indexes, budget)
        }
        PolicyKind::Mmr | PolicyKind::Mnw | PolicyKind::MnwEg => {
            let w = view.indexes.ok_or(PolicyError::MissingIndexes(kind))?;
            let alloc = allocation.ok_or(PolicyError::MissingAllocation(kind))?;
            let mut acted = Vec::with_capacity(budget);
            for (g, &b) in alloc.budgets.iter().enumerate() {
                acted.extend(top_by_index(instance.members(g), &w.indexes, b));
            }
            acted
        }
        PolicyKind::HrRr => {
            let (high, rest) = risk_pools(view, kind)?;
            let stalest = |pool: &[usize], k: usize| {
                let mut order = pool.to_vec();
                // never-acted (None) sorts before any round
                order.sort_by_key(|&n| (history.last_acted(n), n));
                order.truncate(k);
                order
            };
            let mut acted = stalest(&high, budget);
            let short = budget - acted.len();
            acted.extend(stalest(&rest, short));
            acted
        }
        PolicyKind::HrRand => {
            let (high, rest) = risk_pools(view, kind)?;
            let mut acted = uniform_pick(&high, budget, rng);
            let short = budget - acted.len();
            acted.extend(uniform_pick(&rest, short, rng));
            acted
        }
    };
    Ok(ActionVector::from_unsorted(acted))
}

/// Output of [`plan_allocation`].
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub allocation: AllocationResult,
    /// MNW-EG only: mean relative gap between each upsampled group's value at
    /// its scaled budget and the scaled value of the original group.
    pub conjecture_gap: Option<f64>,
}

fn member_lists(instance: &GroupedInstance, states: &[usize]) -> Vec<Vec<GroupMember>> {
    (0..instance.n_groups())
        .map(|g| {
            instance
                .members(g)
                .iter()
                .map(|&arm| GroupMember {
                    arm,
                    state: states[arm],
                })
                .collect()
        })
        .collect()
}

fn indexes_of(groups: &[Vec<GroupMember>], indexes: &WhittleIndexSet) -> Vec<Vec<f64>> {
    groups
        .iter()
        .map(|members| members.iter().map(|m| indexes.indexes[m.arm]).collect())
        .collect()
}

/// Group budgets for an allocation policy at the current states.
///
/// `indexes` are the current indexes of every arm with `H - t` rounds left.
/// For MNW-EG every group is upsampled to the largest group size with
/// `rng`, the indexes of copies are those of their source arms, and the
/// greedy budgets are rescaled back to the original sizes.
pub fn plan_allocation<R: Rng + ?Sized>(
    kind: PolicyKind,
    instance: &GroupedInstance,
    states: &[usize],
    t: usize,
    indexes: &WhittleIndexSet,
    rng: &mut R,
) -> Result<Plan, PolicyError> {
    let remaining = instance.horizon() - t;
    let sizes = instance.group_sizes();
    let budget = instance.total_budget();
    let original = member_lists(instance, states);
    let precision = indexes.precision;
    match kind {
        PolicyKind::Mmr | PolicyKind::Mnw => {
            let w = indexes_of(&original, indexes);
            let mut oracle = LagrangeOracle::new(instance, original, w, remaining, precision)?;
            let allocation = if kind == PolicyKind::Mmr {
                allocate_mmr(&sizes, budget, BudgetCaps::GroupSize, &mut oracle)?
            } else {
                allocate_mnw(
                    &sizes,
                    budget,
                    BudgetCaps::GroupSize,
                    MnwMode::Naive,
                    &mut oracle,
                )?
            };
            Ok(Plan {
                allocation,
                conjecture_gap: None,
            })
        }
        PolicyKind::MnwEg => {
            let theta = sizes.iter().copied().max().unwrap_or(0);
            let upsampled: Vec<Vec<GroupMember>> = original
                .iter()
                .map(|members| upsample(members, theta, rng))
                .collect();
            let w = indexes_of(&upsampled, indexes);
            let mut oracle = LagrangeOracle::new(instance, upsampled, w, remaining, precision)?;
            let allocation = allocate_mnw(
                &sizes,
                budget,
                BudgetCaps::GroupSize,
                MnwMode::EqualizedGroups,
                &mut oracle,
            )?;

            let w = indexes_of(&original, indexes);
            let mut base = LagrangeOracle::new(instance, original, w, remaining, precision)?;
            let mut gaps = Vec::new();
            for (g, (&size, &b)) in sizes.iter().zip(&allocation.budgets).enumerate() {
                if size == theta {
                    continue;
                }
                let scale = theta as f64 / size as f64;
                let scaled_budget = ((scale * b as f64).round() as usize).min(theta);
                let lhs = oracle.bound(g, scaled_budget)?.value;
                let rhs = base.bound(g, b)?.value;
                gaps.push(conjecture_gap(rhs, lhs, scale));
            }
            let conjecture_gap =
                (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
            if let Some(gap) = conjecture_gap {
                log::debug!("t={t}: mean upsampling conjecture gap {gap:.4}");
            }
            Ok(Plan {
                allocation,
                conjecture_gap,
            })
        }
        other => Err(PolicyError::MissingAllocation(other)),
    }
}

/// Convenience: indexes from `cache` followed by [`plan_allocation`].
pub fn plan_allocation_cached<R: Rng + ?Sized>(
    kind: PolicyKind,
    instance: &GroupedInstance,
    states: &[usize],
    t: usize,
    cache: &IndexCache,
    rng: &mut R,
) -> Result<Plan, PolicyError> {
    let indexes = cache.indexes(instance, states, instance.horizon() - t)?;
    plan_allocation(kind, instance, states, t, &indexes, rng)
}
