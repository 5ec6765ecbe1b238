//! Seeded episode execution and aggregation across seeds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::AllocationResult;
use crate::index::{IndexCache, IndexError};
use crate::mdp::{ArmModel, GroupedInstance};
use crate::metrics::{gini, MetricError};
use crate::policy::{
    plan_allocation, select_actions, ActionHistory, ActionVector, PolicyError, PolicyKind,
    PolicySpec, RoundView,
};
use crate::rng::{stream, Purpose};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("round {t}: {detail}")]
    BudgetViolation { t: usize, detail: String },
    #[error("index cache was built for another instance or precision")]
    CacheMismatch,
    #[error("no records to aggregate")]
    EmptyInput,
    #[error("records disagree: {0}")]
    Mismatch(String),
}

/// Episode logging switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpisodeOptions {
    pub log_actions: bool,
}

/// Outcome of one `(instance, policy, seed)` episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub seed: u64,
    pub policy: PolicyKind,
    pub realloc_every_round: bool,
    pub per_group_total_reward: Vec<f64>,
    pub per_group_size: Vec<usize>,
    pub total_reward: f64,
    /// Gini index of per-group average reward.
    pub gini: f64,
    /// Summed reward of all arms at each round.
    pub round_rewards: Vec<f64>,
    /// `[component][group]` totals, for domains with named reward components.
    pub per_group_component_totals: Option<Vec<Vec<f64>>>,
    pub actions_log: Option<Vec<ActionVector>>,
    /// Group budgets in force at each round, for allocation policies.
    pub allocation_log: Option<Vec<Vec<usize>>>,
    /// Mean upsampling conjecture gap over MNW-EG allocation calls.
    pub conjecture_gap: Option<f64>,
}

impl SimulationRecord {
    pub fn n_arms(&self) -> usize {
        self.per_group_size.iter().sum()
    }

    /// Average reward per arm in each group.
    pub fn group_averages(&self) -> Vec<f64> {
        self.per_group_total_reward
            .iter()
            .zip(&self.per_group_size)
            .map(|(r, &n)| r / n as f64)
            .collect()
    }

    /// Mean per-arm reward collected in the last round.
    pub fn last_round_reward_per_arm(&self) -> f64 {
        self.round_rewards.last().copied().unwrap_or(0.0) / self.n_arms() as f64
    }
}

fn sample_next(arm: &ArmModel, state: usize, action: usize, u: f64) -> usize {
    let support = arm.support(state, action);
    let mut acc = 0.0;
    for &(j, p) in support {
        acc += p;
        if u < acc {
            return j;
        }
    }
    support.last().map(|&(j, _)| j).unwrap_or(state)
}

fn check_feasible(
    instance: &GroupedInstance,
    t: usize,
    actions: &ActionVector,
    allocation: Option<&AllocationResult>,
) -> Result<(), SimError> {
    let budget = instance.total_budget();
    if actions.len() > budget {
        return Err(SimError::BudgetViolation {
            t,
            detail: format!("{} arms acted, budget {budget}", actions.len()),
        });
    }
    if actions.acted.windows(2).any(|w| w[0] >= w[1])
        || actions
            .acted
            .last()
            .is_some_and(|&n| n >= instance.n_arms())
    {
        return Err(SimError::BudgetViolation {
            t,
            detail: "malformed action set".into(),
        });
    }
    if let Some(alloc) = allocation {
        if alloc.total() != budget {
            return Err(SimError::BudgetViolation {
                t,
                detail: format!("allocation sums to {}, budget {budget}", alloc.total()),
            });
        }
        let mut used = vec![0usize; instance.n_groups()];
        for &n in &actions.acted {
            used[instance.group_of(n)] += 1;
        }
        for (g, (&u, &b)) in used.iter().zip(&alloc.budgets).enumerate() {
            if u > b {
                return Err(SimError::BudgetViolation {
                    t,
                    detail: format!("group {g} acted on {u} arms, budget {b}"),
                });
            }
        }
    }
    Ok(())
}

/// Runs one episode with a private index cache.
pub fn run_episode(
    instance: &GroupedInstance,
    policy: &PolicySpec,
    seed: u64,
) -> Result<SimulationRecord, SimError> {
    let cache = IndexCache::new(instance, policy.precision);
    run_episode_with(instance, policy, seed, &cache, EpisodeOptions::default())
}

/// Runs `t = 0..H-1`: collect `R(s_t)`, (re)allocate if needed, act, transition.
///
/// Transitions draw one uniform per arm per round from that arm's own stream,
/// so every policy sees the same transition noise for a given seed.
pub fn run_episode_with(
    instance: &GroupedInstance,
    policy: &PolicySpec,
    seed: u64,
    cache: &IndexCache,
    options: EpisodeOptions,
) -> Result<SimulationRecord, SimError> {
    if policy.kind.needs_indexes()
        && (!cache.matches(instance) || cache.precision() != policy.precision)
    {
        return Err(SimError::CacheMismatch);
    }
    policy.check_domain(instance)?;
    let n = instance.n_arms();
    let horizon = instance.horizon();
    let n_groups = instance.n_groups();
    let components = instance.reward_components();

    let mut states = instance.start_states().to_vec();
    let mut transition_rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|arm| stream(seed, Purpose::Transitions, arm as u64))
        .collect();
    let mut policy_rng = stream(seed, Purpose::Policy, 0);
    let mut history = ActionHistory::new(n);

    let mut group_totals = vec![0.0; n_groups];
    let mut component_totals = components.map(|c| vec![vec![0.0; n_groups]; c.names.len()]);
    let mut round_rewards = Vec::with_capacity(horizon);
    let mut actions_log = options.log_actions.then(Vec::new);
    let mut allocation_log = policy.kind.needs_allocation().then(Vec::new);
    let mut allocation: Option<AllocationResult> = None;
    let mut gaps = Vec::new();
    let mut allocation_calls = 0u64;

    for t in 0..horizon {
        let mut round = 0.0;
        for (arm, &s) in states.iter().enumerate() {
            let g = instance.group_of(arm);
            let r = instance.arm(arm).reward(s);
            group_totals[g] += r;
            round += r;
            if let (Some(totals), Some(c)) = (component_totals.as_mut(), components) {
                for (k, values) in c.values.iter().enumerate() {
                    totals[k][g] += values[s];
                }
            }
        }
        round_rewards.push(round);

        let remaining = horizon - t;
        let indexes = if policy.kind.needs_indexes() {
            Some(cache.indexes(instance, &states, remaining)?)
        } else {
            None
        };
        if policy.kind.needs_allocation() && (t == 0 || policy.realloc_every_round) {
            let mut rng = stream(seed, Purpose::Upsample, allocation_calls);
            allocation_calls += 1;
            let plan = plan_allocation(
                policy.kind,
                instance,
                &states,
                t,
                indexes.as_ref().expect("allocation policies use indexes"),
                &mut rng,
            )?;
            gaps.extend(plan.conjecture_gap);
            allocation = Some(plan.allocation);
        }
        if let (Some(log), Some(a)) = (allocation_log.as_mut(), allocation.as_ref()) {
            log.push(a.budgets.clone());
        }

        let view = RoundView {
            instance,
            states: &states,
            t,
            indexes: indexes.as_ref(),
        };
        let actions = select_actions(
            policy,
            &view,
            allocation.as_ref(),
            &history,
            &mut policy_rng,
        )?;
        check_feasible(instance, t, &actions, allocation.as_ref())?;
        history.record(t, &actions);

        let mut acted = actions.acted.iter().peekable();
        for (arm, (state, rng)) in states
            .iter_mut()
            .zip(transition_rngs.iter_mut())
            .enumerate()
        {
            let a = if acted.peek() == Some(&&arm) {
                acted.next();
                1
            } else {
                0
            };
            let u: f64 = rng.gen();
            *state = sample_next(instance.arm(arm), *state, a, u);
        }
        if let Some(log) = actions_log.as_mut() {
            log.push(actions);
        }
    }

    let per_group_size = instance.group_sizes();
    let averages: Vec<f64> = group_totals
        .iter()
        .zip(&per_group_size)
        .map(|(r, &s)| r / s as f64)
        .collect();
    let gini = gini(&averages)?;
    Ok(SimulationRecord {
        seed,
        policy: policy.kind,
        realloc_every_round: policy.realloc_every_round,
        total_reward: group_totals.iter().sum(),
        per_group_total_reward: group_totals,
        per_group_size,
        gini,
        round_rewards,
        per_group_component_totals: component_totals,
        actions_log,
        allocation_log,
        conjecture_gap: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
    })
}

/// Mean and standard error over seeds for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub policy: PolicyKind,
    pub n_seeds: usize,
    pub n_arms: usize,
    pub mean_reward_per_arm: f64,
    pub stderr_reward_per_arm: f64,
    /// Mean over seeds of each group's average reward per arm.
    pub per_group_mean: Vec<f64>,
    pub per_group_stderr: Vec<f64>,
    pub mean_gini: f64,
    pub stderr_gini: f64,
    pub mean_last_round_reward_per_arm: f64,
    /// Mean per-arm total of each reward component, when the domain has them.
    pub component_means: Option<Vec<f64>>,
}

/// `(mean, sample std / sqrt(n))`; zero error for a single value.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn aggregate(records: &[SimulationRecord]) -> Result<Summary, SimError> {
    let first = records.first().ok_or(SimError::EmptyInput)?;
    for r in records {
        if r.policy != first.policy {
            return Err(SimError::Mismatch(format!(
                "policies {} and {}",
                first.policy, r.policy
            )));
        }
        if r.per_group_size != first.per_group_size {
            return Err(SimError::Mismatch("group sizes differ".into()));
        }
    }
    let n_arms = first.n_arms();
    let per_arm: Vec<f64> = records
        .iter()
        .map(|r| r.total_reward / n_arms as f64)
        .collect();
    let (mean_reward_per_arm, stderr_reward_per_arm) = mean_stderr(&per_arm);
    let averages: Vec<Vec<f64>> = records
        .iter()
        .map(SimulationRecord::group_averages)
        .collect();
    let (per_group_mean, per_group_stderr) = (0..first.per_group_size.len())
        .map(|g| mean_stderr(&averages.iter().map(|a| a[g]).collect::<Vec<_>>()))
        .unzip();
    let ginis: Vec<f64> = records.iter().map(|r| r.gini).collect();
    let (mean_gini, stderr_gini) = mean_stderr(&ginis);
    let last: Vec<f64> = records
        .iter()
        .map(SimulationRecord::last_round_reward_per_arm)
        .collect();
    let component_means = first.per_group_component_totals.as_ref().map(|c| {
        (0..c.len())
            .map(|k| {
                let per_seed: Vec<f64> = records
                    .iter()
                    .map(|r| {
                        r.per_group_component_totals
                            .as_ref()
                            .map_or(0.0, |t| t[k].iter().sum::<f64>())
                            / n_arms as f64
                    })
                    .collect();
                mean_stderr(&per_seed).0
            })
            .collect()
    });
    Ok(Summary {
        policy: first.policy,
        n_seeds: records.len(),
        n_arms,
        mean_reward_per_arm,
        stderr_reward_per_arm,
        per_group_mean,
        per_group_stderr,
        mean_gini,
        stderr_gini,
        mean_last_round_reward_per_arm: mean_stderr(&last).0,
        component_means,
    })
}
