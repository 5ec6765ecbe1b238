//! Equitable restless multi-armed bandits.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: per-arm finite MDPs, charged value iteration and an exact joint
//!   oracle for tiny instances.
//! - [`index`]: Whittle indexes by bisection and the Whittle-to-Lagrange group
//!   value bound.
//! - [`allocation`]: water-filling maximin and greedy Nash-welfare budget
//!   allocation across groups, generic over a group value oracle.
//! - [`policy`]: per-round action selection for every compared policy.
//! - [`domains`]: the Synthetic, Maternal Health and Digital Diabetes instances.
//! - [`sim`] and [`metrics`]: seeded episodes, Gini index and aggregation.

pub mod allocation;
pub mod domains;
pub mod index;
pub mod mdp;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod sim;

pub use allocation::{
    allocate_mmr, allocate_mnw, rescale, upsample, AllocError, AllocationResult, BudgetCaps,
    GroupValueOracle, MnwMode,
};
pub use index::{whittle_index, whittle_to_lagrange, GroupValueBound, IndexCache, WhittleIndexSet};
pub use mdp::{charged_value_iteration, exact_joint_value, ArmModel, GroupedInstance, MdpError};
pub use metrics::gini;
pub use policy::{select_actions, ActionVector, PolicyKind, PolicySpec};
pub use sim::{aggregate, run_episode, SimulationRecord, Summary};

/// Default bisection precision for Whittle indexes.
pub const DEFAULT_PRECISION: f64 = 1e-4;
