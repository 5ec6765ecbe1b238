//! Two-state Synthetic domain with five groups A–E.
//!
//! A, B and C respond to intervention with slightly decreasing strength; D
//! and E do not respond at all. Group C is much smaller than the others.

use serde::{Deserialize, Serialize};

use super::{group_sizes, DomainError};
use crate::mdp::{ArmModel, GroupedInstance};

/// `p(s, a, 1)` for a two-state arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStateParams {
    pub p_0_0_1: f64,
    pub p_1_0_1: f64,
    pub p_0_1_1: f64,
    pub p_1_1_1: f64,
}

impl TwoStateParams {
    pub const fn new(p_0_0_1: f64, p_1_0_1: f64, p_0_1_1: f64, p_1_1_1: f64) -> Self {
        Self {
            p_0_0_1,
            p_1_0_1,
            p_0_1_1,
            p_1_1_1,
        }
    }

    pub fn arm(&self, group: usize) -> Result<ArmModel, DomainError> {
        Ok(ArmModel::two_state(
            [[self.p_0_0_1, self.p_0_1_1], [self.p_1_0_1, self.p_1_1_1]],
            group,
        )?)
    }
}

pub const GROUP_NAMES: [&str; 5] = ["A", "B", "C", "D", "E"];

pub const GROUP_PARAMS: [TwoStateParams; 5] = [
    TwoStateParams::new(0.05, 0.35, 0.99, 0.99),
    TwoStateParams::new(0.05, 0.10, 0.95, 0.95),
    TwoStateParams::new(0.05, 0.05, 0.90, 0.90),
    TwoStateParams::new(0.4, 0.4, 0.4, 0.4),
    TwoStateParams::new(0.4, 0.4, 0.4, 0.4),
];

pub const GROUP_FRACS: [f64; 5] = [0.25, 0.25, 0.05, 0.25, 0.20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_arms: usize,
    pub group_fracs: Vec<f64>,
    pub groups: Vec<TwoStateParams>,
    pub horizon: usize,
    pub budget: usize,
    pub start_state: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_arms: 100,
            group_fracs: GROUP_FRACS.to_vec(),
            groups: GROUP_PARAMS.to_vec(),
            horizon: 20,
            budget: 20,
            start_state: 0,
        }
    }
}

pub fn build_synthetic(spec: &SyntheticSpec) -> Result<GroupedInstance, DomainError> {
    if spec.groups.len() != spec.group_fracs.len() {
        return Err(DomainError::Invalid(format!(
            "{} group parameter sets for {} fractions",
            spec.groups.len(),
            spec.group_fracs.len()
        )));
    }
    let sizes = group_sizes(&spec.group_fracs, spec.n_arms)?;
    let mut arms = Vec::with_capacity(spec.n_arms);
    for (g, (&size, params)) in sizes.iter().zip(&spec.groups).enumerate() {
        let arm = params.arm(g)?;
        arms.extend(std::iter::repeat_n(arm, size));
    }
    Ok(GroupedInstance::new(
        arms,
        spec.horizon,
        spec.budget,
        vec![spec.start_state; spec.n_arms],
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_layout() {
        let inst = build_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(inst.group_sizes(), vec![25, 25, 5, 25, 20]);
        assert_eq!(inst.n_model_classes(), 4);
        assert!(inst.start_states().iter().all(|&s| s == 0));
    }

    #[test]
    fn group_c_constants() {
        let inst = build_synthetic(&SyntheticSpec::default()).unwrap();
        let c = inst.arm(inst.members(2)[0]);
        assert_eq!(c.prob(1, 0, 1), 0.05);
        assert_eq!(c.prob(0, 1, 1), 0.90);
        assert_eq!(c.prob(1, 1, 1), 0.90);
        assert_eq!(c.prob(0, 0, 1), 0.05);
        assert_eq!(c.rewards(), &[0.0, 1.0]);
    }

    #[test]
    fn group_d_is_inert() {
        let inst = build_synthetic(&SyntheticSpec::default()).unwrap();
        let d = inst.arm(inst.members(3)[0]);
        for s in 0..2 {
            for a in 0..2 {
                assert_eq!(d.prob(s, a, 1), 0.4);
            }
        }
    }
}
