//! Maternal Health domain: three states (Self-motivated, Persuadable, Lost
//! Cause) with per-arm probabilities sampled around group means.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{group_sizes, DomainError};
use crate::mdp::{ArmModel, GroupedInstance};

pub const SELF_MOTIVATED: usize = 0;
pub const PERSUADABLE: usize = 1;
pub const LOST_CAUSE: usize = 2;

pub const REWARDS: [f64; 3] = [1.0, 0.5, 0.0];

/// Sampled probabilities are clamped to `[CLAMP, 1 - CLAMP]`.
const CLAMP: f64 = 1e-6;

/// The six free probabilities of a Maternal arm. All other mass of a row
/// stays in the current state; jumps between states 0 and 2 are impossible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternalParams {
    pub p_0_0_0: f64,
    pub p_0_1_0: f64,
    pub p_1_0_2: f64,
    pub p_1_1_0: f64,
    pub p_2_0_2: f64,
    pub p_2_1_2: f64,
}

impl MaternalParams {
    const fn new(
        p_0_0_0: f64,
        p_0_1_0: f64,
        p_1_0_2: f64,
        p_1_1_0: f64,
        p_2_0_2: f64,
        p_2_1_2: f64,
    ) -> Self {
        Self {
            p_0_0_0,
            p_0_1_0,
            p_1_0_2,
            p_1_1_0,
            p_2_0_2,
            p_2_1_2,
        }
    }

    fn as_array(&self) -> [f64; 6] {
        [
            self.p_0_0_0,
            self.p_0_1_0,
            self.p_1_0_2,
            self.p_1_1_0,
            self.p_2_0_2,
            self.p_2_1_2,
        ]
    }

    fn from_array(p: [f64; 6]) -> Self {
        Self::new(p[0], p[1], p[2], p[3], p[4], p[5])
    }

    pub fn arm(&self, group: usize) -> Result<ArmModel, DomainError> {
        let t = vec![
            [
                vec![self.p_0_0_0, 1.0 - self.p_0_0_0, 0.0],
                vec![self.p_0_1_0, 1.0 - self.p_0_1_0, 0.0],
            ],
            [
                vec![0.0, 1.0 - self.p_1_0_2, self.p_1_0_2],
                vec![self.p_1_1_0, 1.0 - self.p_1_1_0, 0.0],
            ],
            [
                vec![0.0, 1.0 - self.p_2_0_2, self.p_2_0_2],
                vec![0.0, 1.0 - self.p_2_1_2, self.p_2_1_2],
            ],
        ];
        Ok(ArmModel::new(t, REWARDS.to_vec(), group)?)
    }
}

/// Group means for types A (high), B (medium) and C (low) responsiveness.
pub const GROUP_PARAMS: [MaternalParams; 3] = [
    MaternalParams::new(0.5, 0.5, 0.75, 0.75, 0.60, 0.60),
    MaternalParams::new(0.5, 0.5, 0.60, 0.40, 0.60, 0.60),
    MaternalParams::new(0.5, 0.5, 0.60, 0.25, 0.60, 0.60),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaternalSpec {
    pub n_arms: usize,
    /// Which group holds 60% of the arms; the other two hold 20% each.
    pub large_group: usize,
    pub noise_scale: f64,
    pub groups: Vec<MaternalParams>,
    pub horizon: usize,
    pub budget: usize,
    pub start_state: usize,
}

impl Default for MaternalSpec {
    fn default() -> Self {
        Self {
            n_arms: 200,
            large_group: 2,
            noise_scale: 0.2,
            groups: GROUP_PARAMS.to_vec(),
            horizon: 20,
            budget: 60,
            start_state: PERSUADABLE,
        }
    }
}

impl MaternalSpec {
    pub fn group_fracs(&self) -> Vec<f64> {
        (0..self.groups.len())
            .map(|g| if g == self.large_group { 0.6 } else { 0.2 })
            .collect()
    }
}

/// Standard deviation used when sampling around `mean`.
pub fn sampling_std(mean: f64, noise_scale: f64) -> f64 {
    noise_scale * mean.min(1.0 - mean)
}

fn sample_prob<R: Rng + ?Sized>(mean: f64, noise_scale: f64, rng: &mut R) -> f64 {
    let std = sampling_std(mean, noise_scale);
    if std <= 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, std).expect("finite positive std");
    normal.sample(rng).clamp(CLAMP, 1.0 - CLAMP)
}

pub fn build_maternal<R: Rng + ?Sized>(
    spec: &MaternalSpec,
    rng: &mut R,
) -> Result<GroupedInstance, DomainError> {
    if spec.groups.len() != 3 || spec.large_group >= 3 {
        return Err(DomainError::Invalid(format!(
            "maternal needs 3 groups and large_group < 3, got {} and {}",
            spec.groups.len(),
            spec.large_group
        )));
    }
    if !(0.0..=1.0).contains(&spec.noise_scale) {
        return Err(DomainError::Invalid(format!(
            "noise_scale {} outside [0, 1]",
            spec.noise_scale
        )));
    }
    let sizes = group_sizes(&spec.group_fracs(), spec.n_arms)?;
    let mut arms = Vec::with_capacity(spec.n_arms);
    for (g, (&size, means)) in sizes.iter().zip(&spec.groups).enumerate() {
        for _ in 0..size {
            let sampled = means
                .as_array()
                .map(|m| sample_prob(m, spec.noise_scale, rng));
            arms.push(MaternalParams::from_array(sampled).arm(g)?);
        }
    }
    Ok(GroupedInstance::new(
        arms,
        spec.horizon,
        spec.budget,
        vec![spec.start_state; spec.n_arms],
    )?)
}
