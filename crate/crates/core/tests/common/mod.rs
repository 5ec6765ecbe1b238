//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use ermab::{ArmModel, GroupedInstance};
use rand::Rng;

/// A random probability vector of length `n`.
pub fn random_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random arm with `n_states` states and rewards in `[0, 1]`.
pub fn random_arm<R: Rng>(rng: &mut R, n_states: usize, group: usize) -> ArmModel {
    let transitions = (0..n_states)
        .map(|_| [random_row(rng, n_states), random_row(rng, n_states)])
        .collect();
    let rewards = (0..n_states).map(|_| rng.gen::<f64>()).collect();
    ArmModel::new(transitions, rewards, group).expect("generated arm is valid")
}

/// `n` copies of one random arm in a single group, random start states.
pub fn identical_arm_instance<R: Rng>(
    rng: &mut R,
    n: usize,
    n_states: usize,
    horizon: usize,
) -> GroupedInstance {
    let arm = random_arm(rng, n_states, 0);
    let starts = (0..n).map(|_| rng.gen_range(0..n_states)).collect();
    GroupedInstance::new(vec![arm; n], horizon, 0, starts).expect("valid instance")
}

/// Random monotone concave table `V(0..=max_budget)` with `V(0) > 0`.
pub fn concave_table<R: Rng>(rng: &mut R, max_budget: usize) -> Vec<f64> {
    let mut incs: Vec<f64> = (0..max_budget).map(|_| rng.gen::<f64>() * 3.0).collect();
    incs.sort_by(|a, b| b.total_cmp(a));
    let mut v = vec![0.1 + rng.gen::<f64>() * 2.0];
    for d in incs {
        v.push(v.last().unwrap() + d);
    }
    v
}

/// Every split of `total` into `caps.len()` parts bounded by `caps`.
pub fn compositions(total: usize, caps: &[usize]) -> Vec<Vec<usize>> {
    fn rec(rest: usize, caps: &[usize], prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if caps.len() == 1 {
            if rest <= caps[0] {
                prefix.push(rest);
                out.push(prefix.clone());
                prefix.pop();
            }
            return;
        }
        for b in 0..=rest.min(caps[0]) {
            prefix.push(b);
            rec(rest - b, &caps[1..], prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, caps, &mut Vec::new(), &mut out);
    out
}
