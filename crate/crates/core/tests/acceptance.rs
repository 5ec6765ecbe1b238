//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.
//!
//! Run with `cargo test -p ermab --test acceptance` (add `--release` for speed).

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ermab::allocation::{FnOracle, LOG_FLOOR};
use ermab::domains::synthetic::GROUP_PARAMS;
use ermab::domains::{build_synthetic, SyntheticSpec};
use ermab::index::whittle_index;
use ermab::sim::{mean_stderr, run_episode_with, EpisodeOptions};
use ermab::{
    aggregate, allocate_mmr, allocate_mnw, exact_joint_value, gini, whittle_to_lagrange, ArmModel,
    BudgetCaps, GroupedInstance, IndexCache, MnwMode, PolicyKind, PolicySpec, SimulationRecord,
    WhittleIndexSet, DEFAULT_PRECISION,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GAMMA: f64 = DEFAULT_PRECISION;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn toy_allocation() -> Outcome {
    let start = Instant::now();
    let toy = |g: usize, b: usize| {
        let b = b as f64;
        if g == 0 {
            2.0 * b + 1.0
        } else {
            4.0 * (b + 1.0)
        }
    };
    let mmr = allocate_mmr(&[1, 1], 2, BudgetCaps::Unbounded, &mut FnOracle(toy)).unwrap();
    let mnw = allocate_mnw(
        &[1, 1],
        2,
        BudgetCaps::Unbounded,
        MnwMode::Naive,
        &mut FnOracle(toy),
    )
    .unwrap();
    let elapsed = start.elapsed();
    let pass = mmr.budgets == [2, 0]
        && mmr.final_values == [5.0, 4.0]
        && mnw.budgets == [1, 1]
        && mnw.final_values == [3.0, 8.0]
        && elapsed < Duration::from_secs(1);
    Outcome::new(
        pass,
        format!(
            "MMR {:?} values {:?}; MNW {:?} values {:?}; {:.1?}",
            mmr.budgets, mmr.final_values, mnw.budgets, mnw.final_values, elapsed
        ),
    )
}

fn index_set(arms: &[&ArmModel], states: &[usize], remaining: usize) -> WhittleIndexSet {
    WhittleIndexSet {
        indexes: arms
            .iter()
            .zip(states)
            .map(|(arm, &s)| whittle_index(arm, s, remaining, GAMMA).unwrap().value)
            .collect(),
        precision: GAMMA,
    }
}

fn group_bounds(instance: &GroupedInstance) -> Vec<f64> {
    let arms: Vec<&ArmModel> = instance.arms().iter().collect();
    let states = instance.start_states();
    let h = instance.horizon();
    let set = index_set(&arms, states, h);
    (0..=arms.len())
        .map(|b| {
            whittle_to_lagrange(&arms, states, b, h, &set)
                .unwrap()
                .value
        })
        .collect()
}

fn theorem_three_bound() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut instances, mut checks, mut failures) = (0, 0, Vec::new());
    let mut worst_upper: f64 = f64::NEG_INFINITY;
    for trial in 0..60 {
        let n = [2, 3, 4][trial % 3];
        let n_states = [2, 3][(trial / 3) % 2];
        let horizon = [3, 4, 5][(trial / 6) % 3];
        let instance = common::identical_arm_instance(&mut rng, n, n_states, horizon);
        let bounds = group_bounds(&instance);
        let slack = 2.0 * GAMMA * (n * horizon) as f64;
        for (b, &l) in bounds.iter().enumerate() {
            let v = exact_joint_value(&instance, b).unwrap();
            let gap = l - v;
            let cap = ((n - b) * horizon) as f64;
            worst_upper = worst_upper.max(gap - cap);
            checks += 1;
            let mut ok = gap >= -slack && gap <= cap + slack;
            if b == 0 || b == n {
                ok &= gap.abs() <= slack;
            }
            if !ok {
                failures.push(format!(
                    "trial {trial} N={n} |S|={n_states} H={horizon} b={b}: L-V={gap:.6}"
                ));
            }
        }
        instances += 1;
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && instances >= 50 && elapsed < Duration::from_secs(60);
    let mut detail = format!(
        "{instances} instances, {checks} budgets, max (L-V)-(N-b)H = {worst_upper:.4}, {:.1?}",
        elapsed
    );
    if let Some(first) = failures.first() {
        detail.push_str(&format!("; {} violations, first: {first}", failures.len()));
    }
    Outcome::new(pass, detail)
}

fn mmr_objective(sizes: &[usize], values: &[f64]) -> f64 {
    values
        .iter()
        .zip(sizes)
        .map(|(v, &n)| v / n as f64)
        .fold(f64::INFINITY, f64::min)
}

fn mnw_objective(values: &[f64]) -> f64 {
    values.iter().map(|v| v.max(LOG_FLOOR).ln()).sum()
}

fn allocator_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut failures = Vec::new();
    let trials = 150;
    for trial in 0..trials {
        let n_groups = rng.gen_range(1..=3);
        let sizes: Vec<usize> = (0..n_groups).map(|_| rng.gen_range(1..=4)).collect();
        let capped = trial % 2 == 0;
        let (caps_kind, caps, max_total) = if capped {
            (
                BudgetCaps::GroupSize,
                sizes.clone(),
                sizes.iter().sum::<usize>().min(6),
            )
        } else {
            (BudgetCaps::Unbounded, vec![6; n_groups], 6)
        };
        let total = rng.gen_range(0..=max_total);
        let tables: Vec<Vec<f64>> = (0..n_groups)
            .map(|_| common::concave_table(&mut rng, 7))
            .collect();
        let value = |g: usize, b: usize| tables[g][b];
        let values_at = |budgets: &[usize]| -> Vec<f64> {
            budgets
                .iter()
                .enumerate()
                .map(|(g, &b)| value(g, b))
                .collect()
        };
        let splits = common::compositions(total, &caps);
        let best_mmr = splits
            .iter()
            .map(|s| mmr_objective(&sizes, &values_at(s)))
            .fold(f64::NEG_INFINITY, f64::max);
        let best_mnw = splits
            .iter()
            .map(|s| mnw_objective(&values_at(s)))
            .fold(f64::NEG_INFINITY, f64::max);
        let mmr = allocate_mmr(&sizes, total, caps_kind, &mut FnOracle(value)).unwrap();
        let mnw = allocate_mnw(
            &sizes,
            total,
            caps_kind,
            MnwMode::Naive,
            &mut FnOracle(value),
        )
        .unwrap();
        let got_mmr = mmr_objective(&sizes, &values_at(&mmr.budgets));
        let got_mnw = mnw_objective(&values_at(&mnw.budgets));
        if mmr.total() != total || (got_mmr - best_mmr).abs() > 1e-9 {
            failures.push(format!("trial {trial} MMR {got_mmr} vs {best_mmr}"));
        }
        if mnw.total() != total || (got_mnw - best_mnw).abs() > 1e-9 {
            failures.push(format!("trial {trial} MNW {got_mnw} vs {best_mnw}"));
        }
    }
    let mut detail = format!("{trials} oracles, |G| <= 3, B <= 6");
    if let Some(first) = failures.first() {
        detail.push_str(&format!("; {} mismatches, first: {first}", failures.len()));
    }
    Outcome::new(failures.is_empty(), detail)
}

fn bound_shape() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut failures = Vec::new();
    let groups = 60;
    let (mut worst_mono, mut worst_concave) = (0.0_f64, 0.0_f64);
    for g in 0..groups {
        let n = rng.gen_range(2..=6);
        let n_states = rng.gen_range(2..=3);
        let horizon = rng.gen_range(3..=8);
        let arms: Vec<ArmModel> = (0..n)
            .map(|_| common::random_arm(&mut rng, n_states, 0))
            .collect();
        let starts = (0..n).map(|_| rng.gen_range(0..n_states)).collect();
        let instance = GroupedInstance::new(arms, horizon, 0, starts).unwrap();
        let l = group_bounds(&instance);
        let tol = 4.0 * GAMMA * (n * horizon) as f64;
        let diffs: Vec<f64> = l.windows(2).map(|w| w[1] - w[0]).collect();
        let mono = diffs.iter().fold(0.0_f64, |m, &d| m.max(-d));
        let concave = diffs.windows(2).fold(0.0_f64, |m, w| m.max(w[1] - w[0]));
        worst_mono = worst_mono.max(mono);
        worst_concave = worst_concave.max(concave);
        if mono > tol || concave > tol {
            failures.push(format!(
                "group {g} (n={n}, H={horizon}): decrease {mono:.3e}, convexity {concave:.3e}, tol {tol:.1e}"
            ));
        }
    }
    let mut detail = format!(
        "{groups} groups, worst decrease {worst_mono:.2e}, worst convexity {worst_concave:.2e}"
    );
    if let Some(first) = failures.first() {
        detail.push_str(&format!("; {} violations, first: {first}", failures.len()));
    }
    Outcome::new(failures.is_empty(), detail)
}

fn run_seeds(instance: &GroupedInstance, kind: PolicyKind, seeds: u64) -> Vec<SimulationRecord> {
    let spec = PolicySpec::new(kind);
    let cache = IndexCache::new(instance, spec.precision);
    (0..seeds)
        .map(|seed| {
            run_episode_with(instance, &spec, seed, &cache, EpisodeOptions::default()).unwrap()
        })
        .collect()
}

struct SyntheticRuns {
    opt: Vec<SimulationRecord>,
    mmr: Vec<SimulationRecord>,
    mnw: Vec<SimulationRecord>,
    mnw_eg: Vec<SimulationRecord>,
    elapsed: Duration,
}

fn synthetic_runs() -> SyntheticRuns {
    let start = Instant::now();
    let instance = build_synthetic(&SyntheticSpec::default()).unwrap();
    SyntheticRuns {
        opt: run_seeds(&instance, PolicyKind::Opt, 25),
        mmr: run_seeds(&instance, PolicyKind::Mmr, 25),
        mnw: run_seeds(&instance, PolicyKind::Mnw, 25),
        mnw_eg: run_seeds(&instance, PolicyKind::MnwEg, 25),
        elapsed: start.elapsed(),
    }
}

fn synthetic_headline(runs: &SyntheticRuns) -> Outcome {
    let opt = aggregate(&runs.opt).unwrap();
    let mmr = aggregate(&runs.mmr).unwrap();
    let eg = aggregate(&runs.mnw_eg).unwrap();
    let gini_mmr = opt.mean_gini / mmr.mean_gini;
    let gini_eg = opt.mean_gini / eg.mean_gini;
    let reward_mmr = mmr.mean_reward_per_arm / opt.mean_reward_per_arm;
    let reward_eg = eg.mean_reward_per_arm / opt.mean_reward_per_arm;
    let pass = gini_mmr >= 3.0
        && gini_eg >= 3.0
        && reward_mmr >= 0.85
        && reward_eg >= 0.85
        && runs.elapsed < Duration::from_secs(600);
    Outcome::new(
        pass,
        format!(
            "Gini Opt/MMR {gini_mmr:.2}, Opt/MNW-EG {gini_eg:.2}; reward vs Opt: MMR {reward_mmr:.3}, MNW-EG {reward_eg:.3} (Opt {:.3}/arm, Gini {:.4}); {:.1?}",
            opt.mean_reward_per_arm, opt.mean_gini, runs.elapsed
        ),
    )
}

/// Mean over seeds and rounds of a group's share of the budget.
fn budget_share(records: &[SimulationRecord], group: usize) -> f64 {
    let shares: Vec<f64> = records
        .iter()
        .flat_map(|r| r.allocation_log.as_ref().unwrap())
        .map(|b| b[group] as f64 / b.iter().sum::<usize>() as f64)
        .collect();
    mean_stderr(&shares).0
}

fn group_size_bias(runs: &SyntheticRuns) -> Outcome {
    let arm_share = 0.05;
    let naive = budget_share(&runs.mnw, 2);
    let eg = budget_share(&runs.mnw_eg, 2);
    Outcome::new(
        naive >= 2.0 * arm_share && eg < naive,
        format!("group C share: MNW {naive:.3}, MNW-EG {eg:.3}, arm share {arm_share}"),
    )
}

fn simulation_calibration() -> Outcome {
    let instance = build_synthetic(&SyntheticSpec {
        n_arms: 1,
        group_fracs: vec![1.0],
        groups: vec![GROUP_PARAMS[3]],
        budget: 0,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let episodes = 10_000;
    let totals: Vec<f64> = run_seeds(&instance, PolicyKind::NoAct, episodes)
        .iter()
        .map(|r| r.total_reward)
        .collect();
    let (mean, se) = mean_stderr(&totals);
    let z = (mean - 7.6) / se;
    Outcome::new(
        z.abs() <= 3.0,
        format!("{episodes} episodes: mean {mean:.4} ± {se:.4} (z = {z:.2}) vs 7.6"),
    )
}

fn gini_units() -> Outcome {
    let cases: [(&[f64], f64); 4] = [
        (&[0.7, 0.7, 0.7], 0.0),
        (&[0.0, 3.5], 0.5),
        (&[0.0, 1.0], 0.5),
        (&[1.0, 2.0, 3.0], 2.0 / 9.0),
    ];
    let mut worst = 0.0_f64;
    for (xs, want) in cases {
        worst = worst.max((gini(xs).unwrap() - want).abs());
    }
    Outcome::new(worst <= 1e-12, format!("max error {worst:.1e}"))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("toy-oracle allocation", toy_allocation()),
        ("group value bound vs exact optimum", theorem_three_bound()),
        ("allocator optimality", allocator_optimality()),
        ("bound monotone and concave in budget", bound_shape()),
    ];
    let runs = synthetic_runs();
    results.push(("synthetic equity vs reward", synthetic_headline(&runs)));
    results.push(("small-group bias of naive MNW", group_size_bias(&runs)));
    results.push(("NoAct calibration", simulation_calibration()));
    results.push(("Gini unit values", gini_units()));

    let mut failed = 0;
    for (name, outcome) in &results {
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {}", outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
