//! Subcommand implementations. Each writes its tables plus a manifest into
//! the output directory and returns what it wrote.

use std::path::{Path, PathBuf};

use ermab::rng::RNG_SCHEME;
use ermab::{aggregate, PolicyKind, SimulationRecord};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{
    ensure_dir, record_rows, write_csv, write_json, CapacityCurve, CapacityDoc, CapacityRow,
    Crossing, InstanceInfo, Manifest, NotReached, ParetoRow, PolicySummary, SummaryDoc,
    CAPACITY_CSV, CAPACITY_JSON, CAPACITY_METRIC, MANIFEST_FILE, PARETO_FILE, RECORDS_FILE,
    SCHEMA_VERSION, SUMMARY_FILE, UPSAMPLE_NOTE,
};
use crate::runner::{build_instances, run_grid, thread_pool, Overrides};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
}

fn manifest(
    command: &str,
    cfg: &ExperimentConfig,
    files: &[&str],
    instances: Vec<InstanceInfo>,
    capacity_metric: Option<&str>,
) -> Manifest {
    Manifest {
        schema_version: SCHEMA_VERSION,
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        rng_scheme: RNG_SCHEME.to_string(),
        realloc: cfg.realloc,
        upsampling: UPSAMPLE_NOTE.to_string(),
        capacity_metric: capacity_metric.map(str::to_string),
        files: files.iter().map(|f| f.to_string()).collect(),
        instances,
        config: cfg.clone(),
    }
}

/// Splits grid output (policy-major) into one slice per policy.
fn by_policy<'a>(
    records: &'a [SimulationRecord],
    policies: &[PolicyKind],
) -> Vec<(PolicyKind, &'a [SimulationRecord])> {
    let per = records.len() / policies.len().max(1);
    policies
        .iter()
        .zip(records.chunks(per.max(1)))
        .map(|(&p, chunk)| (p, chunk))
        .collect()
}

pub fn summarize(
    records: &[SimulationRecord],
    policies: &[PolicyKind],
) -> Result<Vec<PolicySummary>, CliError> {
    by_policy(records, policies)
        .into_iter()
        .map(|(_, chunk)| {
            let gaps: Vec<f64> = chunk.iter().filter_map(|r| r.conjecture_gap).collect();
            Ok(PolicySummary {
                summary: aggregate(chunk)?,
                mean_conjecture_gap: (!gaps.is_empty())
                    .then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
            })
        })
        .collect()
}

/// `run`: per-group records, per-policy summary, manifest.
pub fn cmd_run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SummaryDoc, CliError> {
    cfg.validate()?;
    let policies = cfg.policy_kinds()?;
    let out = ensure_dir(&opts.out_dir)?;
    let pool = thread_pool(opts.jobs)?;
    let set = build_instances(cfg, Overrides::default())?;
    let records = run_grid(cfg, &set, &policies, &pool)?;

    write_csv(&out.join(RECORDS_FILE), &record_rows(&records))?;
    let doc = SummaryDoc {
        schema_version: SCHEMA_VERSION,
        domain: cfg.domain.clone(),
        realloc: cfg.realloc,
        policies: summarize(&records, &policies)?,
    };
    write_json(&out.join(SUMMARY_FILE), &doc)?;
    write_json(
        &out.join(MANIFEST_FILE),
        &manifest("run", cfg, &[RECORDS_FILE, SUMMARY_FILE], set.infos(), None),
    )?;
    Ok(doc)
}

/// `pareto`: engagement and clinical reward per arm for each alpha and policy.
pub fn cmd_pareto(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ParetoRow>, CliError> {
    let alphas = cfg.validate_pareto()?.alphas.clone();
    let policies = cfg.policy_kinds()?;
    let out = ensure_dir(&opts.out_dir)?;
    let pool = thread_pool(opts.jobs)?;
    let mut rows = Vec::new();
    let mut instances = Vec::new();
    for alpha in alphas {
        let set = build_instances(
            cfg,
            Overrides {
                alpha: Some(alpha),
                budget: None,
            },
        )?;
        instances.extend(set.infos());
        let records = run_grid(cfg, &set, &policies, &pool)?;
        for s in summarize(&records, &policies)? {
            let components = s.summary.component_means.clone().unwrap_or_default();
            rows.push(ParetoRow {
                alpha,
                policy: s.summary.policy,
                engagement: components.first().copied().unwrap_or(f64::NAN),
                clinical: components.get(1).copied().unwrap_or(f64::NAN),
                reward: s.summary.mean_reward_per_arm,
            });
        }
    }
    write_csv(&out.join(PARETO_FILE), &rows)?;
    write_json(
        &out.join(MANIFEST_FILE),
        &manifest("pareto", cfg, &[PARETO_FILE], instances, None),
    )?;
    Ok(rows)
}

/// `capacity`: last-round reward level per budget and the first budget
/// reaching the target.
pub fn cmd_capacity(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<CapacityDoc, CliError> {
    let cap = cfg.validate_capacity()?.clone();
    let policies = cfg.policy_kinds()?;
    let out = ensure_dir(&opts.out_dir)?;
    let pool = thread_pool(opts.jobs)?;
    let mut points: Vec<Vec<CapacityRow>> = vec![Vec::new(); policies.len()];
    let mut instances = Vec::new();
    for &budget in &cap.budgets {
        let set = build_instances(
            cfg,
            Overrides {
                alpha: None,
                budget: Some(budget),
            },
        )?;
        instances.extend(set.infos());
        let records = run_grid(cfg, &set, &policies, &pool)?;
        for (i, (_, chunk)) in by_policy(&records, &policies).into_iter().enumerate() {
            let levels: Vec<f64> = chunk
                .iter()
                .map(SimulationRecord::last_round_reward_per_arm)
                .collect();
            let (level, stderr) = ermab::sim::mean_stderr(&levels);
            points[i].push(CapacityRow {
                policy: policies[i],
                budget,
                level,
                stderr,
            });
        }
    }
    let curves: Vec<CapacityCurve> = policies
        .iter()
        .zip(points)
        .map(|(&policy, points)| {
            let crossing = points
                .iter()
                .find(|p| p.level >= cap.target)
                .map_or(Crossing::Never(NotReached::NotReached), |p| {
                    Crossing::Budget(p.budget)
                });
            CapacityCurve {
                policy,
                points,
                crossing,
            }
        })
        .collect();
    let rows: Vec<CapacityRow> = curves.iter().flat_map(|c| c.points.clone()).collect();
    write_csv(&out.join(CAPACITY_CSV), &rows)?;
    let doc = CapacityDoc {
        schema_version: SCHEMA_VERSION,
        metric: CAPACITY_METRIC.to_string(),
        target: cap.target,
        curves,
    };
    write_json(&out.join(CAPACITY_JSON), &doc)?;
    write_json(
        &out.join(MANIFEST_FILE),
        &manifest(
            "capacity",
            cfg,
            &[CAPACITY_CSV, CAPACITY_JSON],
            instances,
            Some(CAPACITY_METRIC),
        ),
    )?;
    Ok(doc)
}

/// Output directory: explicit flag (or its environment variable), then the
/// config's `out_dir`, then `results/`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}
