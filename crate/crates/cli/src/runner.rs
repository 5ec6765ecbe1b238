//! Builds domain instances and runs policy × seed grids in parallel.

use ermab::domains::diabetes::default_group_table;
use ermab::domains::{
    build_diabetes, build_maternal, build_synthetic, load_group_table, DiabetesSpec, DiabetesState,
    MaternalSpec, SyntheticSpec,
};
use ermab::rng::{stream, Purpose};
use ermab::sim::{run_episode_with, EpisodeOptions};
use ermab::{GroupedInstance, IndexCache, PolicyKind, PolicySpec, SimulationRecord};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::InstanceInfo;

/// An instance with the index cache all its episodes share.
pub struct Prepared {
    pub label: String,
    pub instance: GroupedInstance,
    pub cache: IndexCache,
}

impl Prepared {
    fn new(label: String, instance: GroupedInstance, precision: f64) -> Self {
        let cache = IndexCache::new(&instance, precision);
        Self {
            label,
            instance,
            cache,
        }
    }

    pub fn info(&self) -> InstanceInfo {
        InstanceInfo {
            label: self.label.clone(),
            fingerprint: format!("{:016x}", self.instance.fingerprint()),
        }
    }
}

/// Deterministic domains share one instance; Maternal samples one per seed.
pub enum InstanceSet {
    Shared(Box<Prepared>),
    PerSeed(Vec<Prepared>),
}

impl InstanceSet {
    pub fn get(&self, seed_index: usize) -> &Prepared {
        match self {
            InstanceSet::Shared(p) => p.as_ref(),
            InstanceSet::PerSeed(v) => &v[seed_index],
        }
    }

    pub fn infos(&self) -> Vec<InstanceInfo> {
        match self {
            InstanceSet::Shared(p) => vec![p.info()],
            InstanceSet::PerSeed(v) => v.iter().map(Prepared::info).collect(),
        }
    }
}

/// Per-call overrides used by the sweeps.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub budget: Option<usize>,
}

fn label(prefix: &str, extra: &[String]) -> String {
    std::iter::once(prefix.to_string())
        .chain(extra.iter().cloned())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn build_instances(cfg: &ExperimentConfig, ov: Overrides) -> Result<InstanceSet, CliError> {
    let n_arms = cfg.n_arms();
    let horizon = cfg.horizon();
    let budget = ov.budget.unwrap_or_else(|| cfg.budget());
    let mut tags = Vec::new();
    if let Some(b) = ov.budget {
        tags.push(format!("budget={b}"));
    }
    match cfg.domain.as_str() {
        "synthetic" => {
            let inst = build_synthetic(&SyntheticSpec {
                n_arms,
                horizon,
                budget,
                ..SyntheticSpec::default()
            })?;
            Ok(InstanceSet::Shared(Box::new(Prepared::new(
                label("synthetic", &tags),
                inst,
                cfg.precision,
            ))))
        }
        "maternal" => {
            let m = cfg.maternal_options();
            let spec = MaternalSpec {
                n_arms,
                large_group: m.large_group,
                noise_scale: m.noise_scale,
                horizon,
                budget,
                ..MaternalSpec::default()
            };
            cfg.seed_list()
                .into_iter()
                .map(|seed| {
                    let inst = build_maternal(&spec, &mut stream(seed, Purpose::Instance, 0))?;
                    let mut t = tags.clone();
                    t.push(format!("seed={seed}"));
                    Ok(Prepared::new(label("maternal", &t), inst, cfg.precision))
                })
                .collect::<Result<_, CliError>>()
                .map(InstanceSet::PerSeed)
        }
        "diabetes" => {
            let d = cfg.diabetes_options();
            let alpha = ov.alpha.unwrap_or(d.alpha);
            let group_table = match &d.group_table {
                Some(path) => load_group_table(path)?,
                None => default_group_table(),
            };
            let inst = build_diabetes(&DiabetesSpec {
                alpha,
                n_arms,
                group_table,
                horizon,
                budget,
                start: DiabetesState::intake(),
            })?;
            tags.push(format!("alpha={alpha}"));
            Ok(InstanceSet::Shared(Box::new(Prepared::new(
                label("diabetes", &tags),
                inst,
                cfg.precision,
            ))))
        }
        other => Err(CliError::Config {
            field: "domain".into(),
            message: format!("unknown domain {other:?}"),
        }),
    }
}

pub fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))
}

/// Runs every `(policy, seed)` cell; results are ordered by policy, then seed.
pub fn run_grid(
    cfg: &ExperimentConfig,
    set: &InstanceSet,
    policies: &[PolicyKind],
    pool: &rayon::ThreadPool,
) -> Result<Vec<SimulationRecord>, CliError> {
    let seeds = cfg.seed_list();
    let cells: Vec<(PolicyKind, usize, u64)> = policies
        .iter()
        .flat_map(|&p| seeds.iter().enumerate().map(move |(i, &s)| (p, i, s)))
        .collect();
    pool.install(|| {
        cells
            .par_iter()
            .map(|&(kind, seed_index, seed)| {
                let spec = PolicySpec {
                    kind,
                    realloc_every_round: cfg.realloc.every_round(),
                    precision: cfg.precision,
                };
                let prepared = set.get(seed_index);
                log::debug!("{} seed {seed} on {}", kind, prepared.label);
                run_episode_with(
                    &prepared.instance,
                    &spec,
                    seed,
                    &prepared.cache,
                    EpisodeOptions::default(),
                )
                .map_err(CliError::from)
            })
            .collect()
    })
}
