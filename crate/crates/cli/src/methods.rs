//! The reduction methods behind one name, with their applicability rules.

use std::time::Instant;

use clap::ValueEnum;
use cssc_core::baselines::{
    reduce_kmeans, reduce_kmedians, reduce_kmedoids, reduce_kmodes, reduce_montecarlo, ClusteringConfig, Metric,
};
use cssc_core::cssc::{build_matrix, reduce_from_matrix, OpportunityCostMatrix, Partition, PartitionConfig};
use cssc_core::model::{ModelError, ReducedScenarioSet, ScenarioDomain, SolveMode};
use cssc_core::problems::Instance;
use cssc_solver::SolverLimits;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cssc,
    Kmeans,
    Kmedians,
    Kmedoids,
    Kmodes,
    /// Monte Carlo sub-sampling.
    Mc,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Cssc, Method::Kmeans, Method::Kmedians, Method::Kmedoids, Method::Kmodes, Method::Mc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cssc => "cssc",
            Method::Kmeans => "kmeans",
            Method::Kmedians => "kmedians",
            Method::Kmedoids => "kmedoids",
            Method::Kmodes => "kmodes",
            Method::Mc => "montecarlo",
        }
    }

    pub fn from_name(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == name || (name == "mc" && *m == Method::Mc))
    }

    /// Rejects methods whose output cannot live in the scenario domain.
    pub fn check_domain(self, domain: ScenarioDomain) -> Result<(), ModelError> {
        match (self, domain) {
            (Method::Kmeans | Method::Kmedians, ScenarioDomain::Binary) => Err(ModelError::DomainViolation(format!(
                "{} outputs averaged scenarios, but this problem needs binary scenarios: a fractional \
                 customer presence makes the assignment constraints infeasible",
                self.name()
            ))),
            (Method::Kmodes, ScenarioDomain::Real) => {
                Err(ModelError::DomainViolation("kmodes needs categorical scenarios, got real-valued ones".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReduceOptions {
    pub k: usize,
    pub seed: u64,
    /// One-scenario solve mode for CSSC; `None` uses the problem default.
    pub mode: Option<SolveMode>,
    pub partition: PartitionConfig,
    pub restarts: usize,
    pub max_iterations: usize,
    pub metric: Metric,
    pub limits: SolverLimits,
}

impl ReduceOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            mode: None,
            partition: PartitionConfig::default(),
            restarts: 10,
            max_iterations: 100,
            metric: Metric::L2,
            limits: SolverLimits::default(),
        }
    }
}

/// A reduced scenario set with the partition that produced it, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub reduced: ReducedScenarioSet,
    pub partition: Option<Partition>,
    pub seed: u64,
    pub seconds: f64,
}

/// Runs `method`. CSSC reuses `matrix` when given, otherwise builds it.
pub fn reduce(
    instance: &Instance,
    method: Method,
    opts: &ReduceOptions,
    matrix: Option<&OpportunityCostMatrix>,
) -> Result<Reduction, ModelError> {
    let set = instance.scenarios();
    method.check_domain(set.domain())?;
    let clock = Instant::now();
    let cfg = ClusteringConfig {
        restarts: opts.restarts,
        max_iterations: opts.max_iterations,
        ..ClusteringConfig::new(opts.k, opts.seed).with_metric(opts.metric)
    };
    let (reduced, partition) = match method {
        Method::Cssc => {
            let built;
            let matrix = match matrix {
                Some(m) => m,
                None => {
                    let mode = opts.mode.unwrap_or_else(|| instance.problem().default_mode());
                    built = build_matrix(instance.problem(), mode, &opts.limits)?;
                    &built
                }
            };
            let config = PartitionConfig { seed: opts.seed, ..opts.partition.clone() };
            let (r, p) = reduce_from_matrix(set, matrix, opts.k, &config)?;
            (r, Some(p))
        }
        Method::Kmeans => with_partition(reduce_kmeans(set, &cfg)?),
        Method::Kmedians => with_partition(reduce_kmedians(set, &cfg)?),
        Method::Kmedoids => with_partition(reduce_kmedoids(set, &cfg)?),
        Method::Kmodes => with_partition(reduce_kmodes(set, &cfg)?),
        Method::Mc => (reduce_montecarlo(set, opts.k, opts.seed)?, None),
    };
    Ok(Reduction { reduced, partition, seed: opts.seed, seconds: clock.elapsed().as_secs_f64() })
}

fn with_partition((r, p): (ReducedScenarioSet, Partition)) -> (ReducedScenarioSet, Option<Partition>) {
    (r, Some(p))
}
