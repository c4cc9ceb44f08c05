use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{LinearSurrogate, PerimeterController, Redistribution, SurrogateParams, TwoStageController};
use crate::demand::{build_profile, sample_trips, DemandParams, DemandProfile, TripList};
use crate::error::{Error, Result};
use crate::graph::ExtendedGraph;
use crate::network::{build_grid_network, GridParams, RoadNetwork};
use crate::perturbation::{perturb_turning_ratios, PerturbationSpec};
use crate::sim::{grid_signal_plans, path_assignment, run_scenario, Assignment, Metrics, Scenario, SignalPlan, SimConfig};

/// Which perimeter controller a scenario runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    /// Feeders are never metered.
    NoControl,
    /// Surrogate total split equally over feeders.
    Homogeneous,
    Softmax { hop: usize, sensitivity: f64 },
    Nmp { hop: usize, critical_density: f64, epsilon: f64 },
}

impl ControllerSpec {
    pub fn label(&self) -> String {
        match *self {
            ControllerSpec::NoControl => "no_control".into(),
            ControllerSpec::Homogeneous => "homogeneous".into(),
            ControllerSpec::Softmax { hop, sensitivity } => format!("softmax_h{hop}_s{sensitivity}"),
            ControllerSpec::Nmp { hop, .. } => format!("nmp_h{hop}"),
        }
    }

    pub fn hop(&self) -> Option<usize> {
        match *self {
            ControllerSpec::Softmax { hop, .. } | ControllerSpec::Nmp { hop, .. } => Some(hop),
            _ => None,
        }
    }

    pub fn sensitivity(&self) -> Option<f64> {
        match *self {
            ControllerSpec::Softmax { sensitivity, .. } => Some(sensitivity),
            _ => None,
        }
    }

    fn redistribution(&self) -> Option<Redistribution> {
        match *self {
            ControllerSpec::NoControl => None,
            ControllerSpec::Homogeneous => Some(Redistribution::Equal),
            ControllerSpec::Softmax { hop, sensitivity } => Some(Redistribution::Softmax { hop, sensitivity }),
            ControllerSpec::Nmp {
                hop,
                critical_density,
                epsilon,
            } => Some(Redistribution::Nmp {
                hop,
                critical_density,
                epsilon,
            }),
        }
    }
}

/// One fully specified simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: String,
    pub grid: GridParams,
    /// Demand after `demand_factor` has been applied.
    pub demand: DemandParams,
    pub demand_factor: f64,
    pub demand_seed: u64,
    pub controller: ControllerSpec,
    pub surrogate: SurrogateParams,
    pub perturbation: Option<PerturbationSpec>,
    pub sim: SimConfig,
}

/// Network, signals, sampled trips and routing shared by every controller
/// evaluated on the same demand draw.
pub struct Prepared {
    pub network: RoadNetwork,
    pub plans: Vec<SignalPlan>,
    pub profile: DemandProfile,
    pub trips: TripList,
    pub assignment: Assignment,
    pub graph: ExtendedGraph,
}

impl Prepared {
    pub fn new(grid: GridParams, demand: &DemandParams, seed: u64) -> Result<Self> {
        let network = build_grid_network(grid)?;
        let plans = grid_signal_plans(&network)?;
        let profile = build_profile(demand)?;
        let trips = sample_trips(&profile, &network.groups, seed)?;
        let assignment = path_assignment(&network, &trips)?;
        let graph = assignment.graph(&network)?;
        Ok(Prepared {
            network,
            plans,
            profile,
            trips,
            assignment,
            graph,
        })
    }

    pub fn scenario(&self) -> Scenario<'_> {
        Scenario {
            network: &self.network,
            plans: &self.plans,
            trips: &self.trips,
            assignment: &self.assignment,
            demand: Some(&self.profile),
        }
    }

    /// Controller for `spec`, built on the routing-derived ratios or on a
    /// perturbed copy of them.
    pub fn controller(
        &self,
        spec: ControllerSpec,
        surrogate: SurrogateParams,
        perturbation: Option<&PerturbationSpec>,
    ) -> Result<Option<Box<dyn PerimeterController>>> {
        let Some(redistribution) = spec.redistribution() else {
            return Ok(None);
        };
        let graph = match perturbation {
            Some(p) => perturb_turning_ratios(&self.graph, p)?,
            None => self.graph.clone(),
        };
        let homogeneous = Box::new(LinearSurrogate::new(surrogate)?);
        let c = TwoStageController::new(homogeneous, redistribution, &graph, self.network.feeders.clone())?;
        Ok(Some(Box::new(c)))
    }

    pub fn run(
        &self,
        spec: ControllerSpec,
        surrogate: SurrogateParams,
        perturbation: Option<&PerturbationSpec>,
        sim: SimConfig,
    ) -> Result<Metrics> {
        let controller = self.controller(spec, surrogate, perturbation)?;
        run_scenario(self.scenario(), controller, sim)
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub spec: ScenarioSpec,
    pub metrics: Metrics,
}

pub fn run_spec(spec: &ScenarioSpec) -> Result<ScenarioOutcome> {
    let prepared = Prepared::new(spec.grid, &spec.demand, spec.demand_seed)?;
    let metrics = prepared.run(spec.controller, spec.surrogate, spec.perturbation.as_ref(), spec.sim.clone())?;
    Ok(ScenarioOutcome {
        spec: spec.clone(),
        metrics,
    })
}

/// Worker count from `PP_THREADS`, or rayon's default when unset.
pub fn worker_count() -> Result<Option<usize>> {
    match std::env::var("PP_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("PP_THREADS={v} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

/// Runs `f` on every item in parallel; results come back in input order.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Runs every spec, grouping those that share a demand draw so trips and
/// routing are built once per group. Output order matches `specs`.
pub fn run_all(specs: &[ScenarioSpec]) -> Result<Vec<ScenarioOutcome>> {
    let mut groups: Vec<(GridParams, DemandParams, u64, Vec<usize>)> = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        match groups
            .iter_mut()
            .find(|g| g.0 == s.grid && g.1 == s.demand && g.2 == s.demand_seed)
        {
            Some(g) => g.3.push(i),
            None => groups.push((s.grid, s.demand, s.demand_seed, vec![i])),
        }
    }
    let prepared = par_map(&groups, |g| Prepared::new(g.0, &g.1, g.2))?;
    let mut owner = vec![0usize; specs.len()];
    for (gi, g) in groups.iter().enumerate() {
        for &i in &g.3 {
            owner[i] = gi;
        }
    }
    let jobs: Vec<usize> = (0..specs.len()).collect();
    par_map(&jobs, |&i| {
        let s = &specs[i];
        let metrics = prepared[owner[i]].run(s.controller, s.surrogate, s.perturbation.as_ref(), s.sim.clone())?;
        Ok(ScenarioOutcome {
            spec: s.clone(),
            metrics,
        })
    })
}
