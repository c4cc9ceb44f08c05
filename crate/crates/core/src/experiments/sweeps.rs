use std::path::Path;

use log::info;

use crate::demand::DemandParams;
use crate::error::{Error, Result};
use crate::graph::{hop_distances, transition_matrix, LinkId, Vertex};
use crate::network::build_grid_network;
use crate::perturbation::PerturbationSpec;
use crate::pressure::accumulative_importance;
use crate::sim::{Simulation, SimConfig};

use super::config::ExperimentConfig;
use super::io::{
    pressure_rows, write_csv, ComparisonRow, HeterogeneityRow, ImportanceRow, PressureRow, RobustnessRow,
    ScenarioRow, SweepSummaryRow, TimeSeriesRow,
};
use super::runner::{run_all, ControllerSpec, Prepared, ScenarioOutcome, ScenarioSpec};

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs.iter().copied());
    if xs.len() < 2 {
        return 0.0;
    }
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Relative TTS reduction of `candidate` over `reference`, in percent.
pub fn improvement_pct(reference: f64, candidate: f64) -> f64 {
    100.0 * (reference - candidate) / reference
}

pub fn scenario_spec(
    cfg: &ExperimentConfig,
    demand: &DemandParams,
    seed: u64,
    controller: ControllerSpec,
    perturbation: Option<PerturbationSpec>,
) -> ScenarioSpec {
    let mut id = format!(
        "{}_tau{}_a{}_seed{}",
        controller.label(),
        demand.tau_hours,
        demand.alpha_upper,
        seed
    );
    if let Some(p) = perturbation {
        id.push_str(&format!("_pa{}_ps{}", p.alpha, p.seed));
    }
    ScenarioSpec {
        id,
        grid: cfg.grid(),
        demand: *demand,
        demand_factor: cfg.demand_factor(),
        demand_seed: seed,
        controller,
        surrogate: cfg.surrogate(),
        perturbation,
        sim: SimConfig {
            seed,
            ..cfg.sim.clone()
        },
    }
}

fn rows(outcomes: &[ScenarioOutcome]) -> Vec<ScenarioRow> {
    outcomes.iter().map(ScenarioRow::from_outcome).collect()
}

/// Controllers compared side by side at the configured demand.
pub fn roster(cfg: &ExperimentConfig) -> Vec<ControllerSpec> {
    vec![
        ControllerSpec::NoControl,
        ControllerSpec::Homogeneous,
        cfg.nmp_controller(),
        cfg.myopic_controller(),
        cfg.controller,
    ]
}

pub struct ComparisonOutput {
    pub runs: Vec<ScenarioRow>,
    pub summary: Vec<ComparisonRow>,
    pub timeseries: Vec<TimeSeriesRow>,
}

impl ComparisonOutput {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_csv(&dir.join("runs.csv"), &self.runs)?;
        write_csv(&dir.join("comparison.csv"), &self.summary)?;
        write_csv(&dir.join("timeseries.csv"), &self.timeseries)
    }

    pub fn mean_tts(&self, controller: &ControllerSpec) -> Option<f64> {
        let label = controller.label();
        self.summary
            .iter()
            .find(|r| r.controller == label)
            .map(|r| r.tts_total_mean_h)
    }
}

/// Every controller of `controllers` on every seed at the configured demand.
pub fn compare_controllers(cfg: &ExperimentConfig, controllers: &[ControllerSpec]) -> Result<ComparisonOutput> {
    let demand = cfg.demand_params();
    let seeds = cfg.seeds();
    let specs: Vec<ScenarioSpec> = controllers
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .map(|(c, s)| scenario_spec(cfg, &demand, s, c, None))
        .collect();
    info!("running {} scenarios", specs.len());
    let outcomes = run_all(&specs)?;
    let summary = controllers
        .iter()
        .map(|c| {
            let label = c.label();
            let mine: Vec<&ScenarioOutcome> = outcomes.iter().filter(|o| o.spec.controller.label() == label).collect();
            ComparisonRow {
                controller: label,
                n_seeds: mine.len(),
                tts_total_mean_h: mean(mine.iter().map(|o| o.metrics.tts_total_h)),
                tts_inside_mean_h: mean(mine.iter().map(|o| o.metrics.tts_inside_h)),
                tts_outside_mean_h: mean(mine.iter().map(|o| o.metrics.tts_outside_h)),
                trips_completed_mean: mean(mine.iter().map(|o| o.metrics.trips_completed as f64)),
            }
        })
        .collect();
    Ok(ComparisonOutput {
        runs: rows(&outcomes),
        summary,
        timeseries: outcomes.iter().flat_map(TimeSeriesRow::from_outcome).collect(),
    })
}

pub struct SweepOutput {
    pub runs: Vec<ScenarioRow>,
    pub reference: Vec<ScenarioRow>,
    pub summary: Vec<SweepSummaryRow>,
    pub best: (f64, usize),
}

impl SweepOutput {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_csv(&dir.join("sweep_sh_runs.csv"), &self.runs)?;
        write_csv(&dir.join("sweep_sh_reference.csv"), &self.reference)?;
        write_csv(&dir.join("sweep_sh_summary.csv"), &self.summary)
    }
}

/// Softmax controller for every `(s, h)` pair on every seed, plus the
/// homogeneous reference on the same seeds.
pub fn sweep_s_and_hops(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let grid = &cfg.sweep;
    if grid.sensitivities.is_empty() || grid.hops.is_empty() {
        return Err(Error::Config("sweep needs at least one s and one h".into()));
    }
    let demand = cfg.demand_at(grid.tau_hours, grid.alpha_upper);
    let seeds = cfg.seeds();
    let mut specs = Vec::new();
    for &s in &grid.sensitivities {
        for &h in &grid.hops {
            for &seed in &seeds {
                let c = ControllerSpec::Softmax { hop: h, sensitivity: s };
                specs.push(scenario_spec(cfg, &demand, seed, c, None));
            }
        }
    }
    let n_sweep = specs.len();
    for &seed in &seeds {
        specs.push(scenario_spec(cfg, &demand, seed, ControllerSpec::Homogeneous, None));
    }
    info!("running {} scenarios", specs.len());
    let outcomes = run_all(&specs)?;
    let (sweep, reference) = outcomes.split_at(n_sweep);
    let homogeneous = mean(reference.iter().map(|o| o.metrics.tts_total_h));

    let mut summary = Vec::new();
    for (cell, chunk) in sweep.chunks(seeds.len()).enumerate() {
        let s = grid.sensitivities[cell / grid.hops.len()];
        let h = grid.hops[cell % grid.hops.len()];
        let total = mean(chunk.iter().map(|o| o.metrics.tts_total_h));
        summary.push(SweepSummaryRow {
            s,
            h,
            n_seeds: chunk.len(),
            tts_total_mean_h: total,
            tts_inside_mean_h: mean(chunk.iter().map(|o| o.metrics.tts_inside_h)),
            tts_outside_mean_h: mean(chunk.iter().map(|o| o.metrics.tts_outside_h)),
            tts_homogeneous_mean_h: homogeneous,
            improvement_pct: improvement_pct(homogeneous, total),
            best: false,
        });
    }
    let best_idx = summary
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.tts_total_mean_h.total_cmp(&b.1.tts_total_mean_h))
        .map(|(i, _)| i)
        .expect("non-empty sweep");
    summary[best_idx].best = true;
    let best = (summary[best_idx].s, summary[best_idx].h);
    info!("best s={} h={}", best.0, best.1);
    Ok(SweepOutput {
        runs: rows(sweep),
        reference: rows(reference),
        summary,
        best,
    })
}

pub struct HeterogeneityOutput {
    pub runs: Vec<ScenarioRow>,
    pub cells: Vec<HeterogeneityRow>,
}

impl HeterogeneityOutput {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_csv(&dir.join("heterogeneity_runs.csv"), &self.runs)?;
        write_csv(&dir.join("heterogeneity.csv"), &self.cells)
    }

    pub fn cell(&self, tau_hours: f64, alpha_upper: f64) -> Option<&HeterogeneityRow> {
        self.cells
            .iter()
            .find(|c| (c.tau_hours - tau_hours).abs() < 1e-9 && (c.alpha_upper - alpha_upper).abs() < 1e-9)
    }
}

/// Improvement of `best` over homogeneous control on every `(τ, α)` cell.
pub fn sweep_heterogeneity(cfg: &ExperimentConfig, best: ControllerSpec) -> Result<HeterogeneityOutput> {
    let grid = &cfg.heterogeneity;
    let seeds = cfg.heterogeneity_seeds();
    let mut specs = Vec::new();
    let mut cells = Vec::new();
    for &tau in &grid.tau_hours {
        for &alpha in &grid.alpha_upper {
            let demand = cfg.demand_at(tau, alpha);
            cells.push((tau, alpha));
            for c in [ControllerSpec::Homogeneous, best] {
                for &seed in &seeds {
                    specs.push(scenario_spec(cfg, &demand, seed, c, None));
                }
            }
        }
    }
    info!("running {} scenarios", specs.len());
    let outcomes = run_all(&specs)?;
    let per_cell = 2 * seeds.len();
    let rows_out = cells
        .iter()
        .zip(outcomes.chunks(per_cell))
        .map(|(&(tau_hours, alpha_upper), chunk)| {
            let (homo, hetero) = chunk.split_at(seeds.len());
            let h = mean(homo.iter().map(|o| o.metrics.tts_total_h));
            let x = mean(hetero.iter().map(|o| o.metrics.tts_total_h));
            HeterogeneityRow {
                tau_hours,
                alpha_upper,
                n_seeds: seeds.len(),
                tts_homogeneous_h: h,
                tts_heterogeneous_h: x,
                improvement_pct: improvement_pct(h, x),
            }
        })
        .collect();
    Ok(HeterogeneityOutput {
        runs: rows(&outcomes),
        cells: rows_out,
    })
}

pub struct RobustnessOutput {
    pub runs: Vec<ScenarioRow>,
    pub summary: Vec<RobustnessRow>,
}

impl RobustnessOutput {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_csv(&dir.join("robustness_runs.csv"), &self.runs)?;
        write_csv(&dir.join("robustness.csv"), &self.summary)
    }

    pub fn level(&self, alpha: f64) -> Option<&RobustnessRow> {
        self.summary
            .iter()
            .find(|r| r.perturb_alpha.is_some_and(|a| (a - alpha).abs() < 1e-12))
    }

    pub fn homogeneous(&self) -> Option<&RobustnessRow> {
        self.summary.iter().find(|r| r.perturb_alpha.is_none())
    }
}

/// `best` driven by perturbed turning ratios, `reps` draws per level, on one
/// fixed demand and simulation seed; the unperturbed homogeneous run is the
/// reference.
pub fn robustness_sweep(cfg: &ExperimentConfig, best: ControllerSpec, alphas: &[f64]) -> Result<RobustnessOutput> {
    let rb = &cfg.robustness;
    if rb.reps == 0 {
        return Err(Error::Config("robustness needs at least one repetition".into()));
    }
    let demand = cfg.demand_params();
    let mut specs = Vec::new();
    for &alpha in alphas {
        for rep in 0..rb.reps {
            let p = PerturbationSpec {
                alpha,
                m: rb.m,
                seed: rb.seed_base + rep as u64,
            };
            p.validate()?;
            specs.push(scenario_spec(cfg, &demand, rb.seed, best, Some(p)));
        }
    }
    specs.push(scenario_spec(cfg, &demand, rb.seed, ControllerSpec::Homogeneous, None));
    info!("running {} scenarios", specs.len());
    let outcomes = run_all(&specs)?;
    let (perturbed, reference) = outcomes.split_at(outcomes.len() - 1);
    let summarize = |controller: String, alpha: Option<f64>, chunk: &[ScenarioOutcome]| {
        let tts: Vec<f64> = chunk.iter().map(|o| o.metrics.tts_total_h).collect();
        RobustnessRow {
            controller,
            perturb_alpha: alpha,
            n: tts.len(),
            tts_mean_h: mean(tts.iter().copied()),
            tts_std_h: std_dev(&tts),
            tts_min_h: tts.iter().copied().fold(f64::INFINITY, f64::min),
            tts_max_h: tts.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    };
    let mut summary: Vec<RobustnessRow> = alphas
        .iter()
        .zip(perturbed.chunks(rb.reps))
        .map(|(&a, chunk)| summarize(best.label(), Some(a), chunk))
        .collect();
    summary.push(summarize(ControllerSpec::Homogeneous.label(), None, reference));
    Ok(RobustnessOutput {
        runs: rows(&outcomes),
        summary,
    })
}

/// Per-cycle feeder pressures for hops `0..=max_hop` while `controller` runs
/// on the first configured seed.
pub fn pressure_dump(cfg: &ExperimentConfig, controller: ControllerSpec, max_hop: usize) -> Result<Vec<PressureRow>> {
    let seed = *cfg
        .seeds()
        .first()
        .ok_or_else(|| Error::Config("no seeds configured".into()))?;
    let demand = cfg.demand_params();
    let prepared = Prepared::new(cfg.grid(), &demand, seed)?;
    let ctrl = prepared.controller(controller, cfg.surrogate(), None)?;
    let mut sim = Simulation::new(
        prepared.scenario(),
        ctrl,
        SimConfig {
            seed,
            ..cfg.sim.clone()
        },
    )?;
    sim.record_pressure(transition_matrix(&prepared.graph), max_hop)?;
    Ok(pressure_rows(&sim.run()?))
}

/// Which turning ratios the importance map is computed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum RatioSource {
    /// Equal split over every movement.
    Uniform,
    /// Ratios implied by routing the configured demand (first seed).
    Assigned,
}

/// Accumulated visiting probability of every link from `feeder` within
/// `max_hop` hops, with hop distance and link geometry.
pub fn importance_map(
    cfg: &ExperimentConfig,
    feeder: LinkId,
    max_hop: usize,
    source: RatioSource,
) -> Result<Vec<ImportanceRow>> {
    let (network, graph) = match source {
        RatioSource::Uniform => {
            let n = build_grid_network(cfg.grid())?;
            let g = n.uniform_graph()?;
            (n, g)
        }
        RatioSource::Assigned => {
            let seed = cfg.seeds().first().copied().unwrap_or(1);
            let p = Prepared::new(cfg.grid(), &cfg.demand_params(), seed)?;
            (p.network, p.graph)
        }
    };
    if !network.feeders.contains(&feeder) {
        return Err(Error::Param(format!("link {feeder} is not a feeder")));
    }
    let matrix = transition_matrix(&graph);
    let importance = accumulative_importance(&matrix, feeder, max_hop)?;
    let dist = hop_distances(&graph, feeder)?;
    Ok(network
        .links
        .iter()
        .map(|l| {
            let seg = network.geometry.get(&l.id);
            ImportanceRow {
                feeder_id: feeder,
                max_hop,
                link_id: l.id,
                hop_distance: dist[graph.index_of(l.id).expect("link in graph")],
                importance: importance[&Vertex::Link(l.id)],
                x0: seg.map(|s| s.x0),
                y0: seg.map(|s| s.y0),
                x1: seg.map(|s| s.x1),
                y1: seg.map(|s| s.y1),
            }
        })
        .collect())
}

/// Mean importance of the links at each hop distance `1..=max_distance`.
pub fn importance_by_distance(rows: &[ImportanceRow], max_distance: usize) -> Vec<f64> {
    (1..=max_distance)
        .map(|d| mean(rows.iter().filter(|r| r.hop_distance == Some(d)).map(|r| r.importance)))
        .collect()
}
