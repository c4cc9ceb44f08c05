//! CSV schemas and the network file format.
//!
//! Every CSV is written with a header row, comma separated, floats in shortest
//! round-trip form. Empty fields mean "not applicable".

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_extended_graph, Edge, ExtendedGraph, Link, LinkId, LinkKind};
use crate::network::{build_grid_network, GridParams};
use crate::sim::Metrics;

use super::runner::ScenarioOutcome;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One simulation run with its full configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario_id: String,
    pub controller: String,
    pub s: Option<f64>,
    pub h: Option<usize>,
    pub tau_hours: f64,
    pub alpha_upper: f64,
    pub seed: u64,
    pub tts_total_h: f64,
    pub tts_inside_h: f64,
    pub tts_outside_h: f64,
    pub trips_total: usize,
    pub trips_completed: usize,
    pub end_time_s: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub link_length_m: f64,
    pub lanes: u32,
    pub n12: f64,
    pub n22: f64,
    pub r: f64,
    pub demand_factor: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub n_target: f64,
    pub k_d: f64,
    pub k_q: f64,
    pub critical_density: Option<f64>,
    pub epsilon: Option<f64>,
    pub perturb_alpha: Option<f64>,
    pub perturb_m: Option<f64>,
    pub perturb_seed: Option<u64>,
    pub sim_seed: u64,
    pub dt_s: f64,
    pub duration_s: f64,
    pub control_cycle_s: f64,
    pub overtaking: bool,
    pub version: String,
}

impl ScenarioRow {
    pub fn from_outcome(o: &ScenarioOutcome) -> Self {
        let s = &o.spec;
        let m = &o.metrics;
        let (critical_density, epsilon) = match s.controller {
            super::ControllerSpec::Nmp {
                critical_density,
                epsilon,
                ..
            } => (Some(critical_density), Some(epsilon)),
            _ => (None, None),
        };
        ScenarioRow {
            scenario_id: s.id.clone(),
            controller: s.controller.label(),
            s: s.controller.sensitivity(),
            h: s.controller.hop(),
            tau_hours: s.demand.tau_hours,
            alpha_upper: s.demand.alpha_upper,
            seed: s.demand_seed,
            tts_total_h: m.tts_total_h,
            tts_inside_h: m.tts_inside_h,
            tts_outside_h: m.tts_outside_h,
            trips_total: m.trips_total,
            trips_completed: m.trips_completed,
            end_time_s: m.end_time_s,
            grid_rows: s.grid.rows,
            grid_cols: s.grid.cols,
            link_length_m: s.grid.link_length_m,
            lanes: s.grid.lanes,
            n12: s.demand.n12,
            n22: s.demand.n22,
            r: s.demand.r,
            demand_factor: s.demand_factor,
            a_min: s.surrogate.a_min,
            a_max: s.surrogate.a_max,
            n_target: s.surrogate.n_target,
            k_d: s.surrogate.k_d,
            k_q: s.surrogate.k_q,
            critical_density,
            epsilon,
            perturb_alpha: s.perturbation.map(|p| p.alpha),
            perturb_m: s.perturbation.map(|p| p.m),
            perturb_seed: s.perturbation.map(|p| p.seed),
            sim_seed: s.sim.seed,
            dt_s: s.sim.dt_s,
            duration_s: s.sim.duration_s,
            control_cycle_s: s.sim.control_cycle_s,
            overtaking: s.sim.overtaking,
            version: VERSION.to_string(),
        }
    }
}

/// Mean over seeds of one `(s, h)` cell of the sensitivity and hop sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub s: f64,
    pub h: usize,
    pub n_seeds: usize,
    pub tts_total_mean_h: f64,
    pub tts_inside_mean_h: f64,
    pub tts_outside_mean_h: f64,
    pub tts_homogeneous_mean_h: f64,
    pub improvement_pct: f64,
    pub best: bool,
}

/// One `(τ, α)` cell of the heterogeneity sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityRow {
    pub tau_hours: f64,
    pub alpha_upper: f64,
    pub n_seeds: usize,
    pub tts_homogeneous_h: f64,
    pub tts_heterogeneous_h: f64,
    pub improvement_pct: f64,
}

/// TTS distribution of one perturbation level, or of the unperturbed
/// homogeneous reference (`perturb_alpha` empty).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub controller: String,
    pub perturb_alpha: Option<f64>,
    pub n: usize,
    pub tts_mean_h: f64,
    pub tts_std_h: f64,
    pub tts_min_h: f64,
    pub tts_max_h: f64,
}

/// Per-controller mean over seeds at one demand setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub controller: String,
    pub n_seeds: usize,
    pub tts_total_mean_h: f64,
    pub tts_inside_mean_h: f64,
    pub tts_outside_mean_h: f64,
    pub trips_completed_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRow {
    pub scenario_id: String,
    pub controller: String,
    pub seed: u64,
    pub time_s: f64,
    pub completed: usize,
    pub completion_rate: f64,
    pub mean_density: f64,
    pub inside: usize,
    pub outside: usize,
}

impl TimeSeriesRow {
    pub fn from_outcome(o: &ScenarioOutcome) -> Vec<Self> {
        let total = o.metrics.trips_total.max(1) as f64;
        o.metrics
            .samples
            .iter()
            .map(|p| TimeSeriesRow {
                scenario_id: o.spec.id.clone(),
                controller: o.spec.controller.label(),
                seed: o.spec.demand_seed,
                time_s: p.time_s,
                completed: p.completed,
                completion_rate: p.completed as f64 / total,
                mean_density: p.region_density,
                inside: p.inside,
                outside: p.outside,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureRow {
    pub cycle: usize,
    pub time_s: f64,
    pub feeder_id: LinkId,
    pub hop: usize,
    pub pressure: f64,
}

pub fn pressure_rows(metrics: &Metrics) -> Vec<PressureRow> {
    let mut rows = Vec::new();
    for snap in &metrics.pressure {
        for (hop, values) in snap.values.iter().enumerate() {
            for (&feeder_id, &pressure) in metrics.feeders.iter().zip(values) {
                rows.push(PressureRow {
                    cycle: snap.cycle,
                    time_s: snap.time_s,
                    feeder_id,
                    hop,
                    pressure,
                });
            }
        }
    }
    rows
}

/// Accumulated visiting probability of one link from a feeder, with the link
/// drawn as a segment for network heatmaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feeder_id: LinkId,
    pub max_hop: usize,
    pub link_id: LinkId,
    pub hop_distance: Option<usize>,
    pub importance: f64,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    pub x1: Option<f64>,
    pub y1: Option<f64>,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Link entry of a network file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub id: LinkId,
    pub length_m: f64,
    pub lanes: u32,
    pub kind: LinkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_capacity: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation_flow: Option<f64>,
}

impl From<&Link> for LinkRecord {
    fn from(l: &Link) -> Self {
        LinkRecord {
            id: l.id,
            length_m: l.length_m,
            lanes: l.lanes,
            kind: l.kind,
            storage_capacity: Some(l.storage_capacity),
            saturation_flow: Some(l.saturation_flow),
        }
    }
}

impl LinkRecord {
    pub fn to_link(&self) -> Link {
        let mut l = Link::new(self.id, self.length_m, self.lanes, self.kind);
        if let Some(c) = self.storage_capacity {
            l.storage_capacity = c;
        }
        if let Some(s) = self.saturation_flow {
            l.saturation_flow = s;
        }
        l
    }
}

/// Network file: either explicit links and edges, or grid generator
/// parameters. Unknown keys are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridParams>,
    #[serde(default)]
    pub links: Vec<LinkRecord>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

impl NetworkFile {
    pub fn from_graph(graph: &ExtendedGraph, grid: Option<GridParams>) -> Self {
        NetworkFile {
            grid,
            links: graph.links().iter().map(LinkRecord::from).collect(),
            edges: graph.edges(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    /// Explicit links and edges win; otherwise the grid is generated with
    /// equal turning ratios.
    pub fn graph(&self) -> Result<ExtendedGraph> {
        if !self.links.is_empty() {
            let links = self.links.iter().map(LinkRecord::to_link).collect();
            return build_extended_graph(links, &self.edges);
        }
        match self.grid {
            Some(g) => build_grid_network(g)?.uniform_graph(),
            None => Err(Error::Config("network file has neither links nor grid".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::toy_network;

    #[test]
    fn network_file_round_trip() {
        let g = toy_network();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.json");
        NetworkFile::from_graph(&g, None).write(&path).unwrap();
        let back = NetworkFile::read(&path).unwrap().graph().unwrap();
        assert_eq!(back.edges(), g.edges());
        assert_eq!(back.links(), g.links());
    }

    #[test]
    fn unknown_keys_are_ignored() {
        let text = r#"{"comment": "x", "grid": {"rows": 2, "cols": 3, "link_length_m": 85.0, "lanes": 2, "speed": 1},
                       "links": [], "edges": []}"#;
        let f: NetworkFile = serde_json::from_str(text).unwrap();
        let g = f.graph().unwrap();
        assert_eq!(g.feeders().len(), 10);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(NetworkFile::default().graph(), Err(Error::Config(_))));
    }
}
