//! Mesoscopic point-queue simulator.
//!
//! Vehicles travel each link at free-flow speed and then join its vertical
//! queue. A queue discharges at the link's saturation flow while at least one
//! queued vehicle faces a green movement and the receiving link has room.
//! Fractional service accumulates as a credit, so a 0.5 veh/s link releases one
//! vehicle every two seconds of green. Feeder links can additionally be metered
//! by a [`PerimeterController`], which hands out per-cycle vehicle budgets.

pub mod routing;
pub mod signals;

use std::collections::{HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{MacroState, Observation, PerimeterController};
use crate::demand::{DemandProfile, TripList};
use crate::error::{Error, Result};
use crate::graph::{LinkId, LinkKind, TransitionMatrix, Vertex};
use crate::network::RoadNetwork;
use crate::pressure::{multi_hop_pressures, perimeter_pressures, QueueDensityVector};

pub use routing::{path_assignment, Assignment};
pub use signals::{grid_signal_plans, Phase, SignalPlan};

const EPS: f64 = 1e-9;

/// 50 km/h.
pub const FREE_FLOW_SPEED_MPS: f64 = 50.0 / 3.6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt_s: f64,
    pub duration_s: f64,
    pub control_cycle_s: f64,
    /// Seeds the per-step shuffle of the link service order.
    pub seed: u64,
    pub free_flow_speed_mps: f64,
    pub sample_every_s: f64,
    /// Stop as soon as every trip has left the network.
    pub stop_when_empty: bool,
    /// Let any queued vehicle discharge past blocked ones. Otherwise only the
    /// first `lanes` queued vehicles, one head per lane, are eligible.
    pub overtaking: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt_s: 1.0,
            duration_s: 11_700.0,
            control_cycle_s: 96.0,
            seed: 1,
            free_flow_speed_mps: FREE_FLOW_SPEED_MPS,
            sample_every_s: 60.0,
            stop_when_empty: true,
            overtaking: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_s > 0.0) || !(self.control_cycle_s >= self.dt_s) {
            return Err(Error::Param("need 0 < dt <= control cycle".into()));
        }
        if !(self.free_flow_speed_mps > 0.0) || !(self.sample_every_s > 0.0) {
            return Err(Error::Param("speed and sampling period must be positive".into()));
        }
        if !(self.duration_s >= 0.0) {
            return Err(Error::Param("duration must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything a run needs besides the controller.
#[derive(Clone, Copy)]
pub struct Scenario<'a> {
    pub network: &'a RoadNetwork,
    pub plans: &'a [SignalPlan],
    pub trips: &'a TripList,
    pub assignment: &'a Assignment,
    /// Source of the demand forecast handed to the controller. Without it the
    /// forecast counts scheduled trips.
    pub demand: Option<&'a DemandProfile>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub time_s: f64,
    pub completed: usize,
    pub inside: usize,
    pub outside: usize,
    pub region_density: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub time_s: f64,
    pub region_density: f64,
    pub future_demand: f64,
    pub total_inflow: f64,
}

/// Feeder pressures at one control instant; `values[h][k]` is the h-hop
/// pressure of feeder `feeders[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureSnapshot {
    pub cycle: usize,
    pub time_s: f64,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// Vehicle-hours in the protected region.
    pub tts_inside_h: f64,
    /// Vehicle-hours on feeders and in origin queues, from scheduled departure.
    pub tts_outside_h: f64,
    /// Vehicle-hours summed per trip, kept separately as a check on the split.
    pub tts_total_h: f64,
    pub trips_total: usize,
    pub trips_completed: usize,
    pub end_time_s: f64,
    pub samples: Vec<SamplePoint>,
    pub cycles: Vec<CycleRecord>,
    pub feeders: Vec<LinkId>,
    pub pressure: Vec<PressureSnapshot>,
}

impl Metrics {
    pub fn tts_h(&self) -> f64 {
        self.tts_inside_h + self.tts_outside_h
    }
}

#[derive(Clone, Copy, Debug)]
struct Vehicle {
    path: u32,
    pos: u32,
    ready_at: f64,
    depart_s: f64,
}

#[derive(Clone, Copy, Debug)]
struct GreenWindow {
    cycle: f64,
    offset: f64,
    start: f64,
    end: f64,
}

impl GreenWindow {
    fn is_green(&self, t: f64) -> bool {
        let tc = (t + self.offset).rem_euclid(self.cycle);
        tc >= self.start - EPS && tc < self.end - EPS
    }
}

#[derive(Clone, Debug)]
struct LinkState {
    id: LinkId,
    capacity: usize,
    heads: usize,
    sat_flow: f64,
    free_flow_s: f64,
    protected: bool,
    vehicles: VecDeque<u32>,
    credit: f64,
    metered: bool,
    budget: f64,
    /// `(downstream index, green window)`; `None` is never red.
    moves: Vec<(usize, Option<GreenWindow>)>,
}

/// Read-only view of one link, for tests and diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkView {
    pub vehicles: usize,
    pub queued: usize,
    pub credit: f64,
    pub budget: Option<f64>,
}

impl LinkView {
    /// Queued vehicles minus the service already accrued toward the next one.
    pub fn effective_queue(&self) -> f64 {
        self.queued as f64 - self.credit
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conservation {
    pub loaded: usize,
    pub completed: usize,
    pub on_links: usize,
    pub waiting: usize,
}

impl Conservation {
    pub fn balanced(&self) -> bool {
        self.loaded == self.completed + self.on_links + self.waiting
    }
}

pub struct Simulation<'a> {
    cfg: SimConfig,
    network: &'a RoadNetwork,
    demand: Option<&'a DemandProfile>,
    departures: Vec<(f64, u32)>,
    next_departure: usize,
    links: Vec<LinkState>,
    index: HashMap<LinkId, usize>,
    paths: Vec<Vec<usize>>,
    vehicles: Vec<Vehicle>,
    buffers: Vec<VecDeque<u32>>,
    origins: Vec<usize>,
    order: Vec<usize>,
    rng: ChaCha8Rng,
    controller: Option<Box<dyn PerimeterController + 'a>>,
    feeder_rows: Vec<usize>,
    recorder: Option<(TransitionMatrix, usize)>,
    time_s: f64,
    next_control_s: f64,
    next_sample_s: f64,
    cycle: usize,
    loaded: usize,
    completed: usize,
    tts_inside_h: f64,
    tts_outside_h: f64,
    trip_time_s: f64,
    metrics: Metrics,
}

impl<'a> Simulation<'a> {
    pub fn new(
        scenario: Scenario<'a>,
        controller: Option<Box<dyn PerimeterController + 'a>>,
        cfg: SimConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let network = scenario.network;
        let index: HashMap<LinkId, usize> = network
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id, i))
            .collect();
        let idx = |id: LinkId| index.get(&id).copied().ok_or(Error::UnknownLink(Vertex::Link(id)));

        let mut windows: HashMap<(LinkId, LinkId), GreenWindow> = HashMap::new();
        for plan in scenario.plans {
            let cycle = plan.cycle_s();
            for (m, (start, end)) in plan.windows() {
                windows.insert(
                    m,
                    GreenWindow {
                        cycle,
                        offset: plan.offset_s,
                        start,
                        end,
                    },
                );
            }
        }

        let mut links: Vec<LinkState> = network
            .links
            .iter()
            .map(|l| LinkState {
                id: l.id,
                capacity: l.storage_capacity as usize,
                heads: if cfg.overtaking { usize::MAX } else { l.lanes.max(1) as usize },
                sat_flow: l.saturation_flow,
                free_flow_s: l.length_m / cfg.free_flow_speed_mps,
                protected: l.kind != LinkKind::Feeder,
                vehicles: VecDeque::new(),
                credit: 0.0,
                metered: false,
                budget: 0.0,
                moves: Vec::new(),
            })
            .collect();
        for m in &network.movements {
            let from = idx(m.from)?;
            let to = idx(m.to)?;
            // unlisted movements are treated as unsignalized
            let window = windows.get(&(m.from, m.to)).copied();
            links[from].moves.push((to, window));
        }

        let paths = scenario
            .assignment
            .paths
            .iter()
            .map(|p| p.iter().map(|&id| idx(id)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        for p in &paths {
            for w in p.windows(2) {
                if !links[w[0]].moves.iter().any(|&(to, _)| to == w[1]) {
                    return Err(Error::Config(format!(
                        "path uses missing movement {} -> {}",
                        links[w[0]].id, links[w[1]].id
                    )));
                }
            }
        }
        if scenario.assignment.trip_paths.len() != scenario.trips.len() {
            return Err(Error::DimensionMismatch {
                expected: scenario.trips.len(),
                got: scenario.assignment.trip_paths.len(),
            });
        }
        let mut departures: Vec<(f64, u32)> = scenario
            .trips
            .trips
            .iter()
            .zip(&scenario.assignment.trip_paths)
            .map(|(t, &p)| (t.t_depart_s, p as u32))
            .collect();
        departures.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut origins: Vec<usize> = paths.iter().map(|p| p[0]).collect();
        origins.sort_unstable();
        origins.dedup();

        let mut feeder_rows = Vec::new();
        if let Some(c) = &controller {
            if c.feeders() != network.feeders.as_slice() {
                return Err(Error::Config(
                    "controller feeders differ from the network's metered links".into(),
                ));
            }
            let expected: Vec<Vertex> = network
                .links
                .iter()
                .map(|l| Vertex::Link(l.id))
                .chain(std::iter::once(Vertex::Supersink))
                .collect();
            if c.vertex_order() != expected.as_slice() {
                return Err(Error::Config(
                    "controller vertex order differs from the network link order".into(),
                ));
            }
            for &f in c.feeders() {
                let i = idx(f)?;
                links[i].metered = true;
                feeder_rows.push(i);
            }
        }

        let n = links.len();
        let trips_total = departures.len();
        Ok(Simulation {
            network,
            demand: scenario.demand,
            departures,
            next_departure: 0,
            links,
            index,
            paths,
            vehicles: Vec::with_capacity(trips_total),
            buffers: vec![VecDeque::new(); n],
            origins,
            order: (0..n).collect(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            controller,
            feeder_rows,
            recorder: None,
            time_s: 0.0,
            next_control_s: 0.0,
            next_sample_s: 0.0,
            cycle: 0,
            loaded: 0,
            completed: 0,
            tts_inside_h: 0.0,
            tts_outside_h: 0.0,
            trip_time_s: 0.0,
            metrics: Metrics {
                tts_inside_h: 0.0,
                tts_outside_h: 0.0,
                tts_total_h: 0.0,
                trips_total,
                trips_completed: 0,
                end_time_s: 0.0,
                samples: Vec::new(),
                cycles: Vec::new(),
                feeders: network.feeders.clone(),
                pressure: Vec::new(),
            },
            cfg,
        })
    }

    /// Records feeder pressures for hops `0..=max_hop` at every control instant.
    pub fn record_pressure(&mut self, matrix: TransitionMatrix, max_hop: usize) -> Result<()> {
        if matrix.size() != self.links.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.links.len() + 1,
                got: matrix.size(),
            });
        }
        self.recorder = Some((matrix, max_hop));
        Ok(())
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn conservation(&self) -> Conservation {
        Conservation {
            loaded: self.loaded,
            completed: self.completed,
            on_links: self.links.iter().map(|l| l.vehicles.len()).sum(),
            waiting: self.buffers.iter().map(VecDeque::len).sum(),
        }
    }

    pub fn link_view(&self, id: LinkId) -> Result<LinkView> {
        let i = self.link_index(id)?;
        let l = &self.links[i];
        Ok(LinkView {
            vehicles: l.vehicles.len(),
            queued: self.queued(i, self.time_s),
            credit: l.credit,
            budget: l.metered.then_some(l.budget),
        })
    }

    /// Places a vehicle on the first link of `path`, bypassing demand. It
    /// joins the queue after `delay_s`.
    pub fn add_vehicle(&mut self, path: &[LinkId], delay_s: f64) -> Result<()> {
        let p: Vec<usize> = path.iter().map(|&id| self.link_index(id)).collect::<Result<_>>()?;
        let first = *p.first().ok_or_else(|| Error::Param("empty path".into()))?;
        if self.links[first].vehicles.len() >= self.links[first].capacity {
            return Err(Error::Param(format!("link {} is full", self.links[first].id)));
        }
        self.paths.push(p);
        let vid = self.vehicles.len() as u32;
        self.vehicles.push(Vehicle {
            path: (self.paths.len() - 1) as u32,
            pos: 0,
            ready_at: self.time_s + delay_s,
            depart_s: self.time_s,
        });
        self.links[first].vehicles.push_back(vid);
        self.loaded += 1;
        Ok(())
    }

    /// Overrides a metered feeder's remaining budget.
    pub fn set_budget(&mut self, id: LinkId, budget: f64) -> Result<()> {
        let i = self.link_index(id)?;
        self.links[i].metered = true;
        self.links[i].budget = budget;
        Ok(())
    }

    fn link_index(&self, id: LinkId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownLink(Vertex::Link(id)))
    }

    fn queued(&self, li: usize, t: f64) -> usize {
        self.links[li]
            .vehicles
            .iter()
            .take_while(|&&v| self.vehicles[v as usize].ready_at <= t + EPS)
            .count()
    }

    fn next_link(&self, vid: u32) -> Option<usize> {
        let v = &self.vehicles[vid as usize];
        self.paths[v.path as usize].get(v.pos as usize + 1).copied()
    }

    fn green(&self, li: usize, to: usize, t: f64) -> bool {
        self.links[li]
            .moves
            .iter()
            .find(|&&(j, _)| j == to)
            .is_some_and(|(_, w)| w.is_none_or(|w| w.is_green(t)))
    }

    fn done(&self) -> bool {
        self.next_departure == self.departures.len()
            && self.links.iter().all(|l| l.vehicles.is_empty())
            && self.buffers.iter().all(VecDeque::is_empty)
    }

    fn finished(&self) -> bool {
        self.time_s >= self.cfg.duration_s - EPS || (self.cfg.stop_when_empty && self.done())
    }

    /// Advances the simulation by one time step.
    pub fn step(&mut self) -> Result<()> {
        let t = self.time_s;
        let dt = self.cfg.dt_s;

        while let Some(&(depart, path)) = self.departures.get(self.next_departure) {
            if depart > t + EPS {
                break;
            }
            let origin = self.paths[path as usize][0];
            let vid = self.vehicles.len() as u32;
            self.vehicles.push(Vehicle {
                path,
                pos: 0,
                ready_at: f64::INFINITY,
                depart_s: depart,
            });
            self.buffers[origin].push_back(vid);
            self.loaded += 1;
            self.tts_outside_h += (t - depart) / 3600.0;
            self.next_departure += 1;
        }

        if t >= self.next_control_s - EPS {
            self.control(t)?;
            self.next_control_s += self.cfg.control_cycle_s;
        }

        self.order.shuffle(&mut self.rng);
        for k in 0..self.order.len() {
            let li = self.order[k];
            self.discharge(li, t);
        }

        for k in 0..self.origins.len() {
            let li = self.origins[k];
            while self.links[li].vehicles.len() < self.links[li].capacity {
                let Some(vid) = self.buffers[li].pop_front() else { break };
                self.vehicles[vid as usize].ready_at = t + self.links[li].free_flow_s;
                self.links[li].vehicles.push_back(vid);
            }
        }

        let (inside, outside) = self.counts();
        self.tts_inside_h += inside as f64 * dt / 3600.0;
        self.tts_outside_h += outside as f64 * dt / 3600.0;
        if t >= self.next_sample_s - EPS {
            self.metrics.samples.push(SamplePoint {
                time_s: t,
                completed: self.completed,
                inside,
                outside,
                region_density: self.region_density(),
            });
            self.next_sample_s += self.cfg.sample_every_s;
        }
        self.time_s = t + dt;
        Ok(())
    }

    fn counts(&self) -> (usize, usize) {
        let mut inside = 0;
        let mut outside: usize = self.buffers.iter().map(VecDeque::len).sum();
        for l in &self.links {
            if l.protected {
                inside += l.vehicles.len();
            } else {
                outside += l.vehicles.len();
            }
        }
        (inside, outside)
    }

    fn region_density(&self) -> f64 {
        let (n, cap) = self
            .links
            .iter()
            .filter(|l| l.protected)
            .fold((0usize, 0usize), |(n, c), l| (n + l.vehicles.len(), c + l.capacity));
        if cap == 0 {
            0.0
        } else {
            n as f64 / cap as f64
        }
    }

    fn discharge(&mut self, li: usize, t: f64) {
        let mut ready = self.queued(li, t).min(self.links[li].heads);
        let any_green = (0..ready).any(|k| {
            let vid = self.links[li].vehicles[k];
            self.next_link(vid).is_none_or(|nj| self.green(li, nj, t))
        });
        if !any_green {
            self.links[li].credit = 0.0;
            return;
        }
        let per_step = self.links[li].sat_flow * self.cfg.dt_s;
        let l = &mut self.links[li];
        l.credit = (l.credit + per_step).min(per_step.max(1.0));

        let mut k = 0;
        while k < ready && self.links[li].credit >= 1.0 - EPS {
            let vid = self.links[li].vehicles[k];
            let target = self.next_link(vid);
            let movable = match target {
                None => true,
                Some(nj) => {
                    self.green(li, nj, t) && self.links[nj].vehicles.len() < self.links[nj].capacity
                }
            } && (!self.links[li].metered || self.links[li].budget >= 1.0 - EPS);
            if !movable {
                k += 1;
                continue;
            }
            let l = &mut self.links[li];
            l.vehicles.remove(k);
            l.credit -= 1.0;
            if l.metered {
                l.budget -= 1.0;
            }
            ready -= 1;
            match target {
                None => {
                    self.completed += 1;
                    self.trip_time_s += t - self.vehicles[vid as usize].depart_s;
                }
                Some(nj) => {
                    let v = &mut self.vehicles[vid as usize];
                    v.pos += 1;
                    v.ready_at = t + self.links[nj].free_flow_s;
                    self.links[nj].vehicles.push_back(vid);
                }
            }
        }
    }

    fn queue_densities(&self, t: f64) -> Result<QueueDensityVector> {
        let mut q: Vec<f64> = (0..self.links.len())
            .map(|i| {
                let cap = self.links[i].capacity;
                if cap == 0 {
                    0.0
                } else {
                    (self.queued(i, t) as f64 / cap as f64).min(1.0)
                }
            })
            .collect();
        q.push(0.0);
        QueueDensityVector::new(q)
    }

    fn future_demand(&self, t: f64) -> f64 {
        let t1 = t + self.cfg.control_cycle_s;
        match self.demand {
            Some(profile) => profile.volume_between(t, t1),
            None => self.departures[self.next_departure..]
                .iter()
                .take_while(|d| d.0 < t1)
                .count() as f64,
        }
    }

    fn control(&mut self, t: f64) -> Result<()> {
        if self.controller.is_none() && self.recorder.is_none() {
            return Ok(());
        }
        let q = self.queue_densities(t)?;
        let macro_state = MacroState {
            region_density: self.region_density(),
            future_demand: self.future_demand(t),
        };
        if let Some((matrix, max_hop)) = &self.recorder {
            let all = multi_hop_pressures(matrix, &q, *max_hop)?;
            let values = all
                .iter()
                .map(|p| perimeter_pressures(matrix, p, &self.network.feeders).map(|v| v.values))
                .collect::<Result<Vec<_>>>()?;
            self.metrics.pressure.push(PressureSnapshot {
                cycle: self.cycle,
                time_s: t,
                values,
            });
        }
        let mut total = f64::NAN;
        if let Some(c) = self.controller.as_mut() {
            let action = c.act(&Observation {
                time_s: t,
                cycle: self.cycle,
                macro_state,
                queue_density: &q,
            })?;
            if action.inflow.len() != self.feeder_rows.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.feeder_rows.len(),
                    got: action.inflow.len(),
                });
            }
            for (&li, &a) in self.feeder_rows.iter().zip(&action.inflow) {
                let l = &mut self.links[li];
                l.budget = a.max(0.0) + l.budget.max(0.0).fract();
            }
            total = action.total();
        }
        self.metrics.cycles.push(CycleRecord {
            cycle: self.cycle,
            time_s: t,
            region_density: macro_state.region_density,
            future_demand: macro_state.future_demand,
            total_inflow: total,
        });
        self.cycle += 1;
        Ok(())
    }

    /// Runs to completion and returns the collected metrics.
    pub fn run(mut self) -> Result<Metrics> {
        while !self.finished() {
            self.step()?;
        }
        Ok(self.finish())
    }

    fn finish(mut self) -> Metrics {
        let end = self.time_s;
        let mut trip_time = self.trip_time_s;
        // unfinished trips accrue time until the end of the run
        let unfinished = self.loaded - self.completed;
        let unfinished_depart: f64 = self
            .links
            .iter()
            .flat_map(|l| l.vehicles.iter())
            .chain(self.buffers.iter().flat_map(|b| b.iter()))
            .map(|&vid| self.vehicles[vid as usize].depart_s)
            .sum();
        trip_time += unfinished as f64 * end - unfinished_depart;
        self.metrics.tts_inside_h = self.tts_inside_h;
        self.metrics.tts_outside_h = self.tts_outside_h;
        self.metrics.tts_total_h = trip_time / 3600.0;
        self.metrics.trips_completed = self.completed;
        self.metrics.end_time_s = end;
        self.metrics
    }
}

/// Builds a simulation, runs it to the end and returns the metrics.
pub fn run_scenario(
    scenario: Scenario<'_>,
    controller: Option<Box<dyn PerimeterController + '_>>,
    cfg: SimConfig,
) -> Result<Metrics> {
    Simulation::new(scenario, controller, cfg)?.run()
}
