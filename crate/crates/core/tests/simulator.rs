use pp_core::control::{ControlAction, Observation, PerimeterController};
use pp_core::demand::{DemandParams, Trip, TripList};
use pp_core::experiments::io::{write_csv, ScenarioRow, TimeSeriesRow};
use pp_core::experiments::{ControllerSpec, Prepared, ScenarioOutcome, ScenarioSpec};
use pp_core::graph::{Edge, Link, LinkKind, Vertex};
use pp_core::network::{DemandGroups, GridParams, Movement, RoadNetwork, Turn};
use pp_core::sim::{path_assignment, Assignment, Phase, Scenario, SignalPlan, SimConfig, Simulation};
use pp_core::{control::SurrogateParams, Error, LinkId};

fn free(from: LinkId, to: LinkId) -> Movement {
    Movement {
        from,
        to,
        turn: Turn::Free,
        approach: None,
        intersection: None,
    }
}

/// Feeder 0 -> internal 1 -> exit 2, plus a lone single-lane exit 3.
fn corridor() -> RoadNetwork {
    RoadNetwork {
        links: vec![
            Link::new(0, 85.0, 2, LinkKind::Feeder),
            Link::new(1, 85.0, 2, LinkKind::Internal),
            Link::new(2, 85.0, 2, LinkKind::Exit),
            Link::new(3, 85.0, 1, LinkKind::Exit),
        ],
        movements: vec![free(0, 1), free(1, 2)],
        feeders: vec![0],
        intersections: vec![],
        groups: DemandGroups::default(),
        geometry: Default::default(),
        grid: None,
    }
}

fn empty_assignment() -> (TripList, Assignment) {
    (
        TripList { trips: vec![] },
        Assignment {
            paths: vec![],
            trip_paths: vec![],
            ratios: vec![],
        },
    )
}

fn cfg() -> SimConfig {
    SimConfig {
        duration_s: 5000.0,
        ..SimConfig::default()
    }
}

#[test]
fn empty_network_is_unchanged_by_a_step() {
    let net = corridor();
    let (trips, a) = empty_assignment();
    let mut sim = Simulation::new(
        Scenario { network: &net, plans: &[], trips: &trips, assignment: &a, demand: None },
        None,
        cfg(),
    )
    .unwrap();
    sim.step().unwrap();
    for id in 0..4 {
        let v = sim.link_view(id).unwrap();
        assert_eq!((v.vehicles, v.queued), (0, 0));
    }
    assert!(sim.conservation().balanced());
}

#[test]
fn saturation_discharge_of_half_a_vehicle_per_second() {
    let net = corridor();
    let (trips, a) = empty_assignment();
    let mut sim = Simulation::new(
        Scenario { network: &net, plans: &[], trips: &trips, assignment: &a, demand: None },
        None,
        cfg(),
    )
    .unwrap();
    for _ in 0..10 {
        sim.add_vehicle(&[3], 0.0).unwrap();
    }
    assert_eq!(sim.link_view(3).unwrap().effective_queue(), 10.0);
    sim.step().unwrap();
    assert_eq!(sim.link_view(3).unwrap().effective_queue(), 9.5);
    sim.step().unwrap();
    assert_eq!(sim.link_view(3).unwrap().effective_queue(), 9.0);
    assert_eq!(sim.conservation().completed, 1);
    for _ in 0..18 {
        sim.step().unwrap();
    }
    assert_eq!(sim.conservation().completed, 10);
}

#[test]
fn zero_budget_blocks_a_feeder() {
    let net = corridor();
    let (trips, a) = empty_assignment();
    let mut sim = Simulation::new(
        Scenario { network: &net, plans: &[], trips: &trips, assignment: &a, demand: None },
        None,
        cfg(),
    )
    .unwrap();
    for _ in 0..5 {
        sim.add_vehicle(&[0, 1, 2], 0.0).unwrap();
    }
    sim.set_budget(0, 0.0).unwrap();
    for _ in 0..200 {
        sim.step().unwrap();
    }
    assert_eq!(sim.link_view(0).unwrap().vehicles, 5);
    sim.set_budget(0, 3.0).unwrap();
    for _ in 0..200 {
        sim.step().unwrap();
    }
    assert_eq!(sim.link_view(0).unwrap().vehicles, 2);
    assert_eq!(sim.conservation().completed, 3);
}

#[test]
fn full_receiving_link_blocks_discharge() {
    let net = corridor();
    let (trips, a) = empty_assignment();
    let mut sim = Simulation::new(
        Scenario { network: &net, plans: &[], trips: &trips, assignment: &a, demand: None },
        None,
        cfg(),
    )
    .unwrap();
    let cap = net.links[1].storage_capacity as usize;
    // fill link 1 with vehicles that are still travelling
    for _ in 0..cap {
        sim.add_vehicle(&[1, 2], 1e6).unwrap();
    }
    sim.add_vehicle(&[0, 1, 2], 0.0).unwrap();
    for _ in 0..50 {
        sim.step().unwrap();
    }
    assert_eq!(sim.link_view(0).unwrap().queued, 1);
    assert_eq!(sim.link_view(1).unwrap().vehicles, cap);
    assert!(matches!(sim.add_vehicle(&[1, 2], 0.0), Err(Error::Param(_))));
}

#[test]
fn red_signal_holds_the_queue() {
    let net = corridor();
    let (trips, a) = empty_assignment();
    // movement 0 -> 1 green only for the first 10 s of a 100 s cycle
    let plans = vec![SignalPlan {
        intersection: 0,
        phases: vec![
            Phase { duration_s: 10.0, movements: vec![(0, 1)] },
            Phase { duration_s: 90.0, movements: vec![] },
        ],
        interphase_s: 0.0,
        offset_s: 0.0,
    }];
    let mut sim = Simulation::new(
        Scenario { network: &net, plans: &plans, trips: &trips, assignment: &a, demand: None },
        None,
        cfg(),
    )
    .unwrap();
    for _ in 0..20 {
        sim.add_vehicle(&[0, 1, 2], 0.0).unwrap();
    }
    for _ in 0..100 {
        sim.step().unwrap();
    }
    // 10 s of green at 1 veh/s
    assert_eq!(sim.link_view(0).unwrap().vehicles, 10);
}

struct FixedMeter {
    feeders: Vec<LinkId>,
    vertices: Vec<Vertex>,
    per_cycle: f64,
    cycles: usize,
}

impl PerimeterController for FixedMeter {
    fn feeders(&self) -> &[LinkId] {
        &self.feeders
    }

    fn vertex_order(&self) -> &[Vertex] {
        &self.vertices
    }

    fn act(&mut self, obs: &Observation<'_>) -> pp_core::Result<ControlAction> {
        assert_eq!(obs.queue_density.len(), self.vertices.len());
        self.cycles += 1;
        Ok(ControlAction::equal_split(self.per_cycle, &self.feeders))
    }
}

fn meter(net: &RoadNetwork, per_cycle: f64) -> FixedMeter {
    FixedMeter {
        feeders: net.feeders.clone(),
        vertices: net
            .links
            .iter()
            .map(|l| Vertex::Link(l.id))
            .chain([Vertex::Supersink])
            .collect(),
        per_cycle,
        cycles: 0,
    }
}

#[test]
fn metering_caps_feeder_discharge_per_cycle() {
    let net = corridor();
    let trips = TripList {
        trips: (0..200)
            .map(|k| Trip { t_depart_s: k as f64, origin_id: 0, dest_id: 2 })
            .collect(),
    };
    let a = path_assignment(&net, &trips).unwrap();
    let scenario = Scenario { network: &net, plans: &[], trips: &trips, assignment: &a, demand: None };
    let mut sim = Simulation::new(scenario, Some(Box::new(meter(&net, 2.5))), cfg()).unwrap();
    // 5 control cycles at 2.5 veh each; the fractional remainder carries over
    for _ in 0..(5 * 96) {
        sim.step().unwrap();
    }
    let c = sim.conservation();
    assert!(c.balanced());
    let released = c.completed + sim.link_view(1).unwrap().vehicles + sim.link_view(2).unwrap().vehicles;
    assert!((11..=13).contains(&released), "released {released}");
}

#[test]
fn mismatched_controller_is_a_config_error() {
    let net = corridor();
    let (trips, a) = empty_assignment();
    let scenario = Scenario { network: &net, plans: &[], trips: &trips, assignment: &a, demand: None };
    let mut wrong = meter(&net, 1.0);
    wrong.feeders = vec![1];
    assert!(matches!(
        Simulation::new(scenario, Some(Box::new(wrong)), cfg()),
        Err(Error::Config(_))
    ));
    let mut wrong = meter(&net, 1.0);
    wrong.vertices.reverse();
    assert!(matches!(
        Simulation::new(scenario, Some(Box::new(wrong)), cfg()),
        Err(Error::Config(_))
    ));
}

fn small_grid() -> Prepared {
    let demand = DemandParams {
        n12: 600.0,
        n22: 1200.0,
        ..DemandParams::default()
    };
    Prepared::new(GridParams { rows: 3, cols: 3, ..GridParams::default() }, &demand, 7).unwrap()
}

#[test]
fn grid_run_keeps_invariants_every_step() {
    let p = small_grid();
    let c = p
        .controller(ControllerSpec::Softmax { hop: 4, sensitivity: 8.0 }, SurrogateParams::default(), None)
        .unwrap();
    let mut sim = Simulation::new(p.scenario(), c, SimConfig { duration_s: 3000.0, ..SimConfig::default() }).unwrap();
    let caps: Vec<(LinkId, usize)> = p
        .network
        .links
        .iter()
        .map(|l| (l.id, l.storage_capacity as usize))
        .collect();
    let mut completed = 0;
    for _ in 0..3000 {
        sim.step().unwrap();
        let c = sim.conservation();
        assert!(c.balanced(), "{c:?}");
        assert!(c.completed >= completed);
        completed = c.completed;
        for &(id, cap) in &caps {
            let v = sim.link_view(id).unwrap();
            assert!(v.vehicles <= cap && v.queued <= v.vehicles);
        }
    }
    assert!(completed > 0);
}

#[test]
fn tts_split_adds_up_and_curves_are_monotone() {
    let p = small_grid();
    for spec in [ControllerSpec::NoControl, ControllerSpec::Homogeneous] {
        let m = p.run(spec, SurrogateParams::default(), None, SimConfig::default()).unwrap();
        assert!((m.tts_total_h - m.tts_h()).abs() < 1e-6, "{} vs {}", m.tts_total_h, m.tts_h());
        assert!(m.samples.windows(2).all(|w| w[0].completed <= w[1].completed));
        assert_eq!(m.trips_completed, m.trips_total);
    }
}

#[test]
fn unfinished_trips_still_add_up() {
    let p = small_grid();
    let m = p
        .run(ControllerSpec::NoControl, SurrogateParams::default(), None, SimConfig { duration_s: 3000.0, ..SimConfig::default() })
        .unwrap();
    assert!(m.trips_completed < m.trips_total);
    assert!((m.tts_total_h - m.tts_h()).abs() < 1e-6);
}

#[test]
fn zero_demand_costs_nothing() {
    let demand = DemandParams { n12: 0.0, n22: 0.0, ..DemandParams::default() };
    let p = Prepared::new(GridParams { rows: 3, cols: 3, ..GridParams::default() }, &demand, 1).unwrap();
    let m = p.run(ControllerSpec::Homogeneous, SurrogateParams::default(), None, SimConfig::default()).unwrap();
    assert_eq!((m.tts_total_h, m.tts_inside_h, m.tts_outside_h), (0.0, 0.0, 0.0));
}

fn outcome(p: &Prepared, seed: u64) -> ScenarioOutcome {
    let spec = ScenarioSpec {
        id: "det".into(),
        grid: GridParams { rows: 3, cols: 3, ..GridParams::default() },
        demand: DemandParams::default(),
        demand_factor: 1.0,
        demand_seed: 7,
        controller: ControllerSpec::Softmax { hop: 6, sensitivity: 4.0 },
        surrogate: SurrogateParams::default(),
        perturbation: None,
        sim: SimConfig { seed, ..SimConfig::default() },
    };
    let metrics = p.run(spec.controller, spec.surrogate, None, spec.sim.clone()).unwrap();
    ScenarioOutcome { spec, metrics }
}

#[test]
fn same_seed_gives_byte_identical_csv() {
    let p = small_grid();
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let o = outcome(&p, 3);
        let a = dir.path().join(format!("runs{k}.csv"));
        let b = dir.path().join(format!("ts{k}.csv"));
        write_csv(&a, &[ScenarioRow::from_outcome(&o)]).unwrap();
        write_csv(&b, &TimeSeriesRow::from_outcome(&o)).unwrap();
        files.push((std::fs::read(a).unwrap(), std::fs::read(b).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn routing_ratios_feed_a_valid_controller_matrix() {
    let p = small_grid();
    let edges: Vec<Edge> = p.graph.edges();
    for link in p.graph.links() {
        if link.kind == LinkKind::Exit {
            continue;
        }
        let s: f64 = edges.iter().filter(|e| e.from == link.id).map(|e| e.ratio).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}
