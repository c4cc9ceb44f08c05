//! Fixed shortest-hop routing and the turning ratios it implies.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::demand::TripList;
use crate::error::{Error, Result};
use crate::graph::{Edge, ExtendedGraph, LinkId};
use crate::network::RoadNetwork;

#[derive(Clone, Debug)]
pub struct Assignment {
    /// Distinct link sequences, origin first, destination last.
    pub paths: Vec<Vec<LinkId>>,
    /// Path index of every trip, in trip-list order.
    pub trip_paths: Vec<usize>,
    /// Ratio on every movement of the network, movement order.
    pub ratios: Vec<Edge>,
}

impl Assignment {
    pub fn graph(&self, network: &RoadNetwork) -> Result<ExtendedGraph> {
        network.graph_with_ratios(&self.ratios)
    }
}

struct Router {
    successors: HashMap<LinkId, Vec<LinkId>>,
    predecessors: HashMap<LinkId, Vec<LinkId>>,
    to_dest: HashMap<LinkId, HashMap<LinkId, u32>>,
}

impl Router {
    fn new(network: &RoadNetwork) -> Self {
        let mut successors: HashMap<LinkId, Vec<LinkId>> = HashMap::new();
        let mut predecessors: HashMap<LinkId, Vec<LinkId>> = HashMap::new();
        for m in &network.movements {
            successors.entry(m.from).or_default().push(m.to);
            predecessors.entry(m.to).or_default().push(m.from);
        }
        for s in successors.values_mut() {
            s.sort_unstable();
            s.dedup();
        }
        Router {
            successors,
            predecessors,
            to_dest: HashMap::new(),
        }
    }

    fn distances(&mut self, dest: LinkId) -> &HashMap<LinkId, u32> {
        let preds = &self.predecessors;
        self.to_dest.entry(dest).or_insert_with(|| {
            let mut dist = HashMap::from([(dest, 0u32)]);
            let mut queue = VecDeque::from([dest]);
            while let Some(l) = queue.pop_front() {
                let d = dist[&l];
                for &p in preds.get(&l).map_or(&[][..], Vec::as_slice) {
                    if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(p) {
                        e.insert(d + 1);
                        queue.push_back(p);
                    }
                }
            }
            dist
        })
    }

    fn path(&mut self, origin: LinkId, dest: LinkId) -> Result<Vec<LinkId>> {
        let dist = self.distances(dest).clone();
        let Some(&start) = dist.get(&origin) else {
            return Err(Error::NoPath { from: origin, to: dest });
        };
        let mut d = start;
        let mut path = vec![origin];
        let mut cur = origin;
        while cur != dest {
            let next = self.successors[&cur]
                .iter()
                .copied()
                .find(|s| dist.get(s) == Some(&(d - 1)))
                .expect("BFS distances are consistent");
            path.push(next);
            cur = next;
            d -= 1;
        }
        Ok(path)
    }
}

/// Routes every trip on a shortest-hop path, ties broken toward the smallest
/// next link id, and derives turning ratios from the aggregate path flows.
/// Links that carry no flow get equal ratios over their movements.
pub fn path_assignment(network: &RoadNetwork, trips: &TripList) -> Result<Assignment> {
    let mut router = Router::new(network);
    let mut path_ids: BTreeMap<(LinkId, LinkId), usize> = BTreeMap::new();
    let mut paths: Vec<Vec<LinkId>> = Vec::new();
    let mut trip_paths = Vec::with_capacity(trips.len());
    let mut flow: HashMap<(LinkId, LinkId), f64> = HashMap::new();

    for t in &trips.trips {
        let key = (t.origin_id, t.dest_id);
        let idx = match path_ids.get(&key) {
            Some(&i) => i,
            None => {
                let p = router.path(t.origin_id, t.dest_id)?;
                paths.push(p);
                path_ids.insert(key, paths.len() - 1);
                paths.len() - 1
            }
        };
        trip_paths.push(idx);
        for w in paths[idx].windows(2) {
            *flow.entry((w[0], w[1])).or_default() += 1.0;
        }
    }

    let mut outflow: HashMap<LinkId, f64> = HashMap::new();
    let mut degree: HashMap<LinkId, usize> = HashMap::new();
    for m in &network.movements {
        *outflow.entry(m.from).or_default() += flow.get(&(m.from, m.to)).copied().unwrap_or(0.0);
        *degree.entry(m.from).or_default() += 1;
    }
    let ratios = network
        .movements
        .iter()
        .map(|m| {
            let total = outflow[&m.from];
            let ratio = if total > 0.0 {
                flow.get(&(m.from, m.to)).copied().unwrap_or(0.0) / total
            } else {
                1.0 / degree[&m.from] as f64
            };
            Edge {
                from: m.from,
                to: m.to,
                ratio,
            }
        })
        .collect();

    Ok(Assignment {
        paths,
        trip_paths,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{build_profile, sample_trips, DemandParams, Trip};
    use crate::graph::{Link, LinkKind};
    use crate::network::{build_grid_network, DemandGroups, GridParams, Movement, Turn};

    fn free(from: LinkId, to: LinkId) -> Movement {
        Movement {
            from,
            to,
            turn: Turn::Free,
            approach: None,
            intersection: None,
        }
    }

    fn line_network() -> RoadNetwork {
        // 0 -> 1 -> 2 (exit), 1 -> 3 (exit)
        RoadNetwork {
            links: vec![
                Link::new(0, 85.0, 2, LinkKind::Feeder),
                Link::new(1, 85.0, 2, LinkKind::Internal),
                Link::new(2, 85.0, 1, LinkKind::Exit),
                Link::new(3, 85.0, 1, LinkKind::Exit),
            ],
            movements: vec![free(0, 1), free(1, 2), free(1, 3)],
            feeders: vec![0],
            intersections: vec![],
            groups: DemandGroups::default(),
            geometry: Default::default(),
            grid: None,
        }
    }

    #[test]
    fn unique_path_gives_binary_ratios() {
        let net = line_network();
        let trips = TripList {
            trips: vec![Trip { t_depart_s: 0.0, origin_id: 0, dest_id: 3 }],
        };
        let a = path_assignment(&net, &trips).unwrap();
        assert_eq!(a.paths, vec![vec![0, 1, 3]]);
        let r: Vec<f64> = a.ratios.iter().map(|e| e.ratio).collect();
        assert_eq!(r, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn unreachable_destination() {
        let net = line_network();
        let trips = TripList {
            trips: vec![Trip { t_depart_s: 0.0, origin_id: 2, dest_id: 3 }],
        };
        assert!(matches!(
            path_assignment(&net, &trips),
            Err(Error::NoPath { from: 2, to: 3 })
        ));
    }

    #[test]
    fn ratios_follow_path_flows() {
        let net = line_network();
        let trips = TripList {
            trips: vec![
                Trip { t_depart_s: 0.0, origin_id: 0, dest_id: 3 },
                Trip { t_depart_s: 1.0, origin_id: 0, dest_id: 2 },
                Trip { t_depart_s: 2.0, origin_id: 0, dest_id: 2 },
                Trip { t_depart_s: 3.0, origin_id: 1, dest_id: 2 },
            ],
        };
        let a = path_assignment(&net, &trips).unwrap();
        // link 1 forwards 3 vehicles to 2 and 1 to 3
        assert_eq!(a.ratios[1].ratio, 0.75);
        assert_eq!(a.ratios[2].ratio, 0.25);
        assert_eq!(a.trip_paths, vec![0, 1, 1, 2]);
    }

    #[test]
    fn grid_assignment_is_row_stochastic_and_shortest() {
        let net = build_grid_network(GridParams { rows: 4, cols: 4, ..GridParams::default() }).unwrap();
        let profile = build_profile(&DemandParams { n12: 800.0, n22: 1200.0, ..Default::default() }).unwrap();
        let trips = sample_trips(&profile, &net.groups, 2).unwrap();
        let a = path_assignment(&net, &trips).unwrap();
        let g = a.graph(&net).unwrap();
        for i in 0..g.n_vertices() {
            let s: f64 = g.successors(i).iter().map(|&(_, r)| r).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        // no path revisits a link and every step is a movement
        let moves: std::collections::HashSet<(LinkId, LinkId)> =
            net.movements.iter().map(|m| (m.from, m.to)).collect();
        for p in &a.paths {
            let uniq: std::collections::HashSet<_> = p.iter().collect();
            assert_eq!(uniq.len(), p.len());
            assert!(p.windows(2).all(|w| moves.contains(&(w[0], w[1]))));
        }
    }
}
