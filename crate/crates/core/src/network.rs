//! Road network description and the signalized grid generator.
//!
//! The grid has `rows × cols` signalized intersections. Every block between two
//! adjacent intersections is split at a mid-block node into two links per
//! direction, so crossing a block takes two hops. Single-lane source and sink
//! connectors attach to the mid-block node of each block that lies wholly in the
//! upper or lower half of the protected region. Feeder links enter the boundary
//! intersections from outside, one per boundary side of each boundary
//! intersection, and are numbered `0..F` clockwise starting at the top-left.
//!
//! Channelization permits every movement except U-turns.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_extended_graph, Edge, ExtendedGraph, Link, LinkId, LinkKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub rows: usize,
    pub cols: usize,
    pub link_length_m: f64,
    pub lanes: u32,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            rows: 6,
            cols: 6,
            link_length_m: 85.0,
            lanes: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    North,
    South,
    East,
    West,
}

impl Heading {
    pub fn left(self) -> Heading {
        match self {
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
            Heading::East => Heading::North,
        }
    }

    pub fn right(self) -> Heading {
        self.left().left().left()
    }

    pub fn is_north_south(self) -> bool {
        matches!(self, Heading::North | Heading::South)
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Heading::North => (-1, 0),
            Heading::South => (1, 0),
            Heading::East => (0, 1),
            Heading::West => (0, -1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Turn {
    Through,
    Left,
    Right,
    /// Unsignalized: mid-block continuation and connector ramps.
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    pub from: LinkId,
    pub to: LinkId,
    pub turn: Turn,
    /// Heading of the approach link, for signalized movements.
    pub approach: Option<Heading>,
    /// Index into [`RoadNetwork::intersections`] for signalized movements.
    pub intersection: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intersection {
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subregion {
    Upper,
    Lower,
}

/// Origin and destination link pools used by demand generation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandGroups {
    pub upper_feeders: Vec<LinkId>,
    pub lower_feeders: Vec<LinkId>,
    pub upper_sources: Vec<LinkId>,
    pub lower_sources: Vec<LinkId>,
    pub upper_sinks: Vec<LinkId>,
    pub lower_sinks: Vec<LinkId>,
}

impl DemandGroups {
    pub fn feeders(&self, region: Subregion) -> &[LinkId] {
        match region {
            Subregion::Upper => &self.upper_feeders,
            Subregion::Lower => &self.lower_feeders,
        }
    }

    pub fn sources(&self, region: Subregion) -> &[LinkId] {
        match region {
            Subregion::Upper => &self.upper_sources,
            Subregion::Lower => &self.lower_sources,
        }
    }

    pub fn sinks(&self, region: Subregion) -> &[LinkId] {
        match region {
            Subregion::Upper => &self.upper_sinks,
            Subregion::Lower => &self.lower_sinks,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub links: Vec<Link>,
    pub movements: Vec<Movement>,
    /// Feeder links in feeder-index order.
    pub feeders: Vec<LinkId>,
    pub intersections: Vec<Intersection>,
    pub groups: DemandGroups,
    pub geometry: HashMap<LinkId, Segment>,
    pub grid: Option<GridParams>,
}

impl RoadNetwork {
    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.links.iter().find(|l| l.id == id)
    }

    /// True for links inside the protected region (everything but feeders).
    pub fn is_protected(&self, id: LinkId) -> bool {
        self.link(id).is_some_and(|l| l.kind != LinkKind::Feeder)
    }

    /// Extended graph with every movement weighted equally.
    pub fn uniform_graph(&self) -> Result<ExtendedGraph> {
        let mut by_from: HashMap<LinkId, Vec<LinkId>> = HashMap::new();
        for m in &self.movements {
            by_from.entry(m.from).or_default().push(m.to);
        }
        let edges: Vec<Edge> = self
            .movements
            .iter()
            .map(|m| Edge {
                from: m.from,
                to: m.to,
                ratio: 1.0 / by_from[&m.from].len() as f64,
            })
            .collect();
        build_extended_graph(self.links.clone(), &edges)
    }

    /// Extended graph with the given ratios on the movements.
    pub fn graph_with_ratios(&self, edges: &[Edge]) -> Result<ExtendedGraph> {
        build_extended_graph(self.links.clone(), edges)
    }
}

struct Builder {
    params: GridParams,
    links: Vec<Link>,
    geometry: HashMap<LinkId, Segment>,
    movements: Vec<Movement>,
}

impl Builder {
    fn add_link(&mut self, kind: LinkKind, lanes: u32, seg: Segment) -> LinkId {
        let id = self.links.len() as LinkId;
        self.links
            .push(Link::new(id, self.params.link_length_m, lanes, kind));
        self.geometry.insert(id, seg);
        id
    }

    fn free(&mut self, from: LinkId, to: LinkId) {
        self.movements.push(Movement {
            from,
            to,
            turn: Turn::Free,
            approach: None,
            intersection: None,
        });
    }
}

/// Directed pair of links crossing one block.
#[derive(Clone, Copy)]
struct BlockDirection {
    first: LinkId,
    second: LinkId,
    from_node: (usize, usize),
    to_node: (usize, usize),
    heading: Heading,
}

pub fn build_grid_network(params: GridParams) -> Result<RoadNetwork> {
    let GridParams {
        rows,
        cols,
        link_length_m: len,
        lanes,
    } = params;
    if rows < 2 || cols < 2 {
        return Err(Error::Param(format!(
            "grid needs at least 2×2 intersections, got {rows}×{cols}"
        )));
    }
    if !(len > 0.0) || lanes == 0 {
        return Err(Error::Param("link length and lanes must be positive".into()));
    }
    let mut b = Builder {
        params,
        links: Vec::new(),
        geometry: HashMap::new(),
        movements: Vec::new(),
    };
    let pos = |r: usize, c: usize| (c as f64 * 2.0 * len, r as f64 * 2.0 * len);
    let center = (rows as f64 - 1.0) / 2.0;

    // Feeders, clockwise from the top-left corner.
    let mut feeder_entries: Vec<(LinkId, (usize, usize), Heading)> = Vec::new();
    let mut groups = DemandGroups::default();
    let mut push_feeder = |b: &mut Builder, r: usize, c: usize, heading: Heading| {
        let (x1, y1) = pos(r, c);
        let (dr, dc) = heading.delta();
        let x0 = x1 - dc as f64 * len;
        let y0 = y1 - dr as f64 * len;
        let id = b.add_link(LinkKind::Feeder, lanes, Segment { x0, y0, x1, y1 });
        feeder_entries.push((id, (r, c), heading));
        let upper = match heading {
            Heading::South => true,
            Heading::North => false,
            _ => r as f64 <= center,
        };
        if upper {
            groups.upper_feeders.push(id);
        } else {
            groups.lower_feeders.push(id);
        }
    };
    for c in 0..cols {
        push_feeder(&mut b, 0, c, Heading::South);
    }
    for r in 0..rows {
        push_feeder(&mut b, r, cols - 1, Heading::West);
    }
    for c in (0..cols).rev() {
        push_feeder(&mut b, rows - 1, c, Heading::North);
    }
    for r in (0..rows).rev() {
        push_feeder(&mut b, r, 0, Heading::East);
    }
    let feeders: Vec<LinkId> = feeder_entries.iter().map(|e| e.0).collect();

    // Blocks: horizontal then vertical, each split at a mid-block node.
    let mut blocks: Vec<((usize, usize), (usize, usize))> = Vec::new();
    for r in 0..rows {
        for c in 0..cols - 1 {
            blocks.push(((r, c), (r, c + 1)));
        }
    }
    for r in 0..rows - 1 {
        for c in 0..cols {
            blocks.push(((r, c), (r + 1, c)));
        }
    }

    let mut directions: Vec<BlockDirection> = Vec::new();
    let mut block_dirs: Vec<[usize; 2]> = Vec::new();
    for &(a, z) in &blocks {
        let (xa, ya) = pos(a.0, a.1);
        let (xz, yz) = pos(z.0, z.1);
        let (xm, ym) = ((xa + xz) / 2.0, (ya + yz) / 2.0);
        let forward = if a.0 == z.0 { Heading::East } else { Heading::South };
        let backward = forward.left().left();
        let mut pair = [0usize; 2];
        for (k, (from, to, heading)) in [(a, z, forward), (z, a, backward)].into_iter().enumerate() {
            let (xf, yf) = pos(from.0, from.1);
            let (xt, yt) = pos(to.0, to.1);
            let first = b.add_link(
                LinkKind::Internal,
                lanes,
                Segment { x0: xf, y0: yf, x1: xm, y1: ym },
            );
            let second = b.add_link(
                LinkKind::Internal,
                lanes,
                Segment { x0: xm, y0: ym, x1: xt, y1: yt },
            );
            b.free(first, second);
            pair[k] = directions.len();
            directions.push(BlockDirection {
                first,
                second,
                from_node: from,
                to_node: to,
                heading,
            });
        }
        block_dirs.push(pair);
    }

    // Connectors on blocks that lie wholly in one half.
    let mut sink_regions: Vec<Option<Subregion>> = vec![None; blocks.len()];
    for (bi, &(a, z)) in blocks.iter().enumerate() {
        let y_mid = (a.0 + z.0) as f64 / 2.0;
        let region = if y_mid < center {
            Subregion::Upper
        } else if y_mid > center {
            Subregion::Lower
        } else {
            continue;
        };
        let (xa, ya) = pos(a.0, a.1);
        let (xz, yz) = pos(z.0, z.1);
        let (xm, ym) = ((xa + xz) / 2.0, (ya + yz) / 2.0);
        // ramps stand off perpendicular to the block
        let (ox, oy) = if a.0 == z.0 { (0.0, len / 2.0) } else { (len / 2.0, 0.0) };
        let source = b.add_link(
            LinkKind::SourceConnector,
            1,
            Segment { x0: xm + ox, y0: ym + oy, x1: xm, y1: ym },
        );
        for &d in &block_dirs[bi] {
            let second = directions[d].second;
            b.free(source, second);
        }
        match region {
            Subregion::Upper => groups.upper_sources.push(source),
            Subregion::Lower => groups.lower_sources.push(source),
        }
        sink_regions[bi] = Some(region);
    }
    for (bi, region) in sink_regions.iter().enumerate() {
        let Some(region) = region else { continue };
        let (a, z) = blocks[bi];
        let (xa, ya) = pos(a.0, a.1);
        let (xz, yz) = pos(z.0, z.1);
        let (xm, ym) = ((xa + xz) / 2.0, (ya + yz) / 2.0);
        let (ox, oy) = if a.0 == z.0 { (0.0, -len / 2.0) } else { (-len / 2.0, 0.0) };
        let sink = b.add_link(
            LinkKind::Exit,
            1,
            Segment { x0: xm, y0: ym, x1: xm + ox, y1: ym + oy },
        );
        for &d in &block_dirs[bi] {
            let first = directions[d].first;
            b.free(first, sink);
        }
        match region {
            Subregion::Upper => groups.upper_sinks.push(sink),
            Subregion::Lower => groups.lower_sinks.push(sink),
        }
    }

    // Signalized movements at intersections.
    let mut intersections = Vec::with_capacity(rows * cols);
    let mut node_index = HashMap::new();
    for r in 0..rows {
        for c in 0..cols {
            node_index.insert((r, c), intersections.len());
            intersections.push(Intersection { row: r, col: c });
        }
    }
    let mut outgoing: HashMap<((usize, usize), Heading), LinkId> = HashMap::new();
    for d in &directions {
        outgoing.insert((d.from_node, d.heading), d.first);
    }
    let mut approaches: Vec<(LinkId, (usize, usize), Heading)> = feeder_entries.clone();
    approaches.extend(directions.iter().map(|d| (d.second, d.to_node, d.heading)));
    approaches.sort_by_key(|a| a.0);
    for (from, node, heading) in approaches {
        for (turn, out_heading) in [
            (Turn::Through, heading),
            (Turn::Left, heading.left()),
            (Turn::Right, heading.right()),
        ] {
            if let Some(&to) = outgoing.get(&(node, out_heading)) {
                b.movements.push(Movement {
                    from,
                    to,
                    turn,
                    approach: Some(heading),
                    intersection: Some(node_index[&node]),
                });
            }
        }
    }
    b.movements.sort_by_key(|m| (m.from, m.to));

    Ok(RoadNetwork {
        links: b.links,
        movements: b.movements,
        feeders,
        intersections,
        groups,
        geometry: b.geometry,
        grid: Some(params),
    })
}
