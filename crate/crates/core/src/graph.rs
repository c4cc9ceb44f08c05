//! Supersink-extended link graph and its absorbing Markov transition matrix.
//!
//! Vertices are traffic links. An edge `u -> v` carries the turning ratio from
//! link `u` into link `v`. Every exit link drains into a single absorbing
//! supersink, which loops onto itself with ratio 1, so the weighted adjacency
//! matrix of the extended graph is row-stochastic.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type LinkId = u32;

/// Tolerance accepted on input row sums before renormalizing.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Jam spacing used to derive storage capacity from geometry.
pub const JAM_SPACING_M: f64 = 7.5;

/// Saturation flow of one lane, vehicles per second (1800 veh/h).
pub const LANE_SATURATION_FLOW: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Vertex {
    Link(LinkId),
    Supersink,
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Link(id) => write!(f, "{id}"),
            Vertex::Supersink => f.write_str("Ω"),
        }
    }
}

impl From<LinkId> for Vertex {
    fn from(id: LinkId) -> Self {
        Vertex::Link(id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Internal,
    /// Gated perimeter entry link.
    Feeder,
    /// Link whose only successor is the supersink.
    Exit,
    SourceConnector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub length_m: f64,
    pub lanes: u32,
    /// Maximum number of vehicles the link can hold.
    pub storage_capacity: u32,
    /// Vehicles per second.
    pub saturation_flow: f64,
    pub kind: LinkKind,
}

impl Link {
    /// Link with storage and saturation flow derived from its geometry.
    pub fn new(id: LinkId, length_m: f64, lanes: u32, kind: LinkKind) -> Self {
        Link {
            id,
            length_m,
            lanes,
            storage_capacity: default_storage_capacity(length_m, lanes),
            saturation_flow: LANE_SATURATION_FLOW * f64::from(lanes),
            kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| {
            Err(Error::InvalidLink {
                link: self.id,
                reason: reason.to_string(),
            })
        };
        if self.lanes < 1 {
            return invalid("lanes must be at least 1");
        }
        if self.storage_capacity == 0 {
            return invalid("storage capacity must be positive");
        }
        if !(self.saturation_flow > 0.0) {
            return invalid("saturation flow must be positive");
        }
        if !(self.length_m > 0.0) {
            return invalid("length must be positive");
        }
        Ok(())
    }
}

pub fn default_storage_capacity(length_m: f64, lanes: u32) -> u32 {
    (length_m * f64::from(lanes) / JAM_SPACING_M).floor() as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: LinkId,
    pub to: LinkId,
    pub ratio: f64,
}

/// Link graph extended with the supersink. Row `i < n_links` belongs to the
/// i-th link in insertion order; the supersink is always the last row.
#[derive(Clone, Debug)]
pub struct ExtendedGraph {
    links: Vec<Link>,
    index: HashMap<LinkId, usize>,
    successors: Vec<Vec<(usize, f64)>>,
}

impl ExtendedGraph {
    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    /// Number of vertices including the supersink.
    pub fn n_vertices(&self) -> usize {
        self.links.len() + 1
    }

    pub fn supersink_index(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> Result<&Link> {
        self.index
            .get(&id)
            .map(|&i| &self.links[i])
            .ok_or(Error::UnknownLink(Vertex::Link(id)))
    }

    pub fn index_of(&self, v: impl Into<Vertex>) -> Result<usize> {
        match v.into() {
            Vertex::Supersink => Ok(self.supersink_index()),
            Vertex::Link(id) => self
                .index
                .get(&id)
                .copied()
                .ok_or(Error::UnknownLink(Vertex::Link(id))),
        }
    }

    pub fn vertex_at(&self, index: usize) -> Vertex {
        if index == self.supersink_index() {
            Vertex::Supersink
        } else {
            Vertex::Link(self.links[index].id)
        }
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.n_vertices()).map(|i| self.vertex_at(i))
    }

    /// Outgoing `(vertex index, turning ratio)` pairs, including zero-ratio
    /// movements that exist structurally.
    pub fn successors(&self, index: usize) -> &[(usize, f64)] {
        &self.successors[index]
    }

    pub fn turning_ratio(&self, from: impl Into<Vertex>, to: impl Into<Vertex>) -> Result<f64> {
        let i = self.index_of(from)?;
        let j = self.index_of(to)?;
        Ok(self.successors[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, r)| r))
    }

    /// Feeder link ids, ordered by id.
    pub fn feeders(&self) -> Vec<LinkId> {
        let mut f: Vec<LinkId> = self
            .links
            .iter()
            .filter(|l| l.kind == LinkKind::Feeder)
            .map(|l| l.id)
            .collect();
        f.sort_unstable();
        f
    }

    /// Edges among real links (supersink edges omitted), in a form accepted by
    /// [`build_extended_graph`].
    pub fn edges(&self) -> Vec<Edge> {
        let omega = self.supersink_index();
        let mut out = Vec::new();
        for (i, succ) in self.successors.iter().enumerate().take(self.links.len()) {
            for &(j, ratio) in succ {
                if j != omega {
                    out.push(Edge {
                        from: self.links[i].id,
                        to: self.links[j].id,
                        ratio,
                    });
                }
            }
        }
        out
    }

    /// Same topology with the turning ratios replaced row by row. Rows of exit
    /// links and the supersink are never handed to `reweigh`.
    pub fn reweighted<F>(&self, mut reweigh: F) -> Result<ExtendedGraph>
    where
        F: FnMut(&Link, &[(usize, f64)]) -> Result<Vec<f64>>,
    {
        let mut edges = Vec::new();
        for (i, link) in self.links.iter().enumerate() {
            if link.kind == LinkKind::Exit {
                continue;
            }
            let succ = &self.successors[i];
            let ratios = reweigh(link, succ)?;
            if ratios.len() != succ.len() {
                return Err(Error::DimensionMismatch {
                    expected: succ.len(),
                    got: ratios.len(),
                });
            }
            for (&(j, _), ratio) in succ.iter().zip(ratios) {
                edges.push(Edge {
                    from: link.id,
                    to: self.links[j].id,
                    ratio,
                });
            }
        }
        build_extended_graph(self.links.clone(), &edges)
    }
}

/// Builds the extended graph, appending the supersink, the exit-to-supersink
/// edges and the supersink self-loop. Input rows must sum to one within
/// [`ROW_SUM_TOLERANCE`] and are renormalized exactly.
pub fn build_extended_graph(links: Vec<Link>, edges: &[Edge]) -> Result<ExtendedGraph> {
    let mut index = HashMap::with_capacity(links.len());
    for (i, link) in links.iter().enumerate() {
        link.validate()?;
        if index.insert(link.id, i).is_some() {
            return Err(Error::DuplicateLink(link.id));
        }
    }
    let omega = links.len();
    let mut successors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); links.len() + 1];

    for e in edges {
        let from = *index
            .get(&e.from)
            .ok_or(Error::UnknownLink(Vertex::Link(e.from)))?;
        let to = *index
            .get(&e.to)
            .ok_or(Error::UnknownLink(Vertex::Link(e.to)))?;
        if links[from].kind == LinkKind::Exit {
            return Err(Error::InvalidLink {
                link: e.from,
                reason: "exit links may only lead to the supersink".into(),
            });
        }
        if !(0.0..=1.0 + ROW_SUM_TOLERANCE).contains(&e.ratio) {
            return Err(Error::InvalidLink {
                link: e.from,
                reason: format!("turning ratio {} to link {} outside [0, 1]", e.ratio, e.to),
            });
        }
        match successors[from].iter_mut().find(|(j, _)| *j == to) {
            Some(slot) => slot.1 += e.ratio,
            None => successors[from].push((to, e.ratio)),
        }
    }

    for (i, link) in links.iter().enumerate() {
        let row = &mut successors[i];
        if link.kind == LinkKind::Exit {
            row.push((omega, 1.0));
            continue;
        }
        if row.is_empty() {
            return Err(Error::DanglingLink(link.id));
        }
        let sum: f64 = row.iter().map(|&(_, r)| r).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::RowSum { link: link.id, sum });
        }
        for slot in row.iter_mut() {
            slot.1 /= sum;
        }
        row.sort_by_key(|&(j, _)| j);
    }
    successors[omega].push((omega, 1.0));

    Ok(ExtendedGraph {
        links,
        index,
        successors,
    })
}

/// Sparse row-stochastic transition matrix of an extended graph.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    vertices: Vec<Vertex>,
    index: HashMap<Vertex, usize>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionMatrix {
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn supersink_index(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn index_of(&self, v: impl Into<Vertex>) -> Result<usize> {
        let v = v.into();
        self.index.get(&v).copied().ok_or(Error::UnknownLink(v))
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, p)| p)
    }

    /// `P x` for a column vector `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.size());
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, p)| p * x[j]).sum())
            .collect()
    }

    /// `xᵀ P` for a row vector `x`.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.size());
        let mut out = vec![0.0; self.size()];
        for (i, row) in self.rows.iter().enumerate() {
            if x[i] == 0.0 {
                continue;
            }
            for &(j, p) in row {
                out[j] += x[i] * p;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                m[(i, j)] = p;
            }
        }
        m
    }
}

/// Weighted adjacency matrix of the extended graph.
pub fn transition_matrix(graph: &ExtendedGraph) -> TransitionMatrix {
    let vertices: Vec<Vertex> = graph.vertices().collect();
    let index = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let rows = (0..graph.n_vertices())
        .map(|i| graph.successors(i).to_vec())
        .collect();
    TransitionMatrix {
        vertices,
        index,
        rows,
    }
}

/// Vertices reachable from `from` by walks of exactly `hops` edges whose
/// turning-ratio product is positive.
pub fn downstream_set(
    graph: &ExtendedGraph,
    from: impl Into<Vertex>,
    hops: usize,
) -> Result<BTreeSet<Vertex>> {
    let start = graph.index_of(from)?;
    let mut frontier = vec![false; graph.n_vertices()];
    frontier[start] = true;
    for _ in 0..hops {
        let mut next = vec![false; graph.n_vertices()];
        for (i, _) in frontier.iter().enumerate().filter(|(_, &on)| on) {
            for &(j, r) in graph.successors(i) {
                if r > 0.0 {
                    next[j] = true;
                }
            }
        }
        frontier = next;
    }
    Ok(frontier
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| graph.vertex_at(i))
        .collect())
}

/// Shortest hop distance from `from` to every vertex along edges with positive
/// ratio; `None` where unreachable.
pub fn hop_distances(graph: &ExtendedGraph, from: impl Into<Vertex>) -> Result<Vec<Option<usize>>> {
    let start = graph.index_of(from)?;
    let mut dist = vec![None; graph.n_vertices()];
    dist[start] = Some(0);
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        let d = dist[i].unwrap_or(0);
        for &(j, r) in graph.successors(i) {
            if r > 0.0 && dist[j].is_none() {
                dist[j] = Some(d + 1);
                queue.push_back(j);
            }
        }
    }
    Ok(dist)
}
