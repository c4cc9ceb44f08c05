//! Multi-hop downstream pressure.
//!
//! With `P` the transition matrix of the extended graph and `Q` the vector of
//! queue densities, the h-hop pressure of every vertex is
//!
//! ```text
//! p(0) = Q
//! p(h) = p(h-1) - P^h Q        (recursive)
//!      = Q - Σ_{k=1..h} P^k Q  (unrolled)
//! ```
//!
//! Entries are bounded to `[-h, 1]` and never increase with `h`. For `h = 1`
//! this is the ordinary one-hop pressure `Q - P Q`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{ExtendedGraph, LinkId, TransitionMatrix, Vertex};

/// Normalized queue densities over all vertices, supersink last and zero.
#[derive(Clone, Debug, PartialEq)]
pub struct QueueDensityVector(Vec<f64>);

impl QueueDensityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Param(format!("queue density {bad} outside [0, 1]")));
        }
        match values.last() {
            None => Err(Error::Param("empty queue density vector".into())),
            Some(&last) if last != 0.0 => Err(Error::Param(
                "supersink queue density must be exactly 0".into(),
            )),
            Some(_) => Ok(QueueDensityVector(values)),
        }
    }

    pub fn zeros(n_vertices: usize) -> Self {
        QueueDensityVector(vec![0.0; n_vertices])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PressureVector {
    pub hop: usize,
    pub values: Vec<f64>,
}

/// Pressures of the feeder links, in feeder order.
#[derive(Clone, Debug, PartialEq)]
pub struct PerimeterPressureVector {
    pub feeders: Vec<LinkId>,
    pub values: Vec<f64>,
}

impl PerimeterPressureVector {
    /// Writes each feeder's pressure back into a full-length vector.
    pub fn scatter_into(&self, matrix: &TransitionMatrix, out: &mut [f64]) -> Result<()> {
        for (&f, &v) in self.feeders.iter().zip(&self.values) {
            out[matrix.index_of(f)?] = v;
        }
        Ok(())
    }
}

fn check_dims(matrix: &TransitionMatrix, q: &QueueDensityVector) -> Result<()> {
    if q.len() != matrix.size() {
        return Err(Error::DimensionMismatch {
            expected: matrix.size(),
            got: q.len(),
        });
    }
    Ok(())
}

/// Pressure vectors for every hop `0..=max_hop`, keeping `P^h Q` between hops.
pub fn multi_hop_pressures(
    matrix: &TransitionMatrix,
    q: &QueueDensityVector,
    max_hop: usize,
) -> Result<Vec<PressureVector>> {
    check_dims(matrix, q)?;
    let mut out = Vec::with_capacity(max_hop + 1);
    let mut current = q.values().to_vec();
    let mut reach = q.values().to_vec();
    out.push(PressureVector {
        hop: 0,
        values: current.clone(),
    });
    for hop in 1..=max_hop {
        reach = matrix.mul_vec(&reach);
        for (p, r) in current.iter_mut().zip(&reach) {
            *p -= r;
        }
        out.push(PressureVector {
            hop,
            values: current.clone(),
        });
    }
    Ok(out)
}

/// h-hop pressure of every vertex by the recursive form.
pub fn multi_hop_pressure(
    matrix: &TransitionMatrix,
    q: &QueueDensityVector,
    hops: usize,
) -> Result<PressureVector> {
    check_dims(matrix, q)?;
    let mut current = q.values().to_vec();
    let mut reach = q.values().to_vec();
    for _ in 0..hops {
        reach = matrix.mul_vec(&reach);
        for (p, r) in current.iter_mut().zip(&reach) {
            *p -= r;
        }
    }
    Ok(PressureVector {
        hop: hops,
        values: current,
    })
}

/// h-hop pressure by the unrolled form, summing dense matrix powers applied to
/// `Q`. Slower than [`multi_hop_pressure`]; used to cross-check it.
pub fn multi_hop_pressure_unrolled(
    matrix: &TransitionMatrix,
    q: &QueueDensityVector,
    hops: usize,
) -> Result<PressureVector> {
    check_dims(matrix, q)?;
    let p = matrix.to_dense();
    let qv = nalgebra::DVector::from_column_slice(q.values());
    let mut power = nalgebra::DMatrix::identity(p.nrows(), p.ncols());
    let mut sum = nalgebra::DMatrix::zeros(p.nrows(), p.ncols());
    for _ in 0..hops {
        power = &power * &p;
        sum += &power;
    }
    let values = (&qv - sum * &qv).iter().copied().collect();
    Ok(PressureVector { hop: hops, values })
}

/// Scalar h-hop pressure of one vertex by enumerating every walk of length
/// `1..=h` out of it. Exponential in `h`; meant as an independent check.
pub fn scalar_pressure_oracle(
    graph: &ExtendedGraph,
    q: &QueueDensityVector,
    link: impl Into<Vertex>,
    hops: usize,
) -> Result<f64> {
    let start = graph.index_of(link)?;
    if q.len() != graph.n_vertices() {
        return Err(Error::DimensionMismatch {
            expected: graph.n_vertices(),
            got: q.len(),
        });
    }

    // downstream[k] accumulates Σ over walks of exactly k edges of
    // (ratio product) × Q(end vertex).
    fn walk(
        graph: &ExtendedGraph,
        q: &[f64],
        at: usize,
        weight: f64,
        depth: usize,
        max: usize,
        downstream: &mut [f64],
    ) {
        if depth == max {
            return;
        }
        for &(next, ratio) in graph.successors(at) {
            if ratio <= 0.0 {
                continue;
            }
            let w = weight * ratio;
            downstream[depth + 1] += w * q[next];
            walk(graph, q, next, w, depth + 1, max, downstream);
        }
    }

    let mut downstream = vec![0.0; hops + 1];
    walk(graph, q.values(), start, 1.0, 0, hops, &mut downstream);
    let mut p = q.values()[start];
    for term in &downstream[1..] {
        p -= term;
    }
    Ok(p)
}

/// Feeder entries of a pressure vector, in the given feeder order.
pub fn perimeter_pressures(
    matrix: &TransitionMatrix,
    pressure: &PressureVector,
    feeders: &[LinkId],
) -> Result<PerimeterPressureVector> {
    let values = feeders
        .iter()
        .map(|&f| matrix.index_of(f).map(|i| pressure.values[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok(PerimeterPressureVector {
        feeders: feeders.to_vec(),
        values,
    })
}

/// Sum of the h-step transition probabilities from `feeder` to every vertex,
/// for `h = 1..=max_hop`.
pub fn accumulative_importance(
    matrix: &TransitionMatrix,
    feeder: impl Into<Vertex>,
    max_hop: usize,
) -> Result<BTreeMap<Vertex, f64>> {
    if max_hop == 0 {
        return Err(Error::Param("max_hop must be at least 1".into()));
    }
    let start = matrix.index_of(feeder)?;
    let mut dist = vec![0.0; matrix.size()];
    dist[start] = 1.0;
    let mut total = vec![0.0; matrix.size()];
    for _ in 0..max_hop {
        dist = matrix.vec_mul(&dist);
        for (t, d) in total.iter_mut().zip(&dist) {
            *t += d;
        }
    }
    Ok(matrix
        .vertices()
        .iter()
        .copied()
        .zip(total)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::transition_matrix;
    use crate::toy::toy_network;

    fn toy_q() -> QueueDensityVector {
        QueueDensityVector::new(vec![0.2, 0.9, 0.1, 0.5, 0.7, 0.3, 1.0, 0.4, 0.0]).unwrap()
    }

    #[test]
    fn zero_hop_is_queue_density() {
        let g = toy_network();
        let p = transition_matrix(&g);
        let q = toy_q();
        assert_eq!(multi_hop_pressure(&p, &q, 0).unwrap().values, q.values());
    }

    #[test]
    fn null_traffic_has_null_pressure() {
        let g = toy_network();
        let p = transition_matrix(&g);
        let q = QueueDensityVector::zeros(9);
        for h in 0..6 {
            assert!(multi_hop_pressure(&p, &q, h)
                .unwrap()
                .values
                .iter()
                .all(|&x| x == 0.0));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = transition_matrix(&toy_network());
        let q = QueueDensityVector::zeros(4);
        assert!(matches!(
            multi_hop_pressure(&p, &q, 2),
            Err(Error::DimensionMismatch { expected: 9, got: 4 })
        ));
    }

    #[test]
    fn density_vector_validation() {
        assert!(QueueDensityVector::new(vec![0.5, 1.2, 0.0]).is_err());
        assert!(QueueDensityVector::new(vec![0.5, 0.1]).is_err());
        assert!(QueueDensityVector::new(vec![]).is_err());
    }

    #[test]
    fn toy_one_hop_by_hand() {
        let g = toy_network();
        let q = toy_q();
        // link 4 splits 0.6 / 0.4 into 5 and 6
        let expected = 0.7 - (0.6 * 0.3 + 0.4 * 1.0);
        let oracle = scalar_pressure_oracle(&g, &q, 4, 1).unwrap();
        assert!((oracle - expected).abs() < 1e-15);
        // link 0: 1 hop to 4, then 5/6, then 7, then Ω
        let p3 = 0.2 - 0.7 - (0.6 * 0.3 + 0.4 * 1.0) - 0.4;
        assert!((scalar_pressure_oracle(&g, &q, 0, 3).unwrap() - p3).abs() < 1e-12);
        assert!((scalar_pressure_oracle(&g, &q, 0, 7).unwrap() - p3).abs() < 1e-12);
    }

    #[test]
    fn oracle_at_supersink_is_zero() {
        let g = toy_network();
        for h in 0..8 {
            assert_eq!(
                scalar_pressure_oracle(&g, &toy_q(), Vertex::Supersink, h).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn all_hops_match_single_hop_calls() {
        let g = toy_network();
        let p = transition_matrix(&g);
        let q = toy_q();
        let all = multi_hop_pressures(&p, &q, 6).unwrap();
        for (h, v) in all.iter().enumerate() {
            assert_eq!(v.hop, h);
            assert_eq!(v.values, multi_hop_pressure(&p, &q, h).unwrap().values);
        }
    }

    #[test]
    fn perimeter_extraction_orders_by_feeder_list() {
        let g = toy_network();
        let p = transition_matrix(&g);
        let pv = multi_hop_pressure(&p, &toy_q(), 2).unwrap();
        let per = perimeter_pressures(&p, &pv, &[3]).unwrap();
        assert_eq!(per.values, vec![pv.values[3]]);
        let per = perimeter_pressures(&p, &pv, &g.feeders()).unwrap();
        let mut back = vec![f64::NAN; p.size()];
        per.scatter_into(&p, &mut back).unwrap();
        for f in g.feeders() {
            let i = p.index_of(f).unwrap();
            assert_eq!(back[i], pv.values[i]);
        }
        assert!(perimeter_pressures(&p, &pv, &[42]).is_err());
    }

    #[test]
    fn importance_with_one_hop_is_the_row() {
        let p = transition_matrix(&toy_network());
        let imp = accumulative_importance(&p, 4, 1).unwrap();
        assert_eq!(imp[&Vertex::Link(5)], 0.6);
        assert_eq!(imp[&Vertex::Link(6)], 0.4);
        assert_eq!(imp[&Vertex::Link(7)], 0.0);
        assert!(accumulative_importance(&p, 4, 0).is_err());
    }
}
