//! Two-stage perimeter control.
//!
//! The first stage maps macroscopic state (region density, near-term demand) to
//! a total permitted inflow `A_t` per control cycle. The second stage splits
//! `A_t` across the feeder links. All second stages conserve `A_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{downstream_set, transition_matrix, ExtendedGraph, LinkId, TransitionMatrix, Vertex};
use crate::pressure::{multi_hop_pressure, perimeter_pressures, PerimeterPressureVector, QueueDensityVector};

/// Permitted inflow per feeder for one control cycle, vehicles per cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlAction {
    pub feeders: Vec<LinkId>,
    pub inflow: Vec<f64>,
}

impl ControlAction {
    pub fn total(&self) -> f64 {
        self.inflow.iter().sum()
    }

    pub fn equal_split(total: f64, feeders: &[LinkId]) -> ControlAction {
        ControlAction {
            feeders: feeders.to_vec(),
            inflow: vec![total / feeders.len() as f64; feeders.len()],
        }
    }
}

fn check_total(total: f64, n: usize) -> Result<()> {
    if !(total >= 0.0) || !total.is_finite() {
        return Err(Error::Param(format!("total inflow {total} must be finite and non-negative")));
    }
    if n == 0 {
        return Err(Error::Param("no feeders to redistribute over".into()));
    }
    Ok(())
}

/// `a_f = A_t · exp(s p_f) / Σ exp(s p_f')`, evaluated with the maximum
/// subtracted. `sensitivity == 0` is the equal split.
pub fn softmax_redistribute(
    total: f64,
    pressures: &PerimeterPressureVector,
    sensitivity: f64,
) -> Result<ControlAction> {
    let n = pressures.values.len();
    check_total(total, n)?;
    if !(sensitivity >= 0.0) || !sensitivity.is_finite() {
        return Err(Error::Param(format!("sensitivity {sensitivity} must be finite and non-negative")));
    }
    if sensitivity == 0.0 {
        return Ok(ControlAction::equal_split(total, &pressures.feeders));
    }
    let max = pressures
        .values
        .iter()
        .map(|&p| sensitivity * p)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = pressures
        .values
        .iter()
        .map(|&p| (sensitivity * p - max).exp())
        .collect();
    let norm: f64 = weights.iter().sum();
    Ok(ControlAction {
        feeders: pressures.feeders.clone(),
        inflow: weights.iter().map(|w| total * w / norm).collect(),
    })
}

/// Clustered N-MP style split. Below the critical region density the inflow is
/// split equally; above it each feeder is weighted by how far its downstream
/// cluster sits below the critical density, floored at `epsilon`.
pub fn nmp_redistribute(
    total: f64,
    feeders: &[LinkId],
    cluster_densities: &[f64],
    region_density: f64,
    critical_density: f64,
    epsilon: f64,
) -> Result<ControlAction> {
    check_total(total, feeders.len())?;
    if cluster_densities.len() != feeders.len() {
        return Err(Error::DimensionMismatch {
            expected: feeders.len(),
            got: cluster_densities.len(),
        });
    }
    if !(epsilon > 0.0) {
        return Err(Error::Param("epsilon must be positive".into()));
    }
    if region_density <= critical_density {
        return Ok(ControlAction::equal_split(total, feeders));
    }
    let weights: Vec<f64> = cluster_densities
        .iter()
        .map(|&d| (critical_density - d).max(epsilon))
        .collect();
    let norm: f64 = weights.iter().sum();
    Ok(ControlAction {
        feeders: feeders.to_vec(),
        inflow: weights.iter().map(|w| total * w / norm).collect(),
    })
}

/// Macroscopic state seen by the first stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacroState {
    /// Vehicles in the protected region over its storage capacity.
    pub region_density: f64,
    /// Vehicles expected to depart during the next control cycle.
    pub future_demand: f64,
}

/// First-stage controller producing the total permitted inflow.
pub trait HomogeneousPolicy: Send {
    fn total_inflow(&mut self, state: &MacroState) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateParams {
    pub a_min: f64,
    pub a_max: f64,
    /// Normalized region density above which inflow is cut.
    pub n_target: f64,
    /// Vehicles per cycle removed per unit of density above target.
    pub k_d: f64,
    /// Vehicles per cycle removed per vehicle of near-term demand.
    pub k_q: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            a_min: 24.0,
            a_max: 200.0,
            n_target: 0.08,
            k_d: 3000.0,
            k_q: 0.0,
        }
    }
}

impl SurrogateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_min >= 0.0) || !(self.a_min <= self.a_max) {
            return Err(Error::Param(format!(
                "need 0 <= a_min <= a_max, got a_min={} a_max={}",
                self.a_min, self.a_max
            )));
        }
        if self.k_d < 0.0 || self.k_q < 0.0 {
            return Err(Error::Param("gains must be non-negative".into()));
        }
        Ok(())
    }
}

/// `clamp(A_max − k_d·max(0, density − n_target) − k_q·future_demand, A_min, A_max)`
pub fn surrogate_homogeneous(density: f64, future_demand: f64, params: &SurrogateParams) -> Result<f64> {
    params.validate()?;
    if !(density >= 0.0) {
        return Err(Error::Param(format!("density {density} must be non-negative")));
    }
    let raw = params.a_max
        - params.k_d * (density - params.n_target).max(0.0)
        - params.k_q * future_demand.max(0.0);
    Ok(raw.clamp(params.a_min, params.a_max))
}

/// Static surrogate of a learned gating policy: inflow falls linearly with
/// density above target and with near-term demand.
#[derive(Clone, Debug)]
pub struct LinearSurrogate {
    params: SurrogateParams,
}

impl LinearSurrogate {
    pub fn new(params: SurrogateParams) -> Result<Self> {
        params.validate()?;
        Ok(LinearSurrogate { params })
    }
}

impl HomogeneousPolicy for LinearSurrogate {
    fn total_inflow(&mut self, state: &MacroState) -> f64 {
        let raw = self.params.a_max
            - self.params.k_d * (state.region_density - self.params.n_target).max(0.0)
            - self.params.k_q * state.future_demand.max(0.0);
        raw.clamp(self.params.a_min, self.params.a_max)
    }
}

/// Proportional-integral gating on region density.
#[derive(Clone, Debug)]
pub struct PiSurrogate {
    params: SurrogateParams,
    k_p: f64,
    k_i: f64,
    base: f64,
    previous_density: Option<f64>,
}

impl PiSurrogate {
    pub fn new(params: SurrogateParams, k_p: f64, k_i: f64) -> Result<Self> {
        params.validate()?;
        if k_p < 0.0 || k_i < 0.0 {
            return Err(Error::Param("PI gains must be non-negative".into()));
        }
        Ok(PiSurrogate {
            params,
            k_p,
            k_i,
            base: params.a_max,
            previous_density: None,
        })
    }
}

impl HomogeneousPolicy for PiSurrogate {
    fn total_inflow(&mut self, state: &MacroState) -> f64 {
        let n = state.region_density;
        let prev = self.previous_density.unwrap_or(n);
        self.base = (self.base - self.k_p * (n - prev) + self.k_i * (self.params.n_target - n))
            .clamp(self.params.a_min, self.params.a_max);
        self.previous_density = Some(n);
        (self.base - self.params.k_q * state.future_demand.max(0.0))
            .clamp(self.params.a_min, self.params.a_max)
    }
}

/// Second-stage redistribution scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Redistribution {
    Equal,
    Softmax {
        hop: usize,
        sensitivity: f64,
    },
    Nmp {
        hop: usize,
        critical_density: f64,
        epsilon: f64,
    },
}

/// What the simulator hands the controller once per control cycle.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub time_s: f64,
    pub cycle: usize,
    pub macro_state: MacroState,
    pub queue_density: &'a QueueDensityVector,
}

pub trait PerimeterController: Send {
    /// Feeder links this controller meters, in action order.
    fn feeders(&self) -> &[LinkId];

    /// Vertex order the controller expects queue densities in.
    fn vertex_order(&self) -> &[Vertex];

    fn act(&mut self, obs: &Observation<'_>) -> Result<ControlAction>;
}

pub struct TwoStageController {
    homogeneous: Box<dyn HomogeneousPolicy>,
    redistribution: Redistribution,
    matrix: TransitionMatrix,
    feeders: Vec<LinkId>,
    /// Row indices of each feeder's downstream cluster, for N-MP.
    clusters: Vec<Vec<usize>>,
    last_total: f64,
}

impl TwoStageController {
    pub fn new(
        homogeneous: Box<dyn HomogeneousPolicy>,
        redistribution: Redistribution,
        graph: &ExtendedGraph,
        feeders: Vec<LinkId>,
    ) -> Result<Self> {
        for &f in &feeders {
            graph.index_of(f)?;
        }
        let clusters = match redistribution {
            Redistribution::Nmp { hop, .. } => feeders
                .iter()
                .map(|&f| downstream_cluster(graph, f, hop))
                .collect::<Result<_>>()?,
            _ => Vec::new(),
        };
        if let Redistribution::Softmax { sensitivity, .. } = redistribution {
            if !(sensitivity >= 0.0) {
                return Err(Error::Param("sensitivity must be non-negative".into()));
            }
        }
        Ok(TwoStageController {
            homogeneous,
            redistribution,
            matrix: transition_matrix(graph),
            feeders,
            clusters,
            last_total: 0.0,
        })
    }

    pub fn redistribution(&self) -> Redistribution {
        self.redistribution
    }

    pub fn last_total(&self) -> f64 {
        self.last_total
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }
}

/// Union of `N(f, 1..=hop)` without the supersink; `{f}` when `hop == 0`.
pub fn downstream_cluster(graph: &ExtendedGraph, feeder: LinkId, hop: usize) -> Result<Vec<usize>> {
    if hop == 0 {
        return Ok(vec![graph.index_of(feeder)?]);
    }
    let mut members = std::collections::BTreeSet::new();
    for h in 1..=hop {
        for v in downstream_set(graph, feeder, h)? {
            if v != Vertex::Supersink {
                members.insert(graph.index_of(v)?);
            }
        }
    }
    Ok(members.into_iter().collect())
}

pub fn two_stage_controller(
    homogeneous: Box<dyn HomogeneousPolicy>,
    redistribution: Redistribution,
    graph: &ExtendedGraph,
    feeders: Vec<LinkId>,
) -> Result<TwoStageController> {
    TwoStageController::new(homogeneous, redistribution, graph, feeders)
}

impl PerimeterController for TwoStageController {
    fn feeders(&self) -> &[LinkId] {
        &self.feeders
    }

    fn vertex_order(&self) -> &[Vertex] {
        self.matrix.vertices()
    }

    fn act(&mut self, obs: &Observation<'_>) -> Result<ControlAction> {
        let total = self.homogeneous.total_inflow(&obs.macro_state);
        self.last_total = total;
        match self.redistribution {
            Redistribution::Equal => Ok(ControlAction::equal_split(total, &self.feeders)),
            Redistribution::Softmax { hop, sensitivity } => {
                let p = multi_hop_pressure(&self.matrix, obs.queue_density, hop)?;
                let per = perimeter_pressures(&self.matrix, &p, &self.feeders)?;
                softmax_redistribute(total, &per, sensitivity)
            }
            Redistribution::Nmp {
                critical_density,
                epsilon,
                ..
            } => {
                let q = obs.queue_density.values();
                let cluster: Vec<f64> = self
                    .clusters
                    .iter()
                    .map(|c| c.iter().map(|&i| q[i]).sum::<f64>() / c.len().max(1) as f64)
                    .collect();
                nmp_redistribute(
                    total,
                    &self.feeders,
                    &cluster,
                    obs.macro_state.region_density,
                    critical_density,
                    epsilon,
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::toy_network;

    fn per(values: &[f64]) -> PerimeterPressureVector {
        PerimeterPressureVector {
            feeders: (0..values.len() as LinkId).collect(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn zero_sensitivity_is_equal_split() {
        let a = softmax_redistribute(10.0, &per(&[0.3, -2.0, 1.0, 0.0]), 0.0).unwrap();
        assert_eq!(a.inflow, vec![2.5; 4]);
    }

    #[test]
    fn equal_pressures_split_equally() {
        for s in [0.5, 8.0, 128.0] {
            let a = softmax_redistribute(7.0, &per(&[-3.2, -3.2]), s).unwrap();
            assert_eq!(a.inflow, vec![3.5, 3.5]);
        }
    }

    #[test]
    fn softmax_hand_case() {
        let a = softmax_redistribute(4.0, &per(&[1.0, 0.0]), 3f64.ln()).unwrap();
        assert!((a.inflow[0] - 3.0).abs() < 1e-9);
        assert!((a.inflow[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_survives_large_exponents() {
        let a = softmax_redistribute(48.0, &per(&[1.0, -22.0, 0.5]), 128.0).unwrap();
        assert!(a.inflow.iter().all(|x| x.is_finite()));
        assert!((a.total() - 48.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_rejects_negative_sensitivity() {
        assert!(softmax_redistribute(4.0, &per(&[1.0]), -1.0).is_err());
        assert!(softmax_redistribute(-4.0, &per(&[1.0]), 1.0).is_err());
    }

    #[test]
    fn nmp_below_critical_is_equal() {
        let a = nmp_redistribute(10.0, &[0, 1], &[0.9, 0.1], 0.3, 0.5, 0.01).unwrap();
        assert_eq!(a.inflow, vec![5.0, 5.0]);
    }

    #[test]
    fn nmp_equal_clusters_above_critical() {
        let a = nmp_redistribute(9.0, &[0, 1, 2], &[0.7; 3], 0.8, 0.5, 0.01).unwrap();
        assert_eq!(a.inflow, vec![3.0; 3]);
    }

    #[test]
    fn nmp_hand_case() {
        let a = nmp_redistribute(10.0, &[0, 1], &[0.9, 0.1], 0.8, 0.5, 0.01).unwrap();
        assert!((a.inflow[0] - 10.0 * 0.01 / 0.41).abs() < 1e-12);
        assert!((a.inflow[1] - 10.0 * 0.4 / 0.41).abs() < 1e-12);
        assert!((a.inflow[0] - 0.244).abs() < 1e-3);
        assert!((a.inflow[1] - 9.756).abs() < 1e-3);
    }

    #[test]
    fn surrogate_extremes() {
        let p = SurrogateParams::default();
        assert_eq!(surrogate_homogeneous(0.0, 0.0, &p).unwrap(), p.a_max);
        assert_eq!(surrogate_homogeneous(50.0, 0.0, &p).unwrap(), p.a_min);
        let bad = SurrogateParams {
            a_min: 10.0,
            a_max: 5.0,
            ..p
        };
        assert!(matches!(surrogate_homogeneous(0.0, 0.0, &bad), Err(Error::Param(_))));
    }

    #[test]
    fn surrogate_is_monotone_on_a_grid() {
        let p = SurrogateParams {
            k_q: 0.05,
            ..SurrogateParams::default()
        };
        let densities: Vec<f64> = (0..=40).map(|i| i as f64 * 0.025).collect();
        let demands: Vec<f64> = (0..=20).map(|i| i as f64 * 25.0).collect();
        for &q in &demands {
            for w in densities.windows(2) {
                let a1 = surrogate_homogeneous(w[0], q, &p).unwrap();
                let a2 = surrogate_homogeneous(w[1], q, &p).unwrap();
                assert!(a1 >= a2);
            }
        }
        for &d in &densities {
            for w in demands.windows(2) {
                assert!(surrogate_homogeneous(d, w[0], &p).unwrap() >= surrogate_homogeneous(d, w[1], &p).unwrap());
            }
        }
    }

    #[test]
    fn pi_surrogate_reacts_to_density() {
        let p = SurrogateParams::default();
        let mut pi = PiSurrogate::new(p, 100.0, 20.0).unwrap();
        let low = pi.total_inflow(&MacroState { region_density: 0.05, future_demand: 0.0 });
        assert_eq!(low, p.a_max);
        let mut last = low;
        for _ in 0..100 {
            let a = pi.total_inflow(&MacroState { region_density: 0.6, future_demand: 0.0 });
            assert!(a <= last);
            last = a;
        }
        assert_eq!(last, p.a_min);
    }

    #[test]
    fn toy_clusters() {
        let g = toy_network();
        let idx = |v: u32| g.index_of(v).unwrap();
        assert_eq!(downstream_cluster(&g, 0, 0).unwrap(), vec![idx(0)]);
        assert_eq!(downstream_cluster(&g, 0, 2).unwrap(), vec![idx(4), idx(5), idx(6)]);
        assert_eq!(
            downstream_cluster(&g, 0, 9).unwrap(),
            vec![idx(4), idx(5), idx(6), idx(7)]
        );
    }

    #[test]
    fn two_stage_equal_is_homogeneous() {
        let g = toy_network();
        let p = SurrogateParams::default();
        let mut c = two_stage_controller(
            Box::new(LinearSurrogate::new(p).unwrap()),
            Redistribution::Equal,
            &g,
            g.feeders(),
        )
        .unwrap();
        let q = QueueDensityVector::zeros(9);
        let a = c
            .act(&Observation {
                time_s: 0.0,
                cycle: 0,
                macro_state: MacroState { region_density: 0.0, future_demand: 0.0 },
                queue_density: &q,
            })
            .unwrap();
        assert_eq!(a.inflow, vec![p.a_max / 3.0; 3]);
    }

    #[test]
    fn two_stage_softmax_prefers_uncongested_downstream() {
        let g = toy_network();
        let mut c = two_stage_controller(
            Box::new(LinearSurrogate::new(SurrogateParams::default()).unwrap()),
            Redistribution::Softmax { hop: 2, sensitivity: 8.0 },
            &g,
            g.feeders(),
        )
        .unwrap();
        // link 5 jammed: feeder 3 feeds it half its flow, feeder 0 via 4
        let q = QueueDensityVector::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let a = c
            .act(&Observation {
                time_s: 0.0,
                cycle: 0,
                macro_state: MacroState { region_density: 0.0, future_demand: 0.0 },
                queue_density: &q,
            })
            .unwrap();
        // feeder order [0, 1, 3]; 2-hop pressures -0.6, -0.18, -0.5
        assert!(a.inflow[1] > a.inflow[2]);
        assert!(a.inflow[2] > a.inflow[0]);
        assert!((a.total() - SurrogateParams::default().a_max).abs() < 1e-9);
    }
}
