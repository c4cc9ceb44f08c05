use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LinkId;
use crate::network::{RoadNetwork, Turn};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub duration_s: f64,
    /// Permitted `(from, to)` movements.
    pub movements: Vec<(LinkId, LinkId)>,
}

/// Fixed-time plan of one intersection. Every phase is followed by an all-red
/// interphase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalPlan {
    pub intersection: usize,
    pub phases: Vec<Phase>,
    pub interphase_s: f64,
    pub offset_s: f64,
}

impl SignalPlan {
    pub fn cycle_s(&self) -> f64 {
        self.phases.iter().map(|p| p.duration_s).sum::<f64>()
            + self.phases.len() as f64 * self.interphase_s
    }

    /// Green windows `(start, end)` within the cycle for every movement.
    pub fn windows(&self) -> Vec<((LinkId, LinkId), (f64, f64))> {
        let mut out = Vec::new();
        let mut start = 0.0;
        for phase in &self.phases {
            for &m in &phase.movements {
                out.push((m, (start, start + phase.duration_s)));
            }
            start += phase.duration_s + self.interphase_s;
        }
        out
    }
}

/// Phase durations of the grid plan: NS protected left, NS through and right,
/// EW through and right, EW protected left.
pub const GRID_PHASES_S: [f64; 4] = [10.0, 30.0, 30.0, 10.0];
pub const GRID_INTERPHASE_S: f64 = 4.0;

/// Same four-phase plan at every intersection of a grid network.
pub fn grid_signal_plans(network: &RoadNetwork) -> Result<Vec<SignalPlan>> {
    grid_signal_plans_with(network, GRID_PHASES_S, GRID_INTERPHASE_S)
}

pub fn grid_signal_plans_with(
    network: &RoadNetwork,
    durations: [f64; 4],
    interphase_s: f64,
) -> Result<Vec<SignalPlan>> {
    if durations.iter().any(|d| !(*d > 0.0)) || !(interphase_s >= 0.0) {
        return Err(Error::Param("phase durations must be positive".into()));
    }
    let mut plans: Vec<SignalPlan> = (0..network.intersections.len())
        .map(|i| SignalPlan {
            intersection: i,
            phases: durations
                .iter()
                .map(|&d| Phase {
                    duration_s: d,
                    movements: Vec::new(),
                })
                .collect(),
            interphase_s,
            offset_s: 0.0,
        })
        .collect();
    for m in &network.movements {
        let (Some(node), Some(heading)) = (m.intersection, m.approach) else {
            continue;
        };
        let phase = match (heading.is_north_south(), m.turn) {
            (true, Turn::Left) => 0,
            (true, _) => 1,
            (false, Turn::Left) => 3,
            (false, _) => 2,
        };
        plans[node].phases[phase].movements.push((m.from, m.to));
    }
    Ok(plans)
}
