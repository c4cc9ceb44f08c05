use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::SurrogateParams;
use crate::demand::DemandParams;
use crate::error::{Error, Result};
use crate::network::GridParams;
use crate::sim::SimConfig;

use super::runner::ControllerSpec;

/// Fraction of the nominal 6000/11000 trips fed to the 6×6 grid. The point
/// queue model saturates earlier than a microscopic simulator, and this level
/// puts the uncontrolled network at the edge of gridlock.
pub const FULL_DEMAND_FACTOR: f64 = 0.7;

/// Same calibration for the 4×4 desk grid.
pub const DESK_DEMAND_FACTOR: f64 = 0.5;

/// Feeder count the default surrogate gains are expressed for.
pub const REFERENCE_FEEDERS: f64 = 24.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 4×4 grid, three seeds, lighter demand.
    Desk,
    #[default]
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub sensitivities: Vec<f64>,
    pub hops: Vec<usize>,
    pub tau_hours: f64,
    pub alpha_upper: f64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            sensitivities: (0..8).map(|k| 2f64.powi(k)).collect(),
            hops: (0..=22).step_by(2).collect(),
            tau_hours: 0.75,
            alpha_upper: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeterogeneityGrid {
    pub tau_hours: Vec<f64>,
    pub alpha_upper: Vec<f64>,
    /// Seeds per cell; `None` uses the scale default.
    pub seeds: Option<Vec<u64>>,
}

impl Default for HeterogeneityGrid {
    fn default() -> Self {
        HeterogeneityGrid {
            tau_hours: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            alpha_upper: (0..7).map(|k| 0.5 + 0.05 * k as f64).collect(),
            seeds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessGrid {
    pub alphas: Vec<f64>,
    pub reps: usize,
    pub m: f64,
    /// Demand and simulation seed shared by every draw.
    pub seed: u64,
    /// Perturbation seeds are `seed_base + rep`.
    pub seed_base: u64,
}

impl Default for RobustnessGrid {
    fn default() -> Self {
        RobustnessGrid {
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            reps: 20,
            m: 100.0,
            seed: 1,
            seed_base: 1000,
        }
    }
}

/// Experiment configuration, read from TOML or JSON. Every field is optional;
/// unset values fall back to the chosen scale's defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scale: Scale,
    pub output_dir: PathBuf,
    pub grid: Option<GridParams>,
    pub demand: DemandParams,
    pub demand_factor: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub sim: SimConfig,
    pub surrogate: Option<SurrogateParams>,
    /// Controller used by `run`, the heterogeneity sweep and robustness runs.
    pub controller: ControllerSpec,
    /// Myopic baseline reported next to the main controller.
    pub myopic_hop: usize,
    pub nmp: NmpParams,
    pub sweep: SweepGrid,
    pub heterogeneity: HeterogeneityGrid,
    pub robustness: RobustnessGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmpParams {
    pub hop: usize,
    pub critical_density: f64,
    pub epsilon: f64,
}

impl Default for NmpParams {
    fn default() -> Self {
        NmpParams {
            hop: 8,
            critical_density: 0.1,
            epsilon: 0.01,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scale: Scale::Full,
            output_dir: PathBuf::from("results"),
            grid: None,
            demand: DemandParams::default(),
            demand_factor: None,
            seeds: None,
            sim: SimConfig::default(),
            surrogate: None,
            controller: ControllerSpec::Softmax {
                hop: 8,
                sensitivity: 8.0,
            },
            myopic_hop: 2,
            nmp: NmpParams::default(),
            sweep: SweepGrid::default(),
            heterogeneity: HeterogeneityGrid::default(),
            robustness: RobustnessGrid::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_scale(scale: Scale) -> Self {
        ExperimentConfig {
            scale,
            ..ExperimentConfig::default()
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(serde_json::from_str(&text)?),
            _ => Ok(toml::from_str(&text)?),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn grid(&self) -> GridParams {
        self.grid.unwrap_or(match self.scale {
            Scale::Full => GridParams::default(),
            Scale::Desk => GridParams {
                rows: 4,
                cols: 4,
                ..GridParams::default()
            },
        })
    }

    /// Multiplier on the nominal trip counts.
    pub fn demand_factor(&self) -> f64 {
        self.demand_factor.unwrap_or(match self.scale {
            Scale::Full => FULL_DEMAND_FACTOR,
            Scale::Desk => DESK_DEMAND_FACTOR,
        })
    }

    pub fn demand_params(&self) -> DemandParams {
        self.demand_at(self.demand.tau_hours, self.demand.alpha_upper)
    }

    pub fn demand_at(&self, tau_hours: f64, alpha_upper: f64) -> DemandParams {
        let f = self.demand_factor();
        DemandParams {
            n12: self.demand.n12 * f,
            n22: self.demand.n22 * f,
            tau_hours,
            alpha_upper,
            ..self.demand
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| match self.scale {
            Scale::Full => (1..=10).collect(),
            Scale::Desk => (1..=3).collect(),
        })
    }

    pub fn heterogeneity_seeds(&self) -> Vec<u64> {
        self.heterogeneity.seeds.clone().unwrap_or_else(|| match self.scale {
            Scale::Full => (1..=5).collect(),
            Scale::Desk => (1..=3).collect(),
        })
    }

    /// Surrogate gains; the defaults are stated for 24 feeders and scaled by
    /// the grid's feeder count.
    pub fn surrogate(&self) -> SurrogateParams {
        self.surrogate.unwrap_or_else(|| {
            let g = self.grid();
            scaled_surrogate(2.0 * (g.rows + g.cols) as f64)
        })
    }

    pub fn nmp_controller(&self) -> ControllerSpec {
        ControllerSpec::Nmp {
            hop: self.nmp.hop,
            critical_density: self.nmp.critical_density,
            epsilon: self.nmp.epsilon,
        }
    }

    pub fn myopic_controller(&self) -> ControllerSpec {
        let sensitivity = self.controller.sensitivity().unwrap_or(8.0);
        ControllerSpec::Softmax {
            hop: self.myopic_hop,
            sensitivity,
        }
    }
}

/// Default surrogate for a grid with `feeders` metered links.
pub fn scaled_surrogate(feeders: f64) -> SurrogateParams {
    let k = feeders / REFERENCE_FEEDERS;
    let base = SurrogateParams::default();
    SurrogateParams {
        a_min: base.a_min * k,
        a_max: base.a_max * k,
        k_d: base.k_d * k,
        ..base
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_the_parameter_table() {
        let c = ExperimentConfig::default();
        assert_eq!(c.sweep.sensitivities.len(), 8);
        assert_eq!(c.sweep.sensitivities[7], 128.0);
        assert_eq!(c.sweep.hops, vec![0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22]);
        assert_eq!(c.heterogeneity.tau_hours.len() * c.heterogeneity.alpha_upper.len(), 35);
        assert!((c.heterogeneity.alpha_upper[6] - 0.8).abs() < 1e-12);
        assert_eq!(c.seeds().len(), 10);
        assert_eq!(c.robustness.reps, 20);
    }

    #[test]
    fn desk_scale_shrinks_everything() {
        let c = ExperimentConfig::for_scale(Scale::Desk);
        assert_eq!(c.grid().rows, 4);
        assert_eq!(c.seeds(), vec![1, 2, 3]);
        assert_eq!(c.demand_factor(), DESK_DEMAND_FACTOR);
        let s = c.surrogate();
        assert!((s.a_max - SurrogateParams::default().a_max * 16.0 / 24.0).abs() < 1e-9);
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: ExperimentConfig = toml::from_str("scale = \"desk\"\nseeds = [4]\n").unwrap();
        assert_eq!(partial.seeds(), vec![4]);
        assert!(toml::from_str::<ExperimentConfig>("sensitivity = 3").is_err());
    }
}
