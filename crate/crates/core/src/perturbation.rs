//! Turning-ratio perturbation for robustness runs.
//!
//! Each link's outgoing ratio vector `T_i` is replaced by a draw from
//! `Dir(M(1 − α) T_i + M α 1)`. The mean of that Dirichlet is
//! `((1 − α) T_i + α) / (1 − α + α d_i)`, so `α = 1` centers every row on
//! equal ratios while `α = 0` keeps the original mean with variance set by `M`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ExtendedGraph;

/// Smallest Dirichlet concentration; zero ratios at `α = 0` would otherwise
/// give a degenerate Gamma shape.
pub const MIN_CONCENTRATION: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// Degree of perturbation in `[0, 1]`.
    pub alpha: f64,
    /// Inverse temperature; larger means tighter around the mean.
    pub m: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(alpha: f64, seed: u64) -> Self {
        PerturbationSpec { alpha, m: 100.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Param(format!("perturbation alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.m > 0.0) || !self.m.is_finite() {
            return Err(Error::Param(format!("inverse temperature M={} must be positive", self.m)));
        }
        Ok(())
    }
}

/// Normalized independent `Gamma(c_k, 1)` draws.
pub fn sample_dirichlet<R: rand::Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut draws = Vec::with_capacity(concentration.len());
    for &c in concentration {
        let gamma = Gamma::new(c, 1.0).map_err(|e| Error::Param(format!("gamma shape {c}: {e}")))?;
        draws.push(gamma.sample(rng));
    }
    let sum: f64 = draws.iter().sum();
    if !(sum > 0.0) {
        // every shape so small that all draws underflowed; fall back to the
        // largest concentration
        let (k, _) = concentration
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &c)| if c > acc.1 { (k, c) } else { acc });
        let mut out = vec![0.0; concentration.len()];
        out[k] = 1.0;
        return Ok(out);
    }
    Ok(draws.into_iter().map(|g| g / sum).collect())
}

/// Dirichlet concentration for one ratio row.
pub fn concentration(ratios: &[f64], alpha: f64, m: f64) -> Vec<f64> {
    ratios
        .iter()
        .map(|&t| (m * (1.0 - alpha) * t + m * alpha).max(MIN_CONCENTRATION))
        .collect()
}

/// One perturbed ratio row. Rows with a single movement stay at exactly 1.
pub fn perturb_row<R: rand::Rng + ?Sized>(
    ratios: &[f64],
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if ratios.len() <= 1 {
        return Ok(vec![1.0; ratios.len()]);
    }
    sample_dirichlet(&concentration(ratios, spec.alpha, spec.m), rng)
}

/// Samples a new ratio for every non-exit link, rows drawn in link order from a
/// single generator seeded by `spec.seed`.
pub fn perturb_turning_ratios(graph: &ExtendedGraph, spec: &PerturbationSpec) -> Result<ExtendedGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    graph.reweighted(|_, succ| {
        let ratios: Vec<f64> = succ.iter().map(|&(_, r)| r).collect();
        perturb_row(&ratios, spec, &mut rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{LinkKind, Vertex};
    use crate::toy::toy_network;

    #[test]
    fn single_movement_rows_stay_at_one() {
        let g = toy_network();
        let out = perturb_turning_ratios(&g, &PerturbationSpec::new(1.0, 5)).unwrap();
        assert_eq!(out.turning_ratio(0, 4).unwrap(), 1.0);
        assert_eq!(out.turning_ratio(5, 7).unwrap(), 1.0);
        assert_eq!(out.turning_ratio(7, Vertex::Supersink).unwrap(), 1.0);
    }

    #[test]
    fn rows_stay_on_the_simplex() {
        let g = toy_network();
        for seed in 0..50 {
            let out = perturb_turning_ratios(&g, &PerturbationSpec::new(0.3, seed)).unwrap();
            for (i, link) in out.links().iter().enumerate() {
                let row = out.successors(i);
                assert!(row.iter().all(|&(_, r)| r >= 0.0));
                let s: f64 = row.iter().map(|&(_, r)| r).sum();
                assert!((s - 1.0).abs() < 1e-9, "{link:?}");
                if link.kind == LinkKind::Exit {
                    assert_eq!(row, &[(out.supersink_index(), 1.0)]);
                }
            }
        }
    }

    #[test]
    fn rejects_out_of_range_alpha() {
        let g = toy_network();
        assert!(matches!(
            perturb_turning_ratios(&g, &PerturbationSpec::new(1.5, 0)),
            Err(Error::Param(_))
        ));
        let spec = PerturbationSpec { alpha: 0.5, m: 0.0, seed: 0 };
        assert!(perturb_turning_ratios(&g, &spec).is_err());
    }

    #[test]
    fn same_seed_same_draws() {
        let g = toy_network();
        let a = perturb_turning_ratios(&g, &PerturbationSpec::new(0.5, 9)).unwrap();
        let b = perturb_turning_ratios(&g, &PerturbationSpec::new(0.5, 9)).unwrap();
        let c = perturb_turning_ratios(&g, &PerturbationSpec::new(0.5, 10)).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn zero_alpha_still_varies() {
        let spec = PerturbationSpec::new(0.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<f64> = (0..500)
            .map(|_| perturb_row(&[0.7, 0.3], &spec, &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!(var > 0.0);
        // Beta(70, 30) variance = 0.7·0.3/101
        assert!((var - 0.21 / 101.0).abs() < 0.001);
    }

    #[test]
    fn zero_ratios_get_floored_concentration() {
        let c = concentration(&[1.0, 0.0], 0.0, 100.0);
        assert_eq!(c, vec![100.0, MIN_CONCENTRATION]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let row = perturb_row(&[1.0, 0.0], &PerturbationSpec::new(0.0, 4), &mut rng).unwrap();
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row[0] > 0.99);
    }
}
