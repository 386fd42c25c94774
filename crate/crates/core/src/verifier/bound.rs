use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{kinetic_multiplier, MassVector};
use crate::lattice::WaveState;

/// Smallest ensemble accepted by the estimator.
pub const MIN_ENSEMBLE: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConfig {
    pub alpha_max: f64,
    pub alpha_step: f64,
    /// `α*` is the smallest grid `α` with `C(α)` at or below this.
    pub ceiling: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            alpha_max: 1.5,
            alpha_step: 0.01,
            ceiling: 1.0,
        }
    }
}

/// `(‖Tψ_k‖, ‖ψ_k‖, ‖fψ_k‖)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSample {
    pub t_norm: f64,
    pub norm: f64,
    pub f_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEstimate {
    pub target: String,
    pub samples: Vec<BoundSample>,
    pub alphas: Vec<f64>,
    pub c_alpha: Vec<f64>,
    pub ceiling: f64,
    pub alpha_star: Option<f64>,
    pub c_at_alpha_star: Option<f64>,
    /// `α* < 1` was found.
    pub consistent: bool,
    pub verdict: &'static str,
    /// The ensemble only sees finitely many states, so `α*` is a lower bound
    /// on the true relative bound: a necessary condition, not a proof.
    pub note: &'static str,
}

impl BoundEstimate {
    pub fn is_monotone(&self) -> bool {
        self.c_alpha.windows(2).all(|w| w[1] <= w[0])
    }
}

const NOTE: &str = "necessary-condition estimate: the ensemble sup bounds the true relative bound from below";

/// Trade-off curve `C(α) = max_k (c_k − α a_k)/b_k`, clamped at zero, from
/// precomputed samples.
pub fn kato_rellich_from_samples(
    target: &str,
    samples: Vec<BoundSample>,
    cfg: &BoundConfig,
) -> Result<BoundEstimate> {
    if samples.len() < MIN_ENSEMBLE {
        return Err(Error::DegenerateEnsemble(format!(
            "{} members, need at least {MIN_ENSEMBLE}",
            samples.len()
        )));
    }
    if !(cfg.alpha_step > 0.0 && cfg.alpha_max >= 0.0 && cfg.ceiling >= 0.0) {
        return Err(Error::InvalidPlan(format!("invalid bound configuration {cfg:?}")));
    }
    if let Some(s) = samples
        .iter()
        .find(|s| !(s.t_norm.is_finite() && s.norm.is_finite() && s.f_norm.is_finite()))
    {
        return Err(Error::DegenerateEnsemble(format!("non-finite sample {s:?}")));
    }
    let b_max = samples.iter().map(|s| s.norm).fold(0.0, f64::max);
    if !(b_max > 0.0) {
        return Err(Error::DegenerateEnsemble("every member has zero norm".into()));
    }
    let floor = 1e-12 * b_max;
    let usable: Vec<&BoundSample> = samples.iter().filter(|s| s.norm > floor).collect();

    let n_alpha = (cfg.alpha_max / cfg.alpha_step + 1e-9).floor() as usize + 1;
    let alphas: Vec<f64> = (0..n_alpha).map(|k| k as f64 * cfg.alpha_step).collect();
    let c_alpha: Vec<f64> = alphas
        .iter()
        .map(|&a| {
            usable
                .iter()
                .map(|s| (s.f_norm - a * s.t_norm) / s.norm)
                .fold(0.0, f64::max)
        })
        .collect();
    let star = c_alpha.iter().position(|c| *c <= cfg.ceiling);
    let alpha_star = star.map(|k| alphas[k]);
    let consistent = alpha_star.is_some_and(|a| a < 1.0);
    Ok(BoundEstimate {
        target: target.to_string(),
        samples,
        c_at_alpha_star: star.map(|k| c_alpha[k]),
        alphas,
        c_alpha,
        ceiling: cfg.ceiling,
        alpha_star,
        consistent,
        verdict: if consistent {
            "consistent with relative bound < 1"
        } else {
            "not consistent with relative bound < 1"
        },
        note: NOTE,
    })
}

/// Samples `‖Tψ‖`, `‖ψ‖` and `‖fψ‖` over the ensemble and builds the curve.
pub fn kato_rellich_estimate(
    target: &str,
    f_field: &[f64],
    masses: &MassVector,
    ensemble: &[WaveState],
    cfg: &BoundConfig,
) -> Result<BoundEstimate> {
    let Some(first) = ensemble.first() else {
        return Err(Error::DegenerateEnsemble("empty ensemble".into()));
    };
    let lat = first.lattice().clone();
    if f_field.len() != lat.len() {
        return Err(Error::InvalidPotential(format!(
            "field has {} values, lattice has {}",
            f_field.len(),
            lat.len()
        )));
    }
    let t = kinetic_multiplier(&lat, masses);
    let w = lat.weight();
    let samples = ensemble
        .par_iter()
        .map(|psi| {
            first.same_lattice(psi)?;
            let hat = psi.to_momentum()?;
            let t_norm = (w * hat
                .amplitudes()
                .iter()
                .zip(&t)
                .map(|(z, k)| k * k * z.norm_sqr())
                .sum::<f64>())
            .sqrt();
            let f_norm = (w * psi
                .amplitudes()
                .iter()
                .zip(f_field)
                .map(|(z, f)| f * f * z.norm_sqr())
                .sum::<f64>())
            .sqrt();
            Ok(BoundSample {
                t_norm,
                norm: psi.norm(),
                f_norm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    kato_rellich_from_samples(target, samples, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Lattice, LatticeSpec};
    use crate::states::random_ensemble;

    fn samples(n: usize) -> Vec<BoundSample> {
        (0..n)
            .map(|k| BoundSample {
                t_norm: 1.0 + k as f64,
                norm: 1.0,
                f_norm: 0.5 + 0.1 * k as f64,
            })
            .collect()
    }

    #[test]
    fn curve_is_monotone_and_clamped() {
        let e = kato_rellich_from_samples("test", samples(40), &BoundConfig::default()).unwrap();
        assert!(e.is_monotone());
        assert!(e.c_alpha.iter().all(|c| *c >= 0.0));
        assert_eq!(e.alphas.len(), 151);
        assert!((e.alphas[150] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn self_bound_reaches_one() {
        let s: Vec<BoundSample> = samples(40)
            .into_iter()
            .map(|s| BoundSample { f_norm: s.t_norm, ..s })
            .collect();
        let cfg = BoundConfig {
            ceiling: 0.0,
            ..BoundConfig::default()
        };
        let e = kato_rellich_from_samples("T", s, &cfg).unwrap();
        assert_eq!(e.alpha_star, Some(1.0));
        assert_eq!(e.c_at_alpha_star, Some(0.0));
        assert!(!e.consistent);
    }

    #[test]
    fn small_or_empty_ensembles_rejected() {
        assert!(kato_rellich_from_samples("x", samples(29), &BoundConfig::default()).is_err());
        let zero: Vec<BoundSample> = samples(30)
            .into_iter()
            .map(|s| BoundSample { norm: 0.0, ..s })
            .collect();
        let err = kato_rellich_from_samples("x", zero, &BoundConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateEnsemble(_)));
    }

    #[test]
    fn bounded_field_gives_zero_alpha() {
        let lat = Lattice::new(LatticeSpec::cube(1, 256, -10.0, 10.0)).unwrap();
        let f = lat.position_field(|x| 0.7 * x[0].cos());
        let ens = random_ensemble(&lat, 30, 6.0, 3).unwrap();
        let cfg = BoundConfig {
            ceiling: 0.7,
            ..BoundConfig::default()
        };
        let m = MassVector::uniform(1, 1.0).unwrap();
        let e = kato_rellich_estimate("cos", &f, &m, &ens, &cfg).unwrap();
        assert_eq!(e.alpha_star, Some(0.0));
        assert!(e.c_alpha[0] <= 0.7);
    }
}
