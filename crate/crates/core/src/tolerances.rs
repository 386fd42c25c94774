//! Named numerical tolerances shared by the propagator and the checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Ehrenfest residual ceiling (max abs over the interior window).
    pub residual: f64,
    /// Mismatch allowed between classical and quadratic-form right-hand sides.
    pub identity: f64,
    /// Direct versus factorized force expectation.
    pub force_factorization: f64,
    /// Norm drift that aborts a real-time run.
    pub norm_drift: f64,
    /// Boundary mass that aborts a run.
    pub boundary_mass: f64,
    /// Allowed deviation of `‖Hψ‖` from its initial value.
    pub h_opnorm: f64,
    /// Hermiticity defect of a discrete operator.
    pub hermiticity: f64,
    /// Threshold under which a convergence error counts as exact.
    pub exact: f64,
    /// Relative change of a running sup that counts as stabilized.
    pub stabilization: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: 1e-6,
            identity: 1e-6,
            force_factorization: 1e-12,
            norm_drift: 1e-8,
            boundary_mass: 1e-6,
            h_opnorm: 1e-8,
            hermiticity: 1e-10,
            exact: 1e-9,
            stabilization: 0.01,
        }
    }
}

impl Tolerances {
    pub const NAMES: [&'static str; 9] = [
        "residual",
        "identity",
        "force_factorization",
        "norm_drift",
        "boundary_mass",
        "h_opnorm",
        "hermiticity",
        "exact",
        "stabilization",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "residual" => &mut self.residual,
            "identity" => &mut self.identity,
            "force_factorization" => &mut self.force_factorization,
            "norm_drift" => &mut self.norm_drift,
            "boundary_mass" => &mut self.boundary_mass,
            "h_opnorm" => &mut self.h_opnorm,
            "hermiticity" => &mut self.hermiticity,
            "exact" => &mut self.exact,
            "stabilization" => &mut self.stabilization,
            _ => return None,
        })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let mut copy = *self;
        copy.slot(name).map(|v| *v)
    }

    /// Override one tolerance by name. Values must be positive and finite.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidPlan(format!(
                "tolerance {name} must be positive and finite, got {value}"
            )));
        }
        match self.slot(name) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => Err(Error::InvalidPlan(format!("unknown tolerance '{name}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves() {
        let t = Tolerances::default();
        for n in Tolerances::NAMES {
            assert!(t.get(n).is_some(), "{n}");
        }
        assert_eq!(t.get("residual"), Some(1e-6));
    }

    #[test]
    fn set_rejects_bad_input() {
        let mut t = Tolerances::default();
        t.set("residual", 1e-4).unwrap();
        assert_eq!(t.residual, 1e-4);
        assert!(t.set("residual", -1.0).is_err());
        assert!(t.set("residul", 1.0).is_err());
    }
}
