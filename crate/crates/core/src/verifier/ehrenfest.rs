use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{Hamiltonian, MassVector, Observable};
use crate::lattice::WaveState;
use crate::series::ObservableSeries;

/// Name of the differentiation stencil, recorded in reports.
pub const STENCIL: &str = "central 5-point (4th order), one-sided 5-point at the two end records on each side";

/// Fourth-order derivative of uniformly sampled `y`. The returned mask marks
/// the entries computed with one-sided stencils.
pub fn derivative(y: &[f64], tau: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    let n = y.len();
    if n < 5 {
        return Err(Error::InvalidSeries(format!(
            "need at least 5 records to differentiate, got {n}"
        )));
    }
    let c = 1.0 / (12.0 * tau);
    let mut d = vec![0.0; n];
    let mut edge = vec![false; n];
    for k in 2..n - 2 {
        d[k] = c * (-y[k + 2] + 8.0 * y[k + 1] - 8.0 * y[k - 1] + y[k - 2]);
    }
    d[0] = c * (-25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4]);
    d[1] = c * (-3.0 * y[0] - 10.0 * y[1] + 18.0 * y[2] - 6.0 * y[3] + y[4]);
    d[n - 1] = -c
        * (-25.0 * y[n - 1] + 48.0 * y[n - 2] - 36.0 * y[n - 3] + 16.0 * y[n - 4] - 3.0 * y[n - 5]);
    d[n - 2] = -c * (-3.0 * y[n - 1] - 10.0 * y[n - 2] + 18.0 * y[n - 3] - 6.0 * y[n - 4] + y[n - 5]);
    for k in [0, 1, n - 2, n - 1] {
        edge[k] = true;
    }
    Ok((d, edge))
}

fn interior_max(v: &[f64], edge: &[bool]) -> f64 {
    v.iter()
        .zip(edge)
        .filter(|(_, e)| !**e)
        .map(|(x, _)| x.abs())
        .fold(0.0, f64::max)
}

fn interior_rms(v: &[f64], edge: &[bool]) -> f64 {
    let (s, n) = v
        .iter()
        .zip(edge)
        .filter(|(_, e)| !**e)
        .fold((0.0, 0usize), |(s, n), (x, _)| (s + x * x, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Residuals of one axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisResiduals {
    pub axis: usize,
    pub mass: f64,
    /// `d/dt⟨X⟩ − ⟨P⟩/m`.
    pub r1: Vec<f64>,
    /// `d/dt⟨P⟩ − ⟨−∂V⟩`.
    pub r2: Vec<f64>,
    /// `d/dt⟨X⟩` minus the commutator form of `X`.
    pub r1_form: Vec<f64>,
    /// `d/dt⟨P⟩` minus the commutator form of `P`.
    pub r2_form: Vec<f64>,
    pub max_r1: f64,
    pub rms_r1: f64,
    pub max_r2: f64,
    pub rms_r2: f64,
    pub max_r1_form: f64,
    pub max_r2_form: f64,
    /// Largest pointwise gap between classical and form residuals.
    pub form_vs_classical: f64,
    /// Largest increment between consecutive interior derivative samples,
    /// for `d/dt⟨X⟩` and `d/dt⟨P⟩`.
    pub derivative_increment: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub stencil: &'static str,
    pub spacing: f64,
    pub times: Vec<f64>,
    /// True where a one-sided stencil was used; those entries are excluded
    /// from every max and RMS.
    pub edge: Vec<bool>,
    pub per_axis: Vec<AxisResiduals>,
    pub tolerance: f64,
    pub max_residual: f64,
    /// All residuals below the "exact" threshold.
    pub exact: bool,
    /// Derivative increments are finite at grid resolution.
    pub c1_bounded: bool,
    pub passed: bool,
}

/// Ehrenfest residuals of a recorded trajectory.
pub fn ehrenfest_residuals(
    series: &ObservableSeries,
    masses: &MassVector,
    tolerance: f64,
    exact_threshold: f64,
) -> Result<ResidualReport> {
    if series.len() < 5 {
        return Err(Error::InvalidSeries(format!(
            "need at least 5 records, got {}",
            series.len()
        )));
    }
    if masses.len() != series.dims() {
        return Err(Error::InvalidSeries(format!(
            "{} masses for {} axes",
            masses.len(),
            series.dims()
        )));
    }
    let tau = series.uniform_spacing()?;
    let mut per_axis = Vec::with_capacity(series.dims());
    let mut edge = Vec::new();
    for j in 0..series.dims() {
        let m = masses.get(j);
        let x = series.column(|r| r.x_mean[j]);
        let p = series.column(|r| r.p_mean[j]);
        let (dx, e) = derivative(&x, tau)?;
        let (dp, _) = derivative(&p, tau)?;
        edge = e;
        let recs = series.records();
        let r1: Vec<f64> = dx.iter().zip(recs).map(|(d, r)| d - r.p_mean[j] / m).collect();
        let r2: Vec<f64> = dp.iter().zip(recs).map(|(d, r)| d - r.force_mean[j]).collect();
        let r1_form: Vec<f64> = dx.iter().zip(recs).map(|(d, r)| d - r.qform_x[j]).collect();
        let r2_form: Vec<f64> = dp.iter().zip(recs).map(|(d, r)| d - r.qform_p[j]).collect();
        let gap: Vec<f64> = r1
            .iter()
            .zip(&r1_form)
            .map(|(a, b)| a - b)
            .zip(r2.iter().zip(&r2_form).map(|(a, b)| a - b))
            .map(|(a, b)| a.abs().max(b.abs()))
            .collect();
        let increment = |d: &[f64]| {
            d.windows(2)
                .zip(edge.windows(2))
                .filter(|(_, e)| !e[0] && !e[1])
                .map(|(w, _)| (w[1] - w[0]).abs())
                .fold(0.0, f64::max)
        };
        per_axis.push(AxisResiduals {
            axis: j,
            mass: m,
            max_r1: interior_max(&r1, &edge),
            rms_r1: interior_rms(&r1, &edge),
            max_r2: interior_max(&r2, &edge),
            rms_r2: interior_rms(&r2, &edge),
            max_r1_form: interior_max(&r1_form, &edge),
            max_r2_form: interior_max(&r2_form, &edge),
            form_vs_classical: interior_max(&gap, &edge),
            derivative_increment: [increment(&dx), increment(&dp)],
            r1,
            r2,
            r1_form,
            r2_form,
        });
    }
    let max_residual = per_axis
        .iter()
        .map(|a| a.max_r1.max(a.max_r2))
        .fold(0.0, f64::max);
    let c1_bounded = per_axis
        .iter()
        .all(|a| a.derivative_increment.iter().all(|v| v.is_finite()));
    Ok(ResidualReport {
        stencil: STENCIL,
        spacing: tau,
        times: series.times(),
        edge,
        per_axis,
        tolerance,
        max_residual,
        exact: max_residual <= exact_threshold,
        c1_bounded,
        passed: max_residual <= tolerance && c1_bounded,
    })
}

/// Both sides of the two static identities on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityDefects {
    pub axis: usize,
    pub qform_x: f64,
    pub p_over_m: f64,
    pub delta_x: f64,
    pub qform_p: f64,
    pub force: f64,
    pub delta_p: f64,
    pub boundary_mass: f64,
}

impl IdentityDefects {
    pub fn max(&self) -> f64 {
        self.delta_x.max(self.delta_p)
    }
}

/// `|form(X_j) − ⟨P_j⟩/m_j|` and `|form(P_j) − ⟨−∂_jV⟩|` for one state.
///
/// Each side goes through its own operator applications: the forms through
/// `H`, the right-hand sides through `P_j` and the gradient field.
pub fn identity_check(h: &Hamiltonian, psi: &WaveState, axis: usize) -> Result<IdentityDefects> {
    let n2 = psi.norm_sqr();
    if !(n2 > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let m = h.masses().get(axis);
    let qform_x = h.commutator_form(psi, Observable::Position(axis))?.value / n2;
    let qform_p = h.commutator_form(psi, Observable::Momentum(axis))?.value / n2;
    let p_over_m = h.expect(psi, Observable::Momentum(axis))?.value / m;
    let force = h.expect(psi, Observable::Force(axis))?.value;
    Ok(IdentityDefects {
        axis,
        qform_x,
        p_over_m,
        delta_x: (qform_x - p_over_m).abs(),
        qform_p,
        force,
        delta_p: (qform_p - force).abs(),
        boundary_mass: psi.boundary_mass() / n2,
    })
}

pub fn identity_check_all(h: &Hamiltonian, psi: &WaveState) -> Result<Vec<IdentityDefects>> {
    (0..h.dims()).map(|j| identity_check(h, psi, j)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::PotentialSpec;
    use crate::lattice::{Lattice, LatticeSpec};
    use crate::propagator::{evolve, EvolutionPlan, EvolveLimits};
    use crate::states::gaussian_packet;

    #[test]
    fn stencil_is_exact_on_quartics() {
        let tau = 0.1;
        let y: Vec<f64> = (0..12).map(|k| (k as f64 * tau).powi(4) - 2.0 * k as f64 * tau).collect();
        let (d, edge) = derivative(&y, tau).unwrap();
        for (k, v) in d.iter().enumerate() {
            let t = k as f64 * tau;
            assert!((v - (4.0 * t.powi(3) - 2.0)).abs() < 1e-11, "{k}: {v}");
        }
        assert_eq!(edge.iter().filter(|e| **e).count(), 4);
    }

    #[test]
    fn stencil_order_four_on_sine() {
        let err = |tau: f64| {
            let y: Vec<f64> = (0..40).map(|k| (k as f64 * tau).sin()).collect();
            let (d, edge) = derivative(&y, tau).unwrap();
            d.iter()
                .enumerate()
                .filter(|(k, _)| !edge[*k])
                .map(|(k, v)| (v - (k as f64 * tau).cos()).abs())
                .fold(0.0, f64::max)
        };
        let order = (err(0.04) / err(0.02)).log2();
        assert!((order - 4.0).abs() < 0.2, "{order}");
    }

    #[test]
    fn too_short_series_rejected() {
        assert!(derivative(&[1.0, 2.0, 3.0, 4.0], 0.1).is_err());
    }

    fn harmonic() -> Hamiltonian {
        let lat = Lattice::new(LatticeSpec::cube(1, 256, -10.0, 10.0)).unwrap();
        let spec = PotentialSpec::Harmonic {
            masses: vec![1.0],
            frequencies: vec![1.0],
            center: vec![0.0],
        };
        Hamiltonian::new(lat, spec, MassVector::uniform(1, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn harmonic_residuals_small_and_forms_agree() {
        let h = harmonic();
        let psi = gaussian_packet(h.lattice(), &[1.0], &[0.0], &[0.5]).unwrap();
        let plan = EvolutionPlan::new(&h, 1e-3, 2000, 10).unwrap();
        let tr = evolve(&h, &psi, &plan, &EvolveLimits::default()).unwrap();
        let rep = ehrenfest_residuals(&tr.series, h.masses(), 1e-6, 1e-9).unwrap();
        assert!(rep.passed, "{}", rep.max_residual);
        assert!(!rep.exact);
        assert!(rep.per_axis[0].form_vs_classical < 1e-6);
        assert!(rep.c1_bounded);
    }

    #[test]
    fn coarse_step_fails() {
        let h = harmonic();
        let psi = gaussian_packet(h.lattice(), &[1.0], &[0.0], &[0.5]).unwrap();
        let plan = EvolutionPlan::new(&h, 0.2, 50, 1).unwrap();
        let tr = evolve(&h, &psi, &plan, &EvolveLimits::default()).unwrap();
        let rep = ehrenfest_residuals(&tr.series, h.masses(), 1e-6, 1e-9).unwrap();
        assert!(!rep.passed);
    }

    #[test]
    fn identity_on_harmonic_gaussian() {
        let h = harmonic();
        let psi = gaussian_packet(h.lattice(), &[1.0], &[2.0], &[0.5]).unwrap();
        let d = identity_check(&h, &psi, 0).unwrap();
        assert!((d.qform_x - 2.0).abs() < 1e-6 && d.delta_x < 1e-6, "{d:?}");
        assert!((d.qform_p + 1.0).abs() < 1e-6 && d.delta_p < 1e-6, "{d:?}");
    }
}
