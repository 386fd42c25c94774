use rayon::prelude::*;
use serde::Serialize;

use super::ehrenfest::ehrenfest_residuals;
use super::fit::log_log_fit;
use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::lattice::WaveState;
use crate::propagator::{evolve, EvolutionPlan, EvolveLimits};
use crate::tolerances::Tolerances;

/// Fixed physical horizon and record spacing shared by every resolution, so
/// the differentiation stencil is identical across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceSetup {
    pub t_final: f64,
    pub record_interval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub max_r1: f64,
    pub max_r2: f64,
    pub max_r1_form: f64,
    pub max_r2_form: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderFit {
    pub order: f64,
    pub stderr: f64,
    /// `order ± 2·stderr`.
    pub interval: [f64; 2],
}

impl OrderFit {
    fn from_slope(slope: f64, stderr: f64) -> Self {
        Self {
            order: slope,
            stderr,
            interval: [slope - 2.0 * stderr, slope + 2.0 * stderr],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub setup: ConvergenceSetup,
    pub runs: Vec<RunSummary>,
    /// `None` when the residual is at roundoff for every step size.
    pub r1_order: Option<OrderFit>,
    pub r2_order: Option<OrderFit>,
    pub r1_exact: bool,
    pub r2_exact: bool,
    /// `‖ψ_Δt(T) − ψ_{Δt/2}(T)‖` for consecutive pairs.
    pub state_differences: Vec<f64>,
    pub state_order: Option<OrderFit>,
    pub state_exact: bool,
    pub exact_threshold: f64,
}

fn steps_for(span: f64, dt: f64, what: &str) -> Result<usize> {
    let k = (span / dt).round();
    if k < 1.0 || (k * dt - span).abs() > 1e-9 * span {
        return Err(Error::InvalidPlan(format!(
            "{what} {span} is not a whole number of steps of {dt}"
        )));
    }
    Ok(k as usize)
}

fn order_of(dts: &[f64], errs: &[f64], exact: f64) -> (Option<OrderFit>, bool) {
    if errs.iter().all(|e| *e <= exact) {
        return (None, true);
    }
    let fit = log_log_fit(dts, errs).map(|f| OrderFit::from_slope(f.slope, f.slope_stderr));
    (fit, false)
}

/// Repeats the run at every step size in `dt_list` (each half the previous)
/// and fits convergence orders for the residuals and the final state.
pub fn convergence_study(
    h: &Hamiltonian,
    psi0: &WaveState,
    setup: ConvergenceSetup,
    dt_list: &[f64],
    tol: &Tolerances,
) -> Result<ConvergenceReport> {
    if dt_list.len() < 3 {
        return Err(Error::TooFewResolutions(format!(
            "{} step sizes, need at least 3",
            dt_list.len()
        )));
    }
    for w in dt_list.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(Error::TooFewResolutions(format!(
                "step sizes must halve successively, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let limits = EvolveLimits::from(*tol);
    let runs: Vec<(RunSummary, WaveState)> = dt_list
        .par_iter()
        .map(|&dt| {
            let steps = steps_for(setup.t_final, dt, "horizon")?;
            let stride = steps_for(setup.record_interval, dt, "record interval")?;
            let plan = EvolutionPlan::new(h, dt, steps, stride)?;
            let tr = evolve(h, psi0, &plan, &limits)?;
            let rep = ehrenfest_residuals(&tr.series, h.masses(), tol.residual, tol.exact)?;
            let worst = |f: &dyn Fn(&super::ehrenfest::AxisResiduals) -> f64| {
                rep.per_axis.iter().map(f).fold(0.0, f64::max)
            };
            Ok((
                RunSummary {
                    dt,
                    steps,
                    stride,
                    max_r1: worst(&|a| a.max_r1),
                    max_r2: worst(&|a| a.max_r2),
                    max_r1_form: worst(&|a| a.max_r1_form),
                    max_r2_form: worst(&|a| a.max_r2_form),
                },
                tr.final_state,
            ))
        })
        .collect::<Result<_>>()?;

    let dts: Vec<f64> = runs.iter().map(|r| r.0.dt).collect();
    let r1: Vec<f64> = runs.iter().map(|r| r.0.max_r1).collect();
    let r2: Vec<f64> = runs.iter().map(|r| r.0.max_r2).collect();
    let (r1_order, r1_exact) = order_of(&dts, &r1, tol.exact);
    let (r2_order, r2_exact) = order_of(&dts, &r2, tol.exact);

    let state_differences: Vec<f64> = runs
        .windows(2)
        .map(|w| w[0].1.distance(&w[1].1))
        .collect::<Result<_>>()?;
    let (state_order, state_exact) =
        order_of(&dts[..dts.len() - 1], &state_differences, tol.exact);

    Ok(ConvergenceReport {
        setup,
        runs: runs.into_iter().map(|r| r.0).collect(),
        r1_order,
        r2_order,
        r1_exact,
        r2_exact,
        state_differences,
        state_order,
        state_exact,
        exact_threshold: tol.exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{MassVector, PotentialSpec};
    use crate::lattice::{Lattice, LatticeSpec};
    use crate::states::gaussian_packet;

    fn run(spec: PotentialSpec, x0: f64, p0: f64) -> ConvergenceReport {
        let lat = Lattice::new(LatticeSpec::cube(1, 256, -12.0, 12.0)).unwrap();
        let h = Hamiltonian::new(lat, spec, MassVector::uniform(1, 1.0).unwrap()).unwrap();
        let psi = gaussian_packet(h.lattice(), &[x0], &[p0], &[0.5]).unwrap();
        let setup = ConvergenceSetup {
            t_final: 1.0,
            record_interval: 0.02,
        };
        convergence_study(&h, &psi, setup, &[0.02, 0.01, 0.005], &Tolerances::default()).unwrap()
    }

    #[test]
    fn harmonic_state_order_two() {
        let r = run(
            PotentialSpec::Harmonic {
                masses: vec![1.0],
                frequencies: vec![1.0],
                center: vec![0.0],
            },
            1.0,
            0.0,
        );
        let o = r.state_order.unwrap();
        assert!((o.order - 2.0).abs() < 0.3, "{o:?}");
        let o = r.r1_order.unwrap();
        assert!((o.order - 2.0).abs() < 0.3, "{o:?}");
    }

    #[test]
    fn free_is_exact() {
        let r = run(PotentialSpec::Free, 0.0, 1.0);
        assert!(r.r1_exact && r.r2_exact && r.state_exact, "{r:?}");
        assert!(r.r1_order.is_none());
    }

    #[test]
    fn rejects_bad_resolutions() {
        let lat = Lattice::new(LatticeSpec::cube(1, 64, -10.0, 10.0)).unwrap();
        let h = Hamiltonian::new(lat, PotentialSpec::Free, MassVector::uniform(1, 1.0).unwrap()).unwrap();
        let psi = gaussian_packet(h.lattice(), &[0.0], &[0.0], &[1.0]).unwrap();
        let setup = ConvergenceSetup {
            t_final: 1.0,
            record_interval: 0.1,
        };
        let tol = Tolerances::default();
        assert!(matches!(
            convergence_study(&h, &psi, setup, &[0.02, 0.01], &tol),
            Err(Error::TooFewResolutions(_))
        ));
        assert!(convergence_study(&h, &psi, setup, &[0.02, 0.01, 0.004], &tol).is_err());
        assert!(convergence_study(&h, &psi, setup, &[0.03, 0.015, 0.0075], &tol).is_err());
    }
}
