//! Split-operator time stepping.
//!
//! One step is `e^{-iVΔt/2} e^{-iTΔt} e^{-iVΔt/2}` with `T` applied as a
//! multiplier in momentum space. Consecutive half kicks between records are
//! fused into one full kick. Imaginary time replaces `-iΔt` by `-Δτ`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{Hamiltonian, Observable};
use crate::lattice::{Lattice, Representation, WaveState};
use crate::series::{ObservableSeries, Record};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeMode {
    Real,
    Imaginary,
}

/// Step size, step count, record stride and the precomputed phase fields.
#[derive(Debug, Clone)]
pub struct EvolutionPlan {
    lattice: Arc<Lattice>,
    dt: f64,
    steps: usize,
    stride: usize,
    mode: TimeMode,
    half_kick: Vec<Complex64>,
    full_kick: Vec<Complex64>,
    drift: Vec<Complex64>,
}

fn phase(mode: TimeMode, field: f64, dt: f64) -> Complex64 {
    match mode {
        TimeMode::Real => Complex64::from_polar(1.0, -field * dt),
        TimeMode::Imaginary => Complex64::new((-field * dt).exp(), 0.0),
    }
}

impl EvolutionPlan {
    /// Real-time plan.
    pub fn new(h: &Hamiltonian, dt: f64, steps: usize, stride: usize) -> Result<Self> {
        Self::build(h, dt, steps, stride, TimeMode::Real)
    }

    /// Imaginary-time plan with step `dtau`.
    pub fn imaginary(h: &Hamiltonian, dtau: f64, steps: usize) -> Result<Self> {
        Self::build(h, dtau, steps, 1, TimeMode::Imaginary)
    }

    fn build(h: &Hamiltonian, dt: f64, steps: usize, stride: usize, mode: TimeMode) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidPlan(format!("dt must be positive, got {dt}")));
        }
        if steps == 0 {
            return Err(Error::InvalidPlan("steps must be at least 1".into()));
        }
        if stride == 0 {
            return Err(Error::InvalidPlan("record stride must be at least 1".into()));
        }
        let v = h.potential();
        let t = h.kinetic_multiplier();
        let half_kick = v.par_iter().map(|&x| phase(mode, x, 0.5 * dt)).collect();
        let full_kick = v.par_iter().map(|&x| phase(mode, x, dt)).collect();
        let drift = t.par_iter().map(|&x| phase(mode, x, dt)).collect();
        Ok(Self {
            lattice: h.lattice().clone(),
            dt,
            steps,
            stride,
            mode,
            half_kick,
            full_kick,
            drift,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn mode(&self) -> TimeMode {
        self.mode
    }

    /// Number of records `evolve` produces, including `t = 0`.
    pub fn record_count(&self) -> usize {
        self.steps / self.stride + 1
    }

    /// The same plan run backwards in time (real mode only).
    pub fn reversed(&self) -> Result<Self> {
        if self.mode != TimeMode::Real {
            return Err(Error::InvalidPlan("imaginary-time plans cannot be reversed".into()));
        }
        let conj = |v: &[Complex64]| v.iter().map(|z| z.conj()).collect();
        Ok(Self {
            half_kick: conj(&self.half_kick),
            full_kick: conj(&self.full_kick),
            drift: conj(&self.drift),
            ..self.clone()
        })
    }

    fn check(&self, psi: &WaveState) -> Result<()> {
        psi.expect_repr(Representation::Position)?;
        if Arc::ptr_eq(psi.lattice(), &self.lattice) || psi.lattice().spec() == self.lattice.spec() {
            Ok(())
        } else {
            Err(Error::LatticeMismatch)
        }
    }

    /// `k` consecutive steps on raw position-space amplitudes.
    pub(crate) fn advance(&self, amps: &mut [Complex64], k: usize) {
        if k == 0 {
            return;
        }
        multiply(amps, &self.half_kick);
        for i in 0..k {
            self.lattice.forward_in_place(amps);
            multiply(amps, &self.drift);
            self.lattice.inverse_in_place(amps);
            multiply(amps, if i + 1 < k { &self.full_kick } else { &self.half_kick });
        }
    }

    /// Apply `k` steps to `psi` in place.
    pub fn advance_state(&self, psi: &mut WaveState, k: usize) -> Result<()> {
        self.check(psi)?;
        self.advance(psi.amplitudes_mut(), k);
        Ok(())
    }
}

fn multiply(amps: &mut [Complex64], field: &[Complex64]) {
    amps.par_iter_mut()
        .with_min_len(crate::PAR_MIN_LEN)
        .zip(field)
        .for_each(|(z, f)| *z *= f);
}

/// One step, returning the new state.
pub fn strang_step(psi: &WaveState, plan: &EvolutionPlan) -> Result<WaveState> {
    let mut out = psi.clone();
    plan.advance_state(&mut out, 1)?;
    Ok(out)
}

/// Abort thresholds for a real-time run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveLimits {
    pub norm_drift: f64,
    pub boundary_mass: f64,
}

impl Default for EvolveLimits {
    fn default() -> Self {
        Tolerances::default().into()
    }
}

impl From<Tolerances> for EvolveLimits {
    fn from(t: Tolerances) -> Self {
        Self {
            norm_drift: t.norm_drift,
            boundary_mass: t.boundary_mass,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub series: ObservableSeries,
    pub final_state: WaveState,
}

/// Run `plan` from `psi0`, recording at `t = 0` and every `stride` steps.
///
/// The state is never renormalized. The run aborts if the norm drifts from
/// its initial value or mass reaches the outer grid layer.
pub fn evolve(
    h: &Hamiltonian,
    psi0: &WaveState,
    plan: &EvolutionPlan,
    limits: &EvolveLimits,
) -> Result<Trajectory> {
    if plan.mode != TimeMode::Real {
        return Err(Error::InvalidPlan("evolve needs a real-time plan".into()));
    }
    plan.check(psi0)?;
    if !Arc::ptr_eq(h.lattice(), &plan.lattice) && h.lattice().spec() != plan.lattice.spec() {
        return Err(Error::LatticeMismatch);
    }
    let mut psi = psi0.clone();
    let mut series = ObservableSeries::new(h.dims());
    let mut norm0 = None;
    let mut step = 0;
    loop {
        let t = step as f64 * plan.dt;
        let snap = h.snapshot(&psi)?;
        let n0 = *norm0.get_or_insert(snap.norm);
        let drift = (snap.norm - n0).abs();
        if !(drift <= limits.norm_drift) {
            return Err(Error::NormDrift {
                t,
                drift,
                limit: limits.norm_drift,
            });
        }
        if !(snap.boundary_mass <= limits.boundary_mass) {
            return Err(Error::BoundaryHit {
                t,
                mass: snap.boundary_mass,
                limit: limits.boundary_mass,
            });
        }
        series.push(Record::from_snapshot(t, snap))?;
        if step + plan.stride > plan.steps {
            break;
        }
        plan.advance(psi.amplitudes_mut(), plan.stride);
        step += plan.stride;
    }
    let rest = plan.steps - step;
    plan.advance(psi.amplitudes_mut(), rest);
    if let Some(k) = psi.amplitudes().iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite(k));
    }
    Ok(Trajectory {
        series,
        final_state: psi,
    })
}

/// Imaginary-time relaxation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxOptions {
    pub dtau: f64,
    pub max_steps: usize,
    /// Stop once successive energies differ by less than this.
    pub energy_tol: Option<f64>,
    /// Consecutive energy rises that count as divergence.
    pub patience: usize,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            dtau: 1e-2,
            max_steps: 5000,
            energy_tol: Some(1e-13),
            patience: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Relaxation {
    pub state: WaveState,
    pub energy: f64,
    pub steps: usize,
    pub energies: Vec<f64>,
}

/// Relax toward the ground state, renormalizing after each step. Returns the
/// final Rayleigh quotient.
pub fn imaginary_time_relax(h: &Hamiltonian, psi0: &WaveState, opts: &RelaxOptions) -> Result<Relaxation> {
    if opts.patience == 0 {
        return Err(Error::InvalidPlan("patience must be at least 1".into()));
    }
    let plan = EvolutionPlan::imaginary(h, opts.dtau, opts.max_steps)?;
    plan.check(psi0)?;
    let mut psi = psi0.clone();
    psi.normalize()?;
    let mut energy = h.expect(&psi, Observable::Energy)?.value;
    let mut energies = vec![energy];
    let mut rises = 0;
    let mut steps = 0;
    while steps < opts.max_steps {
        plan.advance(psi.amplitudes_mut(), 1);
        psi.normalize()?;
        steps += 1;
        let e = h.expect(&psi, Observable::Energy)?.value;
        if !e.is_finite() {
            return Err(Error::Divergence(rises + 1));
        }
        energies.push(e);
        if e > energy + 1e-12 * energy.abs().max(1.0) {
            rises += 1;
            if rises >= opts.patience {
                return Err(Error::Divergence(rises));
            }
        } else {
            rises = 0;
        }
        let delta = (e - energy).abs();
        energy = e;
        if opts.energy_tol.is_some_and(|tol| delta < tol) {
            break;
        }
    }
    Ok(Relaxation {
        state: psi,
        energy,
        steps,
        energies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{MassVector, PotentialSpec};
    use crate::lattice::LatticeSpec;
    use crate::states::gaussian_packet;

    fn harmonic(n: usize, l: f64) -> Hamiltonian {
        let lat = Lattice::new(LatticeSpec::cube(1, n, -l, l)).unwrap();
        let spec = PotentialSpec::Harmonic {
            masses: vec![1.0],
            frequencies: vec![1.0],
            center: vec![0.0],
        };
        Hamiltonian::new(lat, spec, MassVector::uniform(1, 1.0).unwrap()).unwrap()
    }

    fn free(n: usize, l: f64) -> Hamiltonian {
        let lat = Lattice::new(LatticeSpec::cube(1, n, -l, l)).unwrap();
        Hamiltonian::new(lat, PotentialSpec::Free, MassVector::uniform(1, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn plan_validation() {
        let h = free(64, 10.0);
        assert!(EvolutionPlan::new(&h, 0.0, 10, 1).is_err());
        assert!(EvolutionPlan::new(&h, -1e-3, 10, 1).is_err());
        assert!(EvolutionPlan::new(&h, 1e-3, 0, 1).is_err());
        assert!(EvolutionPlan::new(&h, 1e-3, 10, 0).is_err());
        assert_eq!(EvolutionPlan::new(&h, 1e-3, 1000, 10).unwrap().record_count(), 101);
    }

    #[test]
    fn fused_steps_match_single_steps() {
        let h = harmonic(128, 8.0);
        let psi = gaussian_packet(h.lattice(), &[1.0], &[0.3], &[0.5]).unwrap();
        let plan = EvolutionPlan::new(&h, 0.01, 7, 1).unwrap();
        let mut one = psi.clone();
        for _ in 0..7 {
            one = strang_step(&one, &plan).unwrap();
        }
        let mut fused = psi.clone();
        plan.advance_state(&mut fused, 7).unwrap();
        assert!(one.distance(&fused).unwrap() < 1e-13);
    }

    #[test]
    fn unitary_and_reversible() {
        let h = harmonic(256, 10.0);
        let psi = gaussian_packet(h.lattice(), &[1.0], &[0.5], &[0.5]).unwrap();
        let plan = EvolutionPlan::new(&h, 1e-3, 500, 50).unwrap();
        let mut s = psi.clone();
        plan.advance_state(&mut s, 500).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
        plan.reversed().unwrap().advance_state(&mut s, 500).unwrap();
        assert!(s.distance(&psi).unwrap() < 1e-10);
    }

    // Free Gaussian with exp(-a x^2 + i p0 x): the width parameter evolves as
    // 1/a(t) = 1/a + 2 i t / m, the centre moves at p0/m.
    #[test]
    fn free_packet_matches_closed_form() {
        let h = free(1024, 40.0);
        let (a, p0, t) = (0.5, 1.0, 2.0);
        let psi = gaussian_packet(h.lattice(), &[0.0], &[p0], &[a]).unwrap();
        let plan = EvolutionPlan::new(&h, 0.05, 40, 40).unwrap();
        let out = evolve(&h, &psi, &plan, &EvolveLimits::default()).unwrap();
        let i = Complex64::i();
        let at = 1.0 / (1.0 / a + 2.0 * i * t);
        let exact = WaveState::from_fn(h.lattice().clone(), |x| {
            let xc = x[0] - p0 * t;
            (-at * xc * xc + i * p0 * x[0] - 0.5 * i * p0 * p0 * t).exp()
        })
        .unwrap();
        let exact = exact.normalized().unwrap();
        let overlap = exact.inner(&out.final_state).unwrap();
        let phase = overlap / overlap.norm();
        let mut aligned = exact.clone();
        aligned.scale(phase);
        assert!(aligned.distance(&out.final_state).unwrap() < 1e-10);
        let last = out.series.records().last().unwrap();
        assert!((last.x_mean[0] - p0 * t).abs() < 1e-10);
    }

    #[test]
    fn harmonic_is_second_order() {
        let h = harmonic(256, 10.0);
        let psi = gaussian_packet(h.lattice(), &[1.0], &[0.0], &[0.5]).unwrap();
        let mean = |dt: f64| {
            let steps = (1.0 / dt).round() as usize;
            let plan = EvolutionPlan::new(&h, dt, steps, steps).unwrap();
            let out = evolve(&h, &psi, &plan, &EvolveLimits::default()).unwrap();
            out.series.records().last().unwrap().x_mean[0]
        };
        let exact = 1.0_f64.cos();
        let e1 = (mean(0.02) - exact).abs();
        let e2 = (mean(0.01) - exact).abs();
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn records_are_uniform() {
        let h = harmonic(128, 8.0);
        let psi = gaussian_packet(h.lattice(), &[0.0], &[0.0], &[0.5]).unwrap();
        let plan = EvolutionPlan::new(&h, 1e-3, 105, 10).unwrap();
        let out = evolve(&h, &psi, &plan, &EvolveLimits::default()).unwrap();
        assert_eq!(out.series.len(), 11);
        assert!((out.series.uniform_spacing().unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn boundary_hit_aborts() {
        let h = free(128, 10.0);
        let psi = gaussian_packet(h.lattice(), &[5.0], &[8.0], &[1.0]).unwrap();
        let plan = EvolutionPlan::new(&h, 1e-2, 200, 5).unwrap();
        let err = evolve(&h, &psi, &plan, &EvolveLimits::default()).unwrap_err();
        assert!(matches!(err, Error::BoundaryHit { .. }), "{err}");
    }

    #[test]
    fn imaginary_time_finds_ground_energy() {
        let h = harmonic(256, 10.0);
        let psi = gaussian_packet(h.lattice(), &[0.7], &[0.0], &[0.3]).unwrap();
        let opts = RelaxOptions {
            dtau: 5e-3,
            max_steps: 20_000,
            energy_tol: Some(1e-14),
            patience: 10,
        };
        let r = imaginary_time_relax(&h, &psi, &opts).unwrap();
        // Strang in imaginary time shifts the fixed point by O(dτ²).
        assert!((r.energy - 0.5).abs() < 1e-5, "{}", r.energy);
        assert!((r.state.norm() - 1.0).abs() < 1e-12);
        for w in r.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn reversing_imaginary_plan_fails() {
        let h = free(64, 10.0);
        let plan = EvolutionPlan::imaginary(&h, 1e-2, 10).unwrap();
        assert!(plan.reversed().is_err());
        let psi = gaussian_packet(h.lattice(), &[0.0], &[0.0], &[1.0]).unwrap();
        assert!(evolve(&h, &psi, &plan, &EvolveLimits::default()).is_err());
    }
}
