//! Potential catalog, the operators `T`, `V`, `H`, `X_j`, `P_j`, expectation
//! values and the commutator quadratic form `i(⟨Hψ, Aψ⟩ − ⟨Aψ, Hψ⟩)`.
//!
//! Atomic units throughout (ħ = 1, electron mass 1). Every Coulomb-type term
//! carries a softening length `s > 0`; the bare singularity is never sampled.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{inner_slices, Lattice, Representation, WaveState};

/// Per-axis masses `m_j > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MassVector(Vec<f64>);

impl MassVector {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidPotential("mass vector is empty".into()));
        }
        if let Some(m) = masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidPotential(format!(
                "masses must be positive and finite, got {m}"
            )));
        }
        Ok(Self(masses))
    }

    pub fn uniform(dims: usize, mass: f64) -> Result<Self> {
        Self::new(vec![mass; dims])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, axis: usize) -> f64 {
        self.0[axis]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A nucleus of the reduced molecular model. A `position` pins it in place
/// (clamped-nuclei electronic Hamiltonian); without one the nucleus gets its
/// own lattice axis after the electron axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nucleus {
    pub charge: f64,
    pub mass: f64,
    #[serde(default)]
    pub position: Option<f64>,
}

/// One-dimensional soft-Coulomb particles: electrons (mass 1, charge −1) on
/// the first axes, then every unclamped nucleus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolecularToy {
    pub electrons: usize,
    pub nuclei: Vec<Nucleus>,
    pub softening: f64,
}

impl MolecularToy {
    pub fn dynamic_nuclei(&self) -> usize {
        self.nuclei.iter().filter(|n| n.position.is_none()).count()
    }

    pub fn dims(&self) -> usize {
        self.electrons + self.dynamic_nuclei()
    }

    /// Electron masses followed by the masses of the unclamped nuclei.
    pub fn masses(&self) -> Vec<f64> {
        let mut m = vec![1.0; self.electrons];
        m.extend(self.nuclei.iter().filter(|n| n.position.is_none()).map(|n| n.mass));
        m
    }

    fn nuclear_positions(&self, x: &[f64]) -> Vec<f64> {
        let mut next = self.electrons;
        self.nuclei
            .iter()
            .map(|n| match n.position {
                Some(r) => r,
                None => {
                    next += 1;
                    x[next - 1]
                }
            })
            .collect()
    }

    /// Lattice axis carrying nucleus `alpha`, if it is dynamic.
    fn nucleus_axis(&self, alpha: usize) -> Option<usize> {
        if self.nuclei[alpha].position.is_some() {
            return None;
        }
        let before = self.nuclei[..alpha].iter().filter(|n| n.position.is_none()).count();
        Some(self.electrons + before)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s2 = self.softening * self.softening;
        let r = self.nuclear_positions(x);
        let y = &x[..self.electrons];
        let mut v = 0.0;
        for &yi in y {
            for (n, &ra) in self.nuclei.iter().zip(&r) {
                v -= n.charge * soft_inverse(yi - ra, s2);
            }
        }
        for i in 0..y.len() {
            for j in i + 1..y.len() {
                v += soft_inverse(y[i] - y[j], s2);
            }
        }
        for a in 0..r.len() {
            for b in a + 1..r.len() {
                v += self.nuclei[a].charge * self.nuclei[b].charge * soft_inverse(r[a] - r[b], s2);
            }
        }
        v
    }

    fn gradient(&self, x: &[f64], axis: usize) -> f64 {
        let s2 = self.softening * self.softening;
        let r = self.nuclear_positions(x);
        let y = &x[..self.electrons];
        let mut g = 0.0;
        if axis < self.electrons {
            let yi = y[axis];
            for (n, &ra) in self.nuclei.iter().zip(&r) {
                let u = yi - ra;
                g += n.charge * u * soft_cube(u, s2);
            }
            for (j, &yj) in y.iter().enumerate() {
                if j != axis {
                    let u = yi - yj;
                    g -= u * soft_cube(u, s2);
                }
            }
        } else {
            let alpha = (0..self.nuclei.len())
                .find(|&a| self.nucleus_axis(a) == Some(axis))
                .expect("axis belongs to a dynamic nucleus");
            let za = self.nuclei[alpha].charge;
            for &yi in y {
                let u = yi - r[alpha];
                g -= za * u * soft_cube(u, s2);
            }
            for (b, n) in self.nuclei.iter().enumerate() {
                if b != alpha {
                    let u = r[alpha] - r[b];
                    g -= za * n.charge * u * soft_cube(u, s2);
                }
            }
        }
        g
    }
}

fn soft_inverse(u: f64, s2: f64) -> f64 {
    1.0 / (u * u + s2).sqrt()
}

/// `(u² + s²)^{-3/2}`
fn soft_cube(u: f64, s2: f64) -> f64 {
    let q = u * u + s2;
    1.0 / (q * q.sqrt())
}

/// Declarative description of `V(x)` with closed-form gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Free,
    /// `Σ_j ½ m_j ω_j² (x_j − c_j)²`
    Harmonic {
        masses: Vec<f64>,
        frequencies: Vec<f64>,
        center: Vec<f64>,
    },
    /// `Σ_j κ_j x_j`
    UniformField { slope: Vec<f64> },
    /// `−q / √(|x − c|² + s²)` in any dimension.
    SoftCoulomb {
        softening: f64,
        charge: f64,
        center: Vec<f64>,
    },
    /// `−Z / √(|x − c|² + s²)` on a three-dimensional lattice.
    RegularizedCoulomb3d {
        softening: f64,
        charge: f64,
        center: Vec<f64>,
    },
    MolecularToy(MolecularToy),
    Sum { terms: Vec<PotentialSpec> },
}

impl PotentialSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            PotentialSpec::Free => "free",
            PotentialSpec::Harmonic { .. } => "harmonic",
            PotentialSpec::UniformField { .. } => "uniform_field",
            PotentialSpec::SoftCoulomb { .. } => "soft_coulomb",
            PotentialSpec::RegularizedCoulomb3d { .. } => "regularized_coulomb_3d",
            PotentialSpec::MolecularToy(_) => "molecular_toy",
            PotentialSpec::Sum { .. } => "sum",
        }
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        let check_len = |what: &str, v: &[f64]| {
            if v.len() == dims {
                Ok(())
            } else {
                Err(Error::InvalidPotential(format!(
                    "{}: {what} has {} entries for {dims} axes",
                    self.kind(),
                    v.len()
                )))
            }
        };
        let positive = |what: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidPotential(format!(
                    "{}: {what} must be positive, got {v}",
                    self.kind()
                )))
            }
        };
        match self {
            PotentialSpec::Free => Ok(()),
            PotentialSpec::Harmonic {
                masses,
                frequencies,
                center,
            } => {
                check_len("masses", masses)?;
                check_len("frequencies", frequencies)?;
                check_len("center", center)?;
                masses.iter().try_for_each(|&m| positive("mass", m))?;
                frequencies.iter().try_for_each(|&w| positive("frequency", w))
            }
            PotentialSpec::UniformField { slope } => {
                check_len("slope", slope)?;
                if slope.iter().all(|k| k.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidPotential("uniform_field: non-finite slope".into()))
                }
            }
            PotentialSpec::SoftCoulomb {
                softening,
                charge,
                center,
            } => {
                check_len("center", center)?;
                positive("softening", *softening)?;
                positive("charge", *charge)
            }
            PotentialSpec::RegularizedCoulomb3d {
                softening,
                charge,
                center,
            } => {
                if dims != 3 {
                    return Err(Error::InvalidPotential(format!(
                        "regularized_coulomb_3d needs a 3-dimensional lattice, got {dims}"
                    )));
                }
                check_len("center", center)?;
                positive("softening", *softening)?;
                positive("charge", *charge)
            }
            PotentialSpec::MolecularToy(toy) => {
                if toy.electrons == 0 {
                    return Err(Error::InvalidPotential("molecular_toy: no electrons".into()));
                }
                if toy.nuclei.is_empty() {
                    return Err(Error::InvalidPotential("molecular_toy: no nuclei".into()));
                }
                positive("softening", toy.softening)?;
                for n in &toy.nuclei {
                    positive("nuclear charge", n.charge)?;
                    positive("nuclear mass", n.mass)?;
                }
                if toy.dims() != dims {
                    return Err(Error::InvalidPotential(format!(
                        "molecular_toy: {} electrons + {} dynamic nuclei need {} axes, lattice has {dims}",
                        toy.electrons,
                        toy.dynamic_nuclei(),
                        toy.dims()
                    )));
                }
                Ok(())
            }
            PotentialSpec::Sum { terms } => {
                if terms.is_empty() {
                    return Err(Error::InvalidPotential("sum: no terms".into()));
                }
                terms.iter().try_for_each(|t| t.validate(dims))
            }
        }
    }

    /// Smallest softening length among the Coulomb-type terms.
    pub fn min_softening(&self) -> Option<f64> {
        match self {
            PotentialSpec::SoftCoulomb { softening, .. }
            | PotentialSpec::RegularizedCoulomb3d { softening, .. } => Some(*softening),
            PotentialSpec::MolecularToy(toy) => Some(toy.softening),
            PotentialSpec::Sum { terms } => terms
                .iter()
                .filter_map(|t| t.min_softening())
                .reduce(f64::min),
            _ => None,
        }
    }

    /// Notes for softenings the grid cannot resolve (`s < h`).
    pub fn resolution_warnings(&self, lattice: &Lattice) -> Vec<String> {
        let h = lattice.max_spacing();
        match self.min_softening() {
            Some(s) if s < h => vec![format!(
                "{}: softening {s} is below the grid spacing {h}; the core is not resolved",
                self.kind()
            )],
            _ => Vec::new(),
        }
    }

    /// Masses implied by the potential itself (molecular model only).
    pub fn natural_masses(&self) -> Option<Vec<f64>> {
        match self {
            PotentialSpec::MolecularToy(toy) => Some(toy.masses()),
            PotentialSpec::Sum { terms } => terms.iter().find_map(|t| t.natural_masses()),
            _ => None,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            PotentialSpec::Free => 0.0,
            PotentialSpec::Harmonic {
                masses,
                frequencies,
                center,
            } => x
                .iter()
                .enumerate()
                .map(|(j, &xj)| 0.5 * masses[j] * frequencies[j].powi(2) * (xj - center[j]).powi(2))
                .sum(),
            PotentialSpec::UniformField { slope } => x.iter().zip(slope).map(|(a, k)| a * k).sum(),
            PotentialSpec::SoftCoulomb {
                softening,
                charge,
                center,
            }
            | PotentialSpec::RegularizedCoulomb3d {
                softening,
                charge,
                center,
            } => -charge / (dist_sqr(x, center) + softening * softening).sqrt(),
            PotentialSpec::MolecularToy(toy) => toy.value(x),
            PotentialSpec::Sum { terms } => terms.iter().map(|t| t.value(x)).sum(),
        }
    }

    /// `∂V/∂x_axis`, closed form.
    pub fn gradient(&self, x: &[f64], axis: usize) -> f64 {
        match self {
            PotentialSpec::Free => 0.0,
            PotentialSpec::Harmonic {
                masses,
                frequencies,
                center,
            } => masses[axis] * frequencies[axis].powi(2) * (x[axis] - center[axis]),
            PotentialSpec::UniformField { slope } => slope[axis],
            PotentialSpec::SoftCoulomb {
                softening,
                charge,
                center,
            }
            | PotentialSpec::RegularizedCoulomb3d {
                softening,
                charge,
                center,
            } => {
                let q = dist_sqr(x, center) + softening * softening;
                charge * (x[axis] - center[axis]) / (q * q.sqrt())
            }
            PotentialSpec::MolecularToy(toy) => toy.gradient(x, axis),
            PotentialSpec::Sum { terms } => terms.iter().map(|t| t.gradient(x, axis)).sum(),
        }
    }

    /// `|∇V|`
    pub fn gradient_magnitude(&self, x: &[f64]) -> f64 {
        (0..x.len())
            .map(|j| self.gradient(x, j).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn dist_sqr(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `V` sampled on the position grid.
pub fn eval_potential(spec: &PotentialSpec, lattice: &Lattice) -> Result<Vec<f64>> {
    spec.validate(lattice.dims())?;
    Ok(lattice.position_field(|x| spec.value(x)))
}

/// `∂V/∂x_axis` sampled on the position grid.
pub fn eval_grad(spec: &PotentialSpec, lattice: &Lattice, axis: usize) -> Result<Vec<f64>> {
    spec.validate(lattice.dims())?;
    check_axis(lattice, axis)?;
    Ok(lattice.position_field(|x| spec.gradient(x, axis)))
}

fn check_axis(lattice: &Lattice, axis: usize) -> Result<()> {
    if axis < lattice.dims() {
        Ok(())
    } else {
        Err(Error::InvalidPotential(format!(
            "axis {axis} out of range for a {}-dimensional lattice",
            lattice.dims()
        )))
    }
}

/// Square-root factorization of one force component: `f = √|∂_jV|`,
/// `g = sgn(∂_jV)·√|∂_jV|`, so that `f·g = ∂_jV` pointwise.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl FieldPair {
    pub fn from_gradient(grad: &[f64]) -> Self {
        let f: Vec<f64> = grad.iter().map(|d| d.abs().sqrt()).collect();
        let g = grad
            .iter()
            .zip(&f)
            .map(|(d, r)| if *d < 0.0 { -r } else { *r })
            .collect();
        Self { f, g }
    }

    pub fn product(&self) -> Vec<f64> {
        self.f.iter().zip(&self.g).map(|(a, b)| a * b).collect()
    }

    /// `⟨ψ, −∂_jV ψ⟩ = −⟨fψ, gψ⟩`
    pub fn force_form(&self, psi: &WaveState) -> f64 {
        let amps = psi.amplitudes();
        let s: f64 = amps
            .iter()
            .zip(self.f.iter().zip(&self.g))
            .map(|(z, (f, g))| (f * z.conj() * (g * z)).re)
            .sum();
        -s * psi.lattice().weight()
    }
}

pub fn sqrt_factorization(spec: &PotentialSpec, lattice: &Lattice, axis: usize) -> Result<FieldPair> {
    Ok(FieldPair::from_gradient(&eval_grad(spec, lattice, axis)?))
}

/// Spectral multiplier `Σ_j p_j²/(2 m_j)` in transform order.
pub fn kinetic_multiplier(lattice: &Lattice, masses: &MassVector) -> Vec<f64> {
    let m = masses.as_slice().to_vec();
    lattice.momentum_field(move |p| p.iter().zip(&m).map(|(pj, mj)| pj * pj / (2.0 * mj)).sum())
}

/// Multiply in momentum space by a real field.
pub(crate) fn spectral_multiply(psi: &WaveState, multiplier: &[f64]) -> Result<WaveState> {
    psi.expect_repr(Representation::Position)?;
    let lattice = psi.lattice();
    let mut buf = psi.amplitudes().to_vec();
    lattice.forward_in_place(&mut buf);
    buf.par_iter_mut().with_min_len(crate::PAR_MIN_LEN).zip(multiplier).for_each(|(z, m)| *z *= m);
    lattice.inverse_in_place(&mut buf);
    Ok(psi.derived(buf))
}

fn pointwise(psi: &WaveState, field: &[f64]) -> WaveState {
    psi.derived(psi.amplitudes().iter().zip(field).map(|(z, v)| z * v).collect())
}

/// Kinetic operator on its own; needs no potential.
pub fn apply_kinetic(psi: &WaveState, masses: &MassVector) -> Result<WaveState> {
    if masses.len() != psi.lattice().dims() {
        return Err(Error::InvalidPotential("mass vector does not match lattice".into()));
    }
    spectral_multiply(psi, &kinetic_multiplier(psi.lattice(), masses))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Position(usize),
    Momentum(usize),
    Energy,
    Force(usize),
}

/// Real mean value plus the imaginary part that hermiticity should kill.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    pub imag_residue: f64,
}

/// The force mean evaluated directly and through the √|∂V| factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceExpectation {
    pub direct: f64,
    pub factorized: f64,
}

impl ForceExpectation {
    pub fn discrepancy(&self) -> f64 {
        (self.direct - self.factorized).abs()
    }
}

/// All per-record quantities of a trajectory sample, from one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub norm: f64,
    pub energy: f64,
    pub x_mean: Vec<f64>,
    pub p_mean: Vec<f64>,
    pub force_mean: Vec<f64>,
    pub qform_x: Vec<f64>,
    pub qform_p: Vec<f64>,
    pub x_opnorm: Vec<f64>,
    pub p_opnorm: Vec<f64>,
    pub h_opnorm: f64,
    pub boundary_mass: f64,
}

/// `H = T + V` on a lattice, with every field precomputed.
///
/// Immutable once built; safe to share between threads.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    lattice: Arc<Lattice>,
    spec: PotentialSpec,
    masses: MassVector,
    potential: Vec<f64>,
    gradients: Vec<Vec<f64>>,
    factorizations: Vec<FieldPair>,
    kinetic: Vec<f64>,
    positions: Vec<Vec<f64>>,
    momenta: Vec<Vec<f64>>,
    warnings: Vec<String>,
}

impl Hamiltonian {
    pub fn new(lattice: Arc<Lattice>, spec: PotentialSpec, masses: MassVector) -> Result<Self> {
        let d = lattice.dims();
        if masses.len() != d {
            return Err(Error::InvalidPotential(format!(
                "{} masses for a {d}-dimensional lattice",
                masses.len()
            )));
        }
        let potential = eval_potential(&spec, &lattice)?;
        let gradients: Vec<Vec<f64>> = (0..d)
            .map(|j| eval_grad(&spec, &lattice, j))
            .collect::<Result<_>>()?;
        let factorizations = gradients.iter().map(|g| FieldPair::from_gradient(g)).collect();
        let kinetic = kinetic_multiplier(&lattice, &masses);
        let positions = (0..d)
            .map(|j| lattice.position_field(|x| x[j]))
            .collect();
        let momenta = (0..d)
            .map(|j| lattice.momentum_field(|p| p[j]))
            .collect();
        let warnings = spec.resolution_warnings(&lattice);
        Ok(Self {
            lattice,
            spec,
            masses,
            potential,
            gradients,
            factorizations,
            kinetic,
            positions,
            momenta,
            warnings,
        })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn masses(&self) -> &MassVector {
        &self.masses
    }

    pub fn dims(&self) -> usize {
        self.lattice.dims()
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn gradient(&self, axis: usize) -> &[f64] {
        &self.gradients[axis]
    }

    pub fn factorization(&self, axis: usize) -> &FieldPair {
        &self.factorizations[axis]
    }

    pub fn kinetic_multiplier(&self) -> &[f64] {
        &self.kinetic
    }

    /// Resolution notes collected while building the fields.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn check(&self, psi: &WaveState) -> Result<()> {
        psi.expect_repr(Representation::Position)?;
        if Arc::ptr_eq(psi.lattice(), &self.lattice) || psi.lattice().spec() == self.lattice.spec() {
            Ok(())
        } else {
            Err(Error::LatticeMismatch)
        }
    }

    pub fn apply_t(&self, psi: &WaveState) -> Result<WaveState> {
        self.check(psi)?;
        spectral_multiply(psi, &self.kinetic)
    }

    pub fn apply_v(&self, psi: &WaveState) -> Result<WaveState> {
        self.check(psi)?;
        Ok(pointwise(psi, &self.potential))
    }

    pub fn apply_h(&self, psi: &WaveState) -> Result<WaveState> {
        let mut out = self.apply_t(psi)?;
        out.amplitudes_mut()
            .par_iter_mut().with_min_len(crate::PAR_MIN_LEN)
            .zip(psi.amplitudes())
            .zip(&self.potential)
            .for_each(|((h, z), v)| *h += z * v);
        Ok(out)
    }

    pub fn apply_x(&self, psi: &WaveState, axis: usize) -> Result<WaveState> {
        self.check(psi)?;
        check_axis(&self.lattice, axis)?;
        Ok(pointwise(psi, &self.positions[axis]))
    }

    pub fn apply_p(&self, psi: &WaveState, axis: usize) -> Result<WaveState> {
        self.check(psi)?;
        check_axis(&self.lattice, axis)?;
        spectral_multiply(psi, &self.momenta[axis])
    }

    /// Multiply by `∂V/∂x_axis`.
    pub fn apply_grad(&self, psi: &WaveState, axis: usize) -> Result<WaveState> {
        self.check(psi)?;
        check_axis(&self.lattice, axis)?;
        Ok(pointwise(psi, &self.gradients[axis]))
    }

    pub fn apply(&self, psi: &WaveState, observable: Observable) -> Result<WaveState> {
        match observable {
            Observable::Position(j) => self.apply_x(psi, j),
            Observable::Momentum(j) => self.apply_p(psi, j),
            Observable::Energy => self.apply_h(psi),
            Observable::Force(j) => {
                let mut out = self.apply_grad(psi, j)?;
                out.scale(Complex64::new(-1.0, 0.0));
                Ok(out)
            }
        }
    }

    /// `⟨ψ, Aψ⟩ / ‖ψ‖²`, real part, with the imaginary part as a diagnostic.
    pub fn expect(&self, psi: &WaveState, observable: Observable) -> Result<Expectation> {
        let n2 = psi.norm_sqr();
        if !(n2 > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let a_psi = self.apply(psi, observable)?;
        let z = psi.inner(&a_psi)? / n2;
        Ok(Expectation {
            value: z.re,
            imag_residue: z.im,
        })
    }

    /// `⟨ψ, −∂_jV ψ⟩ / ‖ψ‖²` both directly and as `−⟨fψ, gψ⟩ / ‖ψ‖²`.
    pub fn expect_force(&self, psi: &WaveState, axis: usize) -> Result<ForceExpectation> {
        self.check(psi)?;
        check_axis(&self.lattice, axis)?;
        let n2 = psi.norm_sqr();
        if !(n2 > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let w = self.lattice.weight();
        let direct = -w
            * psi
                .amplitudes()
                .iter()
                .zip(&self.gradients[axis])
                .map(|(z, g)| g * z.norm_sqr())
                .sum::<f64>()
            / n2;
        let factorized = self.factorizations[axis].force_form(psi) / n2;
        Ok(ForceExpectation { direct, factorized })
    }

    /// `i(⟨Hψ, Aψ⟩ − ⟨Aψ, Hψ⟩)` for `A ∈ {X_j, P_j}`, both inner products
    /// evaluated separately. Not divided by `‖ψ‖²`.
    pub fn commutator_form(&self, psi: &WaveState, observable: Observable) -> Result<Expectation> {
        if !matches!(observable, Observable::Position(_) | Observable::Momentum(_)) {
            return Err(Error::InvalidPotential(
                "commutator form is defined for X_j and P_j".into(),
            ));
        }
        let h_psi = self.apply_h(psi)?;
        let a_psi = self.apply(psi, observable)?;
        let q = Complex64::i() * (h_psi.inner(&a_psi)? - a_psi.inner(&h_psi)?);
        Ok(Expectation {
            value: q.re,
            imag_residue: q.im,
        })
    }

    /// Every record quantity of the trajectory recorder, using `2 + d`
    /// transforms. Means and forms are divided by `‖ψ‖²`.
    pub fn snapshot(&self, psi: &WaveState) -> Result<Snapshot> {
        self.check(psi)?;
        let d = self.dims();
        let lattice = &self.lattice;
        let w = lattice.weight();
        let amps = psi.amplitudes();
        let n2 = psi.norm_sqr();
        if !(n2 > 0.0) {
            return Err(Error::ZeroNorm);
        }

        let mut hat = amps.to_vec();
        lattice.forward_in_place(&mut hat);

        let mut h_psi: Vec<Complex64> = hat.iter().zip(&self.kinetic).map(|(z, k)| z * k).collect();
        lattice.inverse_in_place(&mut h_psi);
        h_psi
            .par_iter_mut().with_min_len(crate::PAR_MIN_LEN)
            .zip(amps)
            .zip(&self.potential)
            .for_each(|((h, z), v)| *h += z * v);

        let energy = (inner_slices(amps, &h_psi) * w).re / n2;
        let h_opnorm = (w * h_psi.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();

        let mut x_mean = Vec::with_capacity(d);
        let mut p_mean = Vec::with_capacity(d);
        let mut force_mean = Vec::with_capacity(d);
        let mut qform_x = Vec::with_capacity(d);
        let mut qform_p = Vec::with_capacity(d);
        let mut x_opnorm = Vec::with_capacity(d);
        let mut p_opnorm = Vec::with_capacity(d);
        let i = Complex64::i();
        for j in 0..d {
            let x = &self.positions[j];
            let p = &self.momenta[j];
            let x_psi: Vec<Complex64> = amps.iter().zip(x).map(|(z, xv)| z * xv).collect();
            let mut p_psi: Vec<Complex64> = hat.iter().zip(p).map(|(z, pv)| z * pv).collect();
            let p_sq: f64 = p_psi.iter().map(|z| z.norm_sqr()).sum();
            let p_lin: f64 = hat.iter().zip(p).map(|(z, pv)| pv * z.norm_sqr()).sum();
            lattice.inverse_in_place(&mut p_psi);

            x_mean.push(w * amps.iter().zip(x).map(|(z, xv)| xv * z.norm_sqr()).sum::<f64>() / n2);
            p_mean.push(w * p_lin / n2);
            force_mean.push(
                -w * amps
                    .iter()
                    .zip(&self.gradients[j])
                    .map(|(z, g)| g * z.norm_sqr())
                    .sum::<f64>()
                    / n2,
            );
            let qx = i * (inner_slices(&h_psi, &x_psi) - inner_slices(&x_psi, &h_psi)) * w;
            let qp = i * (inner_slices(&h_psi, &p_psi) - inner_slices(&p_psi, &h_psi)) * w;
            qform_x.push(qx.re / n2);
            qform_p.push(qp.re / n2);
            x_opnorm.push((w * x_psi.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt());
            p_opnorm.push((w * p_sq).sqrt());
        }

        Ok(Snapshot {
            norm: n2.sqrt(),
            energy,
            x_mean,
            p_mean,
            force_mean,
            qform_x,
            qform_p,
            x_opnorm,
            p_opnorm,
            h_opnorm,
            boundary_mass: psi.boundary_mass(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use crate::states::gaussian_packet;
    use approx::assert_relative_eq;

    fn line(n: usize, a: f64, b: f64) -> Arc<Lattice> {
        Lattice::new(LatticeSpec::cube(1, n, a, b)).unwrap()
    }

    fn harmonic1() -> PotentialSpec {
        PotentialSpec::Harmonic {
            masses: vec![1.0],
            frequencies: vec![1.0],
            center: vec![0.0],
        }
    }

    fn soft1(s: f64) -> PotentialSpec {
        PotentialSpec::SoftCoulomb {
            softening: s,
            charge: 1.0,
            center: vec![0.0],
        }
    }

    #[test]
    fn catalog_point_values() {
        assert_eq!(PotentialSpec::Free.value(&[1.3]), 0.0);
        assert_eq!(harmonic1().value(&[2.0]), 2.0);
        assert_eq!(soft1(1.0).value(&[0.0]), -1.0);
        assert_eq!(harmonic1().gradient(&[1.0], 0), 1.0);
        assert_eq!(PotentialSpec::Free.gradient(&[1.0], 0), 0.0);
        // independent closed form: q x / (x² + s²)^{3/2} at x = s = 1
        assert_relative_eq!(soft1(1.0).gradient(&[1.0], 0), 0.353_553_390_593_273_8, epsilon = 1e-15);
    }

    #[test]
    fn gradients_match_central_differences() {
        let toy = PotentialSpec::MolecularToy(MolecularToy {
            electrons: 2,
            nuclei: vec![
                Nucleus { charge: 1.0, mass: 1836.0, position: Some(-0.7) },
                Nucleus { charge: 2.0, mass: 3000.0, position: None },
            ],
            softening: 0.8,
        });
        let specs = [
            (toy, vec![0.3, -1.1, 0.9]),
            (
                PotentialSpec::RegularizedCoulomb3d { softening: 0.5, charge: 2.0, center: vec![0.1, 0.0, -0.2] },
                vec![0.4, -0.3, 0.2],
            ),
            (
                PotentialSpec::Sum {
                    terms: vec![
                        PotentialSpec::UniformField { slope: vec![0.3, -0.2] },
                        PotentialSpec::SoftCoulomb { softening: 1.0, charge: 1.0, center: vec![0.5, 0.5] },
                        PotentialSpec::Harmonic { masses: vec![1.0, 2.0], frequencies: vec![0.5, 1.5], center: vec![0.0, 1.0] },
                    ],
                },
                vec![0.2, -0.4],
            ),
        ];
        let eps = 1e-5;
        for (spec, x) in specs {
            spec.validate(x.len()).unwrap();
            for j in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += eps;
                xm[j] -= eps;
                let fd = (spec.value(&xp) - spec.value(&xm)) / (2.0 * eps);
                assert_relative_eq!(spec.gradient(&x, j), fd, epsilon = 1e-8, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn validation_errors() {
        assert!(soft1(0.0).validate(1).is_err());
        assert!(soft1(-1.0).validate(1).is_err());
        assert!(harmonic1().validate(2).is_err());
        let coul = PotentialSpec::RegularizedCoulomb3d { softening: 1.0, charge: 1.0, center: vec![0.0] };
        assert!(coul.validate(1).is_err());
        let toy = PotentialSpec::MolecularToy(MolecularToy {
            electrons: 1,
            nuclei: vec![Nucleus { charge: 0.0, mass: 1.0, position: Some(0.0) }],
            softening: 1.0,
        });
        assert!(toy.validate(1).is_err());
        assert!(MassVector::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn unresolved_softening_warns() {
        let l = line(64, -8.0, 8.0);
        assert!(soft1(1.0).resolution_warnings(&l).is_empty());
        assert_eq!(soft1(0.1).resolution_warnings(&l).len(), 1);
    }

    #[test]
    fn sqrt_factorization_signs() {
        let l = line(16, -8.0, 8.0);
        let pair = sqrt_factorization(&harmonic1(), &l, 0).unwrap();
        let xs = l.positions(0);
        let at = |x: f64| xs.iter().position(|&v| v == x).unwrap();
        assert_eq!((pair.f[at(4.0)], pair.g[at(4.0)]), (2.0, 2.0));
        assert_eq!((pair.f[at(-4.0)], pair.g[at(-4.0)]), (2.0, -2.0));
        let grad = eval_grad(&soft1(0.7), &l, 0).unwrap();
        let pair = FieldPair::from_gradient(&grad);
        for (p, g) in pair.product().iter().zip(&grad) {
            assert!((p - g).abs() <= 1e-12 * g.abs().max(1e-300));
            assert!(pair.f.iter().all(|&f| f >= 0.0));
        }
    }

    #[test]
    fn kinetic_on_plane_wave_and_constant() {
        let l = line(64, 0.0, 10.0);
        let masses = MassVector::uniform(1, 1.0).unwrap();
        let k = l.momenta(0)[5];
        let wave = WaveState::from_fn(Arc::clone(&l), |x| Complex64::from_polar(1.0, k * x[0])).unwrap();
        let t_wave = apply_kinetic(&wave, &masses).unwrap();
        let expected = wave.combine(Complex64::new(k * k / 2.0, 0.0), &wave, Complex64::new(0.0, 0.0)).unwrap();
        assert!(t_wave.distance(&expected).unwrap() < 1e-12);
        let flat = WaveState::from_fn(Arc::clone(&l), |_| Complex64::new(0.3, 0.0)).unwrap();
        assert!(apply_kinetic(&flat, &masses).unwrap().norm() < 1e-13);
    }

    #[test]
    fn position_and_momentum_operators() {
        let l = line(8, -1.0, 1.0);
        let h = Hamiltonian::new(Arc::clone(&l), PotentialSpec::Free, MassVector::uniform(1, 1.0).unwrap()).unwrap();
        let mut amps = vec![Complex64::new(0.0, 0.0); 8];
        amps[7] = Complex64::new(1.0, 0.0);
        let delta = WaveState::new(Arc::clone(&l), amps).unwrap();
        let xd = h.apply_x(&delta, 0).unwrap();
        assert_eq!(xd.amplitudes()[7], Complex64::new(0.75, 0.0));
        assert!(xd.amplitudes()[..7].iter().all(|z| z.norm() == 0.0));

        let k = l.momenta(0)[2];
        let wave = WaveState::from_fn(Arc::clone(&l), |x| Complex64::from_polar(1.0, k * x[0])).unwrap();
        let pw = h.apply_p(&wave, 0).unwrap();
        for (a, b) in pw.amplitudes().iter().zip(wave.amplitudes()) {
            assert!((a - b * k).norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_means_and_energy() {
        let l = line(256, -8.0, 8.0);
        let free = Hamiltonian::new(Arc::clone(&l), PotentialSpec::Free, MassVector::uniform(1, 1.0).unwrap()).unwrap();
        let psi = gaussian_packet(&l, &[0.5], &[2.0], &[1.0]).unwrap();
        let x = free.expect(&psi, Observable::Position(0)).unwrap();
        let p = free.expect(&psi, Observable::Momentum(0)).unwrap();
        assert!((x.value - 0.5).abs() < 1e-8 && x.imag_residue.abs() < 1e-10);
        assert!((p.value - 2.0).abs() < 1e-8 && p.imag_residue.abs() < 1e-10);

        let real = gaussian_packet(&l, &[0.3], &[0.0], &[0.7]).unwrap();
        assert!(free.expect(&real, Observable::Momentum(0)).unwrap().value.abs() < 1e-12);

        // ground-state width a = 1/2: ⟨p²⟩/2 + ⟨x²⟩/2 = a/2 + 1/(8a) = 1/2
        let osc = Hamiltonian::new(Arc::clone(&l), harmonic1(), MassVector::uniform(1, 1.0).unwrap()).unwrap();
        let ground = gaussian_packet(&l, &[0.0], &[0.0], &[0.5]).unwrap();
        let e = osc.expect(&ground, Observable::Energy).unwrap();
        assert!((e.value - 0.5).abs() < 1e-6);

        let shifted = gaussian_packet(&l, &[1.0], &[0.0], &[0.5]).unwrap();
        let f = osc.expect_force(&shifted, 0).unwrap();
        assert!((f.direct + 1.0).abs() < 1e-6);
        assert!(f.discrepancy() < 1e-12);
        let via_op = osc.expect(&shifted, Observable::Force(0)).unwrap();
        assert!((via_op.value - f.direct).abs() < 1e-12);
    }

    #[test]
    fn commutator_forms() {
        let l = line(256, -10.0, 10.0);
        let masses = MassVector::uniform(1, 1.0).unwrap();
        let free = Hamiltonian::new(Arc::clone(&l), PotentialSpec::Free, masses.clone()).unwrap();
        let psi = gaussian_packet(&l, &[0.5], &[2.0], &[1.0]).unwrap();
        let qx = free.commutator_form(&psi, Observable::Position(0)).unwrap();
        assert!((qx.value - 2.0).abs() < 1e-6);
        assert!(qx.imag_residue.abs() < 1e-10);
        let qp = free.commutator_form(&psi, Observable::Momentum(0)).unwrap();
        assert!(qp.value.abs() < 1e-10);

        let osc = Hamiltonian::new(Arc::clone(&l), harmonic1(), masses).unwrap();
        let shifted = gaussian_packet(&l, &[1.0], &[0.0], &[0.5]).unwrap();
        let qp = osc.commutator_form(&shifted, Observable::Momentum(0)).unwrap();
        assert!((qp.value + 1.0).abs() < 1e-6);
        assert!(osc.commutator_form(&shifted, Observable::Energy).is_err());
    }

    #[test]
    fn canonical_commutator() {
        let l = line(256, -10.0, 10.0);
        let h = Hamiltonian::new(Arc::clone(&l), PotentialSpec::Free, MassVector::uniform(1, 1.0).unwrap()).unwrap();
        let psi = gaussian_packet(&l, &[0.4], &[-1.0], &[0.8]).unwrap();
        let xp = h.apply_x(&h.apply_p(&psi, 0).unwrap(), 0).unwrap();
        let px = h.apply_p(&h.apply_x(&psi, 0).unwrap(), 0).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let c = psi.inner(&xp.combine(one, &px, -one).unwrap()).unwrap();
        assert!((c - Complex64::i() * psi.norm_sqr()).norm() < 1e-8);
    }

    #[test]
    fn snapshot_agrees_with_operator_route() {
        let l = Lattice::new(LatticeSpec::cube(2, 32, -6.0, 6.0)).unwrap();
        let spec = PotentialSpec::SoftCoulomb { softening: 1.0, charge: 1.0, center: vec![0.2, -0.1] };
        let h = Hamiltonian::new(Arc::clone(&l), spec, MassVector::new(vec![1.0, 2.0]).unwrap()).unwrap();
        let psi = gaussian_packet(&l, &[0.5, -0.3], &[0.4, 0.7], &[0.6, 0.9]).unwrap();
        let snap = h.snapshot(&psi).unwrap();
        for j in 0..2 {
            let x = h.expect(&psi, Observable::Position(j)).unwrap().value;
            let p = h.expect(&psi, Observable::Momentum(j)).unwrap().value;
            let f = h.expect_force(&psi, j).unwrap().direct;
            let qx = h.commutator_form(&psi, Observable::Position(j)).unwrap().value;
            let qp = h.commutator_form(&psi, Observable::Momentum(j)).unwrap().value;
            let xn = h.apply_x(&psi, j).unwrap().norm();
            let pn = h.apply_p(&psi, j).unwrap().norm();
            for (a, b) in [(snap.x_mean[j], x), (snap.p_mean[j], p), (snap.force_mean[j], f),
                           (snap.qform_x[j], qx), (snap.qform_p[j], qp),
                           (snap.x_opnorm[j], xn), (snap.p_opnorm[j], pn)] {
                assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-12);
            }
        }
        assert_relative_eq!(snap.energy, h.expect(&psi, Observable::Energy).unwrap().value, epsilon = 1e-12);
        assert_relative_eq!(snap.h_opnorm, h.apply_h(&psi).unwrap().norm(), epsilon = 1e-12);
    }
}
