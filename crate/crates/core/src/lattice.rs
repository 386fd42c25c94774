//! Periodic d-dimensional grids and the unitary transform between position
//! and momentum representations.
//!
//! Grids are stored row-major: the last axis is contiguous. Momentum modes use
//! the standard discrete-transform ordering `0, 1, …, n/2−1, −n/2, …, −1`.
//! Both transform directions carry a `1/√N` factor, so the quadrature inner
//! product `w·Σ conj(φ)ψ` is preserved exactly (up to roundoff).

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis point counts and extents `[extent_min, extent_max)` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub points: Vec<usize>,
    pub extent_min: Vec<f64>,
    pub extent_max: Vec<f64>,
}

impl LatticeSpec {
    pub fn new(points: Vec<usize>, extent_min: Vec<f64>, extent_max: Vec<f64>) -> Self {
        Self {
            points,
            extent_min,
            extent_max,
        }
    }

    /// Same point count and extent on every axis.
    pub fn cube(dims: usize, points: usize, min: f64, max: f64) -> Self {
        Self::new(vec![points; dims], vec![min; dims], vec![max; dims])
    }

    pub fn dims(&self) -> usize {
        self.points.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.points.len();
        if d < 1 {
            return Err(Error::InvalidLattice("at least one axis is required".into()));
        }
        if self.extent_min.len() != d || self.extent_max.len() != d {
            return Err(Error::InvalidLattice(format!(
                "{d} axes but {} extent_min and {} extent_max entries",
                self.extent_min.len(),
                self.extent_max.len()
            )));
        }
        for (j, &n) in self.points.iter().enumerate() {
            if n < 4 || !n.is_power_of_two() {
                return Err(Error::InvalidLattice(format!(
                    "axis {j}: point count {n} must be a power of two and at least 4"
                )));
            }
            let (a, b) = (self.extent_min[j], self.extent_max[j]);
            if !(a.is_finite() && b.is_finite()) || b <= a {
                return Err(Error::InvalidLattice(format!(
                    "axis {j}: empty extent [{a}, {b})"
                )));
            }
        }
        Ok(())
    }
}

/// A validated periodic grid with cached transform plans.
///
/// Immutable after construction; share it behind an `Arc`.
pub struct Lattice {
    spec: LatticeSpec,
    spacings: Vec<f64>,
    positions: Vec<Vec<f64>>,
    momenta: Vec<Vec<f64>>,
    strides: Vec<usize>,
    len: usize,
    weight: f64,
    boundary: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lattice")
            .field("spec", &self.spec)
            .field("spacings", &self.spacings)
            .field("weight", &self.weight)
            .finish()
    }
}

impl Lattice {
    pub fn new(spec: LatticeSpec) -> Result<Arc<Self>> {
        spec.validate()?;
        let d = spec.dims();
        let mut spacings = Vec::with_capacity(d);
        let mut positions = Vec::with_capacity(d);
        let mut momenta = Vec::with_capacity(d);
        let mut planner = FftPlanner::new();
        let mut forward = Vec::with_capacity(d);
        let mut inverse = Vec::with_capacity(d);
        for j in 0..d {
            let n = spec.points[j];
            let (a, b) = (spec.extent_min[j], spec.extent_max[j]);
            let length = b - a;
            let h = length / n as f64;
            spacings.push(h);
            positions.push((0..n).map(|k| a + k as f64 * h).collect());
            momenta.push(
                (0..n)
                    .map(|k| {
                        let m = if k < n / 2 { k as i64 } else { k as i64 - n as i64 };
                        TAU * m as f64 / length
                    })
                    .collect(),
            );
            forward.push(planner.plan_fft_forward(n));
            inverse.push(planner.plan_fft_inverse(n));
        }
        let mut strides = vec![1usize; d];
        for j in (0..d.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * spec.points[j + 1];
        }
        let len = spec.points.iter().product();
        let weight = spacings.iter().product();

        let mut lattice = Self {
            spec,
            spacings,
            positions,
            momenta,
            strides,
            len,
            weight,
            boundary: Vec::new(),
            forward,
            inverse,
        };
        lattice.boundary = (0..len)
            .filter(|&flat| {
                (0..d).any(|j| {
                    let k = lattice.axis_index(flat, j);
                    k == 0 || k + 1 == lattice.spec.points[j]
                })
            })
            .collect();
        Ok(Arc::new(lattice))
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn dims(&self) -> usize {
        self.spec.dims()
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn points(&self, axis: usize) -> usize {
        self.spec.points[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacings[axis]
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacings.iter().cloned().fold(0.0, f64::max)
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.spec.extent_max[axis] - self.spec.extent_min[axis]
    }

    /// Midpoint of the box.
    pub fn center(&self) -> Vec<f64> {
        (0..self.dims())
            .map(|j| 0.5 * (self.spec.extent_min[j] + self.spec.extent_max[j]))
            .collect()
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        (0..self.dims())
            .map(|j| self.length(j).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Position coordinates `x_j(k)` along one axis.
    pub fn positions(&self, axis: usize) -> &[f64] {
        &self.positions[axis]
    }

    /// Momentum coordinates `p_j(k)` along one axis, in transform order.
    pub fn momenta(&self, axis: usize) -> &[f64] {
        &self.momenta[axis]
    }

    /// Quadrature weight `w = Π h_j`.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Index along `axis` of the flat grid index.
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.spec.points[axis]
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.strides)
            .map(|(k, s)| k * s)
            .sum()
    }

    /// Flat indices of the outermost layer of the box.
    pub fn boundary_indices(&self) -> &[usize] {
        &self.boundary
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims()
            && x.iter()
                .enumerate()
                .all(|(j, &v)| v >= self.spec.extent_min[j] && v < self.spec.extent_max[j])
    }

    /// Evaluate `f` at every position-grid point.
    pub fn position_field<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        self.map_grid(&self.positions, f)
    }

    /// Evaluate `f` at every momentum-grid point, in transform order.
    pub fn momentum_field<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        self.map_grid(&self.momenta, f)
    }

    fn map_grid<T, F>(&self, axes: &[Vec<f64>], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        let d = self.dims();
        (0..self.len)
            .into_par_iter()
            .map_init(
                || vec![0.0; d],
                |coords, flat| {
                    for (j, c) in coords.iter_mut().enumerate() {
                        *c = axes[j][self.axis_index(flat, j)];
                    }
                    f(coords)
                },
            )
            .collect()
    }

    /// Unitary forward transform in place (position → momentum).
    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Unitary inverse transform in place (momentum → position).
    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len, "buffer does not match lattice size");
        for (axis, plan) in plans.iter().enumerate() {
            let n = self.spec.points[axis];
            let inner = self.strides[axis];
            if inner == 1 {
                // contiguous lines; batch several per task
                let batch = n * (4096 / n).max(1);
                data.par_chunks_mut(batch).for_each(|chunk| plan.process(chunk));
            } else {
                let block = n * inner;
                data.par_chunks_mut(block).for_each(|blk| {
                    let mut buf = vec![Complex64::new(0.0, 0.0); block];
                    for row in 0..n {
                        for col in 0..inner {
                            buf[col * n + row] = blk[row * inner + col];
                        }
                    }
                    plan.process(&mut buf);
                    for row in 0..n {
                        for col in 0..inner {
                            blk[row * inner + col] = buf[col * n + row];
                        }
                    }
                });
            }
        }
        let scale = 1.0 / (self.len as f64).sqrt();
        data.par_iter_mut().with_min_len(crate::PAR_MIN_LEN).for_each(|z| *z *= scale);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Position,
    Momentum,
}

impl Representation {
    fn name(self) -> &'static str {
        match self {
            Representation::Position => "position",
            Representation::Momentum => "momentum",
        }
    }
}

/// Complex amplitudes over a lattice, in either representation.
#[derive(Debug, Clone)]
pub struct WaveState {
    lattice: Arc<Lattice>,
    amplitudes: Vec<Complex64>,
    repr: Representation,
}

impl WaveState {
    /// Position-space state from raw amplitudes; rejects NaN/Inf.
    pub fn new(lattice: Arc<Lattice>, amplitudes: Vec<Complex64>) -> Result<Self> {
        Self::with_representation(lattice, amplitudes, Representation::Position)
    }

    pub fn with_representation(
        lattice: Arc<Lattice>,
        amplitudes: Vec<Complex64>,
        repr: Representation,
    ) -> Result<Self> {
        if amplitudes.len() != lattice.len() {
            return Err(Error::InvalidState(format!(
                "{} amplitudes for a lattice of {} points",
                amplitudes.len(),
                lattice.len()
            )));
        }
        if let Some(k) = amplitudes.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self {
            lattice,
            amplitudes,
            repr,
        })
    }

    pub fn zeros(lattice: Arc<Lattice>) -> Self {
        let amplitudes = vec![Complex64::new(0.0, 0.0); lattice.len()];
        Self {
            lattice,
            amplitudes,
            repr: Representation::Position,
        }
    }

    /// Sample `f` on the position grid.
    pub fn from_fn<F>(lattice: Arc<Lattice>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let amplitudes = lattice.position_field(f);
        Self::new(lattice, amplitudes)
    }

    /// Wrap amplitudes produced by an operator acting on `self`.
    pub(crate) fn derived(&self, amplitudes: Vec<Complex64>) -> Self {
        debug_assert_eq!(amplitudes.len(), self.amplitudes.len());
        Self {
            lattice: Arc::clone(&self.lattice),
            amplitudes,
            repr: self.repr,
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn expect_repr(&self, expected: Representation) -> Result<()> {
        if self.repr == expected {
            Ok(())
        } else {
            Err(Error::WrongRepresentation {
                expected: expected.name(),
                found: self.repr.name(),
            })
        }
    }

    pub(crate) fn same_lattice(&self, other: &WaveState) -> Result<()> {
        if Arc::ptr_eq(&self.lattice, &other.lattice) || self.lattice.spec == other.lattice.spec {
            Ok(())
        } else {
            Err(Error::LatticeMismatch)
        }
    }

    /// Quadrature inner product `w·Σ conj(self)·other`.
    pub fn inner(&self, other: &WaveState) -> Result<Complex64> {
        self.same_lattice(other)?;
        if self.repr != other.repr {
            return Err(Error::WrongRepresentation {
                expected: self.repr.name(),
                found: other.repr.name(),
            });
        }
        Ok(inner_slices(&self.amplitudes, &other.amplitudes) * self.lattice.weight)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.lattice.weight * self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescale to unit norm.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        self.scale(Complex64::new(1.0 / n, 0.0));
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.amplitudes.iter_mut().for_each(|z| *z *= factor);
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: Complex64, other: &WaveState, b: Complex64) -> Result<WaveState> {
        self.same_lattice(other)?;
        if self.repr != other.repr {
            return Err(Error::WrongRepresentation {
                expected: self.repr.name(),
                found: other.repr.name(),
            });
        }
        let amplitudes = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(self.derived(amplitudes))
    }

    /// `‖self − other‖`.
    pub fn distance(&self, other: &WaveState) -> Result<f64> {
        let one = Complex64::new(1.0, 0.0);
        Ok(self.combine(one, other, -one)?.norm())
    }

    /// Probability weight `w·Σ|ψ|²` over the outermost grid layer.
    pub fn boundary_mass(&self) -> f64 {
        self.lattice.weight
            * self
                .lattice
                .boundary
                .iter()
                .map(|&k| self.amplitudes[k].norm_sqr())
                .sum::<f64>()
    }

    /// Quadrature integral `w·Σψ` of the field itself.
    pub fn integral(&self) -> Complex64 {
        self.amplitudes.iter().sum::<Complex64>() * self.lattice.weight
    }

    pub fn to_momentum(&self) -> Result<WaveState> {
        self.expect_repr(Representation::Position)?;
        let mut amplitudes = self.amplitudes.clone();
        self.lattice.forward_in_place(&mut amplitudes);
        Ok(Self {
            lattice: Arc::clone(&self.lattice),
            amplitudes,
            repr: Representation::Momentum,
        })
    }

    pub fn from_momentum(&self) -> Result<WaveState> {
        self.expect_repr(Representation::Momentum)?;
        let mut amplitudes = self.amplitudes.clone();
        self.lattice.inverse_in_place(&mut amplitudes);
        Ok(Self {
            lattice: Arc::clone(&self.lattice),
            amplitudes,
            repr: Representation::Position,
        })
    }
}

pub(crate) fn inner_slices(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(lattice: &Arc<Lattice>, rng: &mut ChaCha8Rng) -> WaveState {
        let amps = (0..lattice.len())
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        WaveState::new(Arc::clone(lattice), amps).unwrap()
    }

    #[test]
    fn spacing_and_coordinates() {
        let l = Lattice::new(LatticeSpec::cube(1, 8, -1.0, 1.0)).unwrap();
        assert_eq!(l.spacing(0), 0.25);
        assert_eq!(l.positions(0)[0], -1.0);
        assert_eq!(l.positions(0)[7], 0.75);
    }

    #[test]
    fn momentum_ordering() {
        let l = Lattice::new(LatticeSpec::cube(1, 4, 0.0, TAU)).unwrap();
        let p = l.momenta(0);
        let expect = [0.0, 1.0, -2.0, -1.0];
        for (a, b) in p.iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn two_dimensional_weight() {
        let spec = LatticeSpec::new(vec![8, 8], vec![-1.0, 0.0], vec![1.0, 4.0]);
        let l = Lattice::new(spec).unwrap();
        assert_eq!(l.len(), 64);
        assert_relative_eq!(l.weight(), 0.25 * 0.5);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Lattice::new(LatticeSpec::cube(1, 12, 0.0, 1.0)).is_err());
        assert!(Lattice::new(LatticeSpec::cube(1, 2, 0.0, 1.0)).is_err());
        assert!(Lattice::new(LatticeSpec::cube(1, 8, 1.0, 1.0)).is_err());
        assert!(Lattice::new(LatticeSpec::new(vec![], vec![], vec![])).is_err());
        assert!(Lattice::new(LatticeSpec::new(vec![8], vec![0.0, 0.0], vec![1.0])).is_err());
    }

    #[test]
    fn momentum_grid_symmetry() {
        let l = Lattice::new(LatticeSpec::cube(1, 16, -3.0, 5.0)).unwrap();
        let p = l.momenta(0);
        assert_eq!(p[0], 0.0);
        let unpaired: Vec<f64> = p
            .iter()
            .filter(|&&q| !p.iter().any(|&r| (r + q).abs() < 1e-12))
            .cloned()
            .collect();
        assert_eq!(unpaired.len(), 1);
        assert_relative_eq!(unpaired[0], -8.0 * TAU / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn boundary_layer_count() {
        let l = Lattice::new(LatticeSpec::cube(2, 8, 0.0, 1.0)).unwrap();
        assert_eq!(l.boundary_indices().len(), 64 - 36);
    }

    #[test]
    fn constant_goes_to_zero_mode() {
        let length = 4.0;
        let l = Lattice::new(LatticeSpec::cube(1, 16, 0.0, length)).unwrap();
        let psi = WaveState::from_fn(Arc::clone(&l), |_| c(length.powf(-0.5), 0.0)).unwrap();
        let hat = psi.to_momentum().unwrap();
        assert_relative_eq!(hat.norm(), 1.0, epsilon = 1e-14);
        for (k, z) in hat.amplitudes().iter().enumerate().skip(1) {
            assert!(z.norm() < 1e-14, "mode {k} = {z}");
        }
        // inverse: the single zero mode returns the constant
        let back = hat.from_momentum().unwrap();
        for z in back.amplitudes() {
            assert_relative_eq!(z.re, length.powf(-0.5), epsilon = 1e-14);
            assert!(z.im.abs() < 1e-14);
        }
    }

    #[test]
    fn plane_wave_single_mode() {
        let l = Lattice::new(LatticeSpec::cube(1, 32, -2.0, 2.0)).unwrap();
        let k = l.momenta(0)[3];
        let psi = WaveState::from_fn(Arc::clone(&l), |x| Complex64::from_polar(1.0, k * x[0])).unwrap();
        let hat = psi.to_momentum().unwrap();
        for (m, z) in hat.amplitudes().iter().enumerate() {
            if m == 3 {
                assert!(z.norm() > 1.0);
            } else {
                assert!(z.norm() < 1e-12, "mode {m} = {z}");
            }
        }
    }

    #[test]
    fn round_trip_parseval_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let specs = [
            LatticeSpec::cube(1, 64, -3.0, 3.0),
            LatticeSpec::new(vec![16, 8], vec![-1.0, 0.0], vec![1.0, 2.0]),
            LatticeSpec::cube(3, 8, -1.0, 1.0),
        ];
        for spec in specs {
            let l = Lattice::new(spec).unwrap();
            for _ in 0..100 {
                let psi = random_state(&l, &mut rng);
                let hat = psi.to_momentum().unwrap();
                assert!((hat.norm() - psi.norm()).abs() <= 1e-12 * psi.norm());
                let back = hat.from_momentum().unwrap();
                assert!(back.distance(&psi).unwrap() <= 1e-12 * psi.norm());
            }
            let phi = random_state(&l, &mut rng).to_momentum().unwrap();
            let chi = random_state(&l, &mut rng).to_momentum().unwrap();
            let (a, b) = (c(0.3, -1.2), c(2.0, 0.5));
            let lhs = phi.combine(a, &chi, b).unwrap().from_momentum().unwrap();
            let rhs = phi
                .from_momentum()
                .unwrap()
                .combine(a, &chi.from_momentum().unwrap(), b)
                .unwrap();
            assert!(lhs.distance(&rhs).unwrap() <= 1e-12 * rhs.norm());
        }
    }

    #[test]
    fn inner_product_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = Lattice::new(LatticeSpec::cube(2, 16, -1.0, 1.0)).unwrap();
        let phi = random_state(&l, &mut rng);
        let psi = random_state(&l, &mut rng);
        let chi = random_state(&l, &mut rng);
        let pp = psi.inner(&psi).unwrap();
        assert!(pp.re >= 0.0 && pp.im.abs() < 1e-14);
        let a = phi.inner(&psi).unwrap();
        let b = psi.inner(&phi).unwrap();
        assert!((a - b.conj()).norm() < 1e-12);
        // sesquilinearity
        let (s, t) = (c(0.7, 0.2), c(-1.1, 0.4));
        let lin = phi.inner(&psi.combine(s, &chi, t).unwrap()).unwrap();
        let expect = s * phi.inner(&psi).unwrap() + t * phi.inner(&chi).unwrap();
        assert!((lin - expect).norm() < 1e-12 * (1.0 + expect.norm()));
        let anti = psi.combine(s, &chi, t).unwrap().inner(&phi).unwrap();
        let expect = s.conj() * psi.inner(&phi).unwrap() + t.conj() * chi.inner(&phi).unwrap();
        assert!((anti - expect).norm() < 1e-12 * (1.0 + expect.norm()));
    }

    #[test]
    fn distinct_modes_are_orthogonal() {
        let l = Lattice::new(LatticeSpec::cube(1, 64, 0.0, 10.0)).unwrap();
        let (k1, k2) = (l.momenta(0)[2], l.momenta(0)[61]);
        let a = WaveState::from_fn(Arc::clone(&l), |x| Complex64::from_polar(1.0, k1 * x[0])).unwrap();
        let b = WaveState::from_fn(Arc::clone(&l), |x| Complex64::from_polar(1.0, k2 * x[0])).unwrap();
        assert!(a.inner(&b).unwrap().norm() < 1e-12);
    }

    #[test]
    fn mismatches_rejected() {
        let a = Lattice::new(LatticeSpec::cube(1, 8, 0.0, 1.0)).unwrap();
        let b = Lattice::new(LatticeSpec::cube(1, 16, 0.0, 1.0)).unwrap();
        let x = WaveState::zeros(a);
        let y = WaveState::zeros(b);
        assert!(matches!(x.inner(&y), Err(Error::LatticeMismatch)));
        let xm = x.to_momentum().unwrap();
        assert!(x.inner(&xm).is_err());
        assert!(xm.to_momentum().is_err());
        assert!(x.from_momentum().is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let l = Lattice::new(LatticeSpec::cube(1, 4, 0.0, 1.0)).unwrap();
        let amps = vec![c(0.0, 0.0), c(f64::NAN, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert!(matches!(WaveState::new(l, amps), Err(Error::NonFinite(1))));
    }
}
