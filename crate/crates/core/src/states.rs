//! Initial and test wavefunctions.
//!
//! Besides Gaussian packets this module provides the two approximation devices
//! used to pass from smooth compactly supported functions to general `H²`
//! states: mollification by a unit-mass `C^∞` bump, and multiplication by a
//! smooth plateau cutoff `χ(x/R)`.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Representation, WaveState};

/// Generators refuse packets with more boundary mass than this.
pub const INITIAL_BOUNDARY_LIMIT: f64 = 1e-8;

/// Fraction of the box half-width used to localize random ensemble members.
pub const ENSEMBLE_CUTOFF_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    /// `exp(−Σ_j a_j (x_j − x0_j)² + i p0·x)`, normalized.
    Gaussian {
        center: Vec<f64>,
        momentum: Vec<f64>,
        width: Vec<f64>,
    },
    /// `exp(i p·x)`; `p` must lie on the momentum grid.
    PlaneWave { momentum: Vec<f64> },
    RandomSmooth { decay: f64, seed: u64 },
    FromFile { path: PathBuf },
}

impl StateSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            StateSpec::Gaussian { .. } => "gaussian",
            StateSpec::PlaneWave { .. } => "plane_wave",
            StateSpec::RandomSmooth { .. } => "random_smooth",
            StateSpec::FromFile { .. } => "from_file",
        }
    }
}

pub fn build_state(spec: &StateSpec, lattice: &Arc<Lattice>) -> Result<WaveState> {
    match spec {
        StateSpec::Gaussian {
            center,
            momentum,
            width,
        } => gaussian_packet(lattice, center, momentum, width),
        StateSpec::PlaneWave { momentum } => plane_wave(lattice, momentum),
        StateSpec::RandomSmooth { decay, seed } => {
            Ok(random_ensemble(lattice, 1, *decay, *seed)?.remove(0))
        }
        StateSpec::FromFile { path } => {
            let file = std::fs::File::open(path)?;
            read_wavefunction_csv(file, lattice)?.normalized()
        }
    }
}

fn check_dims(lattice: &Lattice, what: &str, v: &[f64]) -> Result<()> {
    if v.len() == lattice.dims() {
        Ok(())
    } else {
        Err(Error::InvalidState(format!(
            "{what} has {} entries for a {}-dimensional lattice",
            v.len(),
            lattice.dims()
        )))
    }
}

pub fn gaussian_packet(
    lattice: &Arc<Lattice>,
    center: &[f64],
    momentum: &[f64],
    widths: &[f64],
) -> Result<WaveState> {
    check_dims(lattice, "center", center)?;
    check_dims(lattice, "momentum", momentum)?;
    check_dims(lattice, "width", widths)?;
    if let Some(a) = widths.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidState(format!("gaussian width must be positive, got {a}")));
    }
    if !lattice.contains(center) {
        return Err(Error::InvalidState(format!(
            "gaussian center {center:?} lies outside the lattice extent"
        )));
    }
    let psi = WaveState::from_fn(Arc::clone(lattice), |x| {
        let mut exponent = 0.0;
        let mut phase = 0.0;
        for j in 0..x.len() {
            exponent -= widths[j] * (x[j] - center[j]).powi(2);
            phase += momentum[j] * x[j];
        }
        Complex64::from_polar(exponent.exp(), phase)
    })?
    .normalized()?;
    let mass = psi.boundary_mass();
    if mass > INITIAL_BOUNDARY_LIMIT {
        return Err(Error::BoundaryMass {
            mass,
            limit: INITIAL_BOUNDARY_LIMIT,
        });
    }
    Ok(psi)
}

/// Normalized plane wave. Exactly periodic, so exempt from the boundary check.
pub fn plane_wave(lattice: &Arc<Lattice>, momentum: &[f64]) -> Result<WaveState> {
    check_dims(lattice, "momentum", momentum)?;
    for (j, &p) in momentum.iter().enumerate() {
        let on_grid = lattice
            .momenta(j)
            .iter()
            .any(|&q| (q - p).abs() <= 1e-9 * (1.0 + p.abs()));
        if !on_grid {
            return Err(Error::InvalidState(format!(
                "plane-wave momentum {p} on axis {j} is not a grid momentum (multiples of {})",
                std::f64::consts::TAU / lattice.length(j)
            )));
        }
    }
    WaveState::from_fn(Arc::clone(lattice), |x| {
        let phase: f64 = x.iter().zip(momentum).map(|(a, b)| a * b).sum();
        Complex64::from_polar(1.0, phase)
    })?
    .normalized()
}

/// Radius `ε ∈ (0, 1)` of the mollifying bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub radius: f64,
}

impl MollifierSpec {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius < 1.0) {
            return Err(Error::InvalidState(format!(
                "mollifier radius must lie in (0, 1), got {radius}"
            )));
        }
        Ok(Self { radius })
    }
}

/// `exp(−1/(1 − r²))` on `r < 1`, zero outside.
fn bump(r: f64) -> f64 {
    if r < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Periodic displacement of grid index `k` from index 0 along an axis.
fn wrapped_offset(lattice: &Lattice, axis: usize, k: usize) -> f64 {
    let n = lattice.points(axis) as i64;
    let m = (k as i64 + n / 2).rem_euclid(n) - n / 2;
    m as f64 * lattice.spacing(axis)
}

/// Bump of radius `ε` centred on grid index 0 (with wrap-around), normalized
/// so that `w·Σχ = 1`.
pub fn mollifier_kernel(lattice: &Lattice, m: &MollifierSpec) -> Result<Vec<f64>> {
    let min = 2.0 * lattice.max_spacing();
    if m.radius < min {
        return Err(Error::Unresolvable {
            what: "mollifier radius",
            value: m.radius,
            min,
        });
    }
    let d = lattice.dims();
    let kernel: Vec<f64> = (0..lattice.len())
        .map(|flat| {
            let r2: f64 = (0..d)
                .map(|j| wrapped_offset(lattice, j, lattice.axis_index(flat, j)).powi(2))
                .sum();
            bump(r2.sqrt() / m.radius)
        })
        .collect();
    let mass = lattice.weight() * kernel.iter().sum::<f64>();
    Ok(kernel.into_iter().map(|v| v / mass).collect())
}

/// Periodic convolution `χ_ε * ψ`, computed spectrally.
pub fn mollify(psi: &WaveState, m: &MollifierSpec) -> Result<WaveState> {
    psi.expect_repr(Representation::Position)?;
    let lattice = psi.lattice();
    let mut kernel: Vec<Complex64> = mollifier_kernel(lattice, m)?
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    lattice.forward_in_place(&mut kernel);
    // unitary transforms: conv = w·√N · U⁻¹(Uχ ⊙ Uψ)
    let factor = lattice.weight() * (lattice.len() as f64).sqrt();
    let mut buf = psi.amplitudes().to_vec();
    lattice.forward_in_place(&mut buf);
    buf.par_iter_mut().with_min_len(crate::PAR_MIN_LEN)
        .zip(&kernel)
        .for_each(|(z, k)| *z *= k * factor);
    lattice.inverse_in_place(&mut buf);
    WaveState::new(Arc::clone(lattice), buf)
}

/// Smooth plateau: 1 on `r ≤ 1/2`, 0 on `r ≥ 1`, monotone `C^∞` in between.
pub fn plateau(r: f64) -> f64 {
    if r <= 0.5 {
        1.0
    } else if r >= 1.0 {
        0.0
    } else {
        let t = 2.0 * (1.0 - r);
        let e = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
        e(t) / (e(t) + e(1.0 - t))
    }
}

/// `χ(|x − c|/R)·ψ` with `c` the box centre.
pub fn cutoff(psi: &WaveState, radius: f64) -> Result<WaveState> {
    psi.expect_repr(Representation::Position)?;
    if !(radius > 0.0) {
        return Err(Error::InvalidState(format!("cutoff radius must be positive, got {radius}")));
    }
    let lattice = psi.lattice();
    let center = lattice.center();
    let chi = lattice.position_field(|x| {
        let r2: f64 = x.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum();
        plateau(r2.sqrt() / radius)
    });
    let amplitudes = psi
        .amplitudes()
        .iter()
        .zip(&chi)
        .map(|(z, c)| z * c)
        .collect();
    WaveState::new(Arc::clone(lattice), amplitudes)
}

/// Radius used to localize ensemble members: a fraction of the smallest
/// half-width of the box.
pub fn ensemble_cutoff_radius(lattice: &Lattice) -> f64 {
    let half = (0..lattice.dims())
        .map(|j| 0.5 * lattice.length(j))
        .fold(f64::INFINITY, f64::min);
    ENSEMBLE_CUTOFF_FRACTION * half
}

/// Deterministic ensemble of normalized, localized states whose spectral
/// coefficients are complex Gaussians damped by `(1 + |p|²)^{−decay/2}`.
///
/// Member `k` draws from ChaCha stream `k` of `seed`, so the ensemble does not
/// depend on how members are scheduled across threads.
pub fn random_ensemble(
    lattice: &Arc<Lattice>,
    count: usize,
    decay: f64,
    seed: u64,
) -> Result<Vec<WaveState>> {
    if count < 1 {
        return Err(Error::InvalidState("ensemble needs at least one member".into()));
    }
    let min_decay = (lattice.dims() as f64 + 4.0) / 2.0;
    if !(decay > min_decay) {
        return Err(Error::InvalidState(format!(
            "spectral decay {decay} must exceed (d+4)/2 = {min_decay} for H² samples"
        )));
    }
    let damping = lattice.momentum_field(|p| {
        let p2: f64 = p.iter().map(|q| q * q).sum();
        (1.0 + p2).powf(-decay / 2.0)
    });
    let radius = ensemble_cutoff_radius(lattice);
    (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let coeffs: Vec<Complex64> = damping
                .iter()
                .map(|&dmp| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im) * (dmp * std::f64::consts::FRAC_1_SQRT_2)
                })
                .collect();
            let hat = WaveState::with_representation(
                Arc::clone(lattice),
                coeffs,
                Representation::Momentum,
            )?;
            cutoff(&hat.from_momentum()?, radius)?.normalized()
        })
        .collect()
}

/// Read the `index_0, …, index_{d−1}, re, im` wavefunction format. Points that
/// are not listed are zero; `#` lines are comments.
pub fn read_wavefunction_csv<R: Read>(reader: R, lattice: &Arc<Lattice>) -> Result<WaveState> {
    let d = lattice.dims();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let fmt = |e: csv::Error| Error::WavefunctionFormat(e.to_string());
    let headers = rdr.headers().map_err(fmt)?.clone();
    let expected: Vec<String> = (0..d)
        .map(|j| format!("index_{j}"))
        .chain(["re".to_string(), "im".to_string()])
        .collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::WavefunctionFormat(format!(
            "header {:?} does not match {:?}",
            headers.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); lattice.len()];
    let mut seen = vec![false; lattice.len()];
    let mut multi = vec![0usize; d];
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(fmt)?;
        let line = row + 2;
        for (j, slot) in multi.iter_mut().enumerate() {
            let k: usize = record[j].parse().map_err(|_| {
                Error::WavefunctionFormat(format!("line {line}: bad index_{j} '{}'", &record[j]))
            })?;
            if k >= lattice.points(j) {
                return Err(Error::WavefunctionFormat(format!(
                    "line {line}: index_{j} = {k} out of range (< {})",
                    lattice.points(j)
                )));
            }
            *slot = k;
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::WavefunctionFormat(format!("line {line}: bad {what} '{s}'")))
        };
        let flat = lattice.flat_index(&multi);
        if seen[flat] {
            return Err(Error::WavefunctionFormat(format!(
                "line {line}: duplicate grid point {multi:?}"
            )));
        }
        seen[flat] = true;
        amps[flat] = Complex64::new(parse(&record[d], "re")?, parse(&record[d + 1], "im")?);
    }
    WaveState::new(Arc::clone(lattice), amps)
}

/// Write every grid point in the wavefunction CSV format, 17 significant
/// digits per component.
pub fn write_wavefunction_csv<W: Write>(mut out: W, psi: &WaveState) -> Result<()> {
    psi.expect_repr(Representation::Position)?;
    let lattice = psi.lattice();
    let d = lattice.dims();
    let header: Vec<String> = (0..d)
        .map(|j| format!("index_{j}"))
        .chain(["re".to_string(), "im".to_string()])
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (flat, z) in psi.amplitudes().iter().enumerate() {
        for j in 0..d {
            write!(out, "{},", lattice.axis_index(flat, j))?;
        }
        writeln!(out, "{:.16e},{:.16e}", z.re, z.im)?;
    }
    Ok(())
}
